#![allow(dead_code)]

use std::io;

use edgestack::blockstore::Principal;
use edgestack::cluster::{self, Cluster};
use edgestack::fabric::ClockMode;
use edgestack::jobs::{pi_job, PiRun};
use edgestack::ClusterConfig;
use tempfile::TempDir;

pub struct Harness {
    pub dir: TempDir,
    pub config: ClusterConfig,
}

impl Harness {
    pub fn new(block_nodes: u32, task_runners: u32, seed: u64) -> Self {
        Self::with(|c| {
            c.block_nodes = block_nodes;
            c.task_runners = task_runners;
            c.clock = ClockMode::Simulated { seed };
        })
    }

    pub fn with(tweak: impl FnOnce(&mut ClusterConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ClusterConfig::new(dir.path().join("root"));
        tweak(&mut config);
        Harness { dir, config }
    }

    pub fn start(&self) -> Cluster {
        cluster::format(&self.config).unwrap();
        Cluster::start(&self.config).unwrap()
    }
}

pub fn hduser() -> Principal {
    Principal::hduser()
}

pub fn run_pi(c: &mut Cluster, maps: u64, samples: u64) -> (PiRun, String) {
    let mut out = Vec::new();
    let run = pi_job(c, maps, samples, &hduser(), &mut out, &mut io::sink(), &mut |_, _| {}).unwrap();
    (run, String::from_utf8(out).unwrap())
}

/// Inside count for one Halton index, in exact integer arithmetic.
///
/// With x = a / 2^n and y = c / 3^m the closed-disk test
/// (x - 1/2)^2 + (y - 1/2)^2 <= 1/4 scales to
/// (2a - 2^n)^2 * 9^m + (2c - 3^m)^2 * 4^n <= 4^n * 9^m.
pub fn exact_inside(index: u64) -> bool {
    fn reversed(base: u64, mut i: u64) -> (u128, u128) {
        let (mut num, mut den) = (0u128, 1u128);
        while i > 0 {
            num = num * base as u128 + (i % base) as u128;
            den *= base as u128;
            i /= base;
        }
        (num, den)
    }
    let (a, two_n) = reversed(2, index);
    let (c, three_m) = reversed(3, index);
    let dx = (2 * a as i128 - two_n as i128).unsigned_abs();
    let dy = (2 * c as i128 - three_m as i128).unsigned_abs();
    let (four_n, nine_m) = (two_n * two_n, three_m * three_m);
    dx * dx * nine_m + dy * dy * four_n <= four_n * nine_m
}

pub fn oracle_inside(maps: u64, samples: u64) -> u64 {
    (1..=maps * samples).filter(|&i| exact_inside(i)).count() as u64
}

/// 4 * inside / total to 20 fractional digits, long division, half up.
pub fn oracle_estimate(inside: u64, total: u64) -> String {
    let (num, den) = (4 * inside as u128, total as u128);
    let mut digits: Vec<u8> = Vec::new();
    let mut rem = num % den;
    for _ in 0..21 {
        rem *= 10;
        digits.push((rem / den) as u8);
        rem %= den;
    }
    let mut whole = num / den;
    let round_up = digits.pop().unwrap() >= 5;
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                whole += 1;
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let frac: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
    format!("{whole}.{frac}")
}
