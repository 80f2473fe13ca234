//! Quasi-Monte-Carlo Pi: Halton points in bases 2 and 3 tested against the
//! circle inscribed in the unit square.

use serde::{Deserialize, Serialize};

/// Digit-reversal of `index` in `base` into [0, 1).
///
/// Evaluated from the most significant digit down as `r = (d + r) / b`, so
/// `radical_inverse(b, b*k + d) == (d + radical_inverse(b, k)) / b` holds
/// bit for bit.
pub fn radical_inverse(base: u64, index: u64) -> f64 {
    debug_assert!(base >= 2);
    let mut digits = [0u8; 64];
    let mut n = 0;
    let mut i = index;
    while i > 0 {
        digits[n] = (i % base) as u8;
        i /= base;
        n += 1;
    }
    let b = base as f64;
    digits[..n]
        .iter()
        .rev()
        .fold(0.0, |r, &d| (d as f64 + r) / b)
}

pub fn halton_point(index: u64) -> (f64, f64) {
    (radical_inverse(2, index), radical_inverse(3, index))
}

/// Closed disk of radius 1/2 centred in the unit square.
pub fn is_inside(x: f64, y: f64) -> bool {
    let (dx, dy) = (x - 0.5, y - 0.5);
    dx * dx + dy * dy <= 0.25
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiCounts {
    pub inside: u64,
    pub outside: u64,
}

impl PiCounts {
    pub fn total(&self) -> u64 {
        self.inside + self.outside
    }
}

/// Task `task` samples indices `task*samples + 1 ..= task*samples + samples`.
pub fn pi_map(task: u64, samples: u64) -> PiCounts {
    let first = task * samples + 1;
    let inside = (first..first + samples)
        .filter(|&i| {
            let (x, y) = halton_point(i);
            is_inside(x, y)
        })
        .count() as u64;
    PiCounts {
        inside,
        outside: samples - inside,
    }
}

pub fn pi_reduce(counts: &[PiCounts]) -> PiCounts {
    counts.iter().fold(PiCounts::default(), |a, c| PiCounts {
        inside: a.inside + c.inside,
        outside: a.outside + c.outside,
    })
}

pub const ESTIMATE_DIGITS: u32 = 20;
/// `maps * samples` stays within this bound so index arithmetic is exact.
pub const MAX_TOTAL_SAMPLES: u64 = 1 << 40;

/// `4 * inside / (maps * samples)` rendered exactly with 20 fractional
/// digits, the last one rounded half up.
pub fn estimate_pi(inside: u64, maps: u64, samples: u64) -> String {
    let den = maps as u128 * samples as u128;
    assert!(den > 0 && inside as u128 <= den, "inside count out of range");
    let num = 4 * inside as u128;
    let scale = 10u128.pow(ESTIMATE_DIGITS);
    let mut whole = num / den;
    let rem = num % den;
    let mut frac = rem * scale / den;
    if 2 * (rem * scale % den) >= den {
        frac += 1;
    }
    if frac == scale {
        whole += 1;
        frac = 0;
    }
    format!("{whole}.{frac:020}")
}
