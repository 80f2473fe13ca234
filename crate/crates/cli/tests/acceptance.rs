//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use edgestack::blockstore::{check_access, Action, Mode, Principal};
use edgestack::cluster::{self, Cluster};
use edgestack::fabric::{ClockMode, FaultAction, FaultScript, NodeId, Role};
use edgestack::jobs::{pi_job, radical_inverse};
use edgestack::mapreduce::JobStatus;
use edgestack::ClusterConfig;
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---- independent oracles -------------------------------------------------

/// Digit reversal as an exact fraction `num / base^digits`.
fn reversed(base: u64, mut i: u64) -> (u128, u128) {
    let (mut num, mut den) = (0u128, 1u128);
    while i > 0 {
        num = num * base as u128 + (i % base) as u128;
        den *= base as u128;
        i /= base;
    }
    (num, den)
}

fn exact_inside(index: u64) -> bool {
    let (a, two_n) = reversed(2, index);
    let (c, three_m) = reversed(3, index);
    let dx = (2 * a as i128 - two_n as i128).unsigned_abs();
    let dy = (2 * c as i128 - three_m as i128).unsigned_abs();
    let (four_n, nine_m) = (two_n * two_n, three_m * three_m);
    dx * dx * nine_m + dy * dy * four_n <= four_n * nine_m
}

fn oracle_inside(maps: u64, samples: u64) -> u64 {
    (1..=maps * samples).filter(|&i| exact_inside(i)).count() as u64
}

/// 4 * inside / total by long division to 20 digits, half up.
fn oracle_estimate(inside: u64, total: u64) -> String {
    let (num, den) = (4 * inside as u128, total as u128);
    let mut rem = num % den;
    let mut digits = Vec::new();
    for _ in 0..21 {
        rem *= 10;
        digits.push((rem / den) as u8);
        rem %= den;
    }
    let mut whole = num / den;
    if digits.pop().unwrap() >= 5 {
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

fn decimal_micros(text: &str) -> i64 {
    let (neg, body) = text.strip_prefix('-').map_or((false, text), |b| (true, b));
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let frac = format!("{frac:0<6}");
    let v = int.parse::<i64>().unwrap() * 1_000_000 + frac.parse::<i64>().unwrap();
    if neg {
        -v
    } else {
        v
    }
}

fn render_micros(v: i64) -> String {
    let sign = if v < 0 { "-" } else { "" };
    let a = v.unsigned_abs();
    format!("{sign}{}.{:06}", a / 1_000_000, a % 1_000_000)
}

/// `key \t count,min,mean,max` for every group in the batch text, sorted by key.
fn fold_oracle(batches: &[String]) -> String {
    let mut groups: BTreeMap<String, Vec<i64>> = BTreeMap::new();
    for line in batches.iter().flat_map(|b| b.lines()) {
        let field = |name: &str| {
            let start = line.find(&format!("\"{name}\":")).unwrap() + name.len() + 3;
            let rest = &line[start..];
            rest[..rest.find([',', '}']).unwrap()].trim_matches('"').to_string()
        };
        let key = format!("{},{},{}", field("line"), field("robot"), field("ch"));
        groups.entry(key).or_default().push(decimal_micros(&field("v")));
    }
    let mut out = String::new();
    for (k, vs) in groups {
        let n = vs.len() as i128;
        let sum: i128 = vs.iter().map(|&v| v as i128).sum();
        let (q, r) = (sum.div_euclid(n), sum.rem_euclid(n));
        let mean = if 2 * r >= n { q + 1 } else { q } as i64;
        let (min, max) = (*vs.iter().min().unwrap(), *vs.iter().max().unwrap());
        out.push_str(&format!(
            "{k}\t{},{},{},{}\n",
            vs.len(),
            render_micros(min),
            render_micros(mean),
            render_micros(max)
        ));
    }
    out
}

// ---- drivers ---------------------------------------------------------------

struct Cli {
    _dir: TempDir,
    root: PathBuf,
    conf: PathBuf,
}

struct Ran {
    code: i32,
    out: String,
    err: String,
}

impl Cli {
    fn new(runners: u32, seed: u64) -> Cli {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("edgestack.conf");
        let text = format!("storage_root = root\nblock_nodes = 2\ntask_runners = {runners}\nclock = simulated:{seed}\n");
        fs::write(&conf, text).unwrap();
        let root = dir.path().join("root");
        Cli { _dir: dir, root, conf }
    }

    fn run(&self, args: &[&str]) -> Ran {
        let mut argv = vec!["edgestack", "--config", self.conf.to_str().unwrap()];
        argv.extend_from_slice(args);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = edgestack_cli::run(argv, &mut out, &mut err);
        Ran {
            code,
            out: String::from_utf8(out).unwrap(),
            err: String::from_utf8(err).unwrap(),
        }
    }

    fn ok(&self, args: &[&str]) -> Result<String, String> {
        let r = self.run(args);
        ensure!(r.code == 0, "`{}` exited {}: {}", args.join(" "), r.code, r.err);
        Ok(r.out)
    }

    fn local(&self, name: &str) -> PathBuf {
        self._dir.path().join(name)
    }
}

fn plant_spec() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../conf/plant.spec")
}

fn library_cluster(block_nodes: u32, runners: u32, seed: u64, tweak: impl FnOnce(&mut ClusterConfig)) -> (TempDir, Cluster) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ClusterConfig::new(dir.path().join("root"));
    cfg.block_nodes = block_nodes;
    cfg.task_runners = runners;
    cfg.clock = ClockMode::Simulated { seed };
    tweak(&mut cfg);
    cluster::format(&cfg).unwrap();
    let c = Cluster::start(&cfg).unwrap();
    (dir, c)
}

fn expected_trace(maps: u64, samples: u64, estimate: &str) -> String {
    let mut t = format!("Number of Maps = {maps}\nSamples per Map = {samples}\n");
    for i in 0..maps {
        t.push_str(&format!("Wrote input for Map #{i}\n"));
    }
    t.push_str(&format!("Starting Job\nEstimated value of Pi is {estimate}\n"));
    t
}

// ---- criteria ----------------------------------------------------------------

fn trace_reproduction() -> Outcome {
    let started = Instant::now();
    let cli = Cli::new(2, 42);
    cli.ok(&["format"])?;
    let start = cli.ok(&["start"])?;
    ensure!(start.lines().count() >= 5, "start printed {start:?}");
    let inside = oracle_inside(5, 50);
    let want = oracle_estimate(inside, 250);
    let trace = cli.ok(&["job", "pi", "5", "50"])?;
    ensure!(trace == expected_trace(5, 50, &want), "trace mismatch:\n{trace}");
    let frac = want.split_once('.').unwrap().1;
    ensure!(frac.len() == 20, "estimate {want} lacks 20 digits");
    let i10 = oracle_inside(10, 100);
    ensure!(i10 == 787, "oracle inside count at (10,100) is {i10}");
    let trace10 = cli.ok(&["job", "pi", "10", "100"])?;
    let last = trace10.lines().last().unwrap_or_default();
    ensure!(last == "Estimated value of Pi is 3.14800000000000000000", "(10,100) printed {last:?}");
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("(5,50) -> {want} (I={inside}); (10,100) -> 3.148 (I=787); {elapsed:.2?}"))
}

const SWEEP: [(u64, u64); 4] = [(1, 1), (2, 8), (5, 50), (10, 100)];

fn oracle_sweep() -> Outcome {
    let mut runs = 0;
    for runners in [1, 2, 4] {
        let (_d, mut c) = library_cluster(2, runners, 100 + runners as u64, |_| {});
        for (m, s) in SWEEP {
            let want = oracle_estimate(oracle_inside(m, s), m * s);
            let run = pi_job(&mut c, m, s, &Principal::hduser(), &mut io::sink(), &mut io::sink(), &mut |_, _| {})
                .map_err(|e| format!("runners={runners} ({m},{s}): {e}"))?;
            ensure!(run.estimate == want, "runners={runners} ({m},{s}): {} != {want}", run.estimate);
            runs += 1;
        }
    }
    Ok(format!("{runs}/12 runs equal the oracle"))
}

fn job_fault_tolerance() -> Outcome {
    let want = oracle_estimate(oracle_inside(5, 50), 250);
    let mut passed = 0;
    for seed in 0..100u64 {
        let (_d, mut c) = library_cluster(2, 4, seed, |_| {});
        let mut killed: Option<NodeId> = None;
        let mut observer = |c: &mut Cluster, s: &JobStatus| {
            if killed.is_none() && s.maps_pct >= 50 {
                let victim = c.fabric().nodes_with_role(Role::TaskRunner)[(seed % 4) as usize];
                c.inject(&FaultScript::new().push(0, FaultAction::Kill(victim))).unwrap();
                killed = Some(victim);
            }
        };
        let run = pi_job(&mut c, 5, 50, &Principal::hduser(), &mut io::sink(), &mut io::sink(), &mut observer)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        ensure!(killed.is_some(), "seed {seed}: kill never fired");
        ensure!(run.estimate == want, "seed {seed}: {} != {want}", run.estimate);
        passed += 1;
    }
    Ok(format!("{passed}/100 seeds succeeded with {want}"))
}

fn storage_fault_tolerance() -> Outcome {
    let bs = 4096u64;
    let (_d, mut c) = library_cluster(5, 2, 9, |cfg| {
        cfg.block_size_bytes = bs;
        cfg.replication = 3;
    });
    let data: Vec<u8> = (0..10 * bs).map(|i| (i * 7 + i / 13) as u8).collect();
    let blocks = c
        .client(Principal::hduser())
        .put("/user/hduser/ten", &data, Mode::new(0o750), 3)
        .map_err(|e| e.to_string())?;
    ensure!(blocks.len() == 10, "{} blocks", blocks.len());
    let victim = *c.namespace_master().holders(blocks[0]).iter().next().unwrap();
    let lost = blocks.iter().filter(|b| c.namespace_master().holders(**b).contains(&victim)).count();
    c.inject(&FaultScript::new().push(0, FaultAction::Kill(victim))).unwrap();
    let interval = c.config().heartbeat_interval_ms;
    let begin = c.now();
    let restored = |c: &Cluster| {
        blocks.iter().all(|b| {
            let h = c.namespace_master().holders(*b);
            h.len() == 3
                && !h.contains(&victim)
                && h.iter().all(|n| {
                    c.fabric().is_up(*n) && c.block_nodes()[n].storage.load(*b).is_ok_and(|r| r.is_intact())
                })
        })
    };
    let mut healed_at = None;
    while c.now() < begin + 10 * interval {
        c.advance(interval / 10);
        if restored(&c) {
            healed_at = Some(c.now() - begin);
            break;
        }
    }
    let Some(after) = healed_at else {
        return Err(format!("not back to 3 replicas within {} ms", 10 * interval));
    };
    let read = c.client(Principal::hduser()).read("/user/hduser/ten").map_err(|e| e.to_string())?;
    ensure!(read == data, "read returned different bytes");
    let distinct: BTreeSet<usize> = blocks.iter().map(|b| c.namespace_master().holders(*b).len()).collect();
    ensure!(distinct == BTreeSet::from([3]), "replica counts {distinct:?}");
    Ok(format!("{lost} replicas lost on node {victim}; restored after {after} ms; read intact"))
}

fn permission_table() -> Outcome {
    let owner = Principal::hduser();
    let member = Principal::new("analyst", ["hadoop"]);
    let other = Principal::new("guest", Vec::<String>::new());
    let mut ok = 0;
    for mode in ["750", "700", "770", "000", "755"] {
        let bits = Mode::new(u16::from_str_radix(mode, 8).unwrap());
        for (class, who) in [&owner, &member, &other].into_iter().enumerate() {
            let digit = mode.as_bytes()[class] - b'0';
            for (action, bit) in [(Action::Read, 4), (Action::Write, 2), (Action::Execute, 1)] {
                let got = check_access("hduser", "hadoop", bits, who, action).is_allowed();
                ensure!(got == (digit & bit != 0), "mode {mode} class {class} {action}: got {got}");
                ok += 1;
            }
        }
    }
    let m750 = Mode::new(0o750);
    ensure!(!check_access("hduser", "hadoop", m750, &member, Action::Write).is_allowed(), "750 group write");
    for a in [Action::Read, Action::Write, Action::Execute] {
        ensure!(!check_access("hduser", "hadoop", m750, &other, a).is_allowed(), "750 other {a}");
    }
    Ok(format!("{ok}/45 cases"))
}

/// Every observable artifact of one full seeded run.
fn full_run() -> Result<Vec<(String, Vec<u8>)>, String> {
    let cli = Cli::new(2, 42);
    let spec = plant_spec();
    let mut art: Vec<(String, Vec<u8>)> = Vec::new();
    let steps: [&[&str]; 4] = [
        &["format"],
        &["start"],
        &["sensors", spec.to_str().unwrap(), "10000", "/data/plant"],
        &["job", "pi", "5", "50"],
    ];
    for args in steps {
        let r = cli.run(args);
        ensure!(r.code == 0, "`{}` exited {}: {}", args.join(" "), r.code, r.err);
        art.push((format!("stdout {}", args.join(" ")), r.out.into_bytes()));
        art.push((format!("stderr {}", args.join(" ")), r.err.into_bytes()));
    }
    for remote in [
        "/data/plant/batch-000000.jsonl",
        "/data/plant/batch-000001.jsonl",
        "/tmp/pi_job_0001/out/part-r-00000",
    ] {
        let local = cli.local("fetched");
        cli.ok(&["dfs", "get", remote, local.to_str().unwrap()])?;
        art.push((remote.to_string(), fs::read(&local).unwrap()));
    }
    let log = fs::read(cli.root.join("logs/events.log")).map_err(|e| format!("event log: {e}"))?;
    ensure!(!log.is_empty(), "event log is empty");
    art.push(("events.log".into(), log));
    Ok(art)
}

fn determinism() -> Outcome {
    let a = full_run()?;
    let b = full_run()?;
    ensure!(a.len() == b.len(), "artifact counts differ");
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        ensure!(x == y, "{name} differs between runs");
    }
    let bytes: usize = a.iter().map(|(_, v)| v.len()).sum();
    Ok(format!("{} artifacts, {bytes} bytes, byte-identical", a.len()))
}

fn ingestion_conservation() -> Outcome {
    let cli = Cli::new(2, 42);
    cli.ok(&["format"])?;
    cli.ok(&["start"])?;
    let out = cli.ok(&["sensors", plant_spec().to_str().unwrap(), "10000", "/data/plant"])?;
    ensure!(out == "1200 records in 2 files\n", "sensors printed {out:?}");
    let mut batches = Vec::new();
    let mut total = 0;
    for f in ["batch-000000.jsonl", "batch-000001.jsonl"] {
        let local = cli.local(f);
        cli.ok(&["dfs", "get", &format!("/data/plant/{f}"), local.to_str().unwrap()])?;
        let text = fs::read_to_string(&local).unwrap();
        total += text.lines().count();
        batches.push(text);
    }
    ensure!(total == 1200, "{total} records stored");
    cli.ok(&["job", "sensoragg", "/data/plant", "/data/agg"])?;
    let local = cli.local("agg");
    cli.ok(&["dfs", "get", "/data/agg/part-r-00000", local.to_str().unwrap()])?;
    let got = fs::read_to_string(&local).unwrap();
    let want = fold_oracle(&batches);
    ensure!(got == want, "aggregate differs from oracle:\n{got}\nvs\n{want}");
    Ok(format!("1200 records, {} groups equal the fold oracle", want.lines().count()))
}

fn radical_inverse_recurrence() -> Outcome {
    let mut checks = 0u64;
    for base in [2u64, 3] {
        for k in 0..(1u64 << 16) {
            let rk = radical_inverse(base, k);
            ensure!((0.0..1.0).contains(&rk), "range b={base} k={k}: {rk}");
            for d in 0..base {
                let r = radical_inverse(base, base * k + d);
                ensure!((0.0..1.0).contains(&r), "range b={base} k={}: {r}", base * k + d);
                ensure!(r == (d as f64 + rk) / base as f64, "b={base} k={k} d={d}");
                checks += 1;
            }
        }
    }
    Ok(format!("{checks} recurrence checks exact"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("pi trace reproduction", trace_reproduction),
        ("oracle equivalence sweep", oracle_sweep),
        ("job fault tolerance", job_fault_tolerance),
        ("storage fault tolerance", storage_fault_tolerance),
        ("permission truth table", permission_table),
        ("determinism", determinism),
        ("ingestion conservation", ingestion_conservation),
        ("radical-inverse recurrence", radical_inverse_recurrence),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
