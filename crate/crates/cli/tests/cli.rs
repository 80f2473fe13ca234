//! Command surface: outputs and exit codes.

use std::fs;
use std::path::PathBuf;

use tempfile::TempDir;

struct Env {
    dir: TempDir,
    conf: PathBuf,
}

struct Ran {
    code: i32,
    out: String,
    err: String,
}

fn env() -> Env {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("edgestack.conf");
    fs::write(&conf, "storage_root = root\n").unwrap();
    Env { dir, conf }
}

impl Env {
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

    fn ok(&self, args: &[&str]) -> String {
        let r = self.run(args);
        assert_eq!(r.code, 0, "{args:?}: {}", r.err);
        r.out
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn running() -> Env {
        let e = env();
        e.ok(&["format"]);
        e.ok(&["start"]);
        e
    }
}

#[test]
fn format_and_start_report_what_they_did() {
    let e = env();
    let out = e.ok(&["format"]);
    assert!(out.starts_with("Formatted namespace "), "{out}");
    let out = e.ok(&["start"]);
    let names: Vec<&str> = out.lines().map(|l| l.split(' ').nth(1).unwrap()).collect();
    assert_eq!(
        names,
        ["NamespaceMaster", "BlockNode", "BlockNode", "CheckpointNode", "JobMaster", "TaskRunner", "TaskRunner"]
    );
    assert!(out.lines().all(|l| l.starts_with("started ") && l.ends_with(')')));
}

#[test]
fn lifecycle_errors_exit_2() {
    let e = env();
    let r = e.run(&["start"]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("run format first"), "{}", r.err);
    e.ok(&["format"]);
    e.ok(&["start"]);
    let r = e.run(&["start"]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("already running"), "{}", r.err);
    assert_eq!(e.run(&["format"]).code, 2);
}

#[test]
fn status_lists_daemons_and_is_empty_when_stopped() {
    let e = Env::running();
    let out = e.ok(&["status"]);
    assert_eq!(out.lines().count(), 7);
    assert!(out.lines().next().unwrap().ends_with(" NamespaceMaster"));
    e.ok(&["stop"]);
    let r = e.run(&["status"]);
    assert_eq!((r.code, r.out.as_str()), (0, ""));
}

#[test]
fn killed_runner_disappears_from_status_after_detection() {
    let e = Env::running();
    let status = e.ok(&["status"]);
    let runner = status.lines().find(|l| l.ends_with("TaskRunner")).unwrap().to_string();
    // node ids follow start order: master 0, block nodes 1-2, checkpoint 3, job master 4, runners 5-6
    let script = e.write("kill.txt", "kill 5 @ 0\n");
    e.ok(&["fault", &script]);
    assert!(e.ok(&["status"]).contains(&runner));
    e.ok(&["advance", "5000"]);
    let after = e.ok(&["status"]);
    assert!(!after.contains(&runner), "{after}");
    assert_eq!(after.lines().count(), 6);
}

#[test]
fn fault_script_validation() {
    let e = Env::running();
    let empty = e.write("empty.txt", "");
    e.ok(&["fault", &empty]);
    let bad = e.write("bad.txt", "kill 99 @ 10\n");
    assert_eq!(e.run(&["fault", &bad]).code, 1);
    let garbled = e.write("garbled.txt", "smash 1\n");
    assert_eq!(e.run(&["fault", &garbled]).code, 1);
}

#[test]
fn dfs_round_trip_and_listing() {
    let e = Env::running();
    let data: Vec<u8> = (0..3_000_000u32).map(|i| (i % 251) as u8).collect();
    let local = e.path("in.bin");
    fs::write(&local, &data).unwrap();
    e.ok(&["dfs", "mkdir", "/user/hduser"]);
    e.ok(&["dfs", "put", &local, "/user/hduser/in.bin"]);
    let back = e.path("out.bin");
    e.ok(&["dfs", "get", "/user/hduser/in.bin", &back]);
    assert_eq!(fs::read(&back).unwrap(), data);
    let ls = e.ok(&["dfs", "ls", "/user/hduser"]);
    let cols: Vec<&str> = ls.split_whitespace().collect();
    assert_eq!(cols, ["-rwxr-x---", "hduser", "hadoop", "2", "3000000", "/user/hduser/in.bin"]);
    e.ok(&["dfs", "chmod", "700", "/user/hduser/in.bin"]);
    assert!(e.ok(&["dfs", "ls", "/user/hduser"]).starts_with("-rwx------ "));
    e.ok(&["dfs", "rm", "/user/hduser/in.bin"]);
    assert_eq!(e.run(&["dfs", "get", "/user/hduser/in.bin", &back]).code, 5);
}

#[test]
fn permission_and_not_found_exit_codes() {
    let e = Env::running();
    let local = e.write("f.txt", "secret\n");
    e.ok(&["dfs", "put", &local, "/f.txt"]);
    let out = e.path("g.txt");
    let r = e.run(&["--user", "guest", "dfs", "get", "/f.txt", &out]);
    assert_eq!(r.code, 4, "{}", r.err);
    assert!(r.err.starts_with("error: "));
    let r = e.run(&["--user", "analyst", "--group", "hadoop", "dfs", "get", "/f.txt", &out]);
    assert_eq!(r.code, 0, "{}", r.err);
    let r = e.run(&["--user", "analyst", "--group", "hadoop", "dfs", "rm", "/f.txt"]);
    assert_eq!(r.code, 4);
    assert_eq!(e.run(&["dfs", "ls", "/missing"]).code, 5);
}

#[test]
fn pi_job_trace_and_argument_errors() {
    let e = Env::running();
    let r = e.run(&["job", "pi", "5", "50"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines[..3], ["Number of Maps = 5", "Samples per Map = 50", "Wrote input for Map #0"]);
    assert_eq!(lines[6..], ["Wrote input for Map #4", "Starting Job", "Estimated value of Pi is 3.16800000000000000000"]);
    assert!(r.err.contains(" map 100% reduce 100%"));
    assert_eq!(e.run(&["job", "pi", "0", "50"]).code, 1);
    assert_eq!(e.run(&["job", "pi", "5"]).code, 1);
    assert_eq!(e.run(&["job", "pi", "five", "50"]).code, 1);
    assert_eq!(e.ok(&["job", "status", "job_0001"]), "job_0001 map 100% reduce 100% Succeeded\n");
    assert_eq!(e.run(&["job", "status", "unknown"]).code, 5);
}

#[test]
fn pi_output_is_identical_across_seeded_runs() {
    let trace = || {
        let e = Env::running();
        let r = e.run(&["job", "pi", "4", "30"]);
        (r.code, r.out, r.err)
    };
    assert_eq!(trace(), trace());
}

#[test]
fn sensors_ingest_and_aggregate() {
    let e = Env::running();
    let spec = e.write("plant.spec", "line L1\nrobot R1\nchannel t C 25 const 1.5\nrobot R2\nchannel t C 5 sine 0 1 1000\n");
    let out = e.ok(&["sensors", &spec, "10000", "/data/s", "--batch-size", "100"]);
    assert_eq!(out, "300 records in 3 files\n");
    let out = e.ok(&["job", "sensoragg", "/data/s", "/data/agg"]);
    assert!(out.contains("Records aggregated = 300"), "{out}");
    let local = e.path("agg.txt");
    e.ok(&["dfs", "get", "/data/agg/part-r-00000", &local]);
    let agg = fs::read_to_string(local).unwrap();
    assert!(agg.starts_with("L1,R1,t\t250,1.500000,1.500000,1.500000\n"), "{agg}");
}

#[test]
fn sensors_error_codes() {
    let e = Env::running();
    assert_eq!(e.run(&["sensors", &e.path("absent.spec"), "1000", "/d"]).code, 1);
    let bad = e.write("bad.spec", "line L1\nrobot R1\nchannel t C many const 1\n");
    let r = e.run(&["sensors", &bad, "1000", "/d"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("line 3"), "{}", r.err);
    let ok = e.write("ok.spec", "line L1\nrobot R1\nchannel t C 1 const 1\n");
    e.ok(&["dfs", "mkdir", "/locked"]);
    let r = e.run(&["--user", "guest", "sensors", &ok, "1000", "/locked/d"]);
    assert_eq!(r.code, 4, "{}", r.err);
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let e = env();
    assert_eq!(e.run(&["frobnicate"]).code, 1);
    assert_eq!(e.run(&["advance", "soon"]).code, 1);
    let r = e.run(&["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("Usage"));
}

#[test]
fn missing_config_is_reported() {
    let e = env();
    let mut out = Vec::new();
    let code = edgestack_cli::run(
        ["edgestack", "--config", &e.path("nope.conf"), "status"],
        &mut out,
        &mut Vec::new(),
    );
    assert_ne!(code, 0);
}
