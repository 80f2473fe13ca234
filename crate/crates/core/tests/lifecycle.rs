//! Cluster lifecycle: format, start, status, stop and reopen.

mod common;

use std::fs;

use common::{hduser, run_pi, Harness};
use edgestack::blockstore::Mode;
use edgestack::cluster::{self, Cluster};
use edgestack::fabric::{render_status, FaultAction, FaultScript, Role};
use edgestack::{ClusterConfig, Error};

#[test]
fn successive_formats_yield_distinct_ids() {
    let h = Harness::new(2, 2, 42);
    let a = cluster::format(&h.config).unwrap();
    let b = cluster::format(&h.config).unwrap();
    assert_ne!(a, b);
}

#[test]
fn format_is_reproducible_per_seed_and_generation() {
    let a = Harness::new(2, 2, 42);
    let b = Harness::new(2, 2, 42);
    assert_eq!(cluster::format(&a.config).unwrap(), cluster::format(&b.config).unwrap());
}

#[test]
fn format_refuses_a_running_cluster() {
    let h = Harness::new(2, 2, 1);
    let _c = h.start();
    let err = cluster::format(&h.config).unwrap_err();
    assert!(matches!(err, Error::Busy));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn start_requires_format() {
    let h = Harness::new(2, 2, 1);
    let err = Cluster::start(&h.config).err().unwrap();
    assert!(matches!(err, Error::NotFormatted), "{err:?}");
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("run format first"));
}

#[test]
fn second_start_is_refused() {
    let h = Harness::new(2, 2, 1);
    let _c = h.start();
    let err = Cluster::start(&h.config).err().unwrap();
    assert!(matches!(err, Error::AlreadyRunning), "{err:?}");
    assert!(err.to_string().contains("already running"));
}

#[test]
fn zero_block_nodes_fail_startup() {
    let h = Harness::new(0, 2, 1);
    cluster::format(&h.config).unwrap();
    let err = Cluster::start(&h.config).err().unwrap();
    assert!(matches!(err, Error::Startup(_)), "{err:?}");
}

#[test]
fn unwritable_root_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, b"").unwrap();
    let err = cluster::format(&ClusterConfig::new(file.join("root"))).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err:?}");
}

#[test]
fn status_lists_every_daemon_role() {
    let h = Harness::new(2, 2, 1);
    let c = h.start();
    let status = c.status();
    assert_eq!(status.len(), 7);
    for role in Role::ALL {
        assert!(status.iter().any(|(_, n)| *n == role.daemon_name()), "{role:?}");
    }
    let text = render_status(&status);
    assert!(text.lines().any(|l| l.ends_with(" NamespaceMaster")));
}

#[test]
fn killed_runner_leaves_status_after_detection() {
    let h = Harness::new(2, 2, 3);
    let mut c = h.start();
    let runner = c.fabric().nodes_with_role(Role::TaskRunner)[0];
    let daemon = c.fabric().node(runner).unwrap().daemon_id;
    c.inject(&FaultScript::new().push(0, FaultAction::Kill(runner))).unwrap();
    assert!(c.status().iter().any(|(d, _)| *d == daemon), "still listed before detection");
    let timeout = c.config().heartbeat_interval_ms * c.config().heartbeat_timeout_intervals;
    c.advance(timeout + 2 * c.config().heartbeat_interval_ms);
    assert!(!c.status().iter().any(|(d, _)| *d == daemon));
    assert_eq!(c.status().len(), 6);
}

#[test]
fn no_spurious_deaths_over_a_long_idle_run() {
    let h = Harness::new(3, 3, 11);
    let mut c = h.start();
    c.advance(120_000);
    assert_eq!(c.status().len(), 9);
    assert!(!c.event_log().iter().any(|l| l.contains(" dead ")));
}

#[test]
fn state_persists_across_open_and_stop() {
    let h = Harness::new(2, 2, 5);
    let (time, members) = {
        let mut c = h.start();
        c.client(hduser()).put("/user/hduser/x", b"data", Mode::new(0o750), 2).unwrap();
        c.advance(4321);
        c.save().unwrap();
        (c.now(), c.status())
    };
    let mut c = Cluster::open(&h.config).unwrap();
    assert_eq!(c.now(), time);
    assert_eq!(c.status(), members);
    assert_eq!(c.client(hduser()).read("/user/hduser/x").unwrap(), b"data");
    c.stop().unwrap();
    assert!(!cluster::is_running(&h.config.storage_root));
    assert!(Cluster::open(&h.config).is_err());
    let mut c = Cluster::start(&h.config).unwrap();
    c.advance(2000);
    assert_eq!(c.client(hduser()).read("/user/hduser/x").unwrap(), b"data");
}

#[test]
fn job_ids_do_not_repeat_across_restarts() {
    let h = Harness::new(2, 2, 5);
    let first = {
        let mut c = h.start();
        let (run, _) = run_pi(&mut c, 1, 4);
        c.save().unwrap();
        c.stop().unwrap();
        run.job_id
    };
    let mut c = Cluster::start(&h.config).unwrap();
    let (run, _) = run_pi(&mut c, 1, 4);
    assert_ne!(run.job_id, first);
    c.save().unwrap();
    assert!(cluster::stored_job_status(&h.config, &first).is_ok());
}

#[test]
fn periodic_checkpoints_are_written() {
    let h = Harness::new(2, 2, 5);
    let mut c = h.start();
    c.advance(2 * cluster::CHECKPOINT_INTERVAL_MS + 10);
    let dir = h.config.storage_root.join("checkpoint");
    assert!(edgestack::blockstore::latest_checkpoint(&dir).unwrap().unwrap() >= 2);
}

#[test]
fn config_text_round_trips() {
    let h = Harness::new(3, 4, 99);
    let text = h.config.to_string();
    let parsed = ClusterConfig::parse(&text, h.dir.path()).unwrap();
    assert_eq!(parsed, h.config);
    assert!(ClusterConfig::parse("storage_root = r\nbogus = 1\n", h.dir.path()).is_err());
    assert!(ClusterConfig::parse("storage_root = r\nblock_size_bytes = 100\n", h.dir.path()).is_err());
}
