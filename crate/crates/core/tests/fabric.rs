//! Fabric properties over random traffic and fault scripts.

use std::collections::BTreeSet;

use edgestack::fabric::{
    decode_frame, encode_frame, ClockMode, Fabric, FabricConfig, FabricEvent, FaultAction, FaultScript, Message,
    MessageKind, NodeId, Role,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Send { src: usize, dst: usize, len: usize },
    Advance(u64),
    Fault(u64, FaultAction),
}

const NODES: usize = 6;

fn roles() -> [Role; NODES] {
    [
        Role::NamespaceMaster,
        Role::BlockNode,
        Role::BlockNode,
        Role::JobMaster,
        Role::TaskRunner,
        Role::TaskRunner,
    ]
}

fn node_set() -> impl Strategy<Value = BTreeSet<NodeId>> {
    proptest::collection::btree_set((0..NODES as u32).prop_map(NodeId), 1..NODES)
}

fn action() -> impl Strategy<Value = FaultAction> {
    prop_oneof![
        (0..NODES as u32).prop_map(|n| FaultAction::Kill(NodeId(n))),
        node_set().prop_map(|a| {
            let b = (0..NODES as u32).map(NodeId).filter(|n| !a.contains(n)).collect();
            FaultAction::Partition(a, b)
        }),
        Just(FaultAction::Heal),
        ((0..NODES as u32), 1u64..50).prop_map(|(n, d)| FaultAction::Delay(NodeId(n), d)),
    ]
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => (0..NODES, 0..NODES, 0usize..64).prop_map(|(src, dst, len)| Op::Send { src, dst, len }),
        2 => (0u64..40).prop_map(Op::Advance),
        1 => ((0u64..100), action()).prop_map(|(at, a)| Op::Fault(at, a)),
    ]
}

struct Trace {
    log: Vec<String>,
    delivered_after_kill: Vec<(NodeId, u64)>,
}

fn play(seed: u64, ops: &[Op]) -> Trace {
    let mut f = Fabric::new(FabricConfig::default(), ClockMode::Simulated { seed });
    let ids: Vec<NodeId> = roles().iter().map(|r| f.add_node(*r, 0)).collect();
    let mut killed: BTreeSet<NodeId> = BTreeSet::new();
    let mut bad = Vec::new();
    let mut observe = |ev: FabricEvent, now: u64, killed: &mut BTreeSet<NodeId>| match ev {
        FabricEvent::Fault(FaultAction::Kill(n)) => {
            killed.insert(n);
        }
        FabricEvent::Deliver(m) if killed.contains(&m.dst) => bad.push((m.dst, now)),
        _ => {}
    };
    for op in ops {
        match op {
            Op::Send { src, dst, len } => {
                let msg = Message::new(ids[*src], ids[*dst], MessageKind::Heartbeat, vec![7; *len]);
                let _ = f.send(msg);
            }
            Op::Advance(ms) => {
                let until = f.now() + ms;
                while let Some(ev) = f.next_event(until) {
                    let now = f.now();
                    observe(ev, now, &mut killed);
                }
                f.advance_to(until);
            }
            Op::Fault(at, a) => {
                if *at == 0 {
                    if let FaultAction::Kill(n) = a {
                        killed.insert(*n);
                    }
                }
                f.inject(&FaultScript::new().push(*at, a.clone())).unwrap();
            }
        }
    }
    while let Some(ev) = f.next_event(u64::MAX) {
        let now = f.now();
        observe(ev, now, &mut killed);
    }
    Trace {
        log: f.log().lines().to_vec(),
        delivered_after_kill: bad,
    }
}

proptest! {
    #[test]
    fn same_seed_same_log(seed in any::<u64>(), ops in proptest::collection::vec(op(), 0..80)) {
        let a = play(seed, &ops);
        let b = play(seed, &ops);
        prop_assert_eq!(a.log, b.log);
    }

    #[test]
    fn killed_nodes_never_receive(seed in any::<u64>(), ops in proptest::collection::vec(op(), 0..80)) {
        let t = play(seed, &ops);
        prop_assert!(t.delivered_after_kill.is_empty(), "{:?}", t.delivered_after_kill);
    }

    #[test]
    fn frames_round_trip(tag in 1u8..=14, payload in proptest::collection::vec(any::<u8>(), 0..300)) {
        let kind = MessageKind::from_tag(tag).unwrap();
        let frame = encode_frame(kind, &payload);
        prop_assert_eq!(frame.len(), 5 + payload.len());
        let (k, p, used) = decode_frame(&frame, 1024).unwrap().unwrap();
        prop_assert_eq!(k, kind);
        prop_assert_eq!(p, payload);
        prop_assert_eq!(used, frame.len());
    }

    /// Heartbeats sent every interval with any jitter up to the default never
    /// trip the detector.
    #[test]
    fn no_spurious_deaths(seed in any::<u64>(), rounds in 1u64..60) {
        let cfg = FabricConfig::default();
        let interval = cfg.heartbeat_interval_ms;
        let mut f = Fabric::new(cfg, ClockMode::Simulated { seed });
        let ids: Vec<NodeId> = roles().iter().map(|r| f.add_node(*r, 0)).collect();
        let master = ids[0];
        for r in 1..=rounds {
            let t = r * interval;
            while let Some(ev) = f.next_event(t) {
                if let FabricEvent::Deliver(m) = ev {
                    let now = f.now();
                    f.record_heartbeat(m.src, now);
                }
            }
            f.advance_to(t);
            prop_assert!(f.process_heartbeats(t).is_empty());
            for id in &ids[1..] {
                f.send(Message::new(*id, master, MessageKind::Heartbeat, Vec::new())).unwrap();
            }
        }
        prop_assert_eq!(f.status().len(), NODES);
    }

    #[test]
    fn daemon_ids_are_unique(n in 1usize..40, seed in any::<u64>()) {
        let mut f = Fabric::new(FabricConfig::default(), ClockMode::Simulated { seed });
        for i in 0..n {
            f.add_node(roles()[i % NODES], i as u32);
        }
        let ids: BTreeSet<u32> = f.nodes().map(|n| n.daemon_id).collect();
        prop_assert_eq!(ids.len(), n);
    }
}

#[test]
fn silent_node_dies_exactly_once_after_timeout() {
    let cfg = FabricConfig::default();
    let timeout = cfg.heartbeat_timeout_ms();
    let mut f = Fabric::new(cfg, ClockMode::Simulated { seed: 1 });
    f.add_node(Role::NamespaceMaster, 0);
    let worker = f.add_node(Role::BlockNode, 1);
    f.advance_to(timeout);
    assert!(f.process_heartbeats(timeout).is_empty());
    f.advance_to(timeout + 1);
    assert_eq!(f.process_heartbeats(timeout + 1), vec![worker]);
    assert!(f.process_heartbeats(timeout + 5000).is_empty());
    assert!(!f.is_alive(worker));
}

#[test]
fn fault_script_text_matches_actions() {
    let s = FaultScript::parse("kill 3 @ 2000\npartition 1,2|3 @ 10\nheal @ 20\ndelay 4 100 @ 5\n").unwrap();
    let actions: Vec<String> = s.events.iter().map(|e| format!("{} @ {}", e.action, e.at_ms)).collect();
    assert_eq!(actions, ["kill 3 @ 2000", "partition 1,2|3 @ 10", "heal @ 20", "delay 4 100 @ 5"]);
    assert!(FaultScript::parse("").unwrap().is_empty());
    assert!(FaultScript::parse("explode 3 @ 1").is_err());
}
