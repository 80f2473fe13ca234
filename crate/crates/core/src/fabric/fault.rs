//! Scripted fault injection.
//!
//! Script text has one event per line:
//!
//! ```text
//! kill <node> @ <ms>
//! partition <ids>|<ids> @ <ms>
//! heal @ <ms>
//! delay <node> <ms> @ <ms>
//! ```
//!
//! Times are relative to the moment the script is injected. Blank lines and
//! `#` comments are ignored.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::node::NodeId;
use super::FabricError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultAction {
    Kill(NodeId),
    Partition(BTreeSet<NodeId>, BTreeSet<NodeId>),
    /// Clears every partition and injected delay.
    Heal,
    Delay(NodeId, u64),
}

impl fmt::Display for FaultAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn ids(set: &BTreeSet<NodeId>) -> String {
            set.iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
        match self {
            FaultAction::Kill(n) => write!(f, "kill {n}"),
            FaultAction::Partition(a, b) => write!(f, "partition {}|{}", ids(a), ids(b)),
            FaultAction::Heal => f.write_str("heal"),
            FaultAction::Delay(n, ms) => write!(f, "delay {n} {ms}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub at_ms: u64,
    pub action: FaultAction,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultScript {
    pub events: Vec<FaultEvent>,
}

impl FaultScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, at_ms: u64, action: FaultAction) -> Self {
        self.events.push(FaultEvent { at_ms, action });
        self
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Parses the line-oriented script format. Errors carry the 1-based line.
    pub fn parse(text: &str) -> Result<FaultScript, FabricError> {
        let mut events = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |why: &str| FabricError::InvalidScript(format!("line {}: {why}", idx + 1));
            let (body, at) = line.rsplit_once('@').ok_or_else(|| bad("missing '@ <ms>'"))?;
            let at_ms: u64 = at.trim().parse().map_err(|_| bad("bad time"))?;
            let words: Vec<&str> = body.split_whitespace().collect();
            let action = match words.as_slice() {
                ["kill", node] => FaultAction::Kill(parse_node(node).ok_or_else(|| bad("bad node id"))?),
                ["heal"] => FaultAction::Heal,
                ["delay", node, ms] => FaultAction::Delay(
                    parse_node(node).ok_or_else(|| bad("bad node id"))?,
                    ms.parse().map_err(|_| bad("bad delay"))?,
                ),
                ["partition", rest @ ..] => {
                    let joined = rest.concat();
                    let (a, b) = joined
                        .split_once('|')
                        .ok_or_else(|| bad("partition needs '<ids>|<ids>'"))?;
                    FaultAction::Partition(
                        parse_set(a).ok_or_else(|| bad("bad id list"))?,
                        parse_set(b).ok_or_else(|| bad("bad id list"))?,
                    )
                }
                _ => return Err(bad("unknown action")),
            };
            events.push(FaultEvent { at_ms, action });
        }
        Ok(FaultScript { events })
    }

    /// Checks the script against the set of known nodes.
    pub fn validate(&self, known: &BTreeSet<NodeId>) -> Result<(), FabricError> {
        let mut last = 0;
        for (i, ev) in self.events.iter().enumerate() {
            let bad = |why: String| FabricError::InvalidScript(format!("event {}: {why}", i + 1));
            if ev.at_ms < last {
                return Err(bad("times must be non-decreasing".into()));
            }
            last = ev.at_ms;
            match &ev.action {
                FaultAction::Kill(n) | FaultAction::Delay(n, _) => {
                    if !known.contains(n) {
                        return Err(bad(format!("unknown node {n}")));
                    }
                }
                FaultAction::Partition(a, b) => {
                    if a.is_empty() || b.is_empty() {
                        return Err(bad("partition sides must be nonempty".into()));
                    }
                    if !a.is_disjoint(b) {
                        return Err(bad("partition sides overlap".into()));
                    }
                    if let Some(n) = a.iter().chain(b).find(|n| !known.contains(n)) {
                        return Err(bad(format!("unknown node {n}")));
                    }
                }
                FaultAction::Heal => {}
            }
        }
        Ok(())
    }
}

fn parse_node(s: &str) -> Option<NodeId> {
    s.trim().parse().ok().map(NodeId)
}

fn parse_set(s: &str) -> Option<BTreeSet<NodeId>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(parse_node)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known(n: u32) -> BTreeSet<NodeId> {
        (0..n).map(NodeId).collect()
    }

    #[test]
    fn parses_every_action() {
        let script = FaultScript::parse(
            "# warmup\nkill 3 @ 2000\npartition 0|1,2 @ 2500\nheal @ 3000\ndelay 2 500 @ 3000\n",
        )
        .unwrap();
        assert_eq!(script.events.len(), 4);
        assert_eq!(script.events[0].action, FaultAction::Kill(NodeId(3)));
        assert_eq!(
            script.events[1].action,
            FaultAction::Partition(
                [NodeId(0)].into_iter().collect(),
                [NodeId(1), NodeId(2)].into_iter().collect()
            )
        );
        assert_eq!(script.events[3].action, FaultAction::Delay(NodeId(2), 500));
        script.validate(&known(5)).unwrap();
    }

    #[test]
    fn empty_script_is_valid() {
        let script = FaultScript::parse("\n   \n").unwrap();
        assert!(script.is_empty());
        script.validate(&known(1)).unwrap();
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = FaultScript::parse("heal @ 1\nexplode 3 @ 4").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(FaultScript::parse("kill 3").is_err());
        assert!(FaultScript::parse("kill x @ 3").is_err());
    }

    #[test]
    fn validation_rules() {
        let k = known(4);
        let unknown = FaultScript::new().push(0, FaultAction::Kill(NodeId(9)));
        assert!(unknown.validate(&k).is_err());
        let backwards = FaultScript::new()
            .push(10, FaultAction::Heal)
            .push(5, FaultAction::Heal);
        assert!(backwards.validate(&k).is_err());
        let overlap = FaultScript::parse("partition 0,1|1,2 @ 0").unwrap();
        assert!(overlap.validate(&k).is_err());
        let outside = FaultScript::parse("partition 0|7 @ 0").unwrap();
        assert!(outside.validate(&k).is_err());
    }
}
