//! Simulated cluster substrate: membership, transport, failure detection and
//! fault injection.

mod bus;
mod clock;
mod events;
mod fault;
mod message;
mod node;

pub use bus::{Fabric, FabricConfig, FabricEvent, FabricSnapshot};
pub use clock::{Clock, ClockMode};
pub use events::EventLog;
pub use fault::{FaultAction, FaultEvent, FaultScript};
pub use message::{decode_frame, encode_frame, DeliveryOutcome, Message, MessageKind, FRAME_HEADER_LEN};
pub use node::{NodeId, NodeInfo, NodeState, Role};

#[derive(Debug, thiserror::Error)]
pub enum FabricError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("source node {0} is not running")]
    SourceDown(NodeId),
    #[error("frame payload of {len} bytes exceeds the {max}-byte limit")]
    FrameTooLarge { len: usize, max: usize },
    #[error("unknown message kind tag {0}")]
    BadFrame(u8),
    #[error("invalid fault script: {0}")]
    InvalidScript(String),
}

/// Renders `status()` the way the operator sees it: `"<daemonId> <DaemonName>\n"`
/// per live daemon.
pub fn render_status(lines: &[(u32, &str)]) -> String {
    lines
        .iter()
        .map(|(id, name)| format!("{id} {name}\n"))
        .collect()
}
