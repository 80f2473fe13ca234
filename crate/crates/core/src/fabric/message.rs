//! Messages and their wire framing.
//!
//! A frame is a 4-byte big-endian payload length, a 1-byte kind tag and the
//! payload bytes. The in-process bus carries encoded frames so the same
//! bytes could be written to a socket unchanged.

use serde::{Deserialize, Serialize};

use super::node::NodeId;
use super::FabricError;

pub const FRAME_HEADER_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MessageKind {
    Heartbeat = 1,
    WriteBlock = 2,
    BlockReceived = 3,
    ReadBlock = 4,
    BlockContent = 5,
    ReplicateBlock = 6,
    DeleteBlock = 7,
    MetadataCall = 8,
    LaunchTask = 9,
    TaskStatus = 10,
    FetchSpill = 11,
    SpillContent = 12,
    ImageRequest = 13,
    ImageContent = 14,
}

impl MessageKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        use MessageKind::*;
        Some(match tag {
            1 => Heartbeat,
            2 => WriteBlock,
            3 => BlockReceived,
            4 => ReadBlock,
            5 => BlockContent,
            6 => ReplicateBlock,
            7 => DeleteBlock,
            8 => MetadataCall,
            9 => LaunchTask,
            10 => TaskStatus,
            11 => FetchSpill,
            12 => SpillContent,
            13 => ImageRequest,
            14 => ImageContent,
            _ => return None,
        })
    }

    pub fn tag(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: MessageKind,
    pub payload: Vec<u8>,
    /// Assigned by the fabric on send; strictly increasing per (src, dst).
    pub seq: u64,
}

impl Message {
    pub fn new(src: NodeId, dst: NodeId, kind: MessageKind, payload: Vec<u8>) -> Self {
        Message {
            src,
            dst,
            kind,
            payload,
            seq: 0,
        }
    }

    pub fn encode_frame(&self) -> Vec<u8> {
        encode_frame(self.kind, &self.payload)
    }
}

pub fn encode_frame(kind: MessageKind, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.push(kind.tag());
    out.extend_from_slice(payload);
    out
}

/// Decodes one frame from the front of `buf`, returning the kind, payload and
/// the number of bytes consumed. `Ok(None)` means more bytes are needed.
pub fn decode_frame(
    buf: &[u8],
    max_payload: usize,
) -> Result<Option<(MessageKind, Vec<u8>, usize)>, FabricError> {
    if buf.len() < FRAME_HEADER_LEN {
        return Ok(None);
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if len > max_payload {
        return Err(FabricError::FrameTooLarge {
            len,
            max: max_payload,
        });
    }
    let kind = MessageKind::from_tag(buf[4]).ok_or(FabricError::BadFrame(buf[4]))?;
    let end = FRAME_HEADER_LEN + len;
    if buf.len() < end {
        return Ok(None);
    }
    Ok(Some((kind, buf[FRAME_HEADER_LEN..end].to_vec(), end)))
}

/// Outcome of a single send as decided by the fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeliveryOutcome {
    Delivered,
    Dropped,
    Delayed(u64),
}

impl DeliveryOutcome {
    pub fn reaches_destination(self) -> bool {
        !matches!(self, DeliveryOutcome::Dropped)
    }
}
