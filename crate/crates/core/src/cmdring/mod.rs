//! Wait-free single-producer single-consumer command ring.
//!
//! [`spsc_ring`] returns two endpoints over a power-of-two slot array with
//! monotonic 64-bit cursors; one slot stays empty so full and empty differ.
//! [`frame_channel`] layers a double-buffered arena on top: a submitting
//! thread records batch commands for frame `k` while the store-owning
//! thread executes frame `k - 1`.

mod arena;
mod latency;
mod ring;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arena::{apply_to_store, frame_channel, Command, Completion, FrameConsumer, FrameProducer, Poll};
pub use latency::{measure_pair_latency, LatencyMode, LatencyStats, MIN_LATENCY_SAMPLES};
pub use ring::{spsc_ring, Consumer, Producer};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CommandOp {
    BatchRead,
    BatchWrite,
    Create,
    Destroy,
    #[default]
    FrameMark,
}

/// `(offset, len)` into one of the frame arena's buffers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(C)]
pub struct Span {
    pub offset: u32,
    pub len: u32,
}

impl Span {
    pub fn range(self) -> std::ops::Range<usize> {
        self.offset as usize..(self.offset + self.len) as usize
    }
}

/// Fixed-size record carried by the ring.
///
/// `handles` points into the arena's packed-handle buffer, except for
/// `Create` where only its length is used, as the number to create.
/// `payload` points into the arena's float buffer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(C)]
pub struct CommandDescriptor {
    pub seq: u64,
    pub class: u32,
    /// Pre-resolved field column.
    pub field: u32,
    pub handles: Span,
    pub payload: Span,
    pub op: CommandOp,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("ring capacity must be a power of two of at least 2, got {0}")]
    InvalidCapacity(usize),
    #[error("latency measurement needs at least {min} iterations, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("a frame is already open")]
    FrameOpen,
    #[error("no frame is open")]
    NoFrame,
    #[error("frame {0} cannot start until the consumer releases frame {1}")]
    BackBufferBusy(u64, u64),
    #[error("arena buffer exceeds u32 offsets")]
    ArenaOverflow,
}
