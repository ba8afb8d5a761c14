//! Double-buffered frame arena carried alongside the command ring.
//!
//! Frame `k` uses buffer `k % 2`. The producer owns it from `try_begin_frame`
//! until `end_frame`, and only then publishes the frame's descriptors, so
//! the consumer never sees a buffer that is still being written. The
//! consumer owns it until it dequeues the frame's `FrameMark`, after which
//! the producer may reuse it for frame `k + 2` and collect the completions
//! the consumer left there. Reads therefore complete with one frame of
//! latency.

use std::cell::UnsafeCell;
use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::sync::Arc;

use super::ring::{spsc_ring, Consumer, Producer};
use super::{CommandDescriptor, CommandOp, RingError, Span};
use crate::soastore::{ClassId, ColumnStore, FieldId, GenerationalHandle, StoreError};

const FREE: u8 = 0;
const WRITING: u8 = 1;
const SEALED: u8 = 2;

#[derive(Default)]
struct Buffer {
    handles: Vec<u64>,
    payload: Vec<f32>,
}

/// Result of one executed command, handed back to the producer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Completion {
    pub seq: u64,
    pub op: CommandOp,
    /// Created handles for `Create`.
    pub handles: Vec<u64>,
    /// Gathered rows for `BatchRead`, row-major.
    pub values: Vec<f32>,
    /// Per-row liveness for `BatchRead`.
    pub live: Vec<bool>,
    /// Failure text if the command was rejected by the store.
    pub error: Option<String>,
}

struct Slot {
    state: AtomicU8,
    input: UnsafeCell<Buffer>,
    output: UnsafeCell<Vec<Completion>>,
}

struct ArenaShared {
    slots: [Slot; 2],
    /// Number of frames the consumer has finished.
    released: AtomicU64,
}

// SAFETY: slot ownership alternates between the two endpoints following
// the protocol in the module docs; every hand-over is a release store
// observed by an acquire load (ring cursors or `released`).
unsafe impl Sync for ArenaShared {}
unsafe impl Send for ArenaShared {}

pub struct FrameProducer {
    ring: Producer<CommandDescriptor>,
    arena: Arc<ArenaShared>,
    /// Frame being recorded, or the next one to begin.
    frame: u64,
    open: bool,
    next_seq: u64,
    pending: VecDeque<CommandDescriptor>,
    completions: Vec<Completion>,
}

pub struct FrameConsumer {
    ring: Consumer<CommandDescriptor>,
    arena: Arc<ArenaShared>,
    frame: u64,
}

/// A dequeued command with its spans resolved against the front buffer.
#[derive(Clone, Copy, Debug)]
pub struct Command<'a> {
    pub desc: CommandDescriptor,
    pub handles: &'a [u64],
    pub payload: &'a [f32],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Poll {
    Empty,
    Executed(CommandOp),
    /// The consumer finished this frame and released its buffer.
    FrameEnd(u64),
}

pub fn frame_channel(capacity: usize) -> Result<(FrameProducer, FrameConsumer), RingError> {
    let (tx, rx) = spsc_ring(capacity)?;
    let slot = || Slot {
        state: AtomicU8::new(FREE),
        input: UnsafeCell::new(Buffer::default()),
        output: UnsafeCell::new(Vec::new()),
    };
    let arena = Arc::new(ArenaShared {
        slots: [slot(), slot()],
        released: AtomicU64::new(0),
    });
    Ok((
        FrameProducer {
            ring: tx,
            arena: Arc::clone(&arena),
            frame: 0,
            open: false,
            next_seq: 0,
            pending: VecDeque::new(),
            completions: Vec::new(),
        },
        FrameConsumer {
            ring: rx,
            arena,
            frame: 0,
        },
    ))
}

fn span(start: usize, len: usize) -> Result<Span, RingError> {
    let offset = u32::try_from(start).map_err(|_| RingError::ArenaOverflow)?;
    let len = u32::try_from(len).map_err(|_| RingError::ArenaOverflow)?;
    offset.checked_add(len).ok_or(RingError::ArenaOverflow)?;
    Ok(Span { offset, len })
}

impl FrameProducer {
    /// Index of the frame being recorded (or next to be recorded).
    pub fn frame(&self) -> u64 {
        self.frame
    }

    /// Opens the next frame if its buffer is back from the consumer. On
    /// success, completions left in that buffer become available through
    /// [`take_completions`](Self::take_completions).
    pub fn try_begin_frame(&mut self) -> Result<(), RingError> {
        if self.open {
            return Err(RingError::FrameOpen);
        }
        let k = self.frame;
        if k >= 2 && self.arena.released.load(Ordering::Acquire) < k - 1 {
            return Err(RingError::BackBufferBusy(k, k - 2));
        }
        let slot = &self.arena.slots[(k % 2) as usize];
        slot.state.store(WRITING, Ordering::Relaxed);
        // SAFETY: frame k - 2 is released (or never existed), so the
        // consumer holds no reference into this slot.
        unsafe {
            let input = &mut *slot.input.get();
            input.handles.clear();
            input.payload.clear();
            self.completions.append(&mut *slot.output.get());
        }
        self.open = true;
        Ok(())
    }

    fn back(&mut self) -> Result<&mut Buffer, RingError> {
        if !self.open {
            return Err(RingError::NoFrame);
        }
        // SAFETY: the open frame's slot belongs to the producer.
        Ok(unsafe { &mut *self.arena.slots[(self.frame % 2) as usize].input.get() })
    }

    fn record(
        &mut self,
        op: CommandOp,
        class: u32,
        field: u32,
        handles: &[u64],
        payload: &[f32],
    ) -> Result<u64, RingError> {
        let buf = self.back()?;
        let h = span(buf.handles.len(), handles.len())?;
        let p = span(buf.payload.len(), payload.len())?;
        buf.handles.extend_from_slice(handles);
        buf.payload.extend_from_slice(payload);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.push_back(CommandDescriptor {
            seq,
            class,
            field,
            handles: h,
            payload: p,
            op,
        });
        Ok(seq)
    }

    pub fn batch_read(&mut self, class: u32, field: u32, handles: &[u64]) -> Result<u64, RingError> {
        self.record(CommandOp::BatchRead, class, field, handles, &[])
    }

    /// `payload` holds `handles.len()` rows of the field's width.
    pub fn batch_write(&mut self, class: u32, field: u32, handles: &[u64], payload: &[f32]) -> Result<u64, RingError> {
        self.record(CommandOp::BatchWrite, class, field, handles, payload)
    }

    pub fn create(&mut self, class: u32, count: u32) -> Result<u64, RingError> {
        self.back()?;
        let seq = self.next_seq;
        self.next_seq += 1;
        let handles = Span { offset: 0, len: count };
        self.pending.push_back(CommandDescriptor {
            seq,
            class,
            handles,
            op: CommandOp::Create,
            ..Default::default()
        });
        Ok(seq)
    }

    pub fn destroy(&mut self, class: u32, handles: &[u64]) -> Result<u64, RingError> {
        self.record(CommandOp::Destroy, class, 0, handles, &[])
    }

    /// Seals the frame, queues its `FrameMark` and publishes as much as the
    /// ring accepts. Returns whether everything was published.
    pub fn end_frame(&mut self) -> Result<bool, RingError> {
        if !self.open {
            return Err(RingError::NoFrame);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.push_back(CommandDescriptor {
            seq,
            op: CommandOp::FrameMark,
            ..Default::default()
        });
        self.arena.slots[(self.frame % 2) as usize]
            .state
            .store(SEALED, Ordering::Relaxed);
        self.open = false;
        self.frame += 1;
        Ok(self.flush())
    }

    /// Publishes pending descriptors of sealed frames; true when none remain.
    pub fn flush(&mut self) -> bool {
        while let Some(desc) = self.pending.front() {
            if !self.ring.try_enqueue(*desc) {
                return false;
            }
            self.pending.pop_front();
        }
        true
    }

    /// Descriptors waiting for ring space.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn take_completions(&mut self) -> Vec<Completion> {
        std::mem::take(&mut self.completions)
    }

    pub fn frames_released(&self) -> u64 {
        self.arena.released.load(Ordering::Acquire)
    }
}

impl FrameConsumer {
    /// Frame whose commands are being executed.
    pub fn frame(&self) -> u64 {
        self.frame
    }

    /// Dequeues one descriptor and runs `handler` on it. A returned
    /// completion is stored for the producer.
    pub fn poll(&mut self, handler: &mut dyn FnMut(Command<'_>) -> Option<Completion>) -> Poll {
        let Some(desc) = self.ring.try_dequeue() else {
            return Poll::Empty;
        };
        let slot = &self.arena.slots[(self.frame % 2) as usize];
        if desc.op == CommandOp::FrameMark {
            let done = self.frame;
            slot.state.store(FREE, Ordering::Relaxed);
            self.frame += 1;
            self.arena.released.store(self.frame, Ordering::Release);
            return Poll::FrameEnd(done);
        }
        assert_eq!(
            slot.state.load(Ordering::Relaxed),
            SEALED,
            "consumer reached an unsealed arena buffer"
        );
        // SAFETY: the frame was sealed before its descriptors were
        // published, and the producer cannot reopen this slot until we
        // release the frame.
        let (input, output) = unsafe { (&*slot.input.get(), &mut *slot.output.get()) };
        let cmd = Command {
            desc,
            handles: if desc.op == CommandOp::Create {
                &[]
            } else {
                &input.handles[desc.handles.range()]
            },
            payload: &input.payload[desc.payload.range()],
        };
        if let Some(done) = handler(cmd) {
            output.push(done);
        }
        Poll::Executed(desc.op)
    }

    /// Polls until the ring is empty or a frame ends.
    pub fn drain_frame(&mut self, handler: &mut dyn FnMut(Command<'_>) -> Option<Completion>) -> Option<u64> {
        loop {
            match self.poll(handler) {
                Poll::Empty => return None,
                Poll::FrameEnd(k) => return Some(k),
                Poll::Executed(_) => {}
            }
        }
    }
}

/// Executes one command against a store. Reads, creates and failures
/// produce a completion; successful writes and destroys do not.
pub fn apply_to_store(store: &mut ColumnStore, cmd: Command<'_>) -> Option<Completion> {
    let class = ClassId(cmd.desc.class);
    let field = FieldId {
        class,
        column: cmd.desc.field,
    };
    let handles: Vec<GenerationalHandle> = cmd
        .handles
        .iter()
        .map(|&h| GenerationalHandle::unpack(class, h))
        .collect();
    let mut done = Completion {
        seq: cmd.desc.seq,
        op: cmd.desc.op,
        ..Default::default()
    };
    let result: Result<bool, StoreError> = match cmd.desc.op {
        CommandOp::BatchRead => store
            .field_spec(field)
            .map(|spec| spec.components as usize)
            .and_then(|k| {
                done.values = vec![0.0; handles.len() * k];
                done.live = vec![false; handles.len()];
                store
                    .batch_read_into(field, &handles, &mut done.values, &mut done.live)
                    .map(|_| true)
            }),
        CommandOp::BatchWrite => store.batch_write_from(field, &handles, cmd.payload).map(|_| false),
        CommandOp::Create => store.create_many(class, cmd.desc.handles.len as usize).map(|created| {
            done.handles = created.into_iter().map(GenerationalHandle::pack).collect();
            true
        }),
        CommandOp::Destroy => handles.iter().try_for_each(|&h| store.destroy(h)).map(|_| false),
        CommandOp::FrameMark => Ok(false),
    };
    match result {
        Ok(true) => Some(done),
        Ok(false) => None,
        Err(e) => {
            done.error = Some(e.to_string());
            Some(done)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noop(_: Command<'_>) -> Option<Completion> {
        None
    }

    #[test]
    fn producer_waits_for_release_two_frames_back() {
        let (mut tx, mut rx) = frame_channel(16).unwrap();
        for _ in 0..2 {
            tx.try_begin_frame().unwrap();
            tx.batch_read(0, 0, &[1, 2]).unwrap();
            assert!(tx.end_frame().unwrap());
        }
        assert_eq!(tx.try_begin_frame(), Err(RingError::BackBufferBusy(2, 0)));
        assert_eq!(rx.drain_frame(&mut noop), Some(0));
        tx.try_begin_frame().unwrap();
        assert_eq!(tx.try_begin_frame(), Err(RingError::FrameOpen));
    }

    #[test]
    fn spans_resolve_against_the_frame_buffer() {
        let (mut tx, mut rx) = frame_channel(8).unwrap();
        tx.try_begin_frame().unwrap();
        tx.batch_write(3, 1, &[10, 11], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        tx.batch_read(3, 1, &[12]).unwrap();
        tx.end_frame().unwrap();
        let mut seen = Vec::new();
        rx.drain_frame(&mut |cmd| {
            seen.push((cmd.desc.op, cmd.handles.to_vec(), cmd.payload.to_vec()));
            None
        });
        assert_eq!(
            seen,
            vec![
                (CommandOp::BatchWrite, vec![10, 11], vec![1.0, 2.0, 3.0, 4.0]),
                (CommandOp::BatchRead, vec![12], vec![]),
            ]
        );
    }

    #[test]
    fn recording_needs_an_open_frame() {
        let (mut tx, _rx) = frame_channel(8).unwrap();
        assert_eq!(tx.batch_read(0, 0, &[]), Err(RingError::NoFrame));
        assert_eq!(tx.end_frame(), Err(RingError::NoFrame));
    }
}
