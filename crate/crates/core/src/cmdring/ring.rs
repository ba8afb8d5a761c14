use std::cell::UnsafeCell;
use std::mem::MaybeUninit;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::RingError;

#[repr(align(64))]
struct Padded<T>(T);

struct Shared<T> {
    slots: Box<[UnsafeCell<MaybeUninit<T>>]>,
    mask: u64,
    /// Next slot the consumer will read.
    head: Padded<AtomicU64>,
    /// Next slot the producer will write.
    tail: Padded<AtomicU64>,
}

// SAFETY: a slot is written only by the producer while it lies outside
// [head, tail) and read only by the consumer while inside; the cursors'
// release/acquire pairs order those accesses.
unsafe impl<T: Send> Sync for Shared<T> {}

/// Sending endpoint. Exactly one exists per ring.
pub struct Producer<T> {
    shared: Arc<Shared<T>>,
    tail: u64,
    head_cache: u64,
}

/// Receiving endpoint. Exactly one exists per ring.
pub struct Consumer<T> {
    shared: Arc<Shared<T>>,
    head: u64,
    tail_cache: u64,
}

/// Creates a ring with `capacity` slots, of which `capacity - 1` are usable.
/// Capacity must be a power of two and at least 2.
pub fn spsc_ring<T: Copy + Send>(capacity: usize) -> Result<(Producer<T>, Consumer<T>), RingError> {
    if capacity < 2 || !capacity.is_power_of_two() {
        return Err(RingError::InvalidCapacity(capacity));
    }
    let slots = (0..capacity).map(|_| UnsafeCell::new(MaybeUninit::uninit())).collect();
    let shared = Arc::new(Shared {
        slots,
        mask: capacity as u64 - 1,
        head: Padded(AtomicU64::new(0)),
        tail: Padded(AtomicU64::new(0)),
    });
    Ok((
        Producer {
            shared: Arc::clone(&shared),
            tail: 0,
            head_cache: 0,
        },
        Consumer {
            shared,
            head: 0,
            tail_cache: 0,
        },
    ))
}

impl<T: Copy + Send> Producer<T> {
    /// Publishes `item` unless the ring is full. Never blocks or retries.
    pub fn try_enqueue(&mut self, item: T) -> bool {
        let usable = self.shared.mask;
        if self.tail - self.head_cache >= usable {
            self.head_cache = self.shared.head.0.load(Ordering::Acquire);
            if self.tail - self.head_cache >= usable {
                return false;
            }
        }
        let slot = &self.shared.slots[(self.tail & self.shared.mask) as usize];
        // SAFETY: the slot is outside [head, tail), so the consumer is not
        // reading it.
        unsafe { (*slot.get()).write(item) };
        self.tail += 1;
        self.shared.tail.0.store(self.tail, Ordering::Release);
        true
    }

    pub fn capacity(&self) -> usize {
        self.shared.slots.len()
    }

    /// Occupancy as last seen by the producer; may overstate it.
    pub fn len(&self) -> usize {
        (self.tail - self.shared.head.0.load(Ordering::Acquire)) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Copy + Send> Consumer<T> {
    /// Takes the oldest published item, if any. Never blocks or retries.
    pub fn try_dequeue(&mut self) -> Option<T> {
        if self.head == self.tail_cache {
            self.tail_cache = self.shared.tail.0.load(Ordering::Acquire);
            if self.head == self.tail_cache {
                return None;
            }
        }
        let slot = &self.shared.slots[(self.head & self.shared.mask) as usize];
        // SAFETY: the slot is inside [head, tail) and its write happened
        // before the tail store acquired above.
        let item = unsafe { (*slot.get()).assume_init() };
        self.head += 1;
        self.shared.head.0.store(self.head, Ordering::Release);
        Some(item)
    }

    pub fn capacity(&self) -> usize {
        self.shared.slots.len()
    }

    /// Occupancy as last seen by the consumer; may understate it.
    pub fn len(&self) -> usize {
        (self.shared.tail.0.load(Ordering::Acquire) - self.head) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
