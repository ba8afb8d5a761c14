//! Ring checks against a bounded queue model and a threaded sequence audit.

use std::collections::VecDeque;
use std::thread;

use kiln::cmdring::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
enum Step {
    Push,
    Pop,
}

/// Runs every push/pop schedule of at most `max_ops` steps against a
/// bounded queue of `capacity - 1` items. Panics on the first divergence;
/// returns the number of schedules checked.
pub fn exhaustive_schedules(capacity: usize, max_ops: u32) -> usize {
    let usable = capacity - 1;
    let mut schedules = 0;
    for len in 0..=max_ops {
        for bits in 0..(1u32 << len) {
            let steps: Vec<Step> = (0..len)
                .map(|k| if bits >> k & 1 == 1 { Step::Push } else { Step::Pop })
                .collect();
            let (mut tx, mut rx) = spsc_ring::<u32>(capacity).unwrap();
            let mut model = VecDeque::new();
            let mut next = 0;
            for step in &steps {
                match step {
                    Step::Push => {
                        let accepted = tx.try_enqueue(next);
                        let model_accepts = model.len() < usable;
                        assert_eq!(accepted, model_accepts, "{steps:?}");
                        if model_accepts {
                            model.push_back(next);
                        }
                        next += 1;
                    }
                    Step::Pop => assert_eq!(rx.try_dequeue(), model.pop_front(), "{steps:?}"),
                }
                assert!(rx.len() <= usable);
            }
            schedules += 1;
        }
    }
    schedules
}

/// Streams `messages` descriptors through a ring of `capacity` between two
/// threads with random stalls, panicking on a gap, duplicate or torn record.
pub fn audit(capacity: usize, messages: u64, seed: u64) {
    let (mut tx, mut rx) = spsc_ring::<CommandDescriptor>(capacity).unwrap();
    let consumer = thread::spawn(move || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut expected = 0u64;
        let mut max_seen = 0;
        while expected < messages {
            max_seen = max_seen.max(rx.len());
            match rx.try_dequeue() {
                Some(d) => {
                    assert_eq!(d.seq, expected, "gap or duplicate");
                    assert_eq!(d.class, (d.seq % 7) as u32, "torn record");
                    expected += 1;
                }
                None => thread::yield_now(),
            }
            if rng.gen_ratio(1, 4096) {
                thread::yield_now();
            }
        }
        max_seen
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = 0;
    while seq < messages {
        let desc = CommandDescriptor {
            seq,
            class: (seq % 7) as u32,
            op: CommandOp::BatchRead,
            ..Default::default()
        };
        if tx.try_enqueue(desc) {
            seq += 1;
        } else {
            thread::yield_now();
        }
        if rng.gen_ratio(1, 4096) {
            thread::yield_now();
        }
    }
    let max_seen = consumer.join().unwrap();
    assert!(max_seen < capacity, "occupancy {max_seen} on capacity {capacity}");
}
