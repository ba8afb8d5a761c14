//! Enqueue-to-dequeue latency of the ring.

use std::hint::black_box;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use serde::Serialize;

use super::ring::spsc_ring;
use super::RingError;

pub const MIN_LATENCY_SAMPLES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LatencyMode {
    /// Producer and consumer on separate threads, one message in flight.
    CrossThread,
    /// Enqueue then dequeue on the calling thread.
    SelfDrive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatencyStats {
    pub capacity: usize,
    pub iterations: usize,
    pub median_ns: f64,
    pub p99_ns: f64,
    /// Cost of one clock read, already subtracted from every sample.
    pub clock_overhead_ns: f64,
}

/// Minimum observed gap between two back-to-back clock reads.
fn clock_overhead(base: Instant) -> u64 {
    (0..10_000)
        .map(|_| {
            let a = base.elapsed().as_nanos() as u64;
            let b = base.elapsed().as_nanos() as u64;
            b - a
        })
        .min()
        .unwrap_or(0)
}

fn percentile(sorted: &[u64], q: f64) -> f64 {
    let at = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[at] as f64
}

/// Measures `iterations` enqueue/dequeue pairs. In cross-thread mode the
/// producer stamps each message with a shared monotonic clock and waits for
/// the consumer's acknowledgement before sending the next, so samples show
/// hand-off latency rather than queueing delay.
pub fn measure_pair_latency(capacity: usize, iterations: usize, mode: LatencyMode) -> Result<LatencyStats, RingError> {
    if iterations < MIN_LATENCY_SAMPLES {
        return Err(RingError::TooFewSamples {
            min: MIN_LATENCY_SAMPLES,
            got: iterations,
        });
    }
    let (mut tx, mut rx) = spsc_ring::<u64>(capacity)?;
    let base = Instant::now();
    let overhead = clock_overhead(base);
    let now = move || base.elapsed().as_nanos() as u64;

    let mut samples = match mode {
        LatencyMode::SelfDrive => (0..iterations)
            .map(|_| {
                let t0 = now();
                tx.try_enqueue(black_box(t0));
                let got = rx.try_dequeue();
                let t1 = now();
                black_box(got);
                (t1 - t0).saturating_sub(overhead)
            })
            .collect::<Vec<_>>(),
        LatencyMode::CrossThread => {
            let acked = Arc::new(AtomicU64::new(0));
            let consumer_acked = Arc::clone(&acked);
            let consumer = thread::spawn(move || {
                let mut out = Vec::with_capacity(iterations);
                while out.len() < iterations {
                    match rx.try_dequeue() {
                        Some(t0) => {
                            let t1 = now();
                            out.push(t1.saturating_sub(t0).saturating_sub(overhead));
                            consumer_acked.store(out.len() as u64, Ordering::Release);
                        }
                        None => thread::yield_now(),
                    }
                }
                out
            });
            for k in 0..iterations as u64 {
                while acked.load(Ordering::Acquire) < k {
                    thread::yield_now();
                }
                while !tx.try_enqueue(now()) {
                    thread::yield_now();
                }
            }
            consumer.join().expect("latency consumer panicked")
        }
    };
    samples.sort_unstable();
    Ok(LatencyStats {
        capacity,
        iterations,
        median_ns: percentile(&samples, 0.5),
        p99_ns: percentile(&samples, 0.99),
        clock_overhead_ns: overhead as f64,
    })
}
