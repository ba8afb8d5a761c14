mod common;

use std::thread;

use common::ring_model::{audit, exhaustive_schedules};
use kiln::cmdring::*;
use kiln::soastore::*;

/// Every schedule of up to six operations on a capacity-4 ring matches a
/// bounded queue holding three items.
#[test]
fn exhaustive_small_schedules_match_a_bounded_queue() {
    assert_eq!(exhaustive_schedules(4, 6), 127);
}

#[test]
fn million_messages_arrive_in_order() {
    audit(1024, 1_000_000, 11);
}

#[test]
fn randomized_interleavings_on_small_rings() {
    for (capacity, seed) in [(2, 1), (4, 2), (8, 3), (64, 4)] {
        audit(capacity, 100_000, seed);
    }
}

#[test]
fn descriptor_is_a_small_fixed_record() {
    assert_eq!(std::mem::size_of::<CommandDescriptor>(), 40);
}

#[test]
fn frames_round_trip_through_a_store_on_another_thread() {
    const FRAMES: u64 = 200;
    let mut store = ColumnStore::new();
    let class = store
        .register_class(ClassSchema::new(
            "body",
            vec![FieldSpec::scalar("height", LaneType::F32)],
        ))
        .unwrap();
    let handles: Vec<u64> = store
        .create_many(class, 64)
        .unwrap()
        .into_iter()
        .map(|h| h.pack())
        .collect();
    let field = store.field_id(class, "height").unwrap().column;

    let (mut tx, mut rx) = frame_channel(16).unwrap();
    let consumer = thread::spawn(move || {
        let mut frames = 0;
        while frames < FRAMES {
            match rx.poll(&mut |cmd| apply_to_store(&mut store, cmd)) {
                Poll::Empty => thread::yield_now(),
                Poll::FrameEnd(k) => {
                    assert_eq!(k, frames);
                    frames += 1;
                }
                Poll::Executed(_) => {}
            }
        }
        store
    });

    let mut reads = Vec::new();
    for frame in 0..FRAMES {
        while tx.try_begin_frame().is_err() {
            tx.flush();
            thread::yield_now();
        }
        reads.extend(tx.take_completions());
        let values: Vec<f32> = (0..64).map(|r| (frame * 100 + r) as f32).collect();
        tx.batch_write(class.0, field, &handles, &values).unwrap();
        tx.batch_read(class.0, field, &handles).unwrap();
        while !tx.end_frame().unwrap() && !tx.flush() {
            thread::yield_now();
        }
    }
    while !tx.flush() {
        thread::yield_now();
    }
    let store = consumer.join().unwrap();
    assert_eq!(store.crossing_count(), 2 * FRAMES);

    // Completions of frame k come back when frame k + 2 opens.
    assert_eq!(reads.len() as u64, FRAMES - 2);
    for (k, done) in reads.iter().enumerate() {
        assert_eq!(done.seq, k as u64 * 3 + 1);
        assert!(done.live.iter().all(|&l| l));
        assert_eq!(done.values[5], (k * 100 + 5) as f32);
    }
}

#[test]
fn create_and_destroy_travel_as_commands() {
    let mut store = ColumnStore::new();
    let class = store
        .register_class(ClassSchema::new("c", vec![FieldSpec::scalar("v", LaneType::I32)]))
        .unwrap();
    let (mut tx, mut rx) = frame_channel(8).unwrap();
    tx.try_begin_frame().unwrap();
    tx.create(class.0, 3).unwrap();
    tx.end_frame().unwrap();
    let mut done = Vec::new();
    rx.drain_frame(&mut |cmd| apply_to_store(&mut store, cmd).inspect(|c| done.push(c.clone())));
    assert_eq!(done[0].handles.len(), 3);

    tx.try_begin_frame().unwrap();
    tx.destroy(class.0, &done[0].handles[..2]).unwrap();
    tx.batch_read(class.0, 7, &done[0].handles).unwrap();
    tx.end_frame().unwrap();
    done.clear();
    rx.drain_frame(&mut |cmd| apply_to_store(&mut store, cmd).inspect(|c| done.push(c.clone())));
    assert_eq!(store.live_count(class).unwrap(), 1);
    assert!(done[0].error.as_deref().unwrap().contains("field"), "{:?}", done[0]);
}

#[test]
fn latency_needs_enough_samples() {
    assert_eq!(
        measure_pair_latency(64, 10, LatencyMode::SelfDrive),
        Err(RingError::TooFewSamples {
            min: MIN_LATENCY_SAMPLES,
            got: 10
        })
    );
}

#[test]
fn self_drive_is_faster_than_cross_thread() {
    let local = measure_pair_latency(64, MIN_LATENCY_SAMPLES, LatencyMode::SelfDrive).unwrap();
    let cross = measure_pair_latency(64, MIN_LATENCY_SAMPLES, LatencyMode::CrossThread).unwrap();
    assert!(local.median_ns < cross.median_ns, "{local:?} vs {cross:?}");
    assert!(cross.p99_ns >= cross.median_ns);
}
