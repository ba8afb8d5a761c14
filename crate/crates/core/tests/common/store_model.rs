//! Shadow model of the column store: a plain map of slots, each holding its
//! generation, liveness and field values, with its own free-slot policy.

use kiln::soastore::*;
use rand::Rng;

#[derive(Clone, Debug)]
struct Slot {
    generation: u32,
    live: bool,
    position: [f32; 3],
    mass: f32,
}

#[derive(Default)]
pub struct StoreModel {
    slots: Vec<Slot>,
}

impl StoreModel {
    fn lowest_free(&self) -> Option<usize> {
        self.slots.iter().position(|s| !s.live)
    }

    fn create(&mut self) -> (u32, u32) {
        match self.lowest_free() {
            Some(i) => {
                let s = &mut self.slots[i];
                s.live = true;
                s.position = [0.0; 3];
                s.mass = 0.0;
                (i as u32, s.generation)
            }
            None => {
                self.slots.push(Slot {
                    generation: 0,
                    live: true,
                    position: [0.0; 3],
                    mass: 0.0,
                });
                ((self.slots.len() - 1) as u32, 0)
            }
        }
    }

    fn live(&self, index: u32, generation: u32) -> bool {
        self.slots
            .get(index as usize)
            .map(|s| s.live && s.generation == generation)
            .unwrap_or(false)
    }

    fn destroy(&mut self, index: u32, generation: u32) -> bool {
        if !self.live(index, generation) {
            return false;
        }
        let s = &mut self.slots[index as usize];
        s.live = false;
        s.generation += 1;
        true
    }
}

pub fn body_schema() -> ClassSchema {
    ClassSchema::new(
        "Body",
        vec![
            FieldSpec::new("position", LaneType::Packed4F32, 3),
            FieldSpec::scalar("mass", LaneType::F32),
        ],
    )
}

/// Runs `ops` random create/destroy/batch operations against both the store
/// and the shadow model. Returns the number of disagreements.
pub fn fuzz_against_model(rng: &mut impl Rng, ops: usize) -> usize {
    let mut store = ColumnStore::new();
    let class = store.register_class(body_schema()).unwrap();
    let mut model = StoreModel::default();
    // every handle ever issued, live or not
    let mut issued: Vec<GenerationalHandle> = Vec::new();
    let mut violations = 0;

    for _ in 0..ops {
        match rng.gen_range(0..100) {
            0..=29 => {
                let h = store.create(class).unwrap();
                let (index, generation) = model.create();
                violations += usize::from((h.index, h.generation) != (index, generation));
                issued.push(h);
            }
            30..=49 if !issued.is_empty() => {
                let h = issued[rng.gen_range(0..issued.len())];
                let expect_ok = model.destroy(h.index, h.generation);
                let got_ok = match store.destroy(h) {
                    Ok(()) => true,
                    Err(StoreError::StaleHandle(_)) => false,
                    Err(e) => panic!("unexpected {e}"),
                };
                violations += usize::from(expect_ok != got_ok);
            }
            50..=74 if !issued.is_empty() => {
                let n = rng.gen_range(1..=16.min(issued.len()));
                let hs: Vec<_> = (0..n).map(|_| issued[rng.gen_range(0..issued.len())]).collect();
                let rows: Vec<Vec<f32>> = (0..n)
                    .map(|_| (0..3).map(|_| rng.gen_range(-1e3..1e3)).collect())
                    .collect();
                let written = store
                    .batch_write(class, &hs, "position", &BatchArray::from_rows(&rows, 3))
                    .unwrap();
                let mut expect_written = 0;
                for (h, r) in hs.iter().zip(&rows) {
                    if model.live(h.index, h.generation) {
                        model.slots[h.index as usize].position = [r[0], r[1], r[2]];
                        expect_written += 1;
                    }
                }
                violations += usize::from(written != expect_written);
            }
            75..=84 if !issued.is_empty() => {
                let h = issued[rng.gen_range(0..issued.len())];
                let m: f32 = rng.gen_range(0.0..100.0);
                let got = store.set_scalar(h, "mass", Value::F32(m));
                if model.live(h.index, h.generation) {
                    model.slots[h.index as usize].mass = m;
                    violations += usize::from(got.is_err());
                } else {
                    violations += usize::from(!matches!(got, Err(StoreError::StaleHandle(_))));
                }
            }
            _ if !issued.is_empty() => {
                let n = rng.gen_range(1..=32.min(issued.len()));
                let hs: Vec<_> = (0..n).map(|_| issued[rng.gen_range(0..issued.len())]).collect();
                let pos = store.batch_read(class, &hs, "position").unwrap();
                let mass = store.batch_read(class, &hs, "mass").unwrap();
                for (i, h) in hs.iter().enumerate() {
                    let live = model.live(h.index, h.generation);
                    let (want_pos, want_mass) = if live {
                        let s = &model.slots[h.index as usize];
                        (s.position, s.mass)
                    } else {
                        ([0.0; 3], 0.0)
                    };
                    let ok = pos.mask[i] == live
                        && mass.mask[i] == live
                        && pos.row(i) == want_pos
                        && mass.row(i) == [want_mass];
                    violations += usize::from(!ok);
                }
            }
            _ => {}
        }
    }
    violations
}

/// One random batch/scalar comparison: returns true when the batch gather
/// equals the per-element scalar loop for every live handle.
pub fn batch_matches_scalar(rng: &mut impl Rng) -> bool {
    let mut store = ColumnStore::new();
    let class = store
        .register_class(ClassSchema::new(
            "Mixed",
            vec![
                FieldSpec::scalar("f", LaneType::F32),
                FieldSpec::scalar("d", LaneType::F64),
                FieldSpec::scalar("i", LaneType::I32),
                FieldSpec::scalar("l", LaneType::I64),
                FieldSpec::scalar("b", LaneType::Bool),
                FieldSpec::new("q", LaneType::Packed4F32, rng.gen_range(1..=4)),
            ],
        ))
        .unwrap();
    let n = rng.gen_range(0..64);
    let hs = store.create_many(class, n).unwrap();
    for h in &hs {
        store.set_scalar(*h, "f", Value::F32(rng.gen())).unwrap();
        store
            .set_scalar(*h, "d", Value::F64(rng.gen_range(-1e12..1e12)))
            .unwrap();
        store.set_scalar(*h, "i", Value::I32(rng.gen())).unwrap();
        store.set_scalar(*h, "l", Value::I64(rng.gen())).unwrap();
        store.set_scalar(*h, "b", Value::Bool(rng.gen())).unwrap();
        store.set_scalar(*h, "q", Value::Packed(rng.gen())).unwrap();
    }
    for h in &hs {
        if rng.gen_bool(0.2) {
            store.destroy(*h).unwrap();
        }
    }
    let live: Vec<_> = hs.iter().copied().filter(|h| store.is_live(*h)).collect();
    let schema = store.schema(class).unwrap().clone();
    schema.fields.iter().all(|f| {
        let batch = store.batch_read(class, &live, &f.name).unwrap();
        live.iter().enumerate().all(|(i, h)| {
            let scalar = store.get_scalar(*h, &f.name).unwrap();
            batch.mask[i] && batch.row(i) == scalar.to_f32_row(f.components as usize).as_slice()
        })
    })
}
