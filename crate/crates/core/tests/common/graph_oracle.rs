//! Random frame graphs and a reachability oracle for compiled schedules.

use std::collections::{BTreeMap, BTreeSet};

use kiln::framegraph::*;
use rand::seq::SliceRandom;
use rand::Rng;

pub const KINDS: [ResourceKind; 2] = [ResourceKind::ColorTarget, ResourceKind::ComputeBuffer];
pub const EXTENTS: [ExtentClass; 2] = [ExtentClass::FullRes, ExtentClass::HalfRes];
pub const ACTIONS: [PassAction; 3] = [
    PassAction::DrawRenderers,
    PassAction::FullscreenQuad,
    PassAction::Compute,
];

/// A random DAG: every resource has at most one writer and passes only read
/// resources written by passes declared before them.
pub fn random_graph(rng: &mut impl Rng) -> (FrameGraph, ResourceId) {
    let n_res = rng.gen_range(2..=16);
    let n_pass = rng.gen_range(1..=12);
    let mut g = FrameGraph::new();
    for r in 0..n_res {
        let desc = if rng.gen_bool(0.6) {
            ResourceDesc::transient(
                format!("r{r}"),
                *KINDS.choose(rng).unwrap(),
                *EXTENTS.choose(rng).unwrap(),
            )
        } else {
            ResourceDesc::new(
                format!("r{r}"),
                *KINDS.choose(rng).unwrap(),
                *EXTENTS.choose(rng).unwrap(),
            )
        };
        g.add_resource(desc).unwrap();
    }
    let mut unwritten: Vec<usize> = (0..n_res).collect();
    unwritten.shuffle(rng);
    let mut written: Vec<usize> = Vec::new();
    for p in 0..n_pass {
        if unwritten.is_empty() {
            break;
        }
        let n_writes = rng.gen_range(1..=2.min(unwritten.len()));
        let writes: Vec<usize> = unwritten.split_off(unwritten.len() - n_writes);
        let n_reads = rng.gen_range(0..=3.min(written.len()));
        let reads: Vec<String> = written.choose_multiple(rng, n_reads).map(|r| format!("r{r}")).collect();
        let pass = PassDesc::new(format!("p{p}"), *ACTIONS.choose(rng).unwrap())
            .reads(reads)
            .writes(writes.iter().map(|r| format!("r{r}")));
        g.add_pass(pass).unwrap();
        written.extend(writes);
    }
    let output = ResourceId::new(format!("r{}", written.choose(rng).unwrap()));
    (g, output)
}

/// Passes whose writes reach `output` through writer-to-reader edges,
/// found by iterating to a fixed point.
pub fn reachable_oracle(g: &FrameGraph, output: &ResourceId) -> BTreeSet<PassId> {
    let mut live: BTreeSet<ResourceId> = [output.clone()].into();
    let mut keep = BTreeSet::new();
    loop {
        let before = (live.len(), keep.len());
        for p in g.passes() {
            if p.writes.iter().any(|w| live.contains(w)) {
                keep.insert(p.id.clone());
                live.extend(p.reads.iter().cloned());
            }
        }
        if (live.len(), keep.len()) == before {
            return keep;
        }
    }
}

pub fn check_compiled(g: &FrameGraph, output: &ResourceId, c: &CompiledGraph) -> Result<(), String> {
    let keep = reachable_oracle(g, output);
    let order: BTreeSet<PassId> = c.order.iter().cloned().collect();
    if order != keep {
        return Err(format!("kept {:?}, oracle {:?}", c.order, keep));
    }
    let all: BTreeSet<PassId> = g.passes().iter().map(|p| p.id.clone()).collect();
    if c.culled != &all - &keep {
        return Err(format!("culled {:?}", c.culled));
    }

    let pos = |id: &PassId| c.position(id).unwrap();
    let live: Vec<&PassDesc> = g.passes().iter().filter(|p| keep.contains(&p.id)).collect();
    for w in &live {
        for r in &live {
            for res in w.writes.iter().filter(|x| r.reads.contains(*x) && w.id != r.id) {
                let (wp, rp) = (pos(&w.id), pos(&r.id));
                if wp >= rp {
                    return Err(format!("{} writes {res} but runs after reader {}", w.id, r.id));
                }
                let covering = c
                    .barriers
                    .iter()
                    .filter(|b| b.resources.contains(res) && b.position > wp && b.position <= rp)
                    .count();
                if covering != 1 {
                    return Err(format!("{covering} barriers cover {res} from {} to {}", w.id, r.id));
                }
            }
        }
    }

    let descs: BTreeMap<&ResourceId, &ResourceDesc> = g.resources().map(|r| (&r.id, r)).collect();
    for (a, sa) in &c.aliases {
        if !descs[a].transient {
            return Err(format!("persistent {a} aliased"));
        }
        for (b, sb) in &c.aliases {
            if a < b && sa == sb {
                let (da, db) = (descs[a], descs[b]);
                if c.lifetimes[a].overlaps(&c.lifetimes[b]) {
                    return Err(format!("{a} and {b} share slot {sa} with overlapping lifetimes"));
                }
                if (da.kind, da.extent_class) != (db.kind, db.extent_class) {
                    return Err(format!("{a} and {b} share slot {sa} with different shapes"));
                }
            }
        }
    }
    Ok(())
}
