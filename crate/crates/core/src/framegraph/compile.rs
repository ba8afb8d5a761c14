use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use super::types::*;
use super::{FrameGraph, GraphError, Slot};

/// A pass after effect expansion and bus remapping.
#[derive(Clone, Debug)]
struct FlatPass {
    id: PassId,
    action: PassAction,
    reads: BTreeSet<ResourceId>,
    writes: Vec<ResourceId>,
}

impl FlatPass {
    fn touches(&self) -> impl Iterator<Item = &ResourceId> {
        self.reads
            .iter()
            .chain(self.writes.iter().filter(|w| !self.reads.contains(*w)))
    }
}

#[derive(Default)]
struct ResourceTable {
    descs: Vec<ResourceDesc>,
    index: HashMap<ResourceId, usize>,
}

impl ResourceTable {
    fn insert(&mut self, desc: ResourceDesc) {
        self.index.insert(desc.id.clone(), self.descs.len());
        self.descs.push(desc);
    }

    fn get(&self, id: &ResourceId) -> &ResourceDesc {
        &self.descs[self.index[id]]
    }
}

pub(super) fn compile(graph: &FrameGraph, output: &ResourceId) -> Result<CompiledGraph, GraphError> {
    if graph.resource(output).is_none() {
        return Err(GraphError::UnknownResource {
            owner: "output".into(),
            resource: output.clone(),
        });
    }
    let Flattened {
        passes,
        table,
        bus,
        points,
    } = flatten(graph);
    let output = bus.resolve(output);
    if !passes.iter().any(|p| p.writes.contains(&output)) {
        return Err(GraphError::OutputNeverWritten(output));
    }

    // Phase 1: backward cull.
    let reachable = cull(&passes, &output);
    let culled: BTreeSet<PassId> = passes
        .iter()
        .zip(&reachable)
        .filter(|(_, &keep)| !keep)
        .map(|(p, _)| p.id.clone())
        .collect();
    let live: Vec<&FlatPass> = passes
        .iter()
        .zip(&reachable)
        .filter(|(_, &keep)| keep)
        .map(|(p, _)| p)
        .collect();

    for pass in &live {
        for r in &pass.reads {
            let desc = table.get(r);
            if desc.transient && !live.iter().any(|p| p.writes.contains(r)) {
                return Err(GraphError::TransientNeverWritten(r.clone()));
            }
        }
    }

    // Phase 3 (ordering) runs before lifetimes so those can be expressed as
    // positions in the final schedule.
    let schedule = topo_sort(&live)?;
    let ordered: Vec<&FlatPass> = schedule.iter().map(|&i| live[i]).collect();

    // Phase 2: lifetimes over the compiled order.
    let mut lifetimes: BTreeMap<ResourceId, Lifetime> = BTreeMap::new();
    for (pos, pass) in ordered.iter().enumerate() {
        for r in pass.touches() {
            lifetimes
                .entry(r.clone())
                .and_modify(|l| l.last = pos)
                .or_insert(Lifetime { first: pos, last: pos });
        }
    }

    let barriers = insert_barriers(&ordered, &table);
    let aliases = assign_aliases(&lifetimes, &table);

    Ok(CompiledGraph {
        order: ordered.iter().map(|p| p.id.clone()).collect(),
        barriers,
        aliases,
        lifetimes,
        culled,
        injection_points: points,
        output,
    })
}

struct Flattened {
    passes: Vec<FlatPass>,
    table: ResourceTable,
    bus: ResourceBus,
    points: Vec<String>,
}

/// Expands effects at their injection points, threading the resource bus
/// through base passes and effect passes alike.
fn flatten(graph: &FrameGraph) -> Flattened {
    let mut table = ResourceTable::default();
    for desc in graph.resources() {
        table.insert(desc.clone());
    }
    let mut bus = ResourceBus::default();
    let mut passes = Vec::new();
    let mut points = Vec::new();

    for slot in graph.topology() {
        match slot {
            Slot::Pass(i) => {
                let pass = &graph.passes()[i];
                passes.push(FlatPass {
                    id: pass.id.clone(),
                    action: pass.action,
                    reads: pass.reads.iter().map(|r| bus.resolve(r)).collect(),
                    writes: pass.writes.iter().map(|w| bus.resolve(w)).collect(),
                });
            }
            Slot::Point(point) => {
                for effect in graph.mounted_at(&point.name) {
                    let own: BTreeSet<&ResourceId> = effect.expansion.resources.iter().map(|r| &r.id).collect();
                    for res in &effect.expansion.resources {
                        table.insert(res.clone());
                    }
                    for pass in &effect.expansion.passes {
                        let reads = pass
                            .reads
                            .iter()
                            .map(|r| if own.contains(r) { r.clone() } else { bus.resolve(r) })
                            .collect();
                        let mut writes = Vec::with_capacity(pass.writes.len());
                        for w in &pass.writes {
                            if own.contains(w) {
                                writes.push(w.clone());
                                continue;
                            }
                            let current = table.get(&bus.resolve(w)).clone();
                            let version = ResourceId(format!("{}@{}", w, pass.id));
                            table.insert(ResourceDesc {
                                id: version.clone(),
                                ..current
                            });
                            bus.publish(w, version.clone());
                            writes.push(version);
                        }
                        passes.push(FlatPass {
                            id: pass.id.clone(),
                            action: pass.action,
                            reads,
                            writes,
                        });
                    }
                }
                points.push(point.name);
            }
        }
    }
    Flattened {
        passes,
        table,
        bus,
        points,
    }
}

/// A pass survives iff it writes a live resource; reads of survivors become
/// live. A single reverse sweep suffices when readers follow writers in
/// declaration order; sweeping to a fixed point also covers graphs whose
/// readers are declared first.
fn cull(passes: &[FlatPass], output: &ResourceId) -> Vec<bool> {
    let mut live: BTreeSet<&ResourceId> = BTreeSet::from([output]);
    let mut reachable = vec![false; passes.len()];
    loop {
        let mut changed = false;
        for (i, pass) in passes.iter().enumerate().rev() {
            if !reachable[i] && pass.writes.iter().any(|w| live.contains(w)) {
                reachable[i] = true;
                live.extend(pass.reads.iter());
                changed = true;
            }
        }
        if !changed {
            return reachable;
        }
    }
}

/// Kahn's algorithm over writer -> reader edges; ready passes are taken in
/// declaration order.
fn topo_sort(passes: &[&FlatPass]) -> Result<Vec<usize>, GraphError> {
    let n = passes.len();
    let mut writers: HashMap<&ResourceId, Vec<usize>> = HashMap::new();
    for (i, p) in passes.iter().enumerate() {
        for w in &p.writes {
            writers.entry(w).or_default().push(i);
        }
    }
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (reader, p) in passes.iter().enumerate() {
        for r in &p.reads {
            for &writer in writers.get(r).into_iter().flatten() {
                if writer != reader {
                    succ[writer].insert(reader);
                }
            }
        }
    }
    let mut indegree = vec![0usize; n];
    for s in &succ {
        for &t in s {
            indegree[t] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &t in &succ[i] {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                ready.push(Reverse(t));
            }
        }
    }
    if order.len() < n {
        let cycle = find_cycle(&succ, &indegree);
        return Err(GraphError::Cycle(
            cycle.into_iter().map(|i| passes[i].id.clone()).collect(),
        ));
    }
    Ok(order)
}

/// Every node Kahn left behind still has an unscheduled predecessor, so
/// walking predecessors must revisit a node. The cycle is returned in
/// execution direction, rotated to start at its earliest-declared pass and
/// closed by repeating that pass.
fn find_cycle(succ: &[BTreeSet<usize>], indegree: &[usize]) -> Vec<usize> {
    let remaining = |i: usize| indegree[i] > 0;
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); succ.len()];
    for (from, targets) in succ.iter().enumerate() {
        for &to in targets {
            if remaining(from) {
                preds[to].push(from);
            }
        }
    }
    let start = (0..succ.len())
        .find(|&i| remaining(i))
        .expect("kahn left unscheduled nodes");
    let mut path = vec![start];
    let mut seen_at: HashMap<usize, usize> = HashMap::from([(start, 0)]);
    let mut current = start;
    let mut cycle = loop {
        let prev = *preds[current]
            .iter()
            .min()
            .expect("unscheduled node has an unscheduled predecessor");
        if let Some(&at) = seen_at.get(&prev) {
            break path[at..].to_vec();
        }
        seen_at.insert(prev, path.len());
        path.push(prev);
        current = prev;
    };
    cycle.reverse();
    let first = cycle
        .iter()
        .enumerate()
        .min_by_key(|(_, &n)| n)
        .map(|(i, _)| i)
        .unwrap_or(0);
    cycle.rotate_left(first);
    cycle.push(cycle[0]);
    cycle
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Layout {
    Attachment,
    ShaderRead,
    General,
}

fn read_stage(kind: ResourceKind, action: PassAction) -> Stage {
    match (action, kind) {
        (PassAction::Compute, _) => Stage::ComputeRead,
        (PassAction::DrawRenderers, ResourceKind::DepthTarget) => Stage::DepthRead,
        _ => Stage::FragmentShaderRead,
    }
}

fn write_stage(kind: ResourceKind, action: PassAction) -> Stage {
    match (action, kind) {
        (PassAction::Compute, _) | (_, ResourceKind::ComputeBuffer) => Stage::ComputeWrite,
        (_, ResourceKind::DepthTarget) => Stage::DepthWrite,
        _ => Stage::ColorAttachmentWrite,
    }
}

fn required_layout(action: PassAction, writes: bool, read: Stage) -> Layout {
    match action {
        PassAction::Compute => Layout::General,
        _ if writes => Layout::Attachment,
        _ if read == Stage::DepthRead => Layout::Attachment,
        _ => Layout::ShaderRead,
    }
}

struct PendingBarrier {
    position: usize,
    resource: ResourceId,
    src: Stage,
    dst: Stage,
}

/// Emits one barrier per hazard: read-after-write on the first read after a
/// write, write-after-read with reversed stages, and write-after-write.
/// Read-after-read needs none.
fn insert_barriers(order: &[&FlatPass], table: &ResourceTable) -> Vec<Barrier> {
    #[derive(Default)]
    struct Track {
        last_write: Option<(usize, Stage)>,
        last_read: Option<Stage>,
        layouts: Vec<(usize, Layout)>,
    }
    let mut tracks: BTreeMap<&ResourceId, Track> = BTreeMap::new();
    let mut pending = Vec::new();

    for (pos, pass) in order.iter().enumerate() {
        for r in pass.touches() {
            let kind = table.get(r).kind;
            let reads = pass.reads.contains(r);
            let writes = pass.writes.contains(r);
            let rstage = read_stage(kind, pass.action);
            let wstage = write_stage(kind, pass.action);
            let track = tracks.entry(r).or_default();
            let mut emitted = false;

            if reads {
                if let (Some((_, src)), None) = (track.last_write, track.last_read) {
                    pending.push(PendingBarrier {
                        position: pos,
                        resource: r.clone(),
                        src,
                        dst: rstage,
                    });
                    emitted = true;
                }
            }
            if writes {
                if !emitted {
                    if let Some(read) = track.last_read {
                        pending.push(PendingBarrier {
                            position: pos,
                            resource: r.clone(),
                            src: read,
                            dst: wstage,
                        });
                    } else if let Some((_, src)) = track.last_write {
                        pending.push(PendingBarrier {
                            position: pos,
                            resource: r.clone(),
                            src,
                            dst: wstage,
                        });
                    }
                }
                track.last_write = Some((pos, wstage));
                track.last_read = None;
            } else {
                track.last_read = Some(rstage);
            }
            if kind.is_image() {
                track.layouts.push((pos, required_layout(pass.action, writes, rstage)));
            }
        }
    }

    // Layout transitions: a resource that changes layout more than once, or
    // changes where no barrier sits, is promoted to the general layout.
    let mut transition_of: HashMap<(usize, ResourceId), LayoutTransition> = HashMap::new();
    let mut promoted: BTreeSet<ResourceId> = BTreeSet::new();
    for (r, track) in &tracks {
        let changes: Vec<(usize, Layout)> = track
            .layouts
            .windows(2)
            .filter(|w| w[0].1 != w[1].1)
            .map(|w| w[1])
            .collect();
        match changes.as_slice() {
            [] => {}
            [(pos, layout)] => {
                let has_barrier = pending.iter().any(|b| b.position == *pos && &&b.resource == r);
                match (layout, has_barrier) {
                    (Layout::ShaderRead, true) => {
                        transition_of.insert((*pos, (*r).clone()), LayoutTransition::ToShaderRead);
                    }
                    (Layout::General, true) => {
                        transition_of.insert((*pos, (*r).clone()), LayoutTransition::ToGeneral);
                    }
                    _ => {
                        promoted.insert((*r).clone());
                    }
                }
            }
            _ => {
                promoted.insert((*r).clone());
            }
        }
    }

    // Merge barriers at the same position with identical stages and layout.
    let mut merged: Vec<Barrier> = Vec::new();
    for b in pending {
        let layout = if promoted.contains(&b.resource) {
            LayoutTransition::ToGeneral
        } else {
            transition_of
                .get(&(b.position, b.resource.clone()))
                .copied()
                .unwrap_or(LayoutTransition::None)
        };
        if let Some(existing) = merged.iter_mut().find(|m| {
            m.position == b.position && m.src_stage == b.src && m.dst_stage == b.dst && m.layout_transition == layout
        }) {
            existing.resources.push(b.resource);
            continue;
        }
        merged.push(Barrier {
            position: b.position,
            resources: vec![b.resource],
            src_stage: b.src,
            dst_stage: b.dst,
            layout_transition: layout,
        });
    }
    merged
}

/// Greedy first-fit over first use: each transient takes the lowest-numbered
/// compatible slot whose previous occupant is already dead.
fn assign_aliases(lifetimes: &BTreeMap<ResourceId, Lifetime>, table: &ResourceTable) -> BTreeMap<ResourceId, usize> {
    let mut transients: Vec<(&ResourceId, Lifetime, usize)> = lifetimes
        .iter()
        .filter(|(id, _)| table.get(id).transient)
        .map(|(id, l)| (id, *l, table.index[id]))
        .collect();
    transients.sort_by_key(|&(_, l, decl)| (l.first, decl));

    struct PhysicalSlot {
        kind: ResourceKind,
        extent: ExtentClass,
        free_after: usize,
    }
    let mut slots: Vec<PhysicalSlot> = Vec::new();
    let mut aliases = BTreeMap::new();
    for (id, life, _) in transients {
        let desc = table.get(id);
        let slot = slots
            .iter()
            .position(|s| s.kind == desc.kind && s.extent == desc.extent_class && s.free_after < life.first);
        let slot = match slot {
            Some(s) => {
                slots[s].free_after = life.last;
                s
            }
            None => {
                slots.push(PhysicalSlot {
                    kind: desc.kind,
                    extent: desc.extent_class,
                    free_after: life.last,
                });
                slots.len() - 1
            }
        };
        aliases.insert(id.clone(), slot);
    }
    aliases
}
