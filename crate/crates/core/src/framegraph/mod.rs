//! Split-authored render graph.
//!
//! The caller declares resources, passes and injection points, mounts
//! effects at those points, and [`FrameGraph::compile`] turns the result
//! into a [`CompiledGraph`]: culled, topologically ordered, annotated with
//! barriers, and with transient resources packed into shared physical slots.
//!
//! Effects talk to each other through a resource bus. When an effect writes
//! a key listed in its `modifies` contract, the write lands in a fresh
//! version of that resource (`<key>@<pass>`) and every later reader of the
//! key, effect or base pass, observes the new version.

mod compile;
mod file;
pub mod presets;
mod types;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

pub use file::GraphFile;
pub use types::*;

/// Injection point that precedes post-processing; created on demand.
pub const BEFORE_POST_PROCESS: &str = "before_post_process";
/// Injection point that follows post-processing; created on demand.
pub const AFTER_POST_PROCESS: &str = "after_post_process";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("duplicate pass `{0}`")]
    DuplicatePass(PassId),
    #[error("duplicate resource `{0}`")]
    DuplicateResource(ResourceId),
    #[error("`{owner}` references undeclared resource `{resource}`")]
    UnknownResource { owner: String, resource: ResourceId },
    #[error("unknown pass `{0}`")]
    UnknownPass(PassId),
    #[error("pass `{0}` declares no writes")]
    EmptyWrites(PassId),
    #[error("pass `{pass}` both reads and writes non-depth resource `{resource}`")]
    InvalidReadWrite { pass: PassId, resource: ResourceId },
    #[error("pass `{0}` has an empty queue range")]
    InvalidQueueRange(PassId),
    #[error("duplicate injection point `{0}`")]
    DuplicateInjectionPoint(String),
    #[error("unknown injection point `{0}`")]
    UnknownInjectionPoint(String),
    #[error("duplicate effect `{0}`")]
    DuplicateEffect(String),
    #[error("effect `{effect}` violates its contract on `{resource}`: {reason}")]
    ContractViolation {
        effect: String,
        resource: ResourceId,
        reason: &'static str,
    },
    #[error("cycle among passes: {}", format_cycle(.0))]
    Cycle(Vec<PassId>),
    #[error("output `{0}` is never written")]
    OutputNeverWritten(ResourceId),
    #[error("transient `{0}` is read but never written")]
    TransientNeverWritten(ResourceId),
}

fn format_cycle(cycle: &[PassId]) -> String {
    cycle.iter().map(PassId::as_str).collect::<Vec<_>>().join(" -> ")
}

#[derive(Clone, Debug)]
struct MountedEffect {
    desc: EffectDesc,
    mount_index: usize,
}

/// A render graph under construction.
#[derive(Clone, Debug, Default)]
pub struct FrameGraph {
    resources: BTreeMap<ResourceId, ResourceDesc>,
    resource_order: Vec<ResourceId>,
    passes: Vec<PassDesc>,
    pass_ids: HashSet<PassId>,
    pub(crate) points: Vec<InjectionPoint>,
    effects: Vec<MountedEffect>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Placement {
    Start,
    After(usize),
    Before(usize),
    End,
}

#[derive(Clone, Debug)]
pub(crate) enum Slot {
    Pass(usize),
    Point(InjectionPoint),
}

impl FrameGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_resource(&mut self, desc: ResourceDesc) -> Result<ResourceId, GraphError> {
        if self.resources.contains_key(&desc.id) || self.effect_owns_resource(&desc.id) {
            return Err(GraphError::DuplicateResource(desc.id));
        }
        let id = desc.id.clone();
        self.resource_order.push(id.clone());
        self.resources.insert(id.clone(), desc);
        Ok(id)
    }

    /// Records `pass` after every pass added so far; declaration order is the
    /// tiebreak used when scheduling.
    pub fn add_pass(&mut self, pass: PassDesc) -> Result<PassId, GraphError> {
        if self.pass_ids.contains(&pass.id) || self.effect_owns_pass(&pass.id) {
            return Err(GraphError::DuplicatePass(pass.id));
        }
        validate_pass_shape(&pass, |id| {
            self.resources
                .get(id)
                .is_some_and(|r| r.kind == ResourceKind::DepthTarget)
        })?;
        for id in pass.reads.iter().chain(&pass.writes) {
            if !self.resources.contains_key(id) {
                return Err(GraphError::UnknownResource {
                    owner: pass.id.to_string(),
                    resource: id.clone(),
                });
            }
        }
        let id = pass.id.clone();
        self.pass_ids.insert(id.clone());
        self.passes.push(pass);
        Ok(id)
    }

    pub fn add_injection_point(&mut self, point: InjectionPoint) -> Result<(), GraphError> {
        if self.points.iter().any(|p| p.name == point.name) {
            return Err(GraphError::DuplicateInjectionPoint(point.name));
        }
        if let Some(after) = &point.after {
            if !self.pass_ids.contains(after) {
                return Err(GraphError::UnknownPass(after.clone()));
            }
        }
        if let Some(missing) = point.contract.iter().find(|r| !self.resources.contains_key(*r)) {
            return Err(GraphError::UnknownResource {
                owner: point.name.clone(),
                resource: missing.clone(),
            });
        }
        self.points.push(point);
        Ok(())
    }

    /// Queues an effect's passes at its injection point.
    ///
    /// Effects sharing a point run in ascending priority; equal priorities
    /// keep mount order.
    pub fn mount_effect(&mut self, effect: EffectDesc) -> Result<(), GraphError> {
        if self.effects.iter().any(|e| e.desc.name == effect.name) {
            return Err(GraphError::DuplicateEffect(effect.name));
        }
        let bus = self
            .bus_contents_at(&effect.injection_point)
            .ok_or_else(|| GraphError::UnknownInjectionPoint(effect.injection_point.clone()))?;
        let violation = |resource: &ResourceId, reason| GraphError::ContractViolation {
            effect: effect.name.clone(),
            resource: resource.clone(),
            reason,
        };
        for key in effect.requires.iter().chain(&effect.modifies) {
            if !bus.contains(key) {
                return Err(violation(key, "not on the resource bus at the injection point"));
            }
        }

        let mut own = BTreeMap::new();
        for res in &effect.expansion.resources {
            if !res.transient {
                return Err(violation(&res.id, "effect-local resources must be transient"));
            }
            if self.resources.contains_key(&res.id)
                || self.effect_owns_resource(&res.id)
                || own.insert(res.id.clone(), res).is_some()
            {
                return Err(GraphError::DuplicateResource(res.id.clone()));
            }
        }
        let mut seen = HashSet::new();
        for pass in &effect.expansion.passes {
            if self.pass_ids.contains(&pass.id) || self.effect_owns_pass(&pass.id) || !seen.insert(&pass.id) {
                return Err(GraphError::DuplicatePass(pass.id.clone()));
            }
            // Writes to bus keys land in a fresh version, so reading the key
            // in the same pass is not a read-modify-write.
            validate_pass_shape(pass, |id| match own.get(id) {
                Some(r) => r.kind == ResourceKind::DepthTarget,
                None => effect.modifies.contains(id),
            })?;
            for r in &pass.reads {
                if !own.contains_key(r) && !effect.requires.contains(r) && !effect.modifies.contains(r) {
                    return Err(violation(r, "read outside the requires/modifies contract"));
                }
            }
            for w in &pass.writes {
                if !own.contains_key(w) && !effect.modifies.contains(w) {
                    return Err(violation(w, "write outside the modifies contract"));
                }
            }
        }

        let mount_index = self.effects.len();
        self.effects.push(MountedEffect {
            desc: effect,
            mount_index,
        });
        Ok(())
    }

    pub fn passes(&self) -> &[PassDesc] {
        &self.passes
    }

    pub fn resources(&self) -> impl Iterator<Item = &ResourceDesc> {
        self.resource_order.iter().map(|id| &self.resources[id])
    }

    pub fn effects(&self) -> impl Iterator<Item = &EffectDesc> {
        self.effects.iter().map(|e| &e.desc)
    }

    /// Injection points in topology order, including auto-created defaults.
    pub fn injection_points(&self) -> Vec<InjectionPoint> {
        self.topology()
            .into_iter()
            .filter_map(|slot| match slot {
                Slot::Point(p) => Some(p),
                Slot::Pass(_) => None,
            })
            .collect()
    }

    pub fn compile(&self, output: impl Into<ResourceId>) -> Result<CompiledGraph, GraphError> {
        compile::compile(self, &output.into())
    }

    fn effect_owns_pass(&self, id: &PassId) -> bool {
        self.effects
            .iter()
            .any(|e| e.desc.expansion.passes.iter().any(|p| &p.id == id))
    }

    fn effect_owns_resource(&self, id: &ResourceId) -> bool {
        self.effects
            .iter()
            .any(|e| e.desc.expansion.resources.iter().any(|r| &r.id == id))
    }

    /// Keys guaranteed on the bus at `point`: its own contract plus the
    /// contracts of every point ahead of it in the topology.
    fn bus_contents_at(&self, point: &str) -> Option<BTreeSet<ResourceId>> {
        let mut contents = BTreeSet::new();
        for slot in self.topology() {
            if let Slot::Point(p) = slot {
                contents.extend(p.contract.iter().cloned());
                if p.name == point {
                    return Some(contents);
                }
            }
        }
        None
    }

    /// Interleaves passes and injection points. Missing default points are
    /// auto-injected around the post-processing run (the fullscreen passes),
    /// or at the end of the topology when there is none.
    pub(crate) fn topology(&self) -> Vec<Slot> {
        let mut placed: Vec<(Placement, InjectionPoint)> = self
            .points
            .iter()
            .map(|p| {
                let placement = match &p.after {
                    None => Placement::Start,
                    Some(after) => Placement::After(
                        self.passes
                            .iter()
                            .position(|q| &q.id == after)
                            .expect("validated on insert"),
                    ),
                };
                (placement, p.clone())
            })
            .collect();

        let fullscreen: Vec<usize> = self
            .passes
            .iter()
            .enumerate()
            .filter(|(_, p)| p.action == PassAction::FullscreenQuad)
            .map(|(i, _)| i)
            .collect();
        let declared = |name: &str| self.points.iter().any(|p| p.name == name);
        if !declared(BEFORE_POST_PROCESS) {
            let placement = fullscreen.first().map_or(Placement::End, |&i| Placement::Before(i));
            placed.push((placement, self.auto_point(BEFORE_POST_PROCESS, placement)));
        }
        if !declared(AFTER_POST_PROCESS) {
            let placement = fullscreen.last().map_or(Placement::End, |&i| Placement::After(i));
            placed.push((placement, self.auto_point(AFTER_POST_PROCESS, placement)));
        }

        let take = |want: Placement| {
            placed
                .iter()
                .filter(move |(p, _)| *p == want)
                .map(|(_, ip)| Slot::Point(ip.clone()))
        };
        let mut slots: Vec<Slot> = take(Placement::Start).collect();
        for i in 0..self.passes.len() {
            slots.extend(take(Placement::Before(i)));
            slots.push(Slot::Pass(i));
            slots.extend(take(Placement::After(i)));
        }
        slots.extend(take(Placement::End));
        slots
    }

    /// Default points guarantee every persistent resource written upstream.
    fn auto_point(&self, name: &str, placement: Placement) -> InjectionPoint {
        let upstream = match placement {
            Placement::Start => 0,
            Placement::Before(i) => i,
            Placement::After(i) => i + 1,
            Placement::End => self.passes.len(),
        };
        let contract = self.passes[..upstream]
            .iter()
            .flat_map(|p| &p.writes)
            .filter(|r| !self.resources[*r].transient)
            .cloned()
            .collect();
        let after = match placement {
            Placement::Start => None,
            Placement::Before(0) => None,
            Placement::Before(i) => Some(self.passes[i - 1].id.clone()),
            Placement::After(i) => Some(self.passes[i].id.clone()),
            Placement::End => self.passes.last().map(|p| p.id.clone()),
        };
        InjectionPoint {
            name: name.to_owned(),
            contract,
            after,
        }
    }

    pub(crate) fn mounted_at(&self, point: &str) -> Vec<&EffectDesc> {
        let mut at: Vec<&MountedEffect> = self
            .effects
            .iter()
            .filter(|e| e.desc.injection_point == point)
            .collect();
        at.sort_by_key(|e| (e.desc.priority, e.mount_index));
        at.into_iter().map(|e| &e.desc).collect()
    }

    pub(crate) fn resource(&self, id: &ResourceId) -> Option<&ResourceDesc> {
        self.resources.get(id)
    }
}

fn validate_pass_shape(pass: &PassDesc, may_read_and_write: impl Fn(&ResourceId) -> bool) -> Result<(), GraphError> {
    if pass.writes.is_empty() {
        return Err(GraphError::EmptyWrites(pass.id.clone()));
    }
    if pass.queue_filter.lower > pass.queue_filter.upper {
        return Err(GraphError::InvalidQueueRange(pass.id.clone()));
    }
    for w in &pass.writes {
        if pass.reads.contains(w) && !may_read_and_write(w) {
            return Err(GraphError::InvalidReadWrite {
                pass: pass.id.clone(),
                resource: w.clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn color(id: &str) -> ResourceDesc {
        ResourceDesc::new(id, ResourceKind::ColorTarget, ExtentClass::FullRes)
    }

    #[test]
    fn first_pass_is_recorded() {
        let mut g = FrameGraph::new();
        g.add_resource(color("c")).unwrap();
        let id = g
            .add_pass(PassDesc::new("opaque", PassAction::DrawRenderers).writes(["c"]))
            .unwrap();
        assert_eq!(id.as_str(), "opaque");
        assert_eq!(g.passes().len(), 1);
    }

    #[test]
    fn duplicate_pass_is_rejected() {
        let mut g = FrameGraph::new();
        g.add_resource(color("c")).unwrap();
        g.add_pass(PassDesc::new("opaque", PassAction::DrawRenderers).writes(["c"]))
            .unwrap();
        let err = g
            .add_pass(PassDesc::new("opaque", PassAction::DrawRenderers).writes(["c"]))
            .unwrap_err();
        assert_eq!(err, GraphError::DuplicatePass("opaque".into()));
    }

    #[test]
    fn undeclared_read_is_rejected() {
        let mut g = FrameGraph::new();
        g.add_resource(color("c")).unwrap();
        let err = g
            .add_pass(
                PassDesc::new("p", PassAction::FullscreenQuad)
                    .reads(["ghost"])
                    .writes(["c"]),
            )
            .unwrap_err();
        assert!(matches!(err, GraphError::UnknownResource { resource, .. } if resource.as_str() == "ghost"));
    }

    #[test]
    fn pass_shape_is_validated() {
        let mut g = FrameGraph::new();
        g.add_resource(color("c")).unwrap();
        g.add_resource(ResourceDesc::new("d", ResourceKind::DepthTarget, ExtentClass::FullRes))
            .unwrap();
        assert!(matches!(
            g.add_pass(PassDesc::new("empty", PassAction::Compute)),
            Err(GraphError::EmptyWrites(_))
        ));
        assert!(matches!(
            g.add_pass(
                PassDesc::new("rmw", PassAction::FullscreenQuad)
                    .reads(["c"])
                    .writes(["c"])
            ),
            Err(GraphError::InvalidReadWrite { .. })
        ));
        assert!(matches!(
            g.add_pass(PassDesc::new("q", PassAction::DrawRenderers).writes(["c"]).queue(10, 5)),
            Err(GraphError::InvalidQueueRange(_))
        ));
        g.add_pass(
            PassDesc::new("depth_rmw", PassAction::DrawRenderers)
                .reads(["d"])
                .writes(["d"]),
        )
        .unwrap();
    }

    #[test]
    fn defaults_are_auto_injected_at_the_end_without_post_processing() {
        let mut g = FrameGraph::new();
        g.add_resource(color("c")).unwrap();
        g.add_pass(PassDesc::new("opaque", PassAction::DrawRenderers).writes(["c"]))
            .unwrap();
        let names: Vec<_> = g.injection_points().into_iter().map(|p| p.name).collect();
        assert_eq!(names, [BEFORE_POST_PROCESS, AFTER_POST_PROCESS]);
        assert!(g.injection_points()[0].contract.contains(&ResourceId::from("c")));
    }

    #[test]
    fn unknown_injection_point_is_rejected() {
        let mut g = FrameGraph::new();
        let err = g
            .mount_effect(EffectDesc {
                name: "fx".into(),
                injection_point: "nowhere".into(),
                priority: 0,
                requires: BTreeSet::new(),
                modifies: BTreeSet::new(),
                expansion: EffectExpansion::default(),
            })
            .unwrap_err();
        assert_eq!(err, GraphError::UnknownInjectionPoint("nowhere".into()));
    }
}
