use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a graph resource (texture or buffer).
    ResourceId
);
string_id!(
    /// Identifier of a render pass.
    PassId
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    ColorTarget,
    DepthTarget,
    ComputeBuffer,
}

impl ResourceKind {
    pub fn is_image(self) -> bool {
        !matches!(self, ResourceKind::ComputeBuffer)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExtentClass {
    FullRes,
    HalfRes,
    QuarterRes,
    EighthRes,
    Custom { width: u32, height: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceDesc {
    pub id: ResourceId,
    pub kind: ResourceKind,
    #[serde(default)]
    pub transient: bool,
    #[serde(default = "default_extent")]
    pub extent_class: ExtentClass,
}

fn default_extent() -> ExtentClass {
    ExtentClass::FullRes
}

impl ResourceDesc {
    pub fn new(id: impl Into<ResourceId>, kind: ResourceKind, extent_class: ExtentClass) -> Self {
        Self {
            id: id.into(),
            kind,
            transient: false,
            extent_class,
        }
    }

    pub fn transient(id: impl Into<ResourceId>, kind: ResourceKind, extent_class: ExtentClass) -> Self {
        Self {
            id: id.into(),
            kind,
            transient: true,
            extent_class,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PassAction {
    DrawRenderers,
    FullscreenQuad,
    Compute,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SortMode {
    #[default]
    None,
    FrontToBack,
    BackToFront,
}

/// Inclusive render-queue range. Carried as data; it does not influence scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct QueueRange {
    pub lower: i32,
    pub upper: i32,
}

impl Default for QueueRange {
    fn default() -> Self {
        Self { lower: 0, upper: 5000 }
    }
}

impl From<(i32, i32)> for QueueRange {
    fn from((lower, upper): (i32, i32)) -> Self {
        Self { lower, upper }
    }
}

impl From<QueueRange> for (i32, i32) {
    fn from(r: QueueRange) -> Self {
        (r.lower, r.upper)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassDesc {
    pub id: PassId,
    pub action: PassAction,
    #[serde(default)]
    pub reads: BTreeSet<ResourceId>,
    pub writes: Vec<ResourceId>,
    #[serde(default)]
    pub queue_filter: QueueRange,
    #[serde(default)]
    pub sort_mode: SortMode,
}

impl PassDesc {
    pub fn new(id: impl Into<PassId>, action: PassAction) -> Self {
        Self {
            id: id.into(),
            action,
            reads: BTreeSet::new(),
            writes: Vec::new(),
            queue_filter: QueueRange::default(),
            sort_mode: SortMode::None,
        }
    }

    pub fn reads<I, R>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: Into<ResourceId>,
    {
        self.reads.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn writes<I, R>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: Into<ResourceId>,
    {
        self.writes.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn queue(mut self, lower: i32, upper: i32) -> Self {
        self.queue_filter = QueueRange { lower, upper };
        self
    }

    pub fn sorted(mut self, mode: SortMode) -> Self {
        self.sort_mode = mode;
        self
    }
}

/// Named slot in the pass topology where effects attach.
///
/// `after` names the pass the point follows in declaration order; `None`
/// places it ahead of every pass.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionPoint {
    pub name: String,
    #[serde(default)]
    pub contract: BTreeSet<ResourceId>,
    #[serde(default)]
    pub after: Option<PassId>,
}

impl InjectionPoint {
    pub fn new<I, R>(name: impl Into<String>, after: Option<&str>, contract: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: Into<ResourceId>,
    {
        Self {
            name: name.into(),
            contract: contract.into_iter().map(Into::into).collect(),
            after: after.map(PassId::from),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectExpansion {
    pub passes: Vec<PassDesc>,
    #[serde(default)]
    pub resources: Vec<ResourceDesc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectDesc {
    pub name: String,
    pub injection_point: String,
    #[serde(default)]
    pub priority: i32,
    #[serde(default)]
    pub requires: BTreeSet<ResourceId>,
    #[serde(default)]
    pub modifies: BTreeSet<ResourceId>,
    pub expansion: EffectExpansion,
}

/// Keyed indirection from bus key to the resource currently carrying it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceBus {
    pub slots: BTreeMap<String, ResourceId>,
}

impl ResourceBus {
    pub fn resolve(&self, key: &ResourceId) -> ResourceId {
        self.slots.get(key.as_str()).cloned().unwrap_or_else(|| key.clone())
    }

    pub fn publish(&mut self, key: &ResourceId, current: ResourceId) {
        self.slots.insert(key.0.clone(), current);
    }
}

/// Pipeline stage of a resource access.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    ColorAttachmentWrite,
    ComputeWrite,
    DepthWrite,
    FragmentShaderRead,
    ComputeRead,
    DepthRead,
}

impl Stage {
    pub fn is_write(self) -> bool {
        matches!(
            self,
            Stage::ColorAttachmentWrite | Stage::ComputeWrite | Stage::DepthWrite
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayoutTransition {
    None,
    ToShaderRead,
    ToGeneral,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Barrier {
    /// Index into the compiled order of the pass this barrier precedes.
    pub position: usize,
    pub resources: Vec<ResourceId>,
    pub src_stage: Stage,
    pub dst_stage: Stage,
    pub layout_transition: LayoutTransition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Lifetime {
    pub first: usize,
    pub last: usize,
}

impl Lifetime {
    pub fn overlaps(&self, other: &Lifetime) -> bool {
        self.first <= other.last && other.first <= self.last
    }
}

impl From<(usize, usize)> for Lifetime {
    fn from((first, last): (usize, usize)) -> Self {
        Self { first, last }
    }
}

impl From<Lifetime> for (usize, usize) {
    fn from(l: Lifetime) -> Self {
        (l.first, l.last)
    }
}

/// Result of compiling a graph: an ordered, barrier-annotated schedule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledGraph {
    pub order: Vec<PassId>,
    pub barriers: Vec<Barrier>,
    pub aliases: BTreeMap<ResourceId, usize>,
    pub lifetimes: BTreeMap<ResourceId, Lifetime>,
    pub culled: BTreeSet<PassId>,
    /// Injection point names in topology order.
    pub injection_points: Vec<String>,
    /// Resource the schedule produces after bus remapping.
    pub output: ResourceId,
}

impl CompiledGraph {
    pub fn position(&self, pass: &PassId) -> Option<usize> {
        self.order.iter().position(|p| p == pass)
    }

    /// Serializes with every object's keys in sorted order.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("compiled graph is always serializable");
        let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
        out.push('\n');
        out
    }
}
