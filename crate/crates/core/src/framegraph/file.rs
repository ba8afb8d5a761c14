use serde::{Deserialize, Serialize};

use super::types::*;
use super::{FrameGraph, GraphError};

/// On-disk graph description.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    #[serde(default)]
    pub resources: Vec<ResourceDesc>,
    #[serde(default)]
    pub passes: Vec<PassDesc>,
    #[serde(default)]
    pub injection_points: Vec<InjectionPoint>,
    #[serde(default)]
    pub effects: Vec<EffectDesc>,
    pub output: ResourceId,
}

impl GraphFile {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("graph file is always serializable");
        serde_json::to_string_pretty(&value).expect("value serializes") + "\n"
    }

    /// Captures a built graph. Auto-injected default points are not written
    /// out; they are re-derived on load.
    pub fn from_graph(graph: &FrameGraph, output: impl Into<ResourceId>) -> Self {
        Self {
            resources: graph.resources().cloned().collect(),
            passes: graph.passes().to_vec(),
            injection_points: graph.points.clone(),
            effects: graph.effects().cloned().collect(),
            output: output.into(),
        }
    }

    /// Replays the description through the builder so every validation rule
    /// applies to files as well.
    pub fn build(&self) -> Result<FrameGraph, GraphError> {
        let mut graph = FrameGraph::new();
        for r in &self.resources {
            graph.add_resource(r.clone())?;
        }
        for p in &self.passes {
            graph.add_pass(p.clone())?;
        }
        for ip in &self.injection_points {
            graph.add_injection_point(ip.clone())?;
        }
        for e in &self.effects {
            graph.mount_effect(e.clone())?;
        }
        Ok(graph)
    }

    pub fn compile(&self) -> Result<CompiledGraph, GraphError> {
        self.build()?.compile(self.output.clone())
    }
}
