//! Annotation-driven shader preprocessing.
//!
//! Three stages: [`parse_annotations`] lifts `@`-directives into a
//! [`ShaderDescriptor`], [`resolve_imports`] inlines `@import`ed sources
//! depth-first with global de-duplication, and [`generate_variants`] emits
//! the forward, G-buffer and shadow programs with generated declarations.

mod generate;
mod parse;
mod resolve;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_variants, uniform_layout, FieldLayout, Target, VariantSet};
pub use parse::{parse_annotations, DIRECTIVES};
pub use resolve::{
    build_id_map, resolve_imports, resolve_imports_with_graph, IdMap, ImportGraph, ShaderLibrary, MAX_IMPORT_DEPTH,
};

#[derive(Debug, Error)]
pub enum ShaderError {
    #[error("line {line}: unknown directive `{directive}`")]
    UnknownDirective { line: usize, directive: String },
    #[error("line {line}: malformed `{directive}`: {reason}")]
    MalformedDirective {
        line: usize,
        directive: String,
        reason: String,
    },
    #[error("line {line}: `{directive}` given more than once")]
    RepeatedDirective { line: usize, directive: String },
    #[error("line {line}: duplicate property `{name}`")]
    DuplicateProperty { line: usize, name: String },
    #[error("shader id `{id}` declared by both {} and {}", .paths[0].display(), .paths[1].display())]
    DuplicateShaderId { id: String, paths: [PathBuf; 2] },
    #[error("unknown import `{0}`")]
    UnknownImport(String),
    #[error("import depth exceeds {max}:\n{}", .chain.join("\n"))]
    DepthExceeded { max: usize, chain: Vec<String> },
    #[error("cyclic import:\n{}", .0.join("\n"))]
    CyclicImport(Vec<String>),
    #[error("unknown shading model `{0}`")]
    UnknownShadingModel(String),
    #[error("in `{id}`: {source}")]
    InImport {
        id: String,
        #[source]
        source: Box<ShaderError>,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ShaderError {
    /// Ids involved in a cycle or depth failure, innermost error first.
    pub fn import_trace(&self) -> Option<&[String]> {
        match self {
            ShaderError::CyclicImport(trace) => Some(trace),
            ShaderError::DepthExceeded { chain, .. } => Some(chain),
            ShaderError::InImport { source, .. } => source.import_trace(),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyType {
    Float,
    Vec2,
    Vec3,
    Vec4,
    Color,
    Int,
    Bool,
    Texture2d,
}

impl PropertyType {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "float" => Self::Float,
            "vec2" => Self::Vec2,
            "vec3" => Self::Vec3,
            "vec4" => Self::Vec4,
            "color" => Self::Color,
            "int" => Self::Int,
            "bool" => Self::Bool,
            "texture2d" => Self::Texture2d,
            _ => return None,
        })
    }

    pub fn glsl(self) -> &'static str {
        match self {
            Self::Float => "float",
            Self::Vec2 => "vec2",
            Self::Vec3 => "vec3",
            Self::Vec4 | Self::Color => "vec4",
            Self::Int => "int",
            Self::Bool => "bool",
            Self::Texture2d => "sampler2D",
        }
    }

    /// Bytes occupied in a uniform block; `None` for opaque types.
    pub fn block_size(self) -> Option<u32> {
        match self {
            Self::Float | Self::Int | Self::Bool => Some(4),
            Self::Vec2 => Some(8),
            Self::Vec3 | Self::Vec4 | Self::Color => Some(16),
            Self::Texture2d => None,
        }
    }

    fn components(self) -> usize {
        match self {
            Self::Float | Self::Int | Self::Bool | Self::Texture2d => 1,
            Self::Vec2 => 2,
            Self::Vec3 => 3,
            Self::Vec4 | Self::Color => 4,
        }
    }
}

impl fmt::Display for PropertyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Float => "float",
            Self::Vec2 => "vec2",
            Self::Vec3 => "vec3",
            Self::Vec4 => "vec4",
            Self::Color => "color",
            Self::Int => "int",
            Self::Bool => "bool",
            Self::Texture2d => "texture2d",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: PropertyType,
    /// Default value, normalized to space-separated components.
    pub default: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PushConstantType {
    Float,
    Int,
    Vec2,
    Vec4,
    Mat4,
}

impl PushConstantType {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "float" => Self::Float,
            "int" => Self::Int,
            "vec2" => Self::Vec2,
            "vec4" => Self::Vec4,
            "mat4" => Self::Mat4,
            _ => return None,
        })
    }

    pub fn glsl(self) -> &'static str {
        match self {
            Self::Float => "float",
            Self::Int => "int",
            Self::Vec2 => "vec2",
            Self::Vec4 => "vec4",
            Self::Mat4 => "mat4",
        }
    }

    /// (size, alignment) in bytes.
    pub fn size_align(self) -> (u32, u32) {
        match self {
            Self::Float | Self::Int => (4, 4),
            Self::Vec2 => (8, 8),
            Self::Vec4 => (16, 16),
            Self::Mat4 => (64, 16),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushConstant {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: PushConstantType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerState {
    pub filter: String,
    pub wrap: String,
}

/// Everything the `@`-directives of one source declare.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShaderDescriptor {
    pub shader_id: String,
    pub shading_model: String,
    pub surface_options: BTreeMap<String, String>,
    pub properties: Vec<Property>,
    pub imports: Vec<String>,
    pub queue: Option<i32>,
    pub blend: Option<String>,
    pub cull: Option<String>,
    pub depth_test: Option<String>,
    pub depth_write: Option<bool>,
    pub push_constants: Vec<PushConstant>,
    pub sampler_states: BTreeMap<String, SamplerState>,
    pub keywords: Vec<String>,
    pub stages: Vec<String>,
    pub version_target: u32,
}

pub const DEFAULT_SHADING_MODEL: &str = "unlit";
pub const DEFAULT_VERSION: u32 = 450;

impl Default for ShaderDescriptor {
    fn default() -> Self {
        Self {
            shader_id: String::new(),
            shading_model: DEFAULT_SHADING_MODEL.to_owned(),
            surface_options: BTreeMap::new(),
            properties: Vec::new(),
            imports: Vec::new(),
            queue: None,
            blend: None,
            cull: None,
            depth_test: None,
            depth_write: None,
            push_constants: Vec::new(),
            sampler_states: BTreeMap::new(),
            keywords: Vec::new(),
            stages: Vec::new(),
            version_target: DEFAULT_VERSION,
        }
    }
}

impl ShaderDescriptor {
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("descriptor is always serializable");
        let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
        out.push('\n');
        out
    }
}

/// Parsed directives plus the outputs of every pipeline stage.
#[derive(Clone, Debug)]
pub struct PreparedShader {
    pub descriptor: ShaderDescriptor,
    pub inlined: String,
    pub variants: VariantSet,
}

/// Runs the whole pipeline on an entry source.
pub fn prepare(entry: &str, library: &dyn ShaderLibrary) -> Result<PreparedShader, ShaderError> {
    let (descriptor, _) = parse_annotations(entry)?;
    let inlined = resolve_imports(entry, library)?;
    let variants = generate_variants(&descriptor, &inlined)?;
    Ok(PreparedShader {
        descriptor,
        inlined,
        variants,
    })
}

/// Whether `line` is a `#version` preprocessor directive.
pub(crate) fn is_version_line(line: &str) -> bool {
    let t = line.trim_start();
    t.strip_prefix('#')
        .map(|rest| rest.trim_start().starts_with("version"))
        .unwrap_or(false)
}
