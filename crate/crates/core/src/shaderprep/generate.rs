use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{is_version_line, Property, PropertyType, ShaderDescriptor, ShaderError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Forward,
    Gbuffer,
    Shadow,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Forward, Target::Gbuffer, Target::Shadow];

    pub fn name(self) -> &'static str {
        match self {
            Target::Forward => "forward",
            Target::Gbuffer => "gbuffer",
            Target::Shadow => "shadow",
        }
    }
}

/// One complete program per target.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSet {
    pub forward: String,
    pub gbuffer: String,
    pub shadow: String,
}

impl VariantSet {
    pub fn get(&self, target: Target) -> &str {
        match target {
            Target::Forward => &self.forward,
            Target::Gbuffer => &self.gbuffer,
            Target::Shadow => &self.shadow,
        }
    }
}

/// Placement of one property inside the generated uniform block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldLayout {
    pub name: String,
    pub glsl: &'static str,
    pub offset: u32,
    pub size: u32,
}

/// Lays out the non-texture properties in declaration order.
///
/// Every member is aligned to its own size (4, 8 or 16 bytes); three- and
/// four-component members take a full 16 bytes.
pub fn uniform_layout(properties: &[Property]) -> Vec<FieldLayout> {
    let mut offset = 0u32;
    properties
        .iter()
        .filter_map(|p| {
            let size = p.ty.block_size()?;
            let align = size.next_power_of_two();
            offset = offset.next_multiple_of(align);
            let field = FieldLayout {
                name: p.name.clone(),
                glsl: p.ty.glsl(),
                offset,
                size,
            };
            offset += size;
            Some(field)
        })
        .collect()
}

struct ModelStub {
    name: &'static str,
    forward: &'static str,
    gbuffer: &'static str,
    shadow: &'static str,
}

const PBR: ModelStub = ModelStub {
    name: "pbr",
    forward: "\
layout(location = 0) out vec4 out_color;
vec3 kiln_lighting(vec3 albedo, vec3 normal, vec3 light_dir, float roughness) {
    float ndotl = max(dot(normal, light_dir), 0.0);
    return albedo * ndotl * (1.0 - 0.5 * roughness);
}
",
    gbuffer: "\
layout(location = 0) out vec4 gbuffer_albedo;
layout(location = 1) out vec4 gbuffer_normal;
layout(location = 2) out vec4 gbuffer_material;
void kiln_write_gbuffer(vec3 albedo, vec3 normal, float roughness, float metallic) {
    gbuffer_albedo = vec4(albedo, 1.0);
    gbuffer_normal = vec4(normal * 0.5 + 0.5, 0.0);
    gbuffer_material = vec4(roughness, metallic, 0.0, 0.0);
}
",
    shadow: "\
void kiln_shadow_depth() {
    // depth is written by fixed-function rasterization
}
",
};

const UNLIT: ModelStub = ModelStub {
    name: "unlit",
    forward: "\
layout(location = 0) out vec4 out_color;
vec4 kiln_unlit(vec4 color) {
    return color;
}
",
    gbuffer: "\
layout(location = 0) out vec4 gbuffer_albedo;
layout(location = 3) out vec4 gbuffer_emissive;
void kiln_write_gbuffer_unlit(vec4 color) {
    gbuffer_albedo = vec4(0.0);
    gbuffer_emissive = color;
}
",
    shadow: "\
void kiln_shadow_depth() {
    // depth only
}
",
};

const MODELS: [ModelStub; 2] = [PBR, UNLIT];

/// Emits the forward, G-buffer and shadow programs.
///
/// Each program is a single `#version` line, target defines, the generated
/// declarations, the shading-model stub for that target, and the inlined
/// user code with its own `#version` lines removed.
pub fn generate_variants(descriptor: &ShaderDescriptor, inlined: &str) -> Result<VariantSet, ShaderError> {
    let model = MODELS
        .iter()
        .find(|m| m.name == descriptor.shading_model)
        .ok_or_else(|| ShaderError::UnknownShadingModel(descriptor.shading_model.clone()))?;

    let declarations = declarations(descriptor);
    let body: String = inlined.split_inclusive('\n').filter(|l| !is_version_line(l)).collect();

    let emit = |target: Target| {
        let stub = match target {
            Target::Forward => model.forward,
            Target::Gbuffer => model.gbuffer,
            Target::Shadow => model.shadow,
        };
        let mut out = String::new();
        let _ = writeln!(out, "#version {}", descriptor.version_target);
        let _ = writeln!(out, "#define KILN_TARGET_{} 1", target.name().to_ascii_uppercase());
        for keyword in &descriptor.keywords {
            let _ = writeln!(out, "#define {keyword} 1");
        }
        out.push_str(&declarations);
        let _ = writeln!(out, "// shading model: {} ({})", model.name, target.name());
        out.push_str(stub);
        out.push_str(&body);
        if !out.ends_with('\n') {
            out.push('\n');
        }
        out
    };

    Ok(VariantSet {
        forward: emit(Target::Forward),
        gbuffer: emit(Target::Gbuffer),
        shadow: emit(Target::Shadow),
    })
}

fn declarations(descriptor: &ShaderDescriptor) -> String {
    let mut out = String::new();
    let layout = uniform_layout(&descriptor.properties);
    if !layout.is_empty() {
        out.push_str("layout(std140, set = 0, binding = 0) uniform MaterialProperties {\n");
        for f in &layout {
            let _ = writeln!(out, "    layout(offset = {}) {} {};", f.offset, f.glsl, f.name);
        }
        out.push_str("};\n");
    }
    let textures = descriptor.properties.iter().filter(|p| p.ty == PropertyType::Texture2d);
    for (i, p) in textures.enumerate() {
        let _ = writeln!(
            out,
            "layout(set = 0, binding = {}) uniform sampler2D {};",
            i + 1,
            p.name
        );
    }
    if !descriptor.push_constants.is_empty() {
        out.push_str("layout(push_constant) uniform PushConstants {\n");
        let mut offset = 0u32;
        for pc in &descriptor.push_constants {
            let (size, align) = pc.ty.size_align();
            offset = offset.next_multiple_of(align);
            let _ = writeln!(out, "    layout(offset = {offset}) {} {};", pc.ty.glsl(), pc.name);
            offset += size;
        }
        out.push_str("} pc;\n");
    }
    out
}
