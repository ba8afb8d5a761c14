//! Built-in topologies and effects used by tests, fixtures and the CLI.

use super::types::*;
use super::{FrameGraph, BEFORE_POST_PROCESS};

pub const SHADOW_MAP: &str = "shadow_map";
pub const SCENE_COLOR: &str = "scene_color";
pub const SCENE_DEPTH: &str = "scene_depth";
pub const LDR_COLOR: &str = "ldr_color";
pub const BACKBUFFER: &str = "backbuffer";

/// Forward pipeline: shadow casters, opaque, skybox, transparent,
/// post-process, screen UI. Declares `after_opaque` and `after_sky`; the two
/// post-process points are left to auto-injection.
pub fn forward() -> FrameGraph {
    let mut g = FrameGraph::new();
    let resources = [
        ResourceDesc::new(
            SHADOW_MAP,
            ResourceKind::DepthTarget,
            ExtentClass::Custom {
                width: 2048,
                height: 2048,
            },
        ),
        ResourceDesc::new(SCENE_COLOR, ResourceKind::ColorTarget, ExtentClass::FullRes),
        ResourceDesc::new(SCENE_DEPTH, ResourceKind::DepthTarget, ExtentClass::FullRes),
        ResourceDesc::new(LDR_COLOR, ResourceKind::ColorTarget, ExtentClass::FullRes),
        ResourceDesc::new(BACKBUFFER, ResourceKind::ColorTarget, ExtentClass::FullRes),
    ];
    for r in resources {
        g.add_resource(r).expect("preset resources are unique");
    }
    let passes = [
        PassDesc::new("ShadowCasters", PassAction::DrawRenderers)
            .writes([SHADOW_MAP])
            .queue(0, 2500),
        PassDesc::new("Opaque", PassAction::DrawRenderers)
            .reads([SHADOW_MAP])
            .writes([SCENE_COLOR, SCENE_DEPTH])
            .queue(0, 2500)
            .sorted(SortMode::FrontToBack),
        PassDesc::new("Skybox", PassAction::DrawRenderers)
            .reads([SCENE_DEPTH])
            .writes([SCENE_COLOR]),
        PassDesc::new("Transparent", PassAction::DrawRenderers)
            .reads([SHADOW_MAP, SCENE_DEPTH])
            .writes([SCENE_COLOR])
            .queue(2501, 5000)
            .sorted(SortMode::BackToFront),
        PassDesc::new("PostProcess", PassAction::FullscreenQuad)
            .reads([SCENE_COLOR])
            .writes([LDR_COLOR]),
        PassDesc::new("ScreenUI", PassAction::DrawRenderers)
            .reads([LDR_COLOR])
            .writes([BACKBUFFER]),
    ];
    for p in passes {
        g.add_pass(p).expect("preset passes are valid");
    }
    g.add_injection_point(InjectionPoint::new(
        "after_opaque",
        Some("Opaque"),
        [SCENE_COLOR, SCENE_DEPTH],
    ))
    .expect("preset point is valid");
    g.add_injection_point(InjectionPoint::new(
        "after_sky",
        Some("Skybox"),
        [SCENE_COLOR, SCENE_DEPTH],
    ))
    .expect("preset point is valid");
    g
}

/// Names of the eight bloom passes, in expansion order.
pub const BLOOM_PASSES: [&str; 8] = [
    "Bloom.Prefilter",
    "Bloom.Down1",
    "Bloom.Down2",
    "Bloom.Down3",
    "Bloom.Up1",
    "Bloom.Up2",
    "Bloom.Up3",
    "Bloom.Composite",
];

/// Bloom: prefilter, three downsamples, three tent upsamples, composite back
/// into `scene_color`. Intermediates are transient and mirror each other in
/// size on the way down and up.
pub fn bloom(priority: i32) -> EffectDesc {
    let t = |id: &str, extent| ResourceDesc::transient(id, ResourceKind::ColorTarget, extent);
    let sixteenth = ExtentClass::Custom { width: 120, height: 68 };
    let resources = vec![
        t("bloom_prefilter", ExtentClass::HalfRes),
        t("bloom_down_quarter", ExtentClass::QuarterRes),
        t("bloom_down_eighth", ExtentClass::EighthRes),
        t("bloom_down_sixteenth", sixteenth),
        t("bloom_up_eighth", ExtentClass::EighthRes),
        t("bloom_up_quarter", ExtentClass::QuarterRes),
        t("bloom_up_half", ExtentClass::HalfRes),
    ];
    let chain = [
        (SCENE_COLOR, "bloom_prefilter"),
        ("bloom_prefilter", "bloom_down_quarter"),
        ("bloom_down_quarter", "bloom_down_eighth"),
        ("bloom_down_eighth", "bloom_down_sixteenth"),
        ("bloom_down_sixteenth", "bloom_up_eighth"),
        ("bloom_up_eighth", "bloom_up_quarter"),
        ("bloom_up_quarter", "bloom_up_half"),
    ];
    let mut passes: Vec<PassDesc> = BLOOM_PASSES[..7]
        .iter()
        .zip(chain)
        .map(|(name, (src, dst))| {
            PassDesc::new(*name, PassAction::FullscreenQuad)
                .reads([src])
                .writes([dst])
        })
        .collect();
    passes.push(
        PassDesc::new(BLOOM_PASSES[7], PassAction::FullscreenQuad)
            .reads([SCENE_COLOR, "bloom_up_half"])
            .writes([SCENE_COLOR]),
    );
    EffectDesc {
        name: "bloom".into(),
        injection_point: BEFORE_POST_PROCESS.into(),
        priority,
        requires: [SCENE_COLOR.into()].into(),
        modifies: [SCENE_COLOR.into()].into(),
        expansion: EffectExpansion { passes, resources },
    }
}

/// Single-pass colour effect that rewrites `scene_color` in place.
pub fn color_grade(name: &str, point: &str, priority: i32) -> EffectDesc {
    EffectDesc {
        name: name.into(),
        injection_point: point.into(),
        priority,
        requires: [SCENE_COLOR.into()].into(),
        modifies: [SCENE_COLOR.into()].into(),
        expansion: EffectExpansion {
            passes: vec![PassDesc::new(format!("{name}.Apply"), PassAction::FullscreenQuad)
                .reads([SCENE_COLOR])
                .writes([SCENE_COLOR])],
            resources: Vec::new(),
        },
    }
}

pub fn forward_with_bloom() -> FrameGraph {
    let mut g = forward();
    g.mount_effect(bloom(0)).expect("bloom satisfies the forward contract");
    g
}
