use super::{Property, PropertyType, PushConstant, PushConstantType, SamplerState, ShaderDescriptor, ShaderError};

/// The closed directive set.
pub const DIRECTIVES: [&str; 15] = [
    "@shader_id",
    "@shading_model",
    "@surface_option",
    "@property",
    "@import",
    "@queue",
    "@blend",
    "@cull",
    "@depth_test",
    "@depth_write",
    "@push_constant",
    "@sampler_state",
    "@variant",
    "@stage",
    "@version_target",
];

const BLEND_MODES: [&str; 4] = ["opaque", "alpha", "additive", "multiply"];
const CULL_MODES: [&str; 3] = ["back", "front", "off"];
const DEPTH_FUNCS: [&str; 7] = ["never", "less", "equal", "lequal", "greater", "gequal", "always"];
const STAGES: [&str; 3] = ["vertex", "fragment", "compute"];
const FILTERS: [&str; 3] = ["nearest", "linear", "trilinear"];
const WRAPS: [&str; 3] = ["repeat", "clamp", "mirror"];

/// A directive line split into its keyword and argument tokens.
pub(crate) struct DirectiveLine<'a> {
    pub keyword: &'a str,
    pub args: Vec<&'a str>,
}

/// Returns the directive on `line`, if its first token starts with `@`.
pub(crate) fn directive_of(line: &str) -> Option<DirectiveLine<'_>> {
    let mut tokens = line.split_whitespace();
    let keyword = tokens.next()?;
    keyword.starts_with('@').then(|| DirectiveLine {
        keyword,
        args: tokens.collect(),
    })
}

/// Parses every directive in `source`.
///
/// Returns the descriptor and the source with directive lines removed;
/// all other lines are kept byte for byte.
pub fn parse_annotations(source: &str) -> Result<(ShaderDescriptor, String), ShaderError> {
    let mut desc = ShaderDescriptor::default();
    let mut seen_id = false;
    let mut seen_model = false;
    let mut seen_version = false;
    let mut stripped = String::with_capacity(source.len());

    for (idx, raw) in source.split_inclusive('\n').enumerate() {
        let line = idx + 1;
        let Some(d) = directive_of(raw) else {
            stripped.push_str(raw);
            continue;
        };
        let malformed = |reason: &str| ShaderError::MalformedDirective {
            line,
            directive: d.keyword.to_owned(),
            reason: reason.to_owned(),
        };
        let repeated = || ShaderError::RepeatedDirective {
            line,
            directive: d.keyword.to_owned(),
        };
        let exactly = |n: usize| -> Result<(), ShaderError> {
            if d.args.len() == n {
                Ok(())
            } else {
                Err(malformed(&format!("expected {n} argument(s), found {}", d.args.len())))
            }
        };
        let one_of = |value: &str, allowed: &[&str]| -> Result<String, ShaderError> {
            if allowed.contains(&value) {
                Ok(value.to_owned())
            } else {
                Err(malformed(&format!("`{value}` is not one of {}", allowed.join(", "))))
            }
        };

        match d.keyword {
            "@shader_id" => {
                exactly(1)?;
                if seen_id {
                    return Err(repeated());
                }
                seen_id = true;
                desc.shader_id = d.args[0].to_owned();
            }
            "@shading_model" => {
                exactly(1)?;
                if seen_model {
                    return Err(repeated());
                }
                seen_model = true;
                desc.shading_model = d.args[0].to_owned();
            }
            "@surface_option" => {
                exactly(2)?;
                desc.surface_options.insert(d.args[0].to_owned(), d.args[1].to_owned());
            }
            "@property" => {
                if d.args.len() < 2 {
                    return Err(malformed("expected `<name> <type> [default]`"));
                }
                let name = d.args[0];
                if !is_identifier(name) {
                    return Err(malformed(&format!("`{name}` is not an identifier")));
                }
                let ty = PropertyType::parse(d.args[1])
                    .ok_or_else(|| malformed(&format!("unknown property type `{}`", d.args[1])))?;
                let default = parse_default(ty, &d.args[2..]).map_err(|r| malformed(&r))?;
                if desc.properties.iter().any(|p| p.name == name) {
                    return Err(ShaderError::DuplicateProperty {
                        line,
                        name: name.to_owned(),
                    });
                }
                desc.properties.push(Property {
                    name: name.to_owned(),
                    ty,
                    default,
                });
            }
            "@import" => {
                exactly(1)?;
                desc.imports.push(d.args[0].to_owned());
            }
            "@queue" => {
                exactly(1)?;
                if desc.queue.is_some() {
                    return Err(repeated());
                }
                desc.queue = Some(d.args[0].parse().map_err(|_| malformed("queue must be an integer"))?);
            }
            "@blend" => {
                exactly(1)?;
                desc.blend = Some(one_of(d.args[0], &BLEND_MODES)?);
            }
            "@cull" => {
                exactly(1)?;
                desc.cull = Some(one_of(d.args[0], &CULL_MODES)?);
            }
            "@depth_test" => {
                exactly(1)?;
                desc.depth_test = Some(one_of(d.args[0], &DEPTH_FUNCS)?);
            }
            "@depth_write" => {
                exactly(1)?;
                desc.depth_write = Some(match d.args[0] {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    other => return Err(malformed(&format!("`{other}` is not on/off"))),
                });
            }
            "@push_constant" => {
                exactly(2)?;
                if !is_identifier(d.args[0]) {
                    return Err(malformed(&format!("`{}` is not an identifier", d.args[0])));
                }
                let ty = PushConstantType::parse(d.args[1])
                    .ok_or_else(|| malformed(&format!("unknown push constant type `{}`", d.args[1])))?;
                desc.push_constants.push(PushConstant {
                    name: d.args[0].to_owned(),
                    ty,
                });
            }
            "@sampler_state" => {
                exactly(3)?;
                let filter = one_of(d.args[1], &FILTERS)?;
                let wrap = one_of(d.args[2], &WRAPS)?;
                desc.sampler_states
                    .insert(d.args[0].to_owned(), SamplerState { filter, wrap });
            }
            "@variant" => {
                exactly(1)?;
                if !is_identifier(d.args[0]) {
                    return Err(malformed(&format!("`{}` is not an identifier", d.args[0])));
                }
                desc.keywords.push(d.args[0].to_owned());
            }
            "@stage" => {
                exactly(1)?;
                desc.stages.push(one_of(d.args[0], &STAGES)?);
            }
            "@version_target" => {
                exactly(1)?;
                if seen_version {
                    return Err(repeated());
                }
                seen_version = true;
                desc.version_target = d.args[0].parse().map_err(|_| malformed("version must be an integer"))?;
            }
            other => {
                return Err(ShaderError::UnknownDirective {
                    line,
                    directive: other.to_owned(),
                })
            }
        }
    }
    Ok((desc, stripped))
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_default(ty: PropertyType, args: &[&str]) -> Result<String, String> {
    if ty == PropertyType::Texture2d {
        return match args {
            [] => Ok("white".to_owned()),
            [name @ ("white" | "black" | "gray" | "normal")] => Ok((*name).to_owned()),
            _ => Err("texture default must be one of white, black, gray, normal".to_owned()),
        };
    }
    let n = ty.components();
    if args.is_empty() {
        let zero = match ty {
            PropertyType::Bool => "false",
            PropertyType::Int => "0",
            _ => "0.0",
        };
        return Ok(vec![zero; n].join(" "));
    }
    if args.len() != n {
        return Err(format!("{ty} default needs {n} component(s), found {}", args.len()));
    }
    for a in args {
        let ok = match ty {
            PropertyType::Bool => matches!(*a, "true" | "false"),
            PropertyType::Int => a.parse::<i32>().is_ok(),
            _ => a.parse::<f32>().map(f32::is_finite).unwrap_or(false),
        };
        if !ok {
            return Err(format!("`{a}` is not a valid {ty} component"));
        }
    }
    Ok(args.join(" "))
}
