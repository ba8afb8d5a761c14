use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use super::parse::{directive_of, parse_annotations};
use super::{is_version_line, ShaderError};

/// Maximum number of import hops from the entry source.
pub const MAX_IMPORT_DEPTH: usize = 16;

const SHADER_EXTENSIONS: [&str; 6] = ["glsl", "vert", "frag", "comp", "geom", "shader"];

/// Anything that can produce shader source by id.
pub trait ShaderLibrary {
    /// `Ok(None)` when the id is unknown.
    fn load(&self, id: &str) -> Result<Option<String>, ShaderError>;
}

impl ShaderLibrary for BTreeMap<String, String> {
    fn load(&self, id: &str) -> Result<Option<String>, ShaderError> {
        Ok(self.get(id).cloned())
    }
}

impl ShaderLibrary for HashMap<String, String> {
    fn load(&self, id: &str) -> Result<Option<String>, ShaderError> {
        Ok(self.get(id).cloned())
    }
}

/// Shader id to the file that declares it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    pub entries: BTreeMap<String, PathBuf>,
}

impl IdMap {
    pub fn get(&self, id: &str) -> Option<&Path> {
        self.entries.get(id).map(PathBuf::as_path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ShaderLibrary for IdMap {
    fn load(&self, id: &str) -> Result<Option<String>, ShaderError> {
        let Some(path) = self.entries.get(id) else {
            return Ok(None);
        };
        fs::read_to_string(path).map(Some).map_err(|source| ShaderError::Io {
            path: path.clone(),
            source,
        })
    }
}

/// Scans `dirs` for shader files and maps each declared id to its file.
///
/// Directories are tiers in priority order: an id found in an earlier tier
/// shadows the same id in later ones. Within one tier ids must be unique.
pub fn build_id_map<P: AsRef<Path>>(dirs: &[P]) -> Result<IdMap, ShaderError> {
    let mut map = IdMap::default();
    for dir in dirs {
        let mut tier: BTreeMap<String, PathBuf> = BTreeMap::new();
        for entry in WalkDir::new(dir.as_ref()).sort_by_file_name() {
            let entry = entry.map_err(|e| {
                let path = e.path().unwrap_or(dir.as_ref()).to_path_buf();
                ShaderError::Io { path, source: e.into() }
            })?;
            let path = entry.path();
            let is_shader = path
                .extension()
                .and_then(|e| e.to_str())
                .map(|e| SHADER_EXTENSIONS.contains(&e))
                .unwrap_or(false);
            if !entry.file_type().is_file() || !is_shader {
                continue;
            }
            let text = fs::read_to_string(path).map_err(|source| ShaderError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let Some(id) = declared_id(&text) else {
                continue;
            };
            if let Some(first) = tier.get(&id) {
                return Err(ShaderError::DuplicateShaderId {
                    id,
                    paths: [first.clone(), path.to_path_buf()],
                });
            }
            tier.insert(id, path.to_path_buf());
        }
        for (id, path) in tier {
            map.entries.entry(id).or_insert(path);
        }
    }
    Ok(map)
}

fn declared_id(text: &str) -> Option<String> {
    text.lines().find_map(|line| {
        let d = directive_of(line)?;
        (d.keyword == "@shader_id" && d.args.len() == 1).then(|| d.args[0].to_owned())
    })
}

/// Import edges discovered while resolving one entry.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ImportGraph {
    /// Ids in first-visit order; the entry comes first.
    pub nodes: Vec<String>,
    /// (importer, imported), including edges whose target was already inlined.
    pub edges: Vec<(String, String)>,
}

/// Inlines every `@import` of `entry`, recursively.
///
/// Each id's body is emitted once, at its first import site in depth-first
/// order; later imports of the same id expand to nothing. Imported bodies
/// lose their `#version` lines and all directives. The entry keeps its own
/// non-directive lines, including any `#version`.
pub fn resolve_imports(entry: &str, library: &dyn ShaderLibrary) -> Result<String, ShaderError> {
    resolve_imports_with_graph(entry, library).map(|(text, _)| text)
}

pub fn resolve_imports_with_graph(
    entry: &str,
    library: &dyn ShaderLibrary,
) -> Result<(String, ImportGraph), ShaderError> {
    let (desc, _) = parse_annotations(entry)?;
    let root = if desc.shader_id.is_empty() {
        "<entry>".to_owned()
    } else {
        desc.shader_id
    };
    let mut r = Resolver {
        library,
        done: HashSet::from([root.clone()]),
        stack: vec![root.clone()],
        out: String::with_capacity(entry.len()),
        graph: ImportGraph {
            nodes: vec![root],
            edges: Vec::new(),
        },
    };
    r.inline(entry, true)?;
    Ok((r.out, r.graph))
}

struct Resolver<'a> {
    library: &'a dyn ShaderLibrary,
    done: HashSet<String>,
    stack: Vec<String>,
    out: String,
    graph: ImportGraph,
}

impl Resolver<'_> {
    fn inline(&mut self, source: &str, is_entry: bool) -> Result<(), ShaderError> {
        for raw in source.split_inclusive('\n') {
            match directive_of(raw) {
                Some(d) if d.keyword == "@import" => self.import(d.args[0])?,
                Some(_) => {}
                None if !is_entry && is_version_line(raw) => {}
                None => self.out.push_str(raw),
            }
        }
        Ok(())
    }

    fn import(&mut self, id: &str) -> Result<(), ShaderError> {
        let importer = self.stack.last().expect("stack holds the entry").clone();
        self.graph.edges.push((importer, id.to_owned()));

        // on-stack check first: a cycle must not be hidden by de-duplication
        if self.stack.iter().any(|s| s == id) {
            let mut trace = self.stack.clone();
            trace.push(id.to_owned());
            return Err(ShaderError::CyclicImport(trace));
        }
        if self.done.contains(id) {
            return Ok(());
        }
        if self.stack.len() > MAX_IMPORT_DEPTH {
            let mut chain = self.stack[1..].to_vec();
            chain.push(id.to_owned());
            return Err(ShaderError::DepthExceeded {
                max: MAX_IMPORT_DEPTH,
                chain,
            });
        }
        let source = self
            .library
            .load(id)?
            .ok_or_else(|| ShaderError::UnknownImport(id.to_owned()))?;
        parse_annotations(&source).map_err(|e| ShaderError::InImport {
            id: id.to_owned(),
            source: Box::new(e),
        })?;

        self.done.insert(id.to_owned());
        self.graph.nodes.push(id.to_owned());
        if !self.out.is_empty() && !self.out.ends_with('\n') {
            self.out.push('\n');
        }
        self.out.push_str(&format!("// -- begin {id} --\n"));
        self.stack.push(id.to_owned());
        self.inline(&source, false)?;
        self.stack.pop();
        if !self.out.ends_with('\n') {
            self.out.push('\n');
        }
        self.out.push_str(&format!("// -- end {id} --\n"));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib(entries: &[(&str, &str)]) -> BTreeMap<String, String> {
        entries.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn imports_inline_at_their_site() {
        let l = lib(&[("b", "@shader_id b\n#version 450\nfloat b();\n")]);
        let out = resolve_imports(
            "#version 450\n@shader_id a\nfloat pre;\n@import b\nvoid main() {}\n",
            &l,
        )
        .unwrap();
        assert_eq!(
            out,
            "#version 450\nfloat pre;\n// -- begin b --\nfloat b();\n// -- end b --\nvoid main() {}\n"
        );
    }

    #[test]
    fn self_import_is_a_cycle() {
        let err = resolve_imports("@shader_id a\n@import a\n", &lib(&[("a", "")])).unwrap_err();
        assert_eq!(err.import_trace().unwrap(), ["a", "a"]);
    }

    #[test]
    fn missing_import_is_reported() {
        let err = resolve_imports("@import nope\n", &lib(&[])).unwrap_err();
        assert!(matches!(err, ShaderError::UnknownImport(id) if id == "nope"));
    }

    #[test]
    fn errors_inside_imports_name_the_import() {
        let err = resolve_imports("@import bad\n", &lib(&[("bad", "@frobnicate\n")])).unwrap_err();
        assert!(matches!(err, ShaderError::InImport { ref id, .. } if id == "bad"));
    }

    #[test]
    fn graph_records_deduplicated_edges() {
        let l = lib(&[("b", "@import d\n"), ("c", "@import d\n"), ("d", "float d;\n")]);
        let (_, g) = resolve_imports_with_graph("@shader_id a\n@import b\n@import c\n", &l).unwrap();
        assert_eq!(g.nodes, ["a", "b", "d", "c"]);
        assert_eq!(g.edges.len(), 4);
    }
}
