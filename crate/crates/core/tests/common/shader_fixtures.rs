//! In-memory shader libraries: leaves tagged with sentinels and import chains.

use std::collections::BTreeMap;

pub fn lib(entries: &[(&str, String)]) -> BTreeMap<String, String> {
    entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub fn sentinel(id: &str) -> String {
    format!("// sentinel:{id}")
}

pub fn leaf(id: &str, imports: &[&str]) -> String {
    let mut s = format!("@shader_id {id}\n#version 450\n");
    for i in imports {
        s.push_str(&format!("@import {i}\n"));
    }
    s.push_str(&sentinel(id));
    s.push('\n');
    s
}

/// `c1 -> c2 -> ... -> c{len}` with the entry importing `c1`.
pub fn chain(len: usize) -> (String, BTreeMap<String, String>) {
    let mut entries = Vec::new();
    for i in 1..=len {
        let next = format!("c{}", i + 1);
        let imports: Vec<&str> = if i < len { vec![next.as_str()] } else { vec![] };
        entries.push((format!("c{i}"), leaf(&format!("c{i}"), &imports)));
    }
    let l = entries.into_iter().collect();
    let entry = if len == 0 {
        "@shader_id root\n".to_owned()
    } else {
        "@shader_id root\n@import c1\n".to_owned()
    };
    (entry, l)
}
