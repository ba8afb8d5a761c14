use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kiln(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kiln"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn every_subcommand_has_help_and_version() {
    for sub in [
        &[][..],
        &["graph-compile"],
        &["shader-prep"],
        &["kernel-check"],
        &["bench"],
        &["bench", "compute"],
        &["bench", "ring"],
    ] {
        for flag in ["--help", "--version"] {
            let args: Vec<&str> = sub.iter().copied().chain([flag]).collect();
            let o = kiln(&args);
            assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
            if flag == "--version" {
                assert!(stdout(&o).contains(env!("CARGO_PKG_VERSION")));
            }
        }
    }
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["graph-compile", "x.json", "--bogus"][..],
        &["frobnicate"],
        &["bench", "compute", "--path", "gpu"],
        &["bench", "compute", "--frames", "0"],
        &["shader-prep", "--entry", "a.glsl", "--out", "o"],
    ] {
        assert_eq!(kiln(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn forward_fixture_compiles_to_the_reference_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("compiled.json");
    let o = kiln(&[
        "graph-compile",
        &fixture("forward.json"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("culled: 0"));
    let text = fs::read_to_string(&out).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let order: Vec<&str> = json["order"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(
        order,
        [
            "ShadowCasters",
            "Opaque",
            "Skybox",
            "Transparent",
            "PostProcess",
            "ScreenUI"
        ]
    );

    // Byte-identical on a second run, and to standard output.
    let again = kiln(&["graph-compile", &fixture("forward.json")]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn compiled_output_round_trips_through_the_library() {
    let o = kiln(&["graph-compile", &fixture("forward_bloom.json")]);
    assert_eq!(o.status.code(), Some(0));
    let parsed: kiln::framegraph::CompiledGraph = serde_json::from_str(&stdout(&o)).unwrap();
    let file = kiln::framegraph::GraphFile::from_json(&fs::read_to_string(fixture("forward_bloom.json")).unwrap());
    assert_eq!(parsed, file.unwrap().compile().unwrap());
    assert_eq!(parsed.order.len(), 14);
}

#[test]
fn unread_pass_is_reported_as_culled() {
    let o = kiln(&["graph-compile", &fixture("unread_pass.json")]);
    assert_eq!(o.status.code(), Some(0));
    let err = stderr(&o);
    assert!(err.contains("culled: 1"), "{err}");
    assert!(err.contains("barriers: 1"), "{err}");
}

#[test]
fn graph_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"output\": \n  oops }").unwrap();
    let o = kiln(&["graph-compile", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = kiln(&["graph-compile", &fixture("cycle.json")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("P -> Q -> P"), "{}", stderr(&o));

    let o = kiln(&["graph-compile", "/nonexistent/graph.json"]);
    assert_eq!(o.status.code(), Some(1));
}

fn write_shader(dir: &Path, file: &str, id: &str, imports: &[&str], body: &str) -> PathBuf {
    let mut text = format!("@shader_id {id}\n#version 450\n");
    for i in imports {
        text.push_str(&format!("@import {i}\n"));
    }
    text.push_str(body);
    let path = dir.join(file);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn shader_prep_writes_three_variants_and_a_descriptor() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = tmp.path().join("lib");
    fs::create_dir(&lib).unwrap();
    write_shader(&lib, "noise.glsl", "lib/noise", &[], "float noise() { return 0.5; }\n");
    let entry = write_shader(
        tmp.path(),
        "water.glsl",
        "fx/water",
        &["lib/noise"],
        "@property roughness float\nvoid surface() {}\n",
    );
    let out = tmp.path().join("out");
    let o = kiln(&[
        "shader-prep",
        "--entry",
        entry.to_str().unwrap(),
        "--dir",
        lib.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for target in ["forward", "gbuffer", "shadow"] {
        let text = fs::read_to_string(out.join(format!("fx/water.{target}.glsl"))).unwrap();
        assert_eq!(text.matches("float noise()").count(), 1);
        assert!(text.lines().all(|l| !l.trim_start().starts_with('@')));
    }
    let desc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fx/water.descriptor.json")).unwrap()).unwrap();
    assert_eq!(desc["shader_id"], "fx/water");
}

#[test]
fn shader_prep_prints_the_cycle_one_id_per_line() {
    let tmp = tempfile::tempdir().unwrap();
    write_shader(tmp.path(), "a.glsl", "A", &["B"], "");
    write_shader(tmp.path(), "b.glsl", "B", &["A"], "");
    let o = kiln(&[
        "shader-prep",
        "--entry",
        tmp.path().join("a.glsl").to_str().unwrap(),
        "--dir",
        tmp.path().to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let lines: Vec<String> = stderr(&o).lines().skip(1).map(str::to_owned).collect();
    assert_eq!(lines, ["A", "B", "A"]);
}

#[test]
fn kernel_check_exit_code_follows_the_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = tmp.path().join("ok.k");
    fs::write(
        &ok,
        "kernel scale(a: f32[], n: i32, k: f32) {\n    for i in range(n) {\n        a[i] = a[i] * k;\n    }\n}\n",
    )
    .unwrap();
    let o = kiln(&["kernel-check", ok.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "scale: Promotable");

    let scan = tmp.path().join("scan.k");
    fs::write(
        &scan,
        "kernel scan(a: f32[], n: i32) {\n    for i in range(n) {\n        a[i + 1] = a[i];\n    }\n}\n",
    )
    .unwrap();
    let o = kiln(&["kernel-check", scan.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("NonLeadingInductionIndex"), "{}", stdout(&o));

    let broken = tmp.path().join("broken.k");
    fs::write(&broken, "kernel (").unwrap();
    let o = kiln(&["kernel-check", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("syntax error at 1:8"), "{}", stderr(&o));
}

#[test]
fn bench_compute_emits_one_csv_row_per_size_and_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("results.csv");
    let o = kiln(&[
        "bench",
        "compute",
        "--n",
        "8,16",
        "--frames",
        "3",
        "--warmup",
        "1",
        "--workers",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(
        rows[0],
        [
            "n",
            "elements",
            "path",
            "mean_frame_ms",
            "fps",
            "crossings_per_frame",
            "workers"
        ]
    );
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[1][..3], ["8", "64", "scalar"]);
    assert_eq!(rows[1][5], "128");
    assert_eq!(rows[6][..3], ["16", "256", "batch-parallel"]);
    assert_eq!(rows[6][5], "2");
    assert_eq!(rows[6][6], "2");
}

#[test]
fn bench_ring_emits_a_latency_row() {
    let o = kiln(&[
        "bench",
        "ring",
        "--iters",
        "100000",
        "--capacity",
        "64",
        "--mode",
        "self-drive",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "capacity,iterations,median_ns,p99_ns");
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cells[..2], ["64", "100000"]);
    let median: f64 = cells[2].parse().unwrap();
    let p99: f64 = cells[3].parse().unwrap();
    assert!(median >= 0.0 && p99 >= median);

    let o = kiln(&["bench", "ring", "--iters", "10"]);
    assert_eq!(o.status.code(), Some(1));
    let o = kiln(&["bench", "ring", "--iters", "100000", "--capacity", "3"]);
    assert_eq!(o.status.code(), Some(1));
}
