use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use kiln::simloop::{wave_height, WaveParams};
use kiln::soastore::{ClassSchema, ColumnStore, FieldSpec, LaneType, Value};
use kiln_bridge::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LANE_F32: u32 = 0;
const LANE_I32: u32 = 2;
const LANE_PACKED: u32 = 5;

/// A store with one class holding an `(x, y, z)` position field.
struct Session {
    store: *mut KilnStore,
    class: u32,
    handles: Vec<u64>,
}

impl Session {
    fn open(count: usize) -> Self {
        let store = open_store();
        let class = unsafe { register_class(store, [LANE_PACKED].as_ptr(), [3u8].as_ptr(), 1) };
        assert_eq!(class, 0);
        let mut handles = vec![0u64; count];
        let made = unsafe { create_handles(store, 0, count, handles.as_mut_ptr()) };
        assert_eq!(made, count as i64);
        Session {
            store,
            class: 0,
            handles,
        }
    }

    fn read(&self) -> (Vec<f32>, Vec<u8>, i64) {
        let n = self.handles.len();
        let mut out = vec![f32::NAN; n * 3];
        let mut mask = vec![9u8; n];
        let live = unsafe {
            batch_read(
                self.store,
                self.class,
                0,
                self.handles.as_ptr(),
                n,
                out.as_mut_ptr(),
                out.len(),
                mask.as_mut_ptr(),
            )
        };
        (out, mask, live)
    }

    fn write(&self, values: &[f32]) -> i64 {
        unsafe {
            batch_write(
                self.store,
                self.class,
                0,
                self.handles.as_ptr(),
                self.handles.len(),
                values.as_ptr(),
                values.len(),
            )
        }
    }

    fn crossings(&self) -> u64 {
        unsafe { crossing_count(self.store) }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        unsafe { close_store(self.store) }
    }
}

/// One client-side frame: gather, evaluate locally, scatter.
fn client_frame(s: &Session, params: &WaveParams, t: f32) {
    let (mut rows, _, live) = s.read();
    assert_eq!(live, s.handles.len() as i64);
    for r in rows.chunks_exact_mut(3) {
        r[1] = wave_height(params, t, r[0], r[2]);
    }
    assert_eq!(s.write(&rows), s.handles.len() as i64);
}

#[test]
fn a_frame_over_ten_thousand_handles_crosses_twice() {
    let s = Session::open(10_000);
    let seed: Vec<f32> = (0..10_000)
        .flat_map(|i| [i as f32 * 0.01 - 50.0, 0.0, (i % 97) as f32 * 0.5])
        .collect();
    assert_eq!(s.write(&seed), 10_000);
    let before = s.crossings();
    client_frame(&s, &WaveParams::default(), 0.25);
    assert_eq!(s.crossings() - before, 2);
}

#[test]
fn zero_handles_still_cross_twice() {
    let s = Session::open(0);
    let (rows, mask, live) = s.read();
    assert!(rows.is_empty() && mask.is_empty());
    assert_eq!(live, 0);
    assert_eq!(s.write(&[]), 0);
    assert_eq!(s.crossings(), 2);
    // Null buffers are fine for empty batches.
    let n = unsafe { batch_read(s.store, 0, 0, ptr::null(), 0, ptr::null_mut(), 0, ptr::null_mut()) };
    assert_eq!(n, 0);
}

#[test]
fn client_results_match_the_core_scalar_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let params = WaveParams {
        amplitude: 1.7,
        frequency: 0.3,
        speed: 1.1,
    };
    let points: Vec<[f32; 2]> = (0..1000)
        .map(|_| [rng.gen_range(-25.0..25.0), rng.gen_range(-25.0..25.0)])
        .collect();
    let t = 3.75;

    let s = Session::open(points.len());
    let seed: Vec<f32> = points.iter().flat_map(|&[x, z]| [x, 0.0, z]).collect();
    s.write(&seed);
    client_frame(&s, &params, t);
    let (client, mask, _) = s.read();
    assert!(mask.iter().all(|&m| m == 1));

    // Core-side oracle: per-element reads and writes on a native store.
    let mut core = ColumnStore::new();
    let class = core
        .register_class(ClassSchema::new(
            "p",
            vec![FieldSpec::new("position", LaneType::Packed4F32, 3)],
        ))
        .unwrap();
    for &[x, z] in &points {
        let h = core.create(class).unwrap();
        core.set_scalar(h, "position", Value::Packed([x, 0.0, z, 0.0])).unwrap();
        let Value::Packed(mut row) = core.get_scalar(h, "position").unwrap() else {
            unreachable!()
        };
        row[1] = wave_height(&params, t, row[0], row[2]);
        core.set_scalar(h, "position", Value::Packed(row)).unwrap();
        let got = &client[h.index as usize * 3..h.index as usize * 3 + 3];
        assert_eq!(got[1].to_bits(), row[1].to_bits(), "row {}", h.index);
        assert_eq!((got[0], got[2]), (row[0], row[2]));
    }
}

#[test]
fn stale_handles_read_as_zero_and_destroy_is_all_or_nothing() {
    let mut s = Session::open(4);
    s.write(&[1.0; 12]);
    let victim = [s.handles[1]];
    assert_eq!(unsafe { destroy_handles(s.store, 0, victim.as_ptr(), 1) }, 1);
    let (rows, mask, live) = s.read();
    assert_eq!(live, 3);
    assert_eq!(mask, [1, 0, 1, 1]);
    assert_eq!(&rows[3..6], [0.0; 3]);
    assert_eq!(s.write(&[2.0; 12]), 3);

    // One stale handle in the batch: nothing is destroyed.
    let mixed = [s.handles[0], s.handles[1]];
    assert_eq!(unsafe { destroy_handles(s.store, 0, mixed.as_ptr(), 2) }, KILN_ESTALE);
    let repeated = [s.handles[2], s.handles[2]];
    assert_eq!(
        unsafe { destroy_handles(s.store, 0, repeated.as_ptr(), 2) },
        KILN_ESTALE
    );
    assert_eq!(s.read().2, 3);

    // The freed slot is reused under a new generation.
    let mut fresh = [0u64];
    unsafe { create_handles(s.store, 0, 1, fresh.as_mut_ptr()) };
    assert_eq!(fresh[0] as u32, victim[0] as u32);
    assert_eq!(fresh[0] >> 32, (victim[0] >> 32) + 1);
    s.handles[1] = fresh[0];
    assert_eq!(s.read().2, 4);
}

#[test]
fn errors_come_back_as_codes() {
    let s = Session::open(2);
    let h = s.handles.as_ptr();
    let mut buf = [0f32; 6];
    unsafe {
        assert_eq!(register_class(ptr::null_mut(), ptr::null(), ptr::null(), 0), KILN_ENULL);
        assert_eq!(
            register_class(s.store, [99u32].as_ptr(), [1u8].as_ptr(), 1),
            KILN_EINVAL
        );
        assert_eq!(
            register_class(s.store, [LANE_F32].as_ptr(), [2u8].as_ptr(), 1),
            KILN_EINVAL
        );
        assert_eq!(register_class(s.store, ptr::null(), ptr::null(), 1), KILN_ENULL);
        assert_eq!(
            create_handles(s.store, 7, 1, buf.as_mut_ptr().cast()),
            KILN_EUNKNOWN_CLASS
        );
        assert_eq!(
            batch_read(s.store, 0, 4, h, 2, buf.as_mut_ptr(), 6, ptr::null_mut()),
            KILN_EUNKNOWN_FIELD
        );
        assert_eq!(
            batch_read(s.store, 0, 0, h, 2, buf.as_mut_ptr(), 5, ptr::null_mut()),
            KILN_ESHAPE
        );
        assert_eq!(batch_write(s.store, 0, 0, h, 2, ptr::null(), 6), KILN_ENULL);
        assert_eq!(batch_write(s.store, 9, 0, h, 2, buf.as_ptr(), 6), KILN_EUNKNOWN_CLASS);
        assert_eq!(crossing_count(ptr::null()), 0);
        close_store(ptr::null_mut());
    }
    // Every batch call counts, failed or not.
    assert_eq!(s.crossings(), 4);
}

#[test]
fn scalar_lanes_cross_as_floats() {
    let store = open_store();
    unsafe {
        let class = register_class(store, [LANE_I32, LANE_F32].as_ptr(), [1u8, 1].as_ptr(), 2);
        assert_eq!(class, 0);
        let mut hs = [0u64; 3];
        create_handles(store, 0, 3, hs.as_mut_ptr());
        assert_eq!(
            batch_write(store, 0, 0, hs.as_ptr(), 3, [1.0f32, -2.0, 7.0].as_ptr(), 3),
            3
        );
        let mut out = [0f32; 3];
        assert_eq!(
            batch_read(store, 0, 0, hs.as_ptr(), 3, out.as_mut_ptr(), 3, ptr::null_mut()),
            3
        );
        assert_eq!(out, [1.0, -2.0, 7.0]);
        close_store(store);
    }
}

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/kiln_bridge.h")).unwrap()
}

#[test]
fn header_declares_every_export_and_code() {
    let h = header();
    for (name, arity) in [
        ("KilnStore *open_store", 0),
        ("void close_store", 1),
        ("int64_t register_class", 4),
        ("int64_t create_handles", 4),
        ("int64_t destroy_handles", 4),
        ("int64_t batch_read", 8),
        ("int64_t batch_write", 7),
        ("uint64_t crossing_count", 1),
    ] {
        let start = h
            .find(&format!("\n{name}("))
            .unwrap_or_else(|| panic!("{name} missing"));
        let decl = &h[start..start + h[start..].find(");").unwrap()];
        let params = decl.split_once('(').unwrap().1;
        let count = if params.trim() == "void" {
            0
        } else {
            params.split(',').count()
        };
        assert_eq!(count, arity, "{name}");
    }
    for (name, value) in [
        ("KILN_ENULL", KILN_ENULL),
        ("KILN_EINVAL", KILN_EINVAL),
        ("KILN_EUNKNOWN_CLASS", KILN_EUNKNOWN_CLASS),
        ("KILN_EUNKNOWN_FIELD", KILN_EUNKNOWN_FIELD),
        ("KILN_ESTALE", KILN_ESTALE),
        ("KILN_ESHAPE", KILN_ESHAPE),
        ("KILN_ETYPE", KILN_ETYPE),
        ("KILN_EDUPLICATE", KILN_EDUPLICATE),
        ("KILN_EPANIC", KILN_EPANIC),
    ] {
        assert!(h.contains(&format!("#define {name} ({value})")), "{name}");
    }
}

/// The shared library next to this test binary, if cargo built one.
fn shared_library() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let deps = exe.parent()?;
    let name = format!(
        "{}kiln_bridge{}",
        std::env::consts::DLL_PREFIX,
        std::env::consts::DLL_SUFFIX
    );
    [deps.join(&name), deps.parent()?.join(&name)]
        .into_iter()
        .find(|p| p.exists())
}

const C_CLIENT: &str = r#"
#include <stdio.h>
#include "kiln_bridge.h"

int main(void) {
    KilnStore *s = open_store();
    uint32_t lanes[1] = {KILN_LANE_PACKED4F32};
    uint8_t comps[1] = {3};
    if (register_class(s, lanes, comps, 1) != 0) return 10;
    uint64_t h[100];
    if (create_handles(s, 0, 100, h) != 100) return 11;
    float rows[300];
    for (int i = 0; i < 300; i++) rows[i] = (float)i;
    if (batch_write(s, 0, 0, h, 100, rows, 300) != 100) return 12;
    float back[300];
    uint8_t mask[100];
    if (batch_read(s, 0, 0, h, 100, back, 300, mask) != 100) return 13;
    for (int i = 0; i < 300; i++) if (back[i] != (float)i) return 14;
    if (destroy_handles(s, 0, h, 1) != 1) return 15;
    if (destroy_handles(s, 0, h, 1) != KILN_ESTALE) return 16;
    printf("%llu\n", (unsigned long long)crossing_count(s));
    close_store(s);
    return 0;
}
"#;

#[test]
fn a_c_program_links_against_the_header_and_library() {
    let Some(lib) = shared_library() else {
        eprintln!("shared library not built; skipping");
        return;
    };
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("c_client");
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("client.c");
    std::fs::write(&src, C_CLIENT).unwrap();
    let exe = dir.join("client");
    let lib_dir = lib.parent().unwrap();
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("include"))
        .arg("-L")
        .arg(lib_dir)
        .arg("-lkiln_bridge")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-Wall")
        .arg("-Werror")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to build");
    let out = Command::new(&exe).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "2");
}
