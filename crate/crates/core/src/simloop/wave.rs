//! The wave-grid workload: per-element, batch-serial and batch-parallel
//! frame updates over a store of grid points, plus the ring pipeline.

use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::Instant;

use serde::Serialize;

use super::SimError;
use crate::cmdring::{apply_to_store, frame_channel, Poll};
use crate::kerneldsl::{
    build_plans_with_workers, default_workers, execute, parse_kernel, Binding, Env, ExecOptions, ExecutionPlan,
};
use crate::soastore::{ClassSchema, ColumnStore, FieldId, FieldSpec, GenerationalHandle, LaneType, Value};

/// Height update over `p`, an `(n, 3)` array of `(x, y, z)` rows.
pub const WAVE_KERNEL: &str = "\
kernel wave(p: f32[,], n: i32, amp: f32, omega: f32, speed: f32, t: f32) {
    for i in range(n) {
        x = p[i, 0];
        z = p[i, 2];
        p[i, 1] = amp * sin(omega * x + speed * t) + amp / 2.0 * sin(omega * z + 1.3 * speed * t);
    }
}
";

const CLASS: &str = "wave_point";
const FIELD: &str = "position";
/// Side of the square area the grid covers, in world units.
const GRID_EXTENT: f32 = 50.0;
const FRAME_RATE: f32 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WaveParams {
    pub amplitude: f32,
    /// Radians per world unit.
    pub frequency: f32,
    /// Radians per second.
    pub speed: f32,
}

impl Default for WaveParams {
    fn default() -> Self {
        WaveParams {
            amplitude: 1.0,
            frequency: 0.5,
            speed: 2.0,
        }
    }
}

/// Reference height at `(x, z)`, in the kernel's f32 operation order.
pub fn wave_height(p: &WaveParams, t: f32, x: f32, z: f32) -> f32 {
    let (amp, omega, speed) = (p.amplitude, p.frequency, p.speed);
    amp * (omega * x + speed * t).sin() + amp / 2.0 * (omega * z + 1.3 * speed * t).sin()
}

/// `(x, z)` cell centres of an `n x n` grid over the square area, row-major.
pub fn grid_points(n: usize) -> Vec<[f32; 2]> {
    let cell = GRID_EXTENT / n as f32;
    let coord = |k: usize| (k as f32 + 0.5) * cell - GRID_EXTENT / 2.0;
    (0..n * n).map(|k| [coord(k % n), coord(k / n)]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComputePath {
    /// One read and one write per element.
    Scalar,
    BatchSerial,
    BatchParallel,
}

impl ComputePath {
    pub const ALL: [ComputePath; 3] = [
        ComputePath::Scalar,
        ComputePath::BatchSerial,
        ComputePath::BatchParallel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComputePath::Scalar => "scalar",
            ComputePath::BatchSerial => "batch-serial",
            ComputePath::BatchParallel => "batch-parallel",
        }
    }
}

impl fmt::Display for ComputePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComputePath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown path `{s}`"))
    }
}

/// Grid points in a store, with the wave kernel bound to their positions.
pub struct WaveSim {
    store: ColumnStore,
    handles: Vec<GenerationalHandle>,
    field: FieldId,
    plan: ExecutionPlan,
    env: Env,
    mask: Vec<bool>,
    params: WaveParams,
}

fn point_store(points: &[[f32; 2]]) -> Result<(ColumnStore, Vec<GenerationalHandle>, FieldId), SimError> {
    let mut store = ColumnStore::new();
    let class = store.register_class(ClassSchema::new(
        CLASS,
        vec![FieldSpec::new(FIELD, LaneType::Packed4F32, 3)],
    ))?;
    let field = store.field_id(class, FIELD)?;
    let handles = store.create_many(class, points.len())?;
    let rows: Vec<f32> = points.iter().flat_map(|&[x, z]| [x, 0.0, z]).collect();
    store.batch_write_from(field, &handles, &rows)?;
    store.reset_crossings();
    Ok((store, handles, field))
}

fn kernel_env(count: usize, params: &WaveParams) -> Result<Env, SimError> {
    let n = i32::try_from(count).map_err(|_| SimError::InvalidConfig(format!("{count} points exceed i32")))?;
    Ok(Env::new()
        .with(
            "p",
            Binding::Array2 {
                data: vec![0.0; count * 3],
                rows: count,
                cols: 3,
            },
        )
        .with("n", Binding::I32(n))
        .with("amp", Binding::F32(params.amplitude))
        .with("omega", Binding::F32(params.frequency))
        .with("speed", Binding::F32(params.speed))
        .with("t", Binding::F32(0.0)))
}

fn wave_plan(workers: usize) -> Result<ExecutionPlan, SimError> {
    Ok(build_plans_with_workers(&parse_kernel(WAVE_KERNEL)?, workers))
}

impl WaveSim {
    /// One store entity per `(x, z)` point; crossings start at zero.
    pub fn new(points: &[[f32; 2]], params: WaveParams, workers: usize) -> Result<Self, SimError> {
        let (store, handles, field) = point_store(points)?;
        Ok(WaveSim {
            env: kernel_env(points.len(), &params)?,
            mask: vec![false; points.len()],
            plan: wave_plan(workers)?,
            store,
            handles,
            field,
            params,
        })
    }

    pub fn grid(n: usize, params: WaveParams, workers: usize) -> Result<Self, SimError> {
        Self::new(&grid_points(n), params, workers)
    }

    pub fn len(&self) -> usize {
        self.handles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.handles.is_empty()
    }

    pub fn store(&self) -> &ColumnStore {
        &self.store
    }

    pub fn handles(&self) -> &[GenerationalHandle] {
        &self.handles
    }

    pub fn workers(&self) -> usize {
        self.plan.parallel().map_or(1, |p| p.workers())
    }

    /// Runs one frame on `path` and returns the crossings it made.
    pub fn frame(&mut self, path: ComputePath, t: f32) -> Result<u64, SimError> {
        let before = self.store.crossing_count();
        match path {
            ComputePath::Scalar => self.run_scalar_frame(t)?,
            ComputePath::BatchSerial => self.run_batch_frame(t, false)?,
            ComputePath::BatchParallel => self.run_batch_frame(t, true)?,
        }
        Ok(self.store.crossing_count() - before)
    }

    /// Gather, kernel, scatter: two crossings whatever the point count.
    pub fn run_batch_frame(&mut self, t: f32, parallel: bool) -> Result<(), SimError> {
        let rows = self
            .env
            .get_mut("p")
            .and_then(Binding::as_mut_slice)
            .expect("bound at construction");
        self.store
            .batch_read_into(self.field, &self.handles, rows, &mut self.mask)?;
        self.env.set("t", Binding::F32(t));
        execute(
            &self.plan,
            &mut self.env,
            &ExecOptions {
                force_serial: !parallel,
                ..Default::default()
            },
        )?;
        let rows = self.env.array("p").expect("bound at construction");
        self.store.batch_write_from(self.field, &self.handles, rows)?;
        Ok(())
    }

    /// Per-element read, native evaluation, per-element write.
    pub fn run_scalar_frame(&mut self, t: f32) -> Result<(), SimError> {
        for &h in &self.handles {
            if let Value::Packed(mut row) = self.store.get_scalar(h, FIELD)? {
                row[1] = wave_height(&self.params, t, row[0], row[2]);
                self.store.set_scalar(h, FIELD, Value::Packed(row))?;
            }
        }
        Ok(())
    }

    /// Current `(x, y, z)` rows, read with one batch gather.
    pub fn positions(&self) -> Result<Vec<[f32; 3]>, SimError> {
        let mut rows = vec![0.0; self.len() * 3];
        let mut mask = vec![false; self.len()];
        self.store
            .batch_read_into(self.field, &self.handles, &mut rows, &mut mask)?;
        Ok(rows.chunks_exact(3).map(|r| [r[0], r[1], r[2]]).collect())
    }

    /// Order-sensitive fold of the height bits.
    pub fn height_checksum(&self) -> Result<u64, SimError> {
        Ok(self.positions()?.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, r| {
            (h ^ u64::from(r[1].to_bits())).wrapping_mul(0x100_0000_01b3)
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComputeConfig {
    /// Grid side; the grid holds `n * n` points.
    pub n: usize,
    pub path: ComputePath,
    pub frames: usize,
    pub warmup: usize,
    /// Parallel worker override.
    pub workers: Option<usize>,
    pub params: WaveParams,
}

impl ComputeConfig {
    pub fn new(n: usize, path: ComputePath) -> Self {
        ComputeConfig {
            n,
            path,
            frames: 300,
            warmup: 60,
            workers: None,
            params: WaveParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameReport {
    pub n: usize,
    pub elements: usize,
    pub path: ComputePath,
    pub frames: usize,
    pub mean_frame_ms: f64,
    /// `1000 / mean_frame_ms`.
    pub fps: f64,
    pub crossings_per_frame: f64,
    pub workers: usize,
    pub height_checksum: u64,
}

/// Runs `warmup` unmeasured frames then `frames` timed ones, with
/// `t = frame / 60` counted from the first warm-up frame.
pub fn run_pure_compute(cfg: &ComputeConfig) -> Result<FrameReport, SimError> {
    if cfg.n == 0 || cfg.frames == 0 {
        return Err(SimError::InvalidConfig(
            "grid side and frame count must be positive".into(),
        ));
    }
    let workers = cfg.workers.unwrap_or_else(default_workers).max(1);
    let mut sim = WaveSim::grid(cfg.n, cfg.params, workers)?;
    for frame in 0..cfg.warmup {
        sim.frame(cfg.path, frame as f32 / FRAME_RATE)?;
    }
    let mut crossings = 0;
    let mut elapsed = 0.0;
    for frame in cfg.warmup..cfg.warmup + cfg.frames {
        let started = Instant::now();
        crossings += sim.frame(cfg.path, frame as f32 / FRAME_RATE)?;
        elapsed += started.elapsed().as_secs_f64();
    }
    let mean_frame_ms = elapsed * 1000.0 / cfg.frames as f64;
    Ok(FrameReport {
        n: cfg.n,
        elements: sim.len(),
        path: cfg.path,
        frames: cfg.frames,
        mean_frame_ms,
        fps: 1000.0 / mean_frame_ms,
        crossings_per_frame: crossings as f64 / cfg.frames as f64,
        workers: if cfg.path == ComputePath::BatchParallel {
            workers
        } else {
            1
        },
        height_checksum: sim.height_checksum()?,
    })
}

/// Every size on every path, sizes outermost.
pub fn bench_compute(
    sizes: &[usize],
    paths: &[ComputePath],
    frames: usize,
    warmup: usize,
    workers: Option<usize>,
) -> Result<Vec<FrameReport>, SimError> {
    let mut out = Vec::with_capacity(sizes.len() * paths.len());
    for &n in sizes {
        for &path in paths {
            out.push(run_pure_compute(&ComputeConfig {
                frames,
                warmup,
                workers,
                ..ComputeConfig::new(n, path)
            })?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RingPipelineReport {
    pub frames: u64,
    /// Store entry calls made by the consumer thread over the whole run.
    pub crossings: u64,
    /// Time used by the last height update.
    pub last_t: f32,
    /// Final `(x, y, z)` rows.
    pub positions: Vec<[f32; 3]>,
}

/// Runs the wave update with the store on its own thread. Each frame the
/// calling thread queues one gather; when a gather's result comes back two
/// frames later it runs the kernel on it and queues one scatter.
pub fn run_ring_pipeline(
    points: &[[f32; 2]],
    params: WaveParams,
    frames: u64,
    ring_capacity: usize,
    workers: usize,
) -> Result<RingPipelineReport, SimError> {
    let (mut store, handles, field) = point_store(points)?;
    let packed: Vec<u64> = handles.iter().map(|h| h.pack()).collect();
    let class = field.class.0;
    let plan = wave_plan(workers)?;
    let mut env = kernel_env(points.len(), &params)?;
    let (mut tx, mut rx) = frame_channel(ring_capacity)?;

    let consumer = thread::spawn(move || {
        let mut done = 0;
        while done < frames {
            match rx.poll(&mut |cmd| apply_to_store(&mut store, cmd)) {
                Poll::Empty => thread::yield_now(),
                Poll::FrameEnd(_) => done += 1,
                Poll::Executed(_) => {}
            }
        }
        store
    });

    let mut last_t = 0.0;
    let mut failure = None;
    for frame in 0..frames {
        while tx.try_begin_frame().is_err() {
            tx.flush();
            thread::yield_now();
        }
        let t = frame as f32 / FRAME_RATE;
        if let Some(read) = tx.take_completions().into_iter().rev().find(|c| !c.values.is_empty()) {
            let result = (|| -> Result<(), SimError> {
                let rows = env
                    .get_mut("p")
                    .and_then(Binding::as_mut_slice)
                    .expect("bound at construction");
                rows.copy_from_slice(&read.values);
                env.set("t", Binding::F32(t));
                execute(&plan, &mut env, &ExecOptions::default())?;
                tx.batch_write(
                    class,
                    field.column,
                    &packed,
                    env.array("p").expect("bound at construction"),
                )?;
                Ok(())
            })();
            match result {
                Ok(()) => last_t = t,
                Err(e) => failure = failure.or(Some(e)),
            }
        }
        tx.batch_read(class, field.column, &packed)?;
        tx.end_frame()?;
    }
    while !tx.flush() {
        thread::yield_now();
    }
    let store = consumer.join().expect("store thread panicked");
    if let Some(e) = failure {
        return Err(e);
    }
    let crossings = store.crossing_count();
    let mut rows = vec![0.0; handles.len() * 3];
    let mut mask = vec![false; handles.len()];
    store.batch_read_into(field, &handles, &mut rows, &mut mask)?;
    Ok(RingPipelineReport {
        frames,
        crossings,
        last_t,
        positions: rows.chunks_exact(3).map(|r| [r[0], r[1], r[2]]).collect(),
    })
}
