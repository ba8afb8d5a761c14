//! `kiln`: graph compilation, shader preprocessing, kernel checks and benchmarks.
//!
//! Exit status is 0 on success, 1 on a domain error (bad input, failed
//! check) and 2 on a usage error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kiln::cmdring::{measure_pair_latency, LatencyMode, RingError};
use kiln::framegraph::{GraphError, GraphFile};
use kiln::kerneldsl::{classify, parse_kernel, KernelError};
use kiln::shaderprep::{build_id_map, prepare, ShaderError, Target};
use kiln::simloop::{bench_compute, ComputePath, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", .path.display())]
    GraphSyntax {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Shader(#[from] ShaderError),
    #[error("{}: {source}", .path.display())]
    Kernel {
        path: PathBuf,
        #[source]
        source: KernelError,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    /// The command worked but its check failed.
    CheckFailed,
}

#[derive(Debug, Parser)]
#[command(
    name = "kiln",
    version,
    about = "Engine performance toolkit",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a graph description file into a schedule.
    GraphCompile {
        /// Graph description (JSON).
        input: PathBuf,
        /// Where to write the compiled graph; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resolve imports and emit per-target shader variants.
    ShaderPrep {
        /// Entry shader source.
        #[arg(long)]
        entry: PathBuf,
        /// Library directories, highest priority first.
        #[arg(long = "dir", required = true)]
        dirs: Vec<PathBuf>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify a kernel; succeeds only when it can run in parallel.
    KernelCheck { file: PathBuf },
    /// Benchmarks with CSV output.
    #[command(subcommand)]
    Bench(Bench),
}

#[derive(Debug, Subcommand)]
enum Bench {
    /// Wave-grid frame times per grid size and update path.
    Compute(ComputeArgs),
    /// Enqueue-dequeue pair latency of the command ring.
    Ring(RingArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PathArg {
    All,
    Scalar,
    BatchSerial,
    BatchParallel,
}

#[derive(Debug, Args)]
struct ComputeArgs {
    /// Grid sides; each grid holds n*n points.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 300, 500, 700, 1000])]
    n: Vec<usize>,
    #[arg(long, value_enum, default_value_t = PathArg::All)]
    path: PathArg,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u32).range(1..))]
    frames: u32,
    #[arg(long, default_value_t = 60)]
    warmup: u32,
    /// Parallel worker count; hardware threads when omitted.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    CrossThread,
    SelfDrive,
}

#[derive(Debug, Args)]
struct RingArgs {
    #[arg(long, default_value_t = 1_000_000)]
    iters: usize,
    #[arg(long, default_value_t = 1024)]
    capacity: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::CrossThread)]
    mode: ModeArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn emit(out: Option<&Path>, contents: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => write(path, contents),
        None => io::stdout().write_all(contents).map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn graph_compile(input: &Path, out: Option<&Path>) -> Result<Status, CliError> {
    let text = read(input)?;
    let file = GraphFile::from_json(&text).map_err(|source| CliError::GraphSyntax {
        path: input.to_owned(),
        source,
    })?;
    let compiled = file.compile()?;
    emit(out, compiled.to_json().as_bytes())?;
    eprintln!("culled: {}", compiled.culled.len());
    for pass in &compiled.culled {
        eprintln!("  {pass}");
    }
    eprintln!("barriers: {}", compiled.barriers.len());
    Ok(Status::Ok)
}

fn shader_prep(entry: &Path, dirs: &[PathBuf], out: &Path) -> Result<Status, CliError> {
    let source = read(entry)?;
    let library = build_id_map(dirs)?;
    let prepared = prepare(&source, &library)?;
    let id = &prepared.descriptor.shader_id;
    if id.is_empty() {
        return Err(CliError::Shader(ShaderError::MalformedDirective {
            line: 1,
            directive: "@shader_id".into(),
            reason: "entry declares no shader id".into(),
        }));
    }
    // Ids may contain `/`; files live in matching subdirectories.
    let stem = out.join(id);
    let dir = stem.parent().unwrap_or(out);
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let stem = stem.to_string_lossy().into_owned();
    for target in Target::ALL {
        write(
            Path::new(&format!("{stem}.{}.glsl", target.name())),
            prepared.variants.get(target).as_bytes(),
        )?;
    }
    write(
        Path::new(&format!("{stem}.descriptor.json")),
        prepared.descriptor.to_json().as_bytes(),
    )?;
    Ok(Status::Ok)
}

fn kernel_check(file: &Path) -> Result<Status, CliError> {
    let kernel = parse_kernel(&read(file)?).map_err(|source| CliError::Kernel {
        path: file.to_owned(),
        source,
    })?;
    let verdict = classify(&kernel);
    println!("{}: {verdict}", kernel.name());
    Ok(if verdict.is_promotable() {
        Status::Ok
    } else {
        Status::CheckFailed
    })
}

fn bench_compute_csv(args: &ComputeArgs) -> Result<Status, CliError> {
    let paths: Vec<ComputePath> = match args.path {
        PathArg::All => ComputePath::ALL.to_vec(),
        PathArg::Scalar => vec![ComputePath::Scalar],
        PathArg::BatchSerial => vec![ComputePath::BatchSerial],
        PathArg::BatchParallel => vec![ComputePath::BatchParallel],
    };
    let rows = bench_compute(
        &args.n,
        &paths,
        args.frames as usize,
        args.warmup as usize,
        args.workers.map(|w| w as usize),
    )?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([
        "n",
        "elements",
        "path",
        "mean_frame_ms",
        "fps",
        "crossings_per_frame",
        "workers",
    ])?;
    for r in rows {
        csv.write_record([
            r.n.to_string(),
            r.elements.to_string(),
            r.path.to_string(),
            format!("{:.4}", r.mean_frame_ms),
            format!("{:.2}", r.fps),
            r.crossings_per_frame.to_string(),
            r.workers.to_string(),
        ])?;
    }
    let bytes = csv.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    emit(args.out.as_deref(), &bytes)?;
    Ok(Status::Ok)
}

fn bench_ring_csv(args: &RingArgs) -> Result<Status, CliError> {
    let mode = match args.mode {
        ModeArg::CrossThread => LatencyMode::CrossThread,
        ModeArg::SelfDrive => LatencyMode::SelfDrive,
    };
    let stats = measure_pair_latency(args.capacity, args.iters, mode)?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["capacity", "iterations", "median_ns", "p99_ns"])?;
    csv.write_record([
        stats.capacity.to_string(),
        stats.iterations.to_string(),
        format!("{:.1}", stats.median_ns),
        format!("{:.1}", stats.p99_ns),
    ])?;
    let bytes = csv.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    emit(args.out.as_deref(), &bytes)?;
    Ok(Status::Ok)
}

fn run(cli: Cli) -> Result<Status, CliError> {
    match cli.command {
        Command::GraphCompile { input, out } => graph_compile(&input, out.as_deref()),
        Command::ShaderPrep { entry, dirs, out } => shader_prep(&entry, &dirs, &out),
        Command::KernelCheck { file } => kernel_check(&file),
        Command::Bench(Bench::Compute(args)) => bench_compute_csv(&args),
        Command::Bench(Bench::Ring(args)) => bench_ring_csv(&args),
    }
}

fn report(err: &CliError) {
    if let CliError::Shader(e) = err {
        if let Some(trace) = e.import_trace() {
            let mut inner = e;
            while let ShaderError::InImport { source, .. } = inner {
                inner = source;
            }
            let kind = match inner {
                ShaderError::DepthExceeded { .. } => "import depth exceeded",
                _ => "cyclic import",
            };
            eprintln!("error: {kind}");
            for id in trace {
                eprintln!("{id}");
            }
            return;
        }
    }
    eprintln!("error: {err}");
}

fn main() -> ExitCode {
    // Clap exits with status 2 on usage errors and 0 for --help/--version.
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            report(&e);
            ExitCode::from(1)
        }
    }
}
