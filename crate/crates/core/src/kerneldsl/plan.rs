//! Execution plans, dispatch with fallback, and the warm-up plan cache.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use super::exec::{self, chunk_ranges, Env, ExecOptions, ExecReport};
use super::ir::Lowered;
use super::{classify, parse_kernel, KernelFn, LoopClassification, RuntimeError};

/// In-order interpretation of the whole kernel.
#[derive(Clone, Debug)]
pub struct SerialPlan {
    lowered: Arc<Lowered>,
}

/// Top-level loops split into one contiguous chunk per worker.
#[derive(Clone, Debug)]
pub struct ParallelPlan {
    lowered: Arc<Lowered>,
    workers: usize,
}

impl ParallelPlan {
    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Chunking of a loop with `n` iterations.
    pub fn chunks(&self, n: usize) -> Vec<Range<usize>> {
        chunk_ranges(n, self.workers)
    }
}

#[derive(Clone, Debug)]
pub struct ExecutionPlan {
    kernel: KernelFn,
    classification: LoopClassification,
    serial: SerialPlan,
    parallel: Option<ParallelPlan>,
}

impl ExecutionPlan {
    pub fn kernel(&self) -> &KernelFn {
        &self.kernel
    }

    pub fn classification(&self) -> &LoopClassification {
        &self.classification
    }

    pub fn serial(&self) -> &SerialPlan {
        &self.serial
    }

    /// Present iff the kernel is promotable.
    pub fn parallel(&self) -> Option<&ParallelPlan> {
        self.parallel.as_ref()
    }
}

/// Hardware thread count, at least 1.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn build_plans(kernel: &KernelFn) -> ExecutionPlan {
    build_plans_with_workers(kernel, default_workers())
}

pub fn build_plans_with_workers(kernel: &KernelFn, workers: usize) -> ExecutionPlan {
    let classification = classify(kernel);
    let lowered = Arc::clone(&kernel.lowered);
    let parallel = classification.is_promotable().then(|| ParallelPlan {
        lowered: Arc::clone(&lowered),
        workers: workers.max(1),
    });
    ExecutionPlan {
        kernel: kernel.clone(),
        classification,
        serial: SerialPlan { lowered },
        parallel,
    }
}

/// Runs `plan` against `env`, updating arrays in place and scalar
/// parameters with their final values.
///
/// The parallel plan runs when present unless `force_serial` is set. If any
/// worker fails, stored arrays are restored from a snapshot taken before
/// dispatch and the serial plan reruns from the original inputs.
pub fn execute(plan: &ExecutionPlan, env: &mut Env, opts: &ExecOptions) -> Result<ExecReport, RuntimeError> {
    match (&plan.parallel, opts.force_serial) {
        (Some(par), false) => {
            let workers = opts.workers.unwrap_or(par.workers).max(1);
            exec::run(&par.lowered, env, Some(workers), opts.inject_fault)
        }
        _ => exec::run(&plan.serial.lowered, env, None, None),
    }
}

/// A named kernel source in a warm-up registry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelSource {
    pub name: String,
    pub source: String,
}

impl KernelSource {
    pub fn new(name: impl Into<String>, source: impl Into<String>) -> Self {
        KernelSource {
            name: name.into(),
            source: source.into(),
        }
    }
}

/// Plans keyed by the SHA-256 of their source text.
#[derive(Debug, Default)]
pub struct PlanCache {
    plans: HashMap<[u8; 32], Arc<ExecutionPlan>>,
}

impl PlanCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, source: &str) -> Option<Arc<ExecutionPlan>> {
        self.plans.get(&content_hash(source)).cloned()
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }
}

fn content_hash(source: &str) -> [u8; 32] {
    let digest = Sha256::digest(source.as_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    key
}

#[derive(Clone, Debug)]
pub struct WarmupEntry {
    pub name: String,
    /// Hex SHA-256 of the source.
    pub hash: String,
    pub cache_hit: bool,
    pub build_time: Duration,
    /// `None` when the source failed to parse; see `error`.
    pub classification: Option<LoopClassification>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct WarmupReport {
    pub entries: Vec<WarmupEntry>,
}

impl WarmupReport {
    pub fn cache_hits(&self) -> usize {
        self.entries.iter().filter(|e| e.cache_hit).count()
    }

    pub fn rebuilds(&self) -> usize {
        self.entries.len() - self.cache_hits()
    }
}

/// Builds plans for every kernel not already cached under its content hash.
/// Parse failures are reported per entry.
pub fn warmup(cache: &mut PlanCache, registry: &[KernelSource]) -> WarmupReport {
    let entries = registry
        .iter()
        .map(|k| {
            let key = content_hash(&k.source);
            let hash = key.iter().map(|b| format!("{b:02x}")).collect();
            let started = Instant::now();
            if let Some(plan) = cache.plans.get(&key) {
                return WarmupEntry {
                    name: k.name.clone(),
                    hash,
                    cache_hit: true,
                    build_time: started.elapsed(),
                    classification: Some(plan.classification.clone()),
                    error: None,
                };
            }
            let (classification, error) = match parse_kernel(&k.source) {
                Ok(kernel) => {
                    let plan = build_plans(&kernel);
                    let classification = plan.classification.clone();
                    cache.plans.insert(key, Arc::new(plan));
                    (Some(classification), None)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            WarmupEntry {
                name: k.name.clone(),
                hash,
                cache_hit: false,
                build_time: started.elapsed(),
                classification,
                error,
            }
        })
        .collect();
    WarmupReport { entries }
}
