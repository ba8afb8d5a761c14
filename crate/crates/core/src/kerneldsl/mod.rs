//! Counted-loop kernel language with parallel promotion.
//!
//! A kernel is one function over `f32`/`i32` scalars and `f32[]`/`f32[,]`
//! arrays:
//!
//! ```text
//! kernel scale(a: f32[], n: i32, k: f32) {
//!     for i in range(n) {
//!         a[i] = a[i] * k;
//!     }
//! }
//! ```
//!
//! [`parse_kernel`] type-checks the source, [`classify`] decides whether its
//! top-level loops can be split across workers, [`build_plans`] pairs a
//! serial plan with a parallel one when they can, and [`execute`] runs the
//! parallel plan with a serial rerun on any worker failure.

pub mod ast;
mod classify;
mod exec;
mod ir;
mod lexer;
mod lower;
mod parser;
mod plan;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{Param, ParamType, ReduceOp, Stmt};
pub use classify::{LoopClassification, RejectReason, Verdict};
pub use exec::{chunk_ranges, Binding, Env, ExecOptions, ExecPath, ExecReport, Scalar};
pub use ir::ScalarType;
pub use plan::{
    build_plans, build_plans_with_workers, default_workers, execute, warmup, ExecutionPlan, KernelSource, ParallelPlan,
    PlanCache, SerialPlan, WarmupEntry, WarmupReport,
};

/// 1-based source position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("type error at {pos}: {msg}")]
    Type { pos: Pos, msg: String },
    #[error("unknown identifier `{name}` at {pos}")]
    UnknownIdentifier { pos: Pos, name: String },
}

impl KernelError {
    pub(crate) fn syntax(pos: Pos, msg: impl Into<String>) -> Self {
        KernelError::Syntax { pos, msg: msg.into() }
    }

    pub(crate) fn type_error(pos: Pos, msg: impl Into<String>) -> Self {
        KernelError::Type { pos, msg: msg.into() }
    }

    pub fn pos(&self) -> Option<Pos> {
        match self {
            KernelError::Syntax { pos, .. }
            | KernelError::Type { pos, .. }
            | KernelError::UnknownIdentifier { pos, .. } => Some(*pos),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("index {index} out of bounds for `{array}` (length {len}) at {pos}")]
    IndexOutOfBounds {
        pos: Pos,
        array: String,
        index: i64,
        len: usize,
    },
    #[error("integer division by zero at {pos}")]
    DivisionByZero { pos: Pos },
    #[error("parameter `{name}` expects {expected}, bound to {found}")]
    BindingMismatch {
        name: String,
        expected: String,
        found: String,
    },
    #[error("worker {worker} failed")]
    WorkerFault { worker: usize },
}

/// A parsed and type-checked kernel.
#[derive(Clone, Debug)]
pub struct KernelFn {
    name: String,
    params: Vec<Param>,
    body: Vec<Stmt>,
    lowered: Arc<ir::Lowered>,
}

impl PartialEq for KernelFn {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.params == other.params && self.body == other.body
    }
}

impl KernelFn {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn body(&self) -> &[Stmt] {
        &self.body
    }

    /// Type of `return` statements, if the kernel has any.
    pub fn return_type(&self) -> Option<ScalarType> {
        self.lowered.return_type
    }
}

/// Parses and type-checks one kernel definition.
pub fn parse_kernel(source: &str) -> Result<KernelFn, KernelError> {
    let ast = parser::parse(source)?;
    let lowered = lower::lower(&ast.params, &ast.body)?;
    Ok(KernelFn {
        name: ast.name,
        params: ast.params,
        body: ast.body,
        lowered: Arc::new(lowered),
    })
}

/// Decides whether every top-level loop of `kernel` can run as disjoint
/// chunks. Never fails.
pub fn classify(kernel: &KernelFn) -> LoopClassification {
    classify::classify_ast(&kernel.params, &kernel.body)
}
