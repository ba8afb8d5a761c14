//! Interpreter for lowered kernels, serial and chunk-parallel.
//!
//! Array parameters are viewed as `[AtomicU32]` for the duration of a run so
//! workers can share them; relaxed ordering suffices because promotable
//! loops touch disjoint rows and the scope join publishes every write.
//!
//! Float reductions inside a top-level loop accumulate in f64 and narrow to
//! f32 after every step, which keeps the serial fold and the chunked fold
//! within rounding of each other. Integer reductions wrap, so they are exact
//! under any grouping.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::sync::atomic::{AtomicU32, Ordering};

use serde::Serialize;

use super::ast::{AugOp, ParamType, ReduceOp};
use super::ir::*;
use super::{Pos, RuntimeError};

/// A value bound to a kernel parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum Binding {
    F32(f32),
    I32(i32),
    Array1(Vec<f32>),
    /// Row-major `rows x cols`.
    Array2 {
        data: Vec<f32>,
        rows: usize,
        cols: usize,
    },
}

impl Binding {
    pub fn type_name(&self) -> &'static str {
        match self {
            Binding::F32(_) => "f32",
            Binding::I32(_) => "i32",
            Binding::Array1(_) => "f32[]",
            Binding::Array2 { .. } => "f32[,]",
        }
    }

    /// Flat data of an array binding.
    pub fn as_slice(&self) -> Option<&[f32]> {
        match self {
            Binding::Array1(data) | Binding::Array2 { data, .. } => Some(data),
            _ => None,
        }
    }

    pub fn as_mut_slice(&mut self) -> Option<&mut [f32]> {
        match self {
            Binding::Array1(data) | Binding::Array2 { data, .. } => Some(data),
            _ => None,
        }
    }
}

/// Parameter bindings for one kernel invocation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Env {
    bindings: BTreeMap<String, Binding>,
}

impl Env {
    pub fn new() -> Self {
        Env::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: Binding) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: Binding) {
        self.bindings.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Binding> {
        self.bindings.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Binding> {
        self.bindings.get_mut(name)
    }

    pub fn array(&self, name: &str) -> Option<&[f32]> {
        self.get(name).and_then(Binding::as_slice)
    }

    pub fn bindings(&self) -> &BTreeMap<String, Binding> {
        &self.bindings
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Scalar {
    F32(f32),
    I32(i32),
    Bool(bool),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExecPath {
    Serial,
    Parallel,
    /// The parallel attempt failed and the serial plan produced the result.
    Fallback,
}

#[derive(Clone, Debug, Default)]
pub struct ExecOptions {
    /// Worker count override; `None` uses the plan's count.
    pub workers: Option<usize>,
    pub force_serial: bool,
    /// Makes this worker fail halfway through its first chunk.
    pub inject_fault: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecReport {
    pub path: ExecPath,
    pub returned: Option<Scalar>,
    pub yielded: Vec<Scalar>,
    /// Locals definitely assigned at the end of the body, by name.
    pub locals: BTreeMap<String, Scalar>,
}

/// Splits `[0, n)` into `workers` contiguous ranges whose lengths differ by
/// at most one, longer ranges first.
pub fn chunk_ranges(n: usize, workers: usize) -> Vec<Range<usize>> {
    let workers = workers.max(1);
    let (base, extra) = (n / workers, n % workers);
    let mut start = 0;
    (0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

struct ArrayView<'a> {
    cells: &'a [AtomicU32],
    rows: usize,
    cols: usize,
}

impl ArrayView<'_> {
    #[inline]
    fn load(&self, at: usize) -> f32 {
        f32::from_bits(self.cells[at].load(Ordering::Relaxed))
    }

    #[inline]
    fn store(&self, at: usize, v: f32) {
        self.cells[at].store(v.to_bits(), Ordering::Relaxed)
    }
}

fn atomic_view(data: &mut [f32]) -> &[AtomicU32] {
    // SAFETY: AtomicU32 has the size and alignment of u32, and so of f32.
    // The exclusive borrow guarantees no non-atomic access while the view
    // lives.
    unsafe { &*(data as *mut [f32] as *const [AtomicU32]) }
}

enum Flow {
    Next,
    Break,
    Return,
}

#[derive(Clone)]
struct Frame {
    f: Vec<f32>,
    i: Vec<i32>,
    b: Vec<bool>,
    /// Wide shadows of active float accumulators, by f32 slot.
    wide: Vec<Option<f64>>,
    returned: Option<Scalar>,
    yielded: Vec<Scalar>,
}

impl Frame {
    fn new(low: &Lowered) -> Self {
        Frame {
            f: vec![0.0; low.counts[0]],
            i: vec![0; low.counts[1]],
            b: vec![false; low.counts[2]],
            wide: vec![None; low.counts[0]],
            returned: None,
            yielded: Vec::new(),
        }
    }
}

fn fold_f(op: ReduceOp, acc: f64, v: f64) -> f64 {
    match op {
        ReduceOp::Sum => acc + v,
        ReduceOp::Product => acc * v,
        ReduceOp::Min => acc.min(v),
        ReduceOp::Max => acc.max(v),
    }
}

fn fold_f32(op: ReduceOp, acc: f32, v: f32) -> f32 {
    match op {
        ReduceOp::Sum => acc + v,
        ReduceOp::Product => acc * v,
        ReduceOp::Min => acc.min(v),
        ReduceOp::Max => acc.max(v),
    }
}

fn fold_i(op: ReduceOp, acc: i32, v: i32) -> i32 {
    match op {
        ReduceOp::Sum => acc.wrapping_add(v),
        ReduceOp::Product => acc.wrapping_mul(v),
        ReduceOp::Min => acc.min(v),
        ReduceOp::Max => acc.max(v),
    }
}

fn identity_f(op: ReduceOp) -> f64 {
    match op {
        ReduceOp::Sum => 0.0,
        ReduceOp::Product => 1.0,
        ReduceOp::Min => f64::INFINITY,
        ReduceOp::Max => f64::NEG_INFINITY,
    }
}

fn identity_i(op: ReduceOp) -> i32 {
    match op {
        ReduceOp::Sum => 0,
        ReduceOp::Product => 1,
        ReduceOp::Min => i32::MAX,
        ReduceOp::Max => i32::MIN,
    }
}

struct Machine<'a> {
    low: &'a Lowered,
    arrays: &'a [ArrayView<'a>],
}

impl Machine<'_> {
    fn oob(&self, pos: Pos, arr: ArrayIx, index: i64, len: usize) -> RuntimeError {
        RuntimeError::IndexOutOfBounds {
            pos,
            array: self.low.arrays[arr as usize].0.clone(),
            index,
            len,
        }
    }

    fn offset(
        &self,
        fr: &Frame,
        arr: ArrayIx,
        row: &IExpr,
        col: Option<&IExpr>,
        pos: Pos,
    ) -> Result<usize, RuntimeError> {
        let view = &self.arrays[arr as usize];
        let r = self.int(fr, row)?;
        if r < 0 || r as usize >= view.rows {
            return Err(self.oob(pos, arr, r.into(), view.rows));
        }
        match col {
            None => Ok(r as usize),
            Some(col) => {
                let c = self.int(fr, col)?;
                if c < 0 || c as usize >= view.cols {
                    return Err(self.oob(pos, arr, c.into(), view.cols));
                }
                Ok(r as usize * view.cols + c as usize)
            }
        }
    }

    fn float(&self, fr: &Frame, e: &FExpr) -> Result<f32, RuntimeError> {
        Ok(match e {
            FExpr::Const(v) => *v,
            FExpr::Local(s) => fr.f[*s as usize],
            FExpr::Load1 { arr, idx, pos } => {
                let at = self.offset(fr, *arr, idx, None, *pos)?;
                self.arrays[*arr as usize].load(at)
            }
            FExpr::Load2 { arr, row, col, pos } => {
                let at = self.offset(fr, *arr, row, Some(col), *pos)?;
                self.arrays[*arr as usize].load(at)
            }
            FExpr::Neg(a) => -self.float(fr, a)?,
            FExpr::Bin(op, a, b) => {
                let (a, b) = (self.float(fr, a)?, self.float(fr, b)?);
                match op {
                    Arith::Add => a + b,
                    Arith::Sub => a - b,
                    Arith::Mul => a * b,
                    Arith::Div => a / b,
                    Arith::Rem => a % b,
                }
            }
            FExpr::Call(func, a) => {
                let a = self.float(fr, a)?;
                match func {
                    FFn::Sin => a.sin(),
                    FFn::Cos => a.cos(),
                    FFn::Sqrt => a.sqrt(),
                    FFn::Abs => a.abs(),
                }
            }
            FExpr::Min(a, b) => self.float(fr, a)?.min(self.float(fr, b)?),
            FExpr::Max(a, b) => self.float(fr, a)?.max(self.float(fr, b)?),
            FExpr::FromInt(a) => self.int(fr, a)? as f32,
        })
    }

    fn int(&self, fr: &Frame, e: &IExpr) -> Result<i32, RuntimeError> {
        Ok(match e {
            IExpr::Const(v) => *v,
            IExpr::Local(s) => fr.i[*s as usize],
            IExpr::Neg(a) => self.int(fr, a)?.wrapping_neg(),
            IExpr::Bin(op, a, b, pos) => {
                let (a, b) = (self.int(fr, a)?, self.int(fr, b)?);
                match op {
                    Arith::Add => a.wrapping_add(b),
                    Arith::Sub => a.wrapping_sub(b),
                    Arith::Mul => a.wrapping_mul(b),
                    Arith::Div | Arith::Rem if b == 0 => return Err(RuntimeError::DivisionByZero { pos: *pos }),
                    Arith::Div => a.wrapping_div(b),
                    Arith::Rem => a.wrapping_rem(b),
                }
            }
            IExpr::Abs(a) => self.int(fr, a)?.wrapping_abs(),
            IExpr::Min(a, b) => self.int(fr, a)?.min(self.int(fr, b)?),
            IExpr::Max(a, b) => self.int(fr, a)?.max(self.int(fr, b)?),
            IExpr::FromFloat(a) => self.float(fr, a)? as i32,
            IExpr::Len { arr, dim } => {
                let view = &self.arrays[*arr as usize];
                (if *dim == 0 { view.rows } else { view.cols }) as i32
            }
        })
    }

    fn boolean(&self, fr: &Frame, e: &BExpr) -> Result<bool, RuntimeError> {
        fn cmp<T: PartialOrd>(op: Cmp, a: T, b: T) -> bool {
            match op {
                Cmp::Lt => a < b,
                Cmp::Le => a <= b,
                Cmp::Gt => a > b,
                Cmp::Ge => a >= b,
                Cmp::Eq => a == b,
                Cmp::Ne => a != b,
            }
        }
        Ok(match e {
            BExpr::Const(v) => *v,
            BExpr::Local(s) => fr.b[*s as usize],
            BExpr::CmpF(op, a, b) => cmp(*op, self.float(fr, a)?, self.float(fr, b)?),
            BExpr::CmpI(op, a, b) => cmp(*op, self.int(fr, a)?, self.int(fr, b)?),
            BExpr::CmpB(op, a, b) => cmp(*op, self.boolean(fr, a)?, self.boolean(fr, b)?),
            BExpr::And(a, b) => self.boolean(fr, a)? && self.boolean(fr, b)?,
            BExpr::Or(a, b) => self.boolean(fr, a)? || self.boolean(fr, b)?,
            BExpr::Not(a) => !self.boolean(fr, a)?,
        })
    }

    fn scalar(&self, fr: &Frame, e: &SExpr) -> Result<Scalar, RuntimeError> {
        Ok(match e {
            SExpr::F(e) => Scalar::F32(self.float(fr, e)?),
            SExpr::I(e) => Scalar::I32(self.int(fr, e)?),
            SExpr::B(e) => Scalar::Bool(self.boolean(fr, e)?),
        })
    }

    fn run(&self, fr: &mut Frame, ops: &[Op]) -> Result<Flow, RuntimeError> {
        for op in ops {
            match self.step(fr, op)? {
                Flow::Next => {}
                flow => return Ok(flow),
            }
        }
        Ok(Flow::Next)
    }

    fn step(&self, fr: &mut Frame, op: &Op) -> Result<Flow, RuntimeError> {
        match op {
            Op::SetF(s, e) => fr.f[*s as usize] = self.float(fr, e)?,
            Op::SetI(s, e) => fr.i[*s as usize] = self.int(fr, e)?,
            Op::SetB(s, e) => fr.b[*s as usize] = self.boolean(fr, e)?,
            Op::Store {
                arr,
                row,
                col,
                value,
                aug,
                pos,
            } => {
                let at = self.offset(fr, *arr, row, col.as_ref(), *pos)?;
                let v = self.float(fr, value)?;
                let view = &self.arrays[*arr as usize];
                let v = match aug {
                    None => v,
                    Some(AugOp::Add) => view.load(at) + v,
                    Some(AugOp::Mul) => view.load(at) * v,
                };
                view.store(at, v);
            }
            Op::ReduceF { slot, op, value } => {
                let v = self.float(fr, value)?;
                let s = *slot as usize;
                fr.f[s] = match &mut fr.wide[s] {
                    Some(w) => {
                        *w = fold_f(*op, *w, v.into());
                        *w as f32
                    }
                    None => fold_f32(*op, fr.f[s], v),
                };
            }
            Op::ReduceI { slot, op, value } => {
                let v = self.int(fr, value)?;
                fr.i[*slot as usize] = fold_i(*op, fr.i[*slot as usize], v);
            }
            Op::For { var, bound, body } => {
                let n = self.int(fr, bound)?;
                return self.counted(fr, *var, 0..n.max(0), body);
            }
            Op::While { cond, body } => {
                while self.boolean(fr, cond)? {
                    match self.run(fr, body)? {
                        Flow::Next => {}
                        Flow::Break => break,
                        Flow::Return => return Ok(Flow::Return),
                    }
                }
            }
            Op::ForEach { var, arr, body } => {
                let saved = fr.f[*var as usize];
                let view = &self.arrays[*arr as usize];
                for at in 0..view.cells.len() {
                    fr.f[*var as usize] = view.load(at);
                    match self.run(fr, body)? {
                        Flow::Next => {}
                        Flow::Break => break,
                        Flow::Return => return Ok(Flow::Return),
                    }
                }
                fr.f[*var as usize] = saved;
            }
            Op::If {
                cond,
                then_ops,
                else_ops,
            } => {
                let branch = if self.boolean(fr, cond)? { then_ops } else { else_ops };
                return self.run(fr, branch);
            }
            Op::Break => return Ok(Flow::Break),
            Op::Return(e) => {
                fr.returned = Some(self.scalar(fr, e)?);
                return Ok(Flow::Return);
            }
            Op::Yield(e) => {
                let v = self.scalar(fr, e)?;
                fr.yielded.push(v);
            }
        }
        Ok(Flow::Next)
    }

    /// Runs a counted loop over `range`; the loop variable is restored on exit.
    fn counted(&self, fr: &mut Frame, var: Slot, range: Range<i32>, body: &[Op]) -> Result<Flow, RuntimeError> {
        let saved = fr.i[var as usize];
        let mut flow = Flow::Next;
        for k in range {
            fr.i[var as usize] = k;
            match self.run(fr, body)? {
                Flow::Next => {}
                Flow::Break => break,
                Flow::Return => {
                    flow = Flow::Return;
                    break;
                }
            }
        }
        fr.i[var as usize] = saved;
        Ok(flow)
    }

    fn run_top_serial(&self, fr: &mut Frame) -> Result<(), RuntimeError> {
        let mut loops = self.low.top_loops.iter().peekable();
        for (index, op) in self.low.body.iter().enumerate() {
            let top = loops.next_if(|t| t.op_index == index);
            if let Some(top) = top {
                for r in top.reductions.iter().filter(|r| r.ty == ScalarType::F32) {
                    fr.wide[r.slot as usize] = Some(fr.f[r.slot as usize].into());
                }
            }
            let flow = self.step(fr, op);
            if let Some(top) = top {
                for r in top.reductions.iter().filter(|r| r.ty == ScalarType::F32) {
                    fr.wide[r.slot as usize] = None;
                }
            }
            if let Flow::Return = flow? {
                break;
            }
        }
        Ok(())
    }

    fn run_top_parallel(&self, fr: &mut Frame, workers: usize, fault: Option<usize>) -> Result<(), RuntimeError> {
        let mut loops = self.low.top_loops.iter().peekable();
        for (index, op) in self.low.body.iter().enumerate() {
            match (loops.next_if(|t| t.op_index == index), op) {
                (Some(top), Op::For { var, bound, body }) => {
                    let n = self.int(fr, bound)?.max(0) as usize;
                    self.dispatch(fr, top, *var, body, n, workers, fault)?;
                }
                _ => {
                    if let Flow::Return = self.step(fr, op)? {
                        break;
                    }
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn dispatch(
        &self,
        fr: &mut Frame,
        top: &TopLoop,
        var: Slot,
        body: &[Op],
        n: usize,
        workers: usize,
        fault: Option<usize>,
    ) -> Result<(), RuntimeError> {
        let chunks = chunk_ranges(n, workers);
        let mut template = fr.clone();
        template.yielded.clear();
        for r in &top.reductions {
            match r.ty {
                ScalarType::F32 => template.wide[r.slot as usize] = Some(identity_f(r.op)),
                _ => template.i[r.slot as usize] = identity_i(r.op),
            }
        }

        let results: Vec<Result<Frame, RuntimeError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_empty())
                .map(|(w, chunk)| {
                    let mut local = template.clone();
                    let chunk = chunk.clone();
                    let faulty = fault == Some(w);
                    scope.spawn(move || {
                        for &arr in &top.leading_stores {
                            let rows = self.arrays[arr as usize].rows;
                            if chunk.end > rows {
                                return Err(self.oob(Pos::default(), arr, chunk.end as i64 - 1, rows));
                            }
                        }
                        let cut = if faulty {
                            chunk.start + chunk.len() / 2
                        } else {
                            chunk.end
                        };
                        self.counted(&mut local, var, chunk.start as i32..cut as i32, body)?;
                        if faulty {
                            return Err(RuntimeError::WorkerFault { worker: w });
                        }
                        Ok(local)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or(Err(RuntimeError::WorkerFault { worker: usize::MAX }))
                })
                .collect()
        });

        let partials = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        for r in &top.reductions {
            let s = r.slot as usize;
            match r.ty {
                ScalarType::F32 => {
                    let mut acc = f64::from(fr.f[s]);
                    for p in &partials {
                        acc = fold_f(r.op, acc, p.wide[s].unwrap_or(identity_f(r.op)));
                    }
                    fr.f[s] = acc as f32;
                }
                _ => {
                    fr.i[s] = partials.iter().fold(fr.i[s], |acc, p| fold_i(r.op, acc, p.i[s]));
                }
            }
        }
        Ok(())
    }
}

/// Resolves parameter bindings, runs the kernel and writes scalar parameters
/// back into `env`.
pub(crate) fn run(
    low: &Lowered,
    env: &mut Env,
    parallel_workers: Option<usize>,
    fault: Option<usize>,
) -> Result<ExecReport, RuntimeError> {
    let mut by_name: HashMap<&str, &mut Binding> = env.bindings.iter_mut().map(|(k, v)| (k.as_str(), v)).collect();
    let mut frame = Frame::new(low);

    let mut scalars = Vec::with_capacity(low.scalar_params.len());
    for (name, local) in &low.scalar_params {
        let info = &low.locals[*local];
        let binding = by_name.remove(name.as_str());
        match (info.ty, binding.as_deref()) {
            (ScalarType::F32, Some(Binding::F32(v))) => frame.f[info.slot as usize] = *v,
            (ScalarType::I32, Some(Binding::I32(v))) => frame.i[info.slot as usize] = *v,
            (ty, found) => {
                return Err(RuntimeError::BindingMismatch {
                    name: name.clone(),
                    expected: if ty == ScalarType::F32 { "f32" } else { "i32" }.into(),
                    found: found.map_or("nothing", Binding::type_name).into(),
                });
            }
        }
        scalars.push((info, binding.unwrap()));
    }

    let mut slices: Vec<(&mut [f32], usize, usize)> = Vec::with_capacity(low.arrays.len());
    for (name, ty) in &low.arrays {
        match (ty, by_name.remove(name.as_str())) {
            (ParamType::Array1, Some(Binding::Array1(data))) => {
                let len = data.len();
                slices.push((data.as_mut_slice(), len, 1));
            }
            (ParamType::Array2, Some(Binding::Array2 { data, rows, cols })) if data.len() == *rows * *cols => {
                slices.push((data.as_mut_slice(), *rows, *cols));
            }
            (ty, found) => {
                let found = match found {
                    Some(Binding::Array2 { data, rows, cols }) if *ty == ParamType::Array2 => {
                        format!("f32[,] of {} elements declared {rows}x{cols}", data.len())
                    }
                    other => other.map_or("nothing", |b| b.type_name()).to_owned(),
                };
                return Err(RuntimeError::BindingMismatch {
                    name: name.clone(),
                    expected: ty.to_string(),
                    found,
                });
            }
        }
    }

    let path;
    {
        let views: Vec<ArrayView> = slices
            .iter_mut()
            .map(|(data, rows, cols)| ArrayView {
                cells: atomic_view(data),
                rows: *rows,
                cols: *cols,
            })
            .collect();
        let machine = Machine { low, arrays: &views };
        match parallel_workers {
            None => {
                machine.run_top_serial(&mut frame)?;
                path = ExecPath::Serial;
            }
            Some(workers) => {
                let snapshot: Vec<(ArrayIx, Vec<f32>)> = low
                    .stored_arrays
                    .iter()
                    .map(|&a| {
                        let view = &views[a as usize];
                        (a, (0..view.cells.len()).map(|k| view.load(k)).collect())
                    })
                    .collect();
                let initial = frame.clone();
                if machine.run_top_parallel(&mut frame, workers, fault).is_ok() {
                    path = ExecPath::Parallel;
                } else {
                    for (a, data) in &snapshot {
                        let view = &views[*a as usize];
                        data.iter().enumerate().for_each(|(k, v)| view.store(k, *v));
                    }
                    frame = initial;
                    machine.run_top_serial(&mut frame)?;
                    path = ExecPath::Fallback;
                }
            }
        }
    }

    for (info, binding) in scalars {
        match binding {
            Binding::F32(v) => *v = frame.f[info.slot as usize],
            Binding::I32(v) => *v = frame.i[info.slot as usize],
            _ => unreachable!("checked above"),
        }
    }
    let locals = low
        .final_locals
        .iter()
        .map(|&l| {
            let info = &low.locals[l];
            let s = info.slot as usize;
            let v = match info.ty {
                ScalarType::F32 => Scalar::F32(frame.f[s]),
                ScalarType::I32 => Scalar::I32(frame.i[s]),
                ScalarType::Bool => Scalar::Bool(frame.b[s]),
            };
            (info.name.clone(), v)
        })
        .collect();
    Ok(ExecReport {
        path,
        returned: frame.returned,
        yielded: frame.yielded,
        locals,
    })
}
