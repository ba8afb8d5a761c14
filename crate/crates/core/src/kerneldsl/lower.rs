//! Type checking and lowering of the syntax tree to slot-resolved IR.
//!
//! Locals live in one flat scope per kernel and take their type from their
//! first assignment in source order. A local may only be read where it is
//! definitely assigned; a loop body starts each iteration with only what
//! was assigned before the loop, so no value silently crosses iterations.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::ast::*;
use super::ir::*;
use super::{KernelError, Pos};

pub(crate) fn lower(params: &[Param], body: &[Stmt]) -> Result<Lowered, KernelError> {
    let mut c = Checker::default();
    let mut scalar_params = Vec::new();
    for p in params {
        if c.by_name.contains_key(&p.name) || c.array_by_name.contains_key(&p.name) {
            return Err(KernelError::type_error(
                p.pos,
                format!("parameter `{}` declared twice", p.name),
            ));
        }
        match p.ty {
            ParamType::F32 | ParamType::I32 => {
                let ty = if p.ty == ParamType::F32 {
                    ScalarType::F32
                } else {
                    ScalarType::I32
                };
                let local = c.declare(&p.name, ty);
                c.assigned.insert(local);
                scalar_params.push((p.name.clone(), local));
            }
            ParamType::Array1 | ParamType::Array2 => {
                c.array_by_name.insert(p.name.clone(), c.arrays.len() as ArrayIx);
                c.arrays.push((p.name.clone(), p.ty));
            }
        }
    }

    let mut ops = Vec::with_capacity(body.len());
    let mut top_loops = Vec::new();
    for stmt in body {
        let declared_before: HashSet<String> = c.by_name.keys().cloned().collect();
        ops.push(c.stmt(stmt)?);
        if stmt.is_loop() {
            top_loops.push(c.top_loop(stmt, ops.len() - 1, &declared_before));
        }
    }

    let mut final_locals: Vec<usize> = c.assigned.iter().copied().collect();
    final_locals.sort_unstable();
    Ok(Lowered {
        body: ops,
        locals: c.locals,
        arrays: c.arrays,
        scalar_params,
        counts: c.counts,
        top_loops,
        stored_arrays: c.stored.into_iter().collect(),
        return_type: c.return_type,
        final_locals,
    })
}

#[derive(Default)]
struct Checker {
    locals: Vec<LocalInfo>,
    by_name: HashMap<String, usize>,
    arrays: Vec<(String, ParamType)>,
    array_by_name: HashMap<String, ArrayIx>,
    counts: [usize; 3],
    assigned: HashSet<usize>,
    loop_depth: usize,
    return_type: Option<ScalarType>,
    stored: BTreeSet<ArrayIx>,
}

fn type_name(ty: ScalarType) -> &'static str {
    match ty {
        ScalarType::F32 => "f32",
        ScalarType::I32 => "i32",
        ScalarType::Bool => "bool",
    }
}

fn type_of(e: &SExpr) -> ScalarType {
    match e {
        SExpr::F(_) => ScalarType::F32,
        SExpr::I(_) => ScalarType::I32,
        SExpr::B(_) => ScalarType::Bool,
    }
}

impl Checker {
    fn declare(&mut self, name: &str, ty: ScalarType) -> usize {
        let bucket = ty as usize;
        let slot = self.counts[bucket] as Slot;
        self.counts[bucket] += 1;
        self.locals.push(LocalInfo {
            name: name.to_owned(),
            ty,
            slot,
        });
        self.by_name.insert(name.to_owned(), self.locals.len() - 1);
        self.locals.len() - 1
    }

    /// Looks up or declares the local `name` with type `ty`.
    fn target(&mut self, name: &str, ty: ScalarType, pos: Pos) -> Result<usize, KernelError> {
        if self.array_by_name.contains_key(name) {
            return Err(KernelError::type_error(pos, format!("cannot assign to array `{name}`")));
        }
        match self.by_name.get(name) {
            Some(&local) if self.locals[local].ty == ty => Ok(local),
            Some(&local) => Err(KernelError::type_error(
                pos,
                format!(
                    "`{name}` has type {}, cannot assign {}",
                    type_name(self.locals[local].ty),
                    type_name(ty)
                ),
            )),
            None => Ok(self.declare(name, ty)),
        }
    }

    fn array(&self, name: &str, pos: Pos) -> Result<(ArrayIx, ParamType), KernelError> {
        match self.array_by_name.get(name) {
            Some(&ix) => Ok((ix, self.arrays[ix as usize].1)),
            None if self.by_name.contains_key(name) => {
                Err(KernelError::type_error(pos, format!("`{name}` is not an array")))
            }
            None => Err(KernelError::UnknownIdentifier {
                pos,
                name: name.to_owned(),
            }),
        }
    }

    fn block(&mut self, body: &[Stmt]) -> Result<Vec<Op>, KernelError> {
        body.iter().map(|s| self.stmt(s)).collect()
    }

    /// Lowers `body` as a branch or loop body; assignments inside it do not
    /// count as definite afterwards. Returns the ops and the assigned set at
    /// the end of the body.
    fn scoped(&mut self, body: &[Stmt], extra: Option<usize>) -> Result<(Vec<Op>, HashSet<usize>), KernelError> {
        let saved = self.assigned.clone();
        if let Some(local) = extra {
            self.assigned.insert(local);
        }
        let ops = self.block(body);
        let after = std::mem::replace(&mut self.assigned, saved);
        Ok((ops?, after))
    }

    fn looped(&mut self, body: &[Stmt], var: Option<usize>) -> Result<Vec<Op>, KernelError> {
        self.loop_depth += 1;
        let r = self.scoped(body, var);
        self.loop_depth -= 1;
        Ok(r?.0)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Op, KernelError> {
        let pos = s.pos;
        Ok(match &s.kind {
            StmtKind::Assign { name, value } => {
                let v = self.expr(value)?;
                let local = self.target(name, type_of(&v), pos)?;
                self.assigned.insert(local);
                let slot = self.locals[local].slot;
                match v {
                    SExpr::F(e) => Op::SetF(slot, e),
                    SExpr::I(e) => Op::SetI(slot, e),
                    SExpr::B(e) => Op::SetB(slot, e),
                }
            }
            StmtKind::Store { array, indices, value } => self.store(array, indices, value, None, pos)?,
            StmtKind::AugStore {
                array,
                indices,
                op,
                value,
            } => self.store(array, indices, value, Some(*op), pos)?,
            StmtKind::Reduce { acc, op, value } => {
                let local = self.read_local(acc, pos)?;
                let info = self.locals[local].clone();
                match info.ty {
                    ScalarType::F32 => Op::ReduceF {
                        slot: info.slot,
                        op: *op,
                        value: self.fexpr(value)?,
                    },
                    ScalarType::I32 => Op::ReduceI {
                        slot: info.slot,
                        op: *op,
                        value: self.iexpr(value)?,
                    },
                    ScalarType::Bool => {
                        return Err(KernelError::type_error(
                            pos,
                            format!("accumulator `{acc}` must be numeric"),
                        ));
                    }
                }
            }
            StmtKind::For { var, bound, body } => {
                let bound = self.iexpr(bound)?;
                let local = self.target(var, ScalarType::I32, pos)?;
                let body = self.looped(body, Some(local))?;
                Op::For {
                    var: self.locals[local].slot,
                    bound,
                    body,
                }
            }
            StmtKind::While { cond, body } => {
                let cond = self.bexpr(cond)?;
                Op::While {
                    cond,
                    body: self.looped(body, None)?,
                }
            }
            StmtKind::ForEach { var, array, body } => {
                let (arr, ty) = self.array(array, pos)?;
                if ty != ParamType::Array1 {
                    return Err(KernelError::type_error(
                        pos,
                        format!("foreach needs an f32[] array, `{array}` is {ty}"),
                    ));
                }
                let local = self.target(var, ScalarType::F32, pos)?;
                let body = self.looped(body, Some(local))?;
                Op::ForEach {
                    var: self.locals[local].slot,
                    arr,
                    body,
                }
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let cond = self.bexpr(cond)?;
                let (then_ops, then_assigned) = self.scoped(then_body, None)?;
                let (else_ops, else_assigned) = self.scoped(else_body, None)?;
                self.assigned = then_assigned.intersection(&else_assigned).copied().collect();
                Op::If {
                    cond,
                    then_ops,
                    else_ops,
                }
            }
            StmtKind::Break => {
                if self.loop_depth == 0 {
                    return Err(KernelError::type_error(pos, "`break` outside of a loop"));
                }
                Op::Break
            }
            StmtKind::Return(e) => {
                let v = self.expr(e)?;
                let ty = type_of(&v);
                match self.return_type {
                    Some(prev) if prev != ty => {
                        return Err(KernelError::type_error(
                            pos,
                            format!("returns {} here but {} elsewhere", type_name(ty), type_name(prev)),
                        ));
                    }
                    _ => self.return_type = Some(ty),
                }
                Op::Return(v)
            }
            StmtKind::Yield(e) => Op::Yield(self.expr(e)?),
        })
    }

    fn store(
        &mut self,
        array: &str,
        indices: &[Expr],
        value: &Expr,
        aug: Option<AugOp>,
        pos: Pos,
    ) -> Result<Op, KernelError> {
        let (arr, ty) = self.array(array, pos)?;
        let (row, col) = self.indices(array, ty, indices, pos)?;
        let value = self.fexpr(value)?;
        self.stored.insert(arr);
        Ok(Op::Store {
            arr,
            row,
            col,
            value,
            aug,
            pos,
        })
    }

    fn indices(
        &mut self,
        array: &str,
        ty: ParamType,
        indices: &[Expr],
        pos: Pos,
    ) -> Result<(IExpr, Option<IExpr>), KernelError> {
        let dims = if ty == ParamType::Array2 { 2 } else { 1 };
        if indices.len() != dims {
            return Err(KernelError::type_error(
                pos,
                format!("`{array}` has {dims} dimension(s), indexed with {}", indices.len()),
            ));
        }
        let row = self.iexpr(&indices[0])?;
        let col = indices.get(1).map(|e| self.iexpr(e)).transpose()?;
        Ok((row, col))
    }

    fn read_local(&self, name: &str, pos: Pos) -> Result<usize, KernelError> {
        match self.by_name.get(name) {
            Some(&local) if self.assigned.contains(&local) => Ok(local),
            Some(_) => Err(KernelError::type_error(
                pos,
                format!("`{name}` may be read before it is assigned"),
            )),
            None if self.array_by_name.contains_key(name) => {
                Err(KernelError::type_error(pos, format!("array `{name}` used as a scalar")))
            }
            None => Err(KernelError::UnknownIdentifier {
                pos,
                name: name.to_owned(),
            }),
        }
    }

    fn fexpr(&mut self, e: &Expr) -> Result<FExpr, KernelError> {
        match self.expr(e)? {
            SExpr::F(f) => Ok(f),
            other => Err(mismatch(e.pos, ScalarType::F32, type_of(&other))),
        }
    }

    fn iexpr(&mut self, e: &Expr) -> Result<IExpr, KernelError> {
        match self.expr(e)? {
            SExpr::I(i) => Ok(i),
            other => Err(mismatch(e.pos, ScalarType::I32, type_of(&other))),
        }
    }

    fn bexpr(&mut self, e: &Expr) -> Result<BExpr, KernelError> {
        match self.expr(e)? {
            SExpr::B(b) => Ok(b),
            other => Err(mismatch(e.pos, ScalarType::Bool, type_of(&other))),
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<SExpr, KernelError> {
        let pos = e.pos;
        Ok(match &e.kind {
            ExprKind::Float(v) => SExpr::F(FExpr::Const(*v)),
            ExprKind::Int(v) => SExpr::I(IExpr::Const(*v)),
            ExprKind::Bool(v) => SExpr::B(BExpr::Const(*v)),
            ExprKind::Var(name) => {
                let info = &self.locals[self.read_local(name, pos)?];
                match info.ty {
                    ScalarType::F32 => SExpr::F(FExpr::Local(info.slot)),
                    ScalarType::I32 => SExpr::I(IExpr::Local(info.slot)),
                    ScalarType::Bool => SExpr::B(BExpr::Local(info.slot)),
                }
            }
            ExprKind::Index { array, indices } => {
                let (arr, ty) = self.array(array, pos)?;
                let (row, col) = self.indices(array, ty, indices, pos)?;
                SExpr::F(match col {
                    None => FExpr::Load1 {
                        arr,
                        idx: Box::new(row),
                        pos,
                    },
                    Some(col) => FExpr::Load2 {
                        arr,
                        row: Box::new(row),
                        col: Box::new(col),
                        pos,
                    },
                })
            }
            ExprKind::Unary { op: UnOp::Neg, operand } => match self.expr(operand)? {
                SExpr::F(f) => SExpr::F(FExpr::Neg(Box::new(f))),
                SExpr::I(i) => SExpr::I(IExpr::Neg(Box::new(i))),
                SExpr::B(_) => return Err(KernelError::type_error(pos, "cannot negate a bool")),
            },
            ExprKind::Unary { op: UnOp::Not, operand } => SExpr::B(BExpr::Not(Box::new(self.bexpr(operand)?))),
            ExprKind::Binary { op, lhs, rhs } => self.binary(*op, lhs, rhs, pos)?,
            ExprKind::Call { func, args } => self.call(func, args, pos)?,
        })
    }

    fn binary(&mut self, op: BinOp, lhs: &Expr, rhs: &Expr, pos: Pos) -> Result<SExpr, KernelError> {
        let l = self.expr(lhs)?;
        let r = self.expr(rhs)?;
        let arith = match op {
            BinOp::Add => Some(Arith::Add),
            BinOp::Sub => Some(Arith::Sub),
            BinOp::Mul => Some(Arith::Mul),
            BinOp::Div => Some(Arith::Div),
            BinOp::Rem => Some(Arith::Rem),
            _ => None,
        };
        let cmp = match op {
            BinOp::Lt => Some(Cmp::Lt),
            BinOp::Le => Some(Cmp::Le),
            BinOp::Gt => Some(Cmp::Gt),
            BinOp::Ge => Some(Cmp::Ge),
            BinOp::Eq => Some(Cmp::Eq),
            BinOp::Ne => Some(Cmp::Ne),
            _ => None,
        };
        let operands = format!(
            "`{}` on {} and {}",
            op.symbol(),
            type_name(type_of(&l)),
            type_name(type_of(&r))
        );
        Ok(match (l, r) {
            (SExpr::F(a), SExpr::F(b)) if arith.is_some() => SExpr::F(FExpr::Bin(arith.unwrap(), a.into(), b.into())),
            (SExpr::I(a), SExpr::I(b)) if arith.is_some() => {
                SExpr::I(IExpr::Bin(arith.unwrap(), a.into(), b.into(), pos))
            }
            (SExpr::F(a), SExpr::F(b)) if cmp.is_some() => SExpr::B(BExpr::CmpF(cmp.unwrap(), a.into(), b.into())),
            (SExpr::I(a), SExpr::I(b)) if cmp.is_some() => SExpr::B(BExpr::CmpI(cmp.unwrap(), a.into(), b.into())),
            (SExpr::B(a), SExpr::B(b)) => match op {
                BinOp::And => SExpr::B(BExpr::And(a.into(), b.into())),
                BinOp::Or => SExpr::B(BExpr::Or(a.into(), b.into())),
                BinOp::Eq | BinOp::Ne => SExpr::B(BExpr::CmpB(cmp.unwrap(), a.into(), b.into())),
                _ => return Err(KernelError::type_error(pos, format!("unsupported operator {operands}"))),
            },
            _ => {
                return Err(KernelError::type_error(
                    pos,
                    format!("unsupported operator {operands} (no implicit conversion)"),
                ));
            }
        })
    }

    fn call(&mut self, func: &str, args: &[Expr], pos: Pos) -> Result<SExpr, KernelError> {
        let arity = |n: usize| -> Result<(), KernelError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(KernelError::type_error(
                    pos,
                    format!("`{func}` takes {n} argument(s), got {}", args.len()),
                ))
            }
        };
        Ok(match func {
            "sin" | "cos" | "sqrt" => {
                arity(1)?;
                let f = match func {
                    "sin" => FFn::Sin,
                    "cos" => FFn::Cos,
                    _ => FFn::Sqrt,
                };
                SExpr::F(FExpr::Call(f, Box::new(self.fexpr(&args[0])?)))
            }
            "abs" => {
                arity(1)?;
                match self.expr(&args[0])? {
                    SExpr::F(f) => SExpr::F(FExpr::Call(FFn::Abs, Box::new(f))),
                    SExpr::I(i) => SExpr::I(IExpr::Abs(Box::new(i))),
                    SExpr::B(_) => return Err(mismatch(args[0].pos, ScalarType::F32, ScalarType::Bool)),
                }
            }
            "min" | "max" => {
                arity(2)?;
                let is_min = func == "min";
                match (self.expr(&args[0])?, self.expr(&args[1])?) {
                    (SExpr::F(a), SExpr::F(b)) if is_min => SExpr::F(FExpr::Min(a.into(), b.into())),
                    (SExpr::F(a), SExpr::F(b)) => SExpr::F(FExpr::Max(a.into(), b.into())),
                    (SExpr::I(a), SExpr::I(b)) if is_min => SExpr::I(IExpr::Min(a.into(), b.into())),
                    (SExpr::I(a), SExpr::I(b)) => SExpr::I(IExpr::Max(a.into(), b.into())),
                    (a, b) => {
                        return Err(KernelError::type_error(
                            pos,
                            format!("`{func}` on {} and {}", type_name(type_of(&a)), type_name(type_of(&b))),
                        ));
                    }
                }
            }
            "f32" => {
                arity(1)?;
                match self.expr(&args[0])? {
                    SExpr::F(f) => SExpr::F(f),
                    SExpr::I(i) => SExpr::F(FExpr::FromInt(Box::new(i))),
                    SExpr::B(_) => return Err(mismatch(args[0].pos, ScalarType::I32, ScalarType::Bool)),
                }
            }
            "i32" => {
                arity(1)?;
                match self.expr(&args[0])? {
                    SExpr::I(i) => SExpr::I(i),
                    SExpr::F(f) => SExpr::I(IExpr::FromFloat(Box::new(f))),
                    SExpr::B(_) => return Err(mismatch(args[0].pos, ScalarType::F32, ScalarType::Bool)),
                }
            }
            "len" => {
                if args.is_empty() || args.len() > 2 {
                    return Err(KernelError::type_error(
                        pos,
                        "`len` takes an array and an optional dimension",
                    ));
                }
                let Some(name) = args[0].as_var() else {
                    return Err(KernelError::type_error(args[0].pos, "`len` needs an array name"));
                };
                let (arr, ty) = self.array(name, args[0].pos)?;
                let dim = match args.get(1).map(|e| &e.kind) {
                    None => 0,
                    Some(ExprKind::Int(d @ (0 | 1))) if ty == ParamType::Array2 => *d as u8,
                    Some(_) => {
                        return Err(KernelError::type_error(
                            args[1].pos,
                            "dimension must be 0 or 1 on an f32[,] array",
                        ));
                    }
                };
                SExpr::I(IExpr::Len { arr, dim })
            }
            other => {
                return Err(KernelError::UnknownIdentifier {
                    pos,
                    name: other.to_owned(),
                })
            }
        })
    }

    fn top_loop(&self, stmt: &Stmt, op_index: usize, declared_before: &HashSet<String>) -> TopLoop {
        let mut facts = TopLoop {
            op_index,
            ..TopLoop::default()
        };
        let induction = match &stmt.kind {
            StmtKind::For { var, .. } => Some(var.as_str()),
            _ => None,
        };
        walk(&stmt.bodies().concat(), &mut |s| match &s.kind {
            StmtKind::Reduce { acc, op, .. } if declared_before.contains(acc) => {
                let info = &self.locals[self.by_name[acc]];
                if !facts.reductions.iter().any(|r| r.slot == info.slot && r.ty == info.ty) {
                    facts.reductions.push(Reduction {
                        ty: info.ty,
                        slot: info.slot,
                        op: *op,
                    });
                }
            }
            StmtKind::Store { array, indices, .. } | StmtKind::AugStore { array, indices, .. }
                if induction.is_some() && indices.first().and_then(Expr::as_var) == induction =>
            {
                let ix = self.array_by_name[array];
                if !facts.leading_stores.contains(&ix) {
                    facts.leading_stores.push(ix);
                }
            }
            _ => {}
        });
        facts
    }
}

fn mismatch(pos: Pos, expected: ScalarType, found: ScalarType) -> KernelError {
    KernelError::type_error(
        pos,
        format!("expected {}, found {}", type_name(expected), type_name(found)),
    )
}
