use std::fmt;

use serde::{Deserialize, Serialize};

use super::Pos;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamType {
    F32,
    I32,
    /// `f32[]`
    Array1,
    /// `f32[,]`, row-major.
    Array2,
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamType::F32 => "f32",
            ParamType::I32 => "i32",
            ParamType::Array1 => "f32[]",
            ParamType::Array2 => "f32[,]",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: ParamType,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelAst {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AugOp {
    Add,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReduceOp {
    Sum,
    Product,
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    For {
        var: String,
        bound: Expr,
        body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    ForEach {
        var: String,
        array: String,
        body: Vec<Stmt>,
    },
    Assign {
        name: String,
        value: Expr,
    },
    Store {
        array: String,
        indices: Vec<Expr>,
        value: Expr,
    },
    AugStore {
        array: String,
        indices: Vec<Expr>,
        op: AugOp,
        value: Expr,
    },
    Reduce {
        acc: String,
        op: ReduceOp,
        value: Expr,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    Break,
    Return(Expr),
    Yield(Expr),
}

impl Stmt {
    /// Nested statement lists, in source order.
    pub fn bodies(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::For { body, .. } | StmtKind::While { body, .. } | StmtKind::ForEach { body, .. } => vec![body],
            StmtKind::If {
                then_body, else_body, ..
            } => vec![then_body, else_body],
            _ => Vec::new(),
        }
    }

    /// Expressions evaluated directly by this statement (not by nested ones).
    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::For { bound, .. } => vec![bound],
            StmtKind::While { cond, .. } | StmtKind::If { cond, .. } => vec![cond],
            StmtKind::Assign { value, .. } | StmtKind::Reduce { value, .. } => vec![value],
            StmtKind::Store { indices, value, .. } | StmtKind::AugStore { indices, value, .. } => {
                indices.iter().chain(std::iter::once(value)).collect()
            }
            StmtKind::Return(e) | StmtKind::Yield(e) => vec![e],
            StmtKind::ForEach { .. } | StmtKind::Break => Vec::new(),
        }
    }

    pub fn is_loop(&self) -> bool {
        matches!(
            self.kind,
            StmtKind::For { .. } | StmtKind::While { .. } | StmtKind::ForEach { .. }
        )
    }
}

/// Pre-order traversal over `body` and everything nested in it.
pub fn walk<'a>(body: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in body {
        f(s);
        for b in s.bodies() {
            walk(b, f);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Float(f32),
    Int(i32),
    Bool(bool),
    Var(String),
    Index { array: String, indices: Vec<Expr> },
    Unary { op: UnOp, operand: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Call { func: String, args: Vec<Expr> },
}

impl Expr {
    /// Calls `f` on every variable name this expression reads.
    pub fn visit_vars<'a>(&'a self, f: &mut dyn FnMut(&'a str, Pos)) {
        match &self.kind {
            ExprKind::Float(_) | ExprKind::Int(_) | ExprKind::Bool(_) => {}
            ExprKind::Var(name) => f(name, self.pos),
            ExprKind::Index { indices, .. } => indices.iter().for_each(|e| e.visit_vars(f)),
            ExprKind::Unary { operand, .. } => operand.visit_vars(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.visit_vars(f);
                rhs.visit_vars(f);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|e| e.visit_vars(f)),
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Var(name) => Some(name),
            _ => None,
        }
    }
}

/// Fully parenthesized canonical text; equal text means equal token trees.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Float(v) => write!(f, "{v:?}"),
            ExprKind::Int(v) => write!(f, "{v}"),
            ExprKind::Bool(v) => write!(f, "{v}"),
            ExprKind::Var(name) => f.write_str(name),
            ExprKind::Index { array, indices } => {
                write!(f, "{array}[")?;
                write_list(f, indices)?;
                f.write_str("]")
            }
            ExprKind::Unary { op: UnOp::Neg, operand } => write!(f, "(-{operand})"),
            ExprKind::Unary { op: UnOp::Not, operand } => write!(f, "(!{operand})"),
            ExprKind::Binary { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            ExprKind::Call { func, args } => {
                write!(f, "{func}(")?;
                write_list(f, args)?;
                f.write_str(")")
            }
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, items: &[Expr]) -> fmt::Result {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{e}")?;
    }
    Ok(())
}
