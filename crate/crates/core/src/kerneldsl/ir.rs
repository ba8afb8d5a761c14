//! Typed, slot-resolved form of a checked kernel.

use super::ast::{AugOp, ParamType, ReduceOp};
use super::Pos;

pub(crate) type Slot = u32;
pub(crate) type ArrayIx = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Arith {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum FFn {
    Sin,
    Cos,
    Sqrt,
    Abs,
}

#[derive(Clone, Debug)]
pub(crate) enum FExpr {
    Const(f32),
    Local(Slot),
    Load1 {
        arr: ArrayIx,
        idx: Box<IExpr>,
        pos: Pos,
    },
    Load2 {
        arr: ArrayIx,
        row: Box<IExpr>,
        col: Box<IExpr>,
        pos: Pos,
    },
    Neg(Box<FExpr>),
    Bin(Arith, Box<FExpr>, Box<FExpr>),
    Call(FFn, Box<FExpr>),
    Min(Box<FExpr>, Box<FExpr>),
    Max(Box<FExpr>, Box<FExpr>),
    FromInt(Box<IExpr>),
}

#[derive(Clone, Debug)]
pub(crate) enum IExpr {
    Const(i32),
    Local(Slot),
    Neg(Box<IExpr>),
    /// Division and remainder trap on a zero divisor at `pos`.
    Bin(Arith, Box<IExpr>, Box<IExpr>, Pos),
    Abs(Box<IExpr>),
    Min(Box<IExpr>, Box<IExpr>),
    Max(Box<IExpr>, Box<IExpr>),
    FromFloat(Box<FExpr>),
    Len {
        arr: ArrayIx,
        dim: u8,
    },
}

#[derive(Clone, Debug)]
pub(crate) enum BExpr {
    Const(bool),
    Local(Slot),
    CmpF(Cmp, Box<FExpr>, Box<FExpr>),
    CmpI(Cmp, Box<IExpr>, Box<IExpr>),
    CmpB(Cmp, Box<BExpr>, Box<BExpr>),
    And(Box<BExpr>, Box<BExpr>),
    Or(Box<BExpr>, Box<BExpr>),
    Not(Box<BExpr>),
}

#[derive(Clone, Debug)]
pub(crate) enum SExpr {
    F(FExpr),
    I(IExpr),
    B(BExpr),
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    SetF(Slot, FExpr),
    SetI(Slot, IExpr),
    SetB(Slot, BExpr),
    Store {
        arr: ArrayIx,
        row: IExpr,
        col: Option<IExpr>,
        value: FExpr,
        aug: Option<AugOp>,
        pos: Pos,
    },
    ReduceF {
        slot: Slot,
        op: ReduceOp,
        value: FExpr,
    },
    ReduceI {
        slot: Slot,
        op: ReduceOp,
        value: IExpr,
    },
    For {
        var: Slot,
        bound: IExpr,
        body: Vec<Op>,
    },
    While {
        cond: BExpr,
        body: Vec<Op>,
    },
    ForEach {
        var: Slot,
        arr: ArrayIx,
        body: Vec<Op>,
    },
    If {
        cond: BExpr,
        then_ops: Vec<Op>,
        else_ops: Vec<Op>,
    },
    Break,
    Return(SExpr),
    Yield(SExpr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScalarType {
    F32,
    I32,
    Bool,
}

#[derive(Clone, Debug)]
pub(crate) struct LocalInfo {
    pub name: String,
    pub ty: ScalarType,
    pub slot: Slot,
}

/// Accumulator of a top-level loop.
#[derive(Clone, Debug)]
pub(crate) struct Reduction {
    pub ty: ScalarType,
    pub slot: Slot,
    pub op: ReduceOp,
}

/// Per top-level loop facts used by the executors.
#[derive(Clone, Debug, Default)]
pub(crate) struct TopLoop {
    /// Index of the loop in the top-level op list.
    pub op_index: usize,
    pub reductions: Vec<Reduction>,
    /// Arrays stored with the induction variable as leading index.
    pub leading_stores: Vec<ArrayIx>,
}

#[derive(Clone, Debug)]
pub(crate) struct Lowered {
    pub body: Vec<Op>,
    pub locals: Vec<LocalInfo>,
    pub arrays: Vec<(String, ParamType)>,
    /// Scalar params: (name, local index into `locals`).
    pub scalar_params: Vec<(String, usize)>,
    pub counts: [usize; 3],
    pub top_loops: Vec<TopLoop>,
    pub stored_arrays: Vec<ArrayIx>,
    pub return_type: Option<ScalarType>,
    /// Locals definitely assigned when the body completes.
    pub final_locals: Vec<usize>,
}
