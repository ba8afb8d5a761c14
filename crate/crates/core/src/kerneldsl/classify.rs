//! Promotability analysis over the syntax tree.
//!
//! Every top-level loop must pass for the kernel to be promotable. The first
//! violation in statement order decides the reason.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::ast::*;
use super::Pos;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum RejectReason {
    NotCountedLoop,
    IteratorLoop,
    WhileLoop,
    HasBreak,
    HasReturn,
    HasYield,
    /// Reserved; the grammar has no exception handling.
    HasExceptionHandling,
    UnsupportedReduction,
    OverlappingStores,
    NonLeadingInductionIndex,
}

impl RejectReason {
    pub const ALL: [RejectReason; 10] = [
        RejectReason::NotCountedLoop,
        RejectReason::IteratorLoop,
        RejectReason::WhileLoop,
        RejectReason::HasBreak,
        RejectReason::HasReturn,
        RejectReason::HasYield,
        RejectReason::HasExceptionHandling,
        RejectReason::UnsupportedReduction,
        RejectReason::OverlappingStores,
        RejectReason::NonLeadingInductionIndex,
    ];
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Promotable,
    NotPromotable(RejectReason),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopClassification {
    pub verdict: Verdict,
    /// Offending statement, if any.
    pub location: Option<Pos>,
    pub detail: String,
}

impl LoopClassification {
    pub fn is_promotable(&self) -> bool {
        self.verdict == Verdict::Promotable
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match self.verdict {
            Verdict::Promotable => None,
            Verdict::NotPromotable(r) => Some(r),
        }
    }

    fn reject(reason: RejectReason, location: Option<Pos>, detail: impl Into<String>) -> Self {
        LoopClassification {
            verdict: Verdict::NotPromotable(reason),
            location,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for LoopClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.verdict, self.location) {
            (Verdict::Promotable, _) => write!(f, "Promotable"),
            (Verdict::NotPromotable(r), Some(pos)) => write!(f, "NotPromotable({r}) at {pos}: {}", self.detail),
            (Verdict::NotPromotable(r), None) => write!(f, "NotPromotable({r}): {}", self.detail),
        }
    }
}

pub(crate) fn classify_ast(params: &[Param], body: &[Stmt]) -> LoopClassification {
    let mut declared: HashSet<&str> = params.iter().map(|p| p.name.as_str()).collect();
    let mut promoted = 0usize;
    for stmt in body {
        if stmt.is_loop() {
            if let Err(rejection) = check_top_loop(stmt, &declared) {
                return rejection;
            }
            promoted += 1;
        }
        // Loop variables are scoped to their loop and never carry values out.
        walk(std::slice::from_ref(stmt), &mut |s| {
            if let StmtKind::Assign { name, .. } = &s.kind {
                declared.insert(name);
            }
        });
    }
    if promoted == 0 {
        return LoopClassification::reject(RejectReason::NotCountedLoop, None, "kernel has no loop to promote");
    }
    LoopClassification {
        verdict: Verdict::Promotable,
        location: None,
        detail: format!("{promoted} counted loop(s) promoted"),
    }
}

fn written_name(s: &Stmt) -> Option<&str> {
    match &s.kind {
        StmtKind::Assign { name, .. } | StmtKind::Reduce { acc: name, .. } => Some(name),
        StmtKind::For { var, .. } | StmtKind::ForEach { var, .. } => Some(var),
        _ => None,
    }
}

fn check_top_loop(stmt: &Stmt, declared: &HashSet<&str>) -> Result<(), LoopClassification> {
    use RejectReason::*;
    let (var, body) = match &stmt.kind {
        StmtKind::For { var, body, .. } => (var.as_str(), body),
        StmtKind::While { .. } => {
            return Err(LoopClassification::reject(
                WhileLoop,
                Some(stmt.pos),
                "while loops have no trip count",
            ));
        }
        StmtKind::ForEach { .. } => {
            return Err(LoopClassification::reject(
                IteratorLoop,
                Some(stmt.pos),
                "iterator loops are not rewritten",
            ));
        }
        _ => unreachable!("not a loop"),
    };

    // Accumulators: reduce targets that outlive the loop.
    let mut acc_names: HashSet<&str> = HashSet::new();
    walk(body, &mut |s| {
        if let StmtKind::Reduce { acc, .. } = &s.kind {
            if declared.contains(acc.as_str()) && acc != var {
                acc_names.insert(acc.as_str());
            }
        }
    });
    let mut accumulators: HashMap<&str, ReduceOp> = HashMap::new();
    let stored: BTreeSet<&str> = {
        let mut stored = BTreeSet::new();
        walk(body, &mut |s| {
            if let StmtKind::Store { array, .. } | StmtKind::AugStore { array, .. } = &s.kind {
                stored.insert(array.as_str());
            }
        });
        stored
    };
    let mut store_keys: HashSet<String> = HashSet::new();
    let mut first: Option<LoopClassification> = None;

    walk(body, &mut |s| {
        if first.is_some() {
            return;
        }
        let reject = |reason, detail: String| Some(LoopClassification::reject(reason, Some(s.pos), detail));
        first = match &s.kind {
            StmtKind::Break => reject(HasBreak, "`break` in a promoted loop".into()),
            StmtKind::Return(_) => reject(HasReturn, "`return` in a promoted loop".into()),
            StmtKind::Yield(_) => reject(HasYield, "`yield` in a promoted loop".into()),
            _ => None,
        };
        if first.is_some() {
            return;
        }
        if let Some(name) = written_name(s) {
            if name == var {
                first = reject(NotCountedLoop, format!("induction variable `{var}` is reassigned"));
                return;
            }
            if declared.contains(name) && !s.is_loop() {
                match &s.kind {
                    StmtKind::Reduce { op, .. } => {
                        let prev = *accumulators.entry(name).or_insert(*op);
                        if prev != *op {
                            first = reject(UnsupportedReduction, format!("`{name}` mixes {prev:?} and {op:?}"));
                            return;
                        }
                    }
                    _ => {
                        first = reject(
                            UnsupportedReduction,
                            format!("`{name}` is carried across iterations without a reduce"),
                        );
                        return;
                    }
                }
            }
        }
        for e in s.exprs() {
            if let Some(found) = scan_expr(e, var, &stored, &acc_names) {
                first = Some(LoopClassification::reject(found.0, Some(s.pos), found.1));
                return;
            }
        }
        match &s.kind {
            StmtKind::Store { array, indices, .. } | StmtKind::AugStore { array, indices, .. } => {
                if indices.first().and_then(Expr::as_var) != Some(var) {
                    first = reject(
                        NonLeadingInductionIndex,
                        format!("store to `{array}` does not lead with `{var}`"),
                    );
                    return;
                }
                let key = format!(
                    "{array}[{}]",
                    indices.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
                );
                if !store_keys.insert(key.clone()) {
                    first = reject(OverlappingStores, format!("`{key}` is stored more than once"));
                }
            }
            StmtKind::ForEach { array, .. } if stored.contains(array.as_str()) => {
                first = reject(
                    NonLeadingInductionIndex,
                    format!("iterates over stored array `{array}`"),
                );
            }
            _ => {}
        }
    });
    first.map_or(Ok(()), Err)
}

/// Reads that break iteration independence: accumulator reads and reads of
/// a stored array at a row other than the current iteration's.
fn scan_expr(
    e: &Expr,
    var: &str,
    stored: &BTreeSet<&str>,
    accumulators: &HashSet<&str>,
) -> Option<(RejectReason, String)> {
    match &e.kind {
        ExprKind::Var(name) if accumulators.contains(name.as_str()) => Some((
            RejectReason::UnsupportedReduction,
            format!("accumulator `{name}` is read inside the loop"),
        )),
        ExprKind::Float(_) | ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => None,
        ExprKind::Index { array, indices } => {
            if stored.contains(array.as_str()) && indices.first().and_then(Expr::as_var) != Some(var) {
                return Some((
                    RejectReason::NonLeadingInductionIndex,
                    format!("stored array `{array}` is read at another iteration's row"),
                ));
            }
            indices.iter().find_map(|i| scan_expr(i, var, stored, accumulators))
        }
        ExprKind::Unary { operand, .. } => scan_expr(operand, var, stored, accumulators),
        ExprKind::Binary { lhs, rhs, .. } => {
            scan_expr(lhs, var, stored, accumulators).or_else(|| scan_expr(rhs, var, stored, accumulators))
        }
        ExprKind::Call { args, .. } => args.iter().find_map(|a| scan_expr(a, var, stored, accumulators)),
    }
}
