//! One minimal kernel per rejection reason.

use kiln::kerneldsl::RejectReason;

/// One minimal kernel per reachable rejection reason.
pub const REJECTIONS: [(RejectReason, &str); 9] = [
    (
        RejectReason::NotCountedLoop,
        "kernel k(a: f32[], n: i32) { for i in range(n) { a[i] = 1.0; i = i + 1; } }",
    ),
    (
        RejectReason::IteratorLoop,
        "kernel k(a: f32[]) { s = 0.0; foreach v in a { reduce s sum v; } }",
    ),
    (
        RejectReason::WhileLoop,
        "kernel k(a: f32[], n: i32) { i = 0; while i < n { a[i] = 0.0; i = i + 1; } }",
    ),
    (
        RejectReason::HasBreak,
        "kernel k(a: f32[], n: i32) { for i in range(n) { if a[i] < 0.0 { break; } a[i] = 1.0; } }",
    ),
    (
        RejectReason::HasReturn,
        "kernel k(a: f32[], n: i32) { for i in range(n) { if a[i] < 0.0 { return i; } } return -1; }",
    ),
    (
        RejectReason::HasYield,
        "kernel k(a: f32[], n: i32) { for i in range(n) { yield a[i]; } }",
    ),
    (
        RejectReason::UnsupportedReduction,
        "kernel k(a: f32[], n: i32) { s = 0.0; for i in range(n) { s = s + a[i]; } }",
    ),
    (
        RejectReason::OverlappingStores,
        "kernel k(a: f32[], n: i32) { for i in range(n) { a[i] = 1.0; a[i] = 2.0; } }",
    ),
    (
        RejectReason::NonLeadingInductionIndex,
        "kernel k(a: f32[], n: i32) { for i in range(n) { a[n - 1 - i] = 1.0; } }",
    ),
];
