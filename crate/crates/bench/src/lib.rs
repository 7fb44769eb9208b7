//! Shared fixtures for the criterion benchmarks.

use reslice_core::bench::{self, Family, Generated};

/// Subjects used by the wall-clock benchmarks, one per family.
pub fn subjects() -> Vec<(&'static str, Generated)> {
    vec![
        ("sort-loop-12", bench::gen_program(Family::SortLoop, 12, 7).unwrap()),
        ("two-phase-6k", bench::gen_program(Family::TwoPhase, 6000, 0).unwrap()),
        ("double-call-4", bench::gen_program(Family::DoubleCall, 4, 0).unwrap()),
    ]
}
