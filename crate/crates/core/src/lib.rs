//! Dynamic program slicing by repeated, targeted re-execution.
//!
//! The crate defines a small imperative language (`minilang`), a static
//! dependency analysis over it (`sda`, `cfgdep`), an instrumented
//! interpreter with shadow-memory frontier corroboration (`exec`), the
//! on-demand re-execution slicers (`slicer`), trace-based and upfront
//! comparison engines (`baselines`), and a benchmark harness (`bench`).

pub mod baselines;
pub mod bench;
pub mod cfgdep;
pub mod exec;
pub mod minilang;
pub mod report;
pub mod sda;
pub mod slicer;

pub use cfgdep::{Cfg, CfgNode, ControlDeps};
pub use exec::{Address, ExecError, ExecOutcome, Occurrence, RuntimeErrorKind, Trace};
pub use minilang::{parse_program, NodeId, Procedure, Program, ProgramError, Stmt};
pub use sda::{AbstractLocation, StaticDeps};
pub use slicer::{Criterion, IterationLog, OccurrenceSpec, SliceError, SliceResult};
