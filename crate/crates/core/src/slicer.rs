//! On-demand re-execution slicing: the intra-procedural fixed point and the
//! inter-procedural one with contextualized frontiers, plus inline expansion
//! for the inlining comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cfgdep;
use crate::exec::{self, Compiled, ContextualizedFrontier, ExecError, Occurrence};
use crate::minilang::{Expr, NodeId, Procedure, Program, Stmt};
use crate::sda::{self, StaticDeps};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccurrenceSpec {
    Nth(u32),
    Last,
}

/// A slicing criterion: a node occurrence. The target variables are the ones
/// the node uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Criterion {
    pub node: NodeId,
    pub occurrence: OccurrenceSpec,
}

impl Criterion {
    pub fn nth(node: NodeId, q: u32) -> Self {
        Criterion {
            node,
            occurrence: OccurrenceSpec::Nth(q),
        }
    }

    pub fn last(node: NodeId) -> Self {
        Criterion {
            node,
            occurrence: OccurrenceSpec::Last,
        }
    }
}

/// Criterion after the occurrence-counting pre-run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedCriterion {
    pub node: NodeId,
    pub occurrence: u32,
    /// Call sites on the activation stack at the designated occurrence.
    pub ctx: BTreeSet<NodeId>,
}

impl ResolvedCriterion {
    pub fn stop(&self) -> Occurrence {
        Occurrence::new(self.node, self.occurrence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SliceMode {
    OndemandIntra,
    OndemandInter,
    ExecuteOnce,
    UpfrontAll,
    UpfrontSlice,
}

impl SliceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SliceMode::OndemandIntra => "ondemand-intra",
            SliceMode::OndemandInter => "ondemand-inter",
            SliceMode::ExecuteOnce => "execute-once",
            SliceMode::UpfrontAll => "upfront-all",
            SliceMode::UpfrontSlice => "upfront-slice",
        }
    }

    pub fn parse(s: &str) -> Option<SliceMode> {
        match s {
            "ondemand-intra" => Some(SliceMode::OndemandIntra),
            "ondemand-inter" => Some(SliceMode::OndemandInter),
            "execute-once" => Some(SliceMode::ExecuteOnce),
            "upfront-all" => Some(SliceMode::UpfrontAll),
            "upfront-slice" => Some(SliceMode::UpfrontSlice),
            _ => None,
        }
    }
}

impl std::fmt::Display for SliceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SliceError {
    #[error("criterion never executed")]
    CriterionNeverExecuted(NodeId),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("intra-procedural slicing requires a call-free program")]
    CallsNotSupported,
    #[error("inline expansion needs depth {needed}, budget is {budget}")]
    InlineBudgetExceeded { budget: u32, needed: u32 },
    #[error("inline expansion unsupported: {0}")]
    InlineUnsupported(String),
}

/// One fixed-point iteration. `run_steps` is 0 for cache iterations, which
/// re-filter previously corroborated pairs without re-executing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationLog {
    pub iteration: u32,
    pub frontiers2check: BTreeSet<(NodeId, NodeId)>,
    pub obs_defs: BTreeSet<NodeId>,
    pub obs_ctxs: BTreeSet<NodeId>,
    pub delta_control: BTreeSet<NodeId>,
    pub kept_frontiers: BTreeSet<(NodeId, NodeId)>,
    pub run_steps: u64,
    pub wall_time: Duration,
    pub cached: bool,
}

#[derive(Debug, Clone)]
pub struct SliceResult {
    pub slice: BTreeSet<NodeId>,
    pub iterations: Vec<IterationLog>,
    /// Corroboration runs actually executed (cache iterations excluded).
    pub executions: u32,
    pub total_time: Duration,
    pub mode: SliceMode,
    pub criterion: ResolvedCriterion,
    pub pre_run_steps: u64,
    /// Interpreter steps over all corroboration runs.
    pub corroboration_steps: u64,
}

impl SliceResult {
    /// Total frontiers submitted for corroboration across iterations.
    pub fn frontiers_checked(&self) -> usize {
        self.iterations
            .iter()
            .map(|it| it.frontiers2check.len())
            .sum()
    }
}

/// Frontiers of S per the intra-procedural definition: statically possible
/// dependencies from a writer outside S into a reader inside S.
pub fn frontiers(s: &BTreeSet<NodeId>, deps: &StaticDeps) -> BTreeSet<(NodeId, NodeId)> {
    let mut out = BTreeSet::new();
    for &r in s {
        for &w in deps.writers_of(r) {
            if !s.contains(&w) {
                out.insert((w, r));
            }
        }
    }
    out
}

/// Inter-procedural frontiers: all statically possible dependencies into S,
/// including those whose writer is already inside. Writer contexts of such
/// pairs still contribute call sites.
fn frontiers_all(s: &BTreeSet<NodeId>, deps: &StaticDeps) -> BTreeSet<(NodeId, NodeId)> {
    let mut out = BTreeSet::new();
    for &r in s {
        for &w in deps.writers_of(r) {
            out.insert((w, r));
        }
    }
    out
}

/// Controlling branch nodes of members of S that are not yet in S.
pub fn missing_control(s: &BTreeSet<NodeId>, deps: &StaticDeps) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for &n in s {
        for &c in deps.control.deps_of(n) {
            if !s.contains(&c) {
                out.insert(c);
            }
        }
    }
    out
}

/// Shared state for slicing one program: compiled form and static analysis.
pub struct SliceSession<'p> {
    pub program: &'p Program,
    pub compiled: Compiled,
    pub deps: StaticDeps,
}

impl<'p> SliceSession<'p> {
    pub fn new(program: &'p Program) -> Self {
        SliceSession {
            program,
            compiled: Compiled::new(program),
            deps: sda::static_data_deps(program),
        }
    }

    /// Occurrence-counting pre-run. Detects never-executed criteria before
    /// any slicing work. Returns the resolved criterion and the pre-run's
    /// step count.
    pub fn resolve(
        &self,
        input: &[i64],
        criterion: &Criterion,
    ) -> Result<(ResolvedCriterion, u64), SliceError> {
        if criterion.node.index() >= self.compiled.node_count() {
            return Err(SliceError::CriterionNeverExecuted(criterion.node));
        }
        match criterion.occurrence {
            OccurrenceSpec::Nth(q) => {
                if q == 0 {
                    return Err(SliceError::CriterionNeverExecuted(criterion.node));
                }
                match exec::resolve_nth(&self.compiled, input, criterion.node, q) {
                    Ok(r) => Ok((
                        ResolvedCriterion {
                            node: criterion.node,
                            occurrence: q,
                            ctx: r.ctx,
                        },
                        r.steps,
                    )),
                    Err(ExecError::StopNotReached(_)) => {
                        Err(SliceError::CriterionNeverExecuted(criterion.node))
                    }
                    Err(e) => Err(e.into()),
                }
            }
            OccurrenceSpec::Last => {
                match exec::resolve_last(&self.compiled, input, criterion.node)? {
                    Some(r) => Ok((
                        ResolvedCriterion {
                            node: criterion.node,
                            occurrence: r.count,
                            ctx: r.ctx,
                        },
                        r.steps,
                    )),
                    None => Err(SliceError::CriterionNeverExecuted(criterion.node)),
                }
            }
        }
    }

    /// Intra-procedural on-demand slice (call-free programs only).
    pub fn slice_intra(
        &self,
        input: &[i64],
        criterion: &Criterion,
    ) -> Result<SliceResult, SliceError> {
        if !self.program.is_call_free() {
            return Err(SliceError::CallsNotSupported);
        }
        let started = Instant::now();
        let (resolved, pre_run_steps) = self.resolve(input, criterion)?;
        let stop = resolved.stop();

        let mut slice: BTreeSet<NodeId> = BTreeSet::new();
        slice.insert(resolved.node);
        slice.extend(self.deps.control.deps_of(resolved.node).iter().copied());

        let mut checked: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        let mut iterations = Vec::new();
        let mut executions = 0u32;
        let mut corroboration_steps = 0u64;

        loop {
            let iter_started = Instant::now();
            let f2c: BTreeSet<(NodeId, NodeId)> = frontiers(&slice, &self.deps)
                .difference(&checked)
                .copied()
                .collect();
            let outcome = exec::corroborate_compiled(&self.compiled, input, &f2c, stop)?;
            executions += 1;
            corroboration_steps += outcome.steps;

            let obs_defs: BTreeSet<NodeId> = outcome
                .exercised
                .iter()
                .map(|cf| cf.writer)
                .filter(|w| !slice.contains(w))
                .collect();
            slice.extend(obs_defs.iter().copied());
            let delta_control = missing_control(&slice, &self.deps);
            slice.extend(delta_control.iter().copied());
            checked.extend(f2c.iter().copied());

            let done = obs_defs.is_empty() && delta_control.is_empty();
            iterations.push(IterationLog {
                iteration: iterations.len() as u32 + 1,
                frontiers2check: f2c,
                obs_defs,
                obs_ctxs: BTreeSet::new(),
                delta_control,
                kept_frontiers: BTreeSet::new(),
                run_steps: outcome.steps,
                wall_time: iter_started.elapsed(),
                cached: false,
            });
            if done {
                break;
            }
        }

        Ok(SliceResult {
            slice,
            iterations,
            executions,
            total_time: started.elapsed(),
            mode: SliceMode::OndemandIntra,
            criterion: resolved,
            pre_run_steps,
            corroboration_steps,
        })
    }

    /// Inter-procedural on-demand slice with contextualized frontiers.
    pub fn slice_inter(
        &self,
        input: &[i64],
        criterion: &Criterion,
    ) -> Result<SliceResult, SliceError> {
        let started = Instant::now();
        let (resolved, pre_run_steps) = self.resolve(input, criterion)?;
        self.slice_inter_resolved(input, resolved, pre_run_steps, started)
    }

    fn slice_inter_resolved(
        &self,
        input: &[i64],
        resolved: ResolvedCriterion,
        pre_run_steps: u64,
        started: Instant,
    ) -> Result<SliceResult, SliceError> {
        let stop = resolved.stop();

        // seed: criterion, its call-stack sites, and their missing control
        let mut slice: BTreeSet<NodeId> = BTreeSet::new();
        slice.insert(resolved.node);
        slice.extend(resolved.ctx.iter().copied());
        let seed_control = missing_control(&slice, &self.deps);
        slice.extend(seed_control);

        let mut checked: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        let mut corroborated: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        let mut cache: BTreeMap<(NodeId, NodeId), BTreeSet<ContextualizedFrontier>> =
            BTreeMap::new();
        let mut iterations = Vec::new();
        let mut executions = 0u32;
        let mut corroboration_steps = 0u64;

        loop {
            let iter_started = Instant::now();
            let f2c: BTreeSet<(NodeId, NodeId)> = frontiers_all(&slice, &self.deps)
                .difference(&checked)
                .copied()
                .collect();

            // determinism makes cached corroboration exact: skip the run when
            // every submitted pair was corroborated before
            let use_cache = !f2c.is_empty() && f2c.iter().all(|p| corroborated.contains(p));
            let (observed, run_steps): (Vec<ContextualizedFrontier>, u64) = if use_cache {
                let obs = f2c
                    .iter()
                    .flat_map(|p| cache.get(p).into_iter().flatten().cloned())
                    .collect();
                (obs, 0)
            } else {
                let outcome = exec::corroborate_compiled(&self.compiled, input, &f2c, stop)?;
                executions += 1;
                corroboration_steps += outcome.steps;
                for pair in &f2c {
                    corroborated.insert(*pair);
                    cache.entry(*pair).or_default();
                }
                for cf in &outcome.exercised {
                    cache
                        .entry((cf.writer, cf.reader))
                        .or_default()
                        .insert(cf.clone());
                }
                (outcome.exercised.into_iter().collect(), outcome.steps)
            };

            // admit writers whose reader context is fully inside the slice
            let mut obs_defs: BTreeSet<NodeId> = BTreeSet::new();
            let mut obs_ctxs: BTreeSet<NodeId> = BTreeSet::new();
            let mut kept: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
            for cf in &observed {
                if cf.reader_ctx.is_subset(&slice) {
                    if !slice.contains(&cf.writer) {
                        obs_defs.insert(cf.writer);
                    }
                    for &site in &cf.writer_ctx {
                        if !slice.contains(&site) {
                            obs_ctxs.insert(site);
                        }
                    }
                } else {
                    kept.insert((cf.writer, cf.reader));
                }
            }

            slice.extend(obs_defs.iter().copied());
            slice.extend(obs_ctxs.iter().copied());
            let delta_control = missing_control(&slice, &self.deps);
            slice.extend(delta_control.iter().copied());

            // kept frontiers stay unchecked so they are re-examined once
            // their reader contexts join the slice
            for pair in &f2c {
                if !kept.contains(pair) {
                    checked.insert(*pair);
                }
            }

            let grew =
                !(obs_defs.is_empty() && obs_ctxs.is_empty() && delta_control.is_empty());
            iterations.push(IterationLog {
                iteration: iterations.len() as u32 + 1,
                frontiers2check: f2c,
                obs_defs,
                obs_ctxs,
                delta_control,
                kept_frontiers: kept,
                run_steps,
                wall_time: iter_started.elapsed(),
                cached: use_cache,
            });
            if !grew {
                break;
            }
        }

        Ok(SliceResult {
            slice,
            iterations,
            executions,
            total_time: started.elapsed(),
            mode: SliceMode::OndemandInter,
            criterion: resolved,
            pre_run_steps,
            corroboration_steps,
        })
    }

    /// Slice several criteria over the same input, sharing one counting
    /// pre-run. Per-criterion failures do not abort the batch.
    pub fn batch_slice(
        &self,
        input: &[i64],
        criteria: &[Criterion],
    ) -> Vec<Result<SliceResult, SliceError>> {
        if criteria.is_empty() {
            return Vec::new();
        }
        let mut mon = exec::AllCtxMonitor::new();
        let shared = exec::execute(&self.compiled, input, exec::StopMode::None, &mut mon);
        let (per_node, contexts, shared_steps) = match shared {
            Ok(run) => (mon.per_node, mon.contexts, run.steps),
            Err(e) => {
                return criteria
                    .iter()
                    .map(|_| Err(SliceError::Exec(e.clone())))
                    .collect()
            }
        };

        criteria
            .iter()
            .map(|criterion| {
                let occs = per_node.get(&criterion.node);
                let total = occs.map(|v| v.len() as u32).unwrap_or(0);
                let q = match criterion.occurrence {
                    OccurrenceSpec::Last => total,
                    OccurrenceSpec::Nth(q) => q,
                };
                if q == 0 || q > total {
                    return Err(SliceError::CriterionNeverExecuted(criterion.node));
                }
                let ctx_id = occs.expect("q bounded")[q as usize - 1];
                let resolved = ResolvedCriterion {
                    node: criterion.node,
                    occurrence: q,
                    ctx: contexts[ctx_id as usize].clone(),
                };
                self.slice_inter_resolved(input, resolved, shared_steps, Instant::now())
            })
            .collect()
    }
}

/// Convenience wrappers over a one-shot session.
pub fn slice_intra(
    program: &Program,
    input: &[i64],
    criterion: &Criterion,
) -> Result<SliceResult, SliceError> {
    SliceSession::new(program).slice_intra(input, criterion)
}

pub fn slice_inter(
    program: &Program,
    input: &[i64],
    criterion: &Criterion,
) -> Result<SliceResult, SliceError> {
    SliceSession::new(program).slice_inter(input, criterion)
}

pub fn batch_slice(
    program: &Program,
    input: &[i64],
    criteria: &[Criterion],
) -> Vec<Result<SliceResult, SliceError>> {
    SliceSession::new(program).batch_slice(input, criteria)
}

// ---------------------------------------------------------------------------
// Inline expansion
// ---------------------------------------------------------------------------

pub const DEFAULT_INLINE_BUDGET: u32 = 64;

#[derive(Debug, Clone)]
pub struct InlineResult {
    /// Call-free program equivalent to the original up to the criterion.
    pub program: Program,
    /// Inlined node → original node (call sites own their parameter copies,
    /// result bindings and residual traps).
    pub origin: BTreeMap<NodeId, NodeId>,
    /// Original main node → inlined node, for criterion translation.
    pub main_map: BTreeMap<NodeId, NodeId>,
}

/// Replace calls by expanded callee bodies, to the call depth the run
/// actually reaches before the criterion. Calls beyond that depth are
/// unreachable up to the criterion and become runtime traps.
pub fn inline_program(
    program: &Program,
    input: &[i64],
    criterion: &Criterion,
) -> Result<InlineResult, SliceError> {
    inline_program_with_budget(program, input, criterion, DEFAULT_INLINE_BUDGET)
}

struct MaxDepthMonitor {
    current: usize,
    max: usize,
}

impl exec::Monitor for MaxDepthMonitor {
    fn on_frame(&mut self, _frame_id: u64, _proc: u32) {
        self.current += 1;
        if self.current > self.max {
            self.max = self.current;
        }
    }

    fn on_frame_pop(&mut self) {
        self.current -= 1;
    }
}

pub fn inline_program_with_budget(
    program: &Program,
    input: &[i64],
    criterion: &Criterion,
    budget: u32,
) -> Result<InlineResult, SliceError> {
    let session = SliceSession::new(program);
    let (resolved, _) = session.resolve(input, criterion)?;

    let mut depth_mon = MaxDepthMonitor { current: 0, max: 0 };
    exec::execute(
        &session.compiled,
        input,
        exec::StopMode::HaltAt(resolved.stop()),
        &mut depth_mon,
    )?;
    let needed = depth_mon.max.saturating_sub(1) as u32; // expansions below main
    if needed > budget {
        return Err(SliceError::InlineBudgetExceeded { budget, needed });
    }

    let mut emitter = InlineEmitter {
        program,
        lines: Vec::new(),
        origin: Vec::new(),
        main_origin: Vec::new(),
        instances: 0,
    };
    for g in &program.globals {
        emitter.lines.push(format!("global {g};"));
    }
    for (a, len) in &program.arrays {
        emitter.lines.push(format!("array {a}[{len}];"));
    }
    emitter.lines.push("proc main() {".to_string());
    let main = &program.procedures[program.main_index()];
    emitter.emit_block(&main.body, None, needed, true)?;
    emitter.lines.push("}".to_string());

    let source = emitter.lines.join("\n");
    let inlined = crate::minilang::parse_program(&source)
        .map_err(|e| SliceError::InlineUnsupported(format!("inlined program invalid: {e}")))?;

    // nodes come out in textual order, matching the emitted origin list
    assert_eq!(inlined.node_count(), emitter.origin.len());
    let origin: BTreeMap<NodeId, NodeId> = inlined
        .nodes()
        .iter()
        .zip(emitter.origin.iter())
        .map(|(meta, orig)| (meta.id, *orig))
        .collect();
    let main_map: BTreeMap<NodeId, NodeId> = inlined
        .nodes()
        .iter()
        .zip(emitter.main_origin.iter())
        .filter_map(|(meta, orig)| orig.map(|o| (o, meta.id)))
        .collect();
    Ok(InlineResult {
        program: inlined,
        origin,
        main_map,
    })
}

struct InlineEmitter<'p> {
    program: &'p Program,
    lines: Vec<String>,
    /// Original node per emitted node, in textual order.
    origin: Vec<NodeId>,
    /// For emitted nodes that 1:1 represent a main statement, the original
    /// main node (used for criterion translation).
    main_origin: Vec<Option<NodeId>>,
    instances: u32,
}

impl<'p> InlineEmitter<'p> {
    fn push_node(&mut self, line: String, orig: NodeId, main_node: Option<NodeId>) {
        self.lines.push(line);
        self.origin.push(orig);
        self.main_origin.push(main_node);
    }

    fn push_plain(&mut self, line: String) {
        self.lines.push(line);
    }

    /// Emit a block. `prefix` rewrites callee-local names; `top` marks main's
    /// own statements for criterion translation.
    fn emit_block(
        &mut self,
        block: &[Stmt],
        prefix: Option<&str>,
        depth: u32,
        top: bool,
    ) -> Result<(), SliceError> {
        for stmt in block {
            self.emit_stmt(stmt, prefix, depth, top)?;
        }
        Ok(())
    }

    fn emit_stmt(
        &mut self,
        stmt: &Stmt,
        prefix: Option<&str>,
        depth: u32,
        top: bool,
    ) -> Result<(), SliceError> {
        let main_node = |node: NodeId| if top { Some(node) } else { None };
        match stmt {
            Stmt::Assign { node, target, expr } => {
                let line = format!(
                    "{} = {};",
                    self.rewrite_name(target, prefix),
                    self.rewrite_expr(expr, prefix)
                );
                self.push_node(line, *node, main_node(*node));
            }
            Stmt::Store {
                node,
                array,
                index,
                value,
            } => {
                let line = format!(
                    "{}[{}] = {};",
                    array,
                    self.rewrite_expr(index, prefix),
                    self.rewrite_expr(value, prefix)
                );
                self.push_node(line, *node, main_node(*node));
            }
            Stmt::Input { node, target } => {
                let line = format!("input {};", self.rewrite_name(target, prefix));
                self.push_node(line, *node, main_node(*node));
            }
            Stmt::Print { node, expr } => {
                let line = format!("print {};", self.rewrite_expr(expr, prefix));
                self.push_node(line, *node, main_node(*node));
            }
            Stmt::If {
                node,
                cond,
                then_block,
                else_block,
            } => {
                let line = format!("if ({}) {{", self.rewrite_expr(cond, prefix));
                self.push_node(line, *node, main_node(*node));
                self.emit_block(then_block, prefix, depth, top)?;
                if else_block.is_empty() {
                    self.push_plain("}".to_string());
                } else {
                    self.push_plain("} else {".to_string());
                    self.emit_block(else_block, prefix, depth, top)?;
                    self.push_plain("}".to_string());
                }
            }
            Stmt::While { node, cond, body } => {
                let line = format!("while ({}) {{", self.rewrite_expr(cond, prefix));
                self.push_node(line, *node, main_node(*node));
                self.emit_block(body, prefix, depth, top)?;
                self.push_plain("}".to_string());
            }
            Stmt::Call {
                node,
                callee,
                args,
                result,
            } => {
                if depth == 0 {
                    // unreachable up to the criterion: trap if ever executed
                    let target = match result {
                        Some(r) => self.rewrite_name(r, prefix),
                        None => format!("__trap{}", self.instances),
                    };
                    self.instances += 1;
                    self.push_node(format!("{target} = 1 / 0;"), *node, None);
                    return Ok(());
                }
                let instance = self.instances;
                self.instances += 1;
                let callee_index = self.program.procedure_index(callee).expect("validated");
                let callee_proc = &self.program.procedures[callee_index];
                let inner = format!("__i{instance}_");
                for (param, arg) in callee_proc.params.iter().zip(args.iter()) {
                    let line = format!("{inner}{param} = {};", self.rewrite_expr(arg, prefix));
                    self.push_node(line, *node, None);
                }
                let (body, ret) = split_tail_return(callee_proc)?;
                self.emit_block(body, Some(&inner), depth - 1, false)?;
                if let Some((ret_node, expr)) = ret {
                    let line = format!("{inner}ret = {};", self.rewrite_expr(expr, Some(&inner)));
                    self.push_node(line, ret_node, None);
                }
                if let Some(r) = result {
                    let line = format!("{} = {inner}ret;", self.rewrite_name(r, prefix));
                    self.push_node(line, *node, None);
                }
            }
            Stmt::Return { .. } => {
                return Err(SliceError::InlineUnsupported(
                    "return outside tail position".to_string(),
                ));
            }
        }
        Ok(())
    }

    fn rewrite_name(&self, name: &str, prefix: Option<&str>) -> String {
        match prefix {
            Some(p) if !self.program.is_global(name) => format!("{p}{name}"),
            _ => name.to_string(),
        }
    }

    fn rewrite_expr(&self, expr: &Expr, prefix: Option<&str>) -> String {
        match expr {
            Expr::Lit(v) => {
                if *v < 0 {
                    format!("({v})")
                } else {
                    v.to_string()
                }
            }
            Expr::Var(n) => self.rewrite_name(n, prefix),
            Expr::ArrayRead(a, i) => format!("{a}[{}]", self.rewrite_expr(i, prefix)),
            Expr::Binary(op, l, r) => format!(
                "({} {} {})",
                self.rewrite_expr(l, prefix),
                op.symbol(),
                self.rewrite_expr(r, prefix)
            ),
            Expr::Unary(op, e) => match op {
                crate::minilang::UnOp::Neg => format!("(-{})", self.rewrite_expr(e, prefix)),
                crate::minilang::UnOp::Not => format!("(!{})", self.rewrite_expr(e, prefix)),
            },
        }
    }
}

/// A procedure body whose only return is its final statement.
fn split_tail_return(proc: &Procedure) -> Result<(&[Stmt], Option<(NodeId, &Expr)>), SliceError> {
    match proc.body.split_last() {
        Some((Stmt::Return { node, expr }, rest)) => {
            if rest.iter().any(stmt_contains_return) {
                Err(SliceError::InlineUnsupported(format!(
                    "procedure {} returns outside tail position",
                    proc.name
                )))
            } else {
                Ok((rest, Some((*node, expr))))
            }
        }
        _ => {
            if proc.body.iter().any(stmt_contains_return) {
                Err(SliceError::InlineUnsupported(format!(
                    "procedure {} returns outside tail position",
                    proc.name
                )))
            } else {
                Ok((&proc.body, None))
            }
        }
    }
}

fn stmt_contains_return(s: &Stmt) -> bool {
    match s {
        Stmt::Return { .. } => true,
        Stmt::If {
            then_block,
            else_block,
            ..
        } => {
            then_block.iter().any(stmt_contains_return)
                || else_block.iter().any(stmt_contains_return)
        }
        Stmt::While { body, .. } => body.iter().any(stmt_contains_return),
        _ => false,
    }
}

/// All call-site nodes of a program.
pub fn call_sites(program: &Program) -> BTreeSet<NodeId> {
    cfgdep::call_graph(program)
        .values()
        .flat_map(|sites| sites.iter().map(|(n, _)| *n))
        .collect()
}
