//! Comparison engines: the execute-once trace-traversal slicer (also the
//! precision oracle) and the two upfront corroboration components.
//!
//! Execute-once records every memory reference of one run — tracing is
//! criterion-agnostic, so its cost follows execution size — and then closes
//! backward over the recorded pairs, windowed at the criterion occurrence.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use crate::exec::{self, Compiled, ContextualizedFrontier, DuPair, Occurrence, Trace};
use crate::minilang::{NodeId, Program};
use crate::sda::{self, StaticDeps};
use crate::slicer::{
    missing_control, Criterion, OccurrenceSpec, ResolvedCriterion, SliceError, SliceMode,
    SliceResult, SliceSession,
};

/// Result of one upfront corroboration run.
#[derive(Debug, Clone)]
pub struct CorroborationReport {
    /// Dependency pairs instrumented.
    pub targeted: usize,
    pub exercised: BTreeSet<ContextualizedFrontier>,
    pub run_steps: u64,
    pub wall_time: Duration,
    pub max_shadow: usize,
    pub criterion: ResolvedCriterion,
    pub mode: SliceMode,
}

/// Trace once, slice many: shares the recorded trace across criteria.
pub struct ExecuteOnceSession<'p> {
    pub session: &'p SliceSession<'p>,
    trace: Trace,
    trace_error: Option<exec::ExecError>,
    tracing_time: Duration,
    /// (writer node, writer ctx id, reader node, reader ctx id) pairs in the
    /// trace, deduplicated at node/context level, with earliest read event.
    node_pairs: Vec<(NodeId, u32, NodeId, u32, u64)>,
}

impl<'p> ExecuteOnceSession<'p> {
    pub fn new(session: &'p SliceSession<'p>, input: &[i64]) -> Self {
        let started = Instant::now();
        let (trace, trace_error) = exec::record_trace_full(&session.compiled, input);
        let tracing_time = started.elapsed();
        let mut dedup: HashMap<(NodeId, u32, NodeId, u32), u64> = HashMap::new();
        for du in &trace.du_pairs {
            let key = (du.writer.node, du.writer_ctx, du.reader.node, du.reader_ctx);
            let entry = dedup.entry(key).or_insert(du.read_event);
            if du.read_event < *entry {
                *entry = du.read_event;
            }
        }
        let mut node_pairs: Vec<(NodeId, u32, NodeId, u32, u64)> = dedup
            .into_iter()
            .map(|((w, wc, r, rc), ev)| (w, wc, r, rc, ev))
            .collect();
        node_pairs.sort();
        ExecuteOnceSession {
            session,
            trace,
            trace_error,
            tracing_time,
            node_pairs,
        }
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Resolve a criterion against the recorded occurrences.
    pub fn resolve(&self, criterion: &Criterion) -> Result<ResolvedCriterion, SliceError> {
        let total = self.trace.count_of(criterion.node);
        let q = match criterion.occurrence {
            OccurrenceSpec::Last => total,
            OccurrenceSpec::Nth(q) => q,
        };
        if q == 0 || q > total {
            // distinguish "program died before the criterion" from "never runs"
            if let Some(e) = &self.trace_error {
                return Err(SliceError::Exec(e.clone()));
            }
            return Err(SliceError::CriterionNeverExecuted(criterion.node));
        }
        let occ = Occurrence::new(criterion.node, q);
        if !self.trace.completions.contains_key(&occ) {
            if let Some(e) = &self.trace_error {
                return Err(SliceError::Exec(e.clone()));
            }
            return Err(SliceError::CriterionNeverExecuted(criterion.node));
        }
        let entry = self
            .trace
            .occurrences
            .iter()
            .find(|e| e.occ == occ)
            .expect("counted occurrence is recorded");
        Ok(ResolvedCriterion {
            node: criterion.node,
            occurrence: q,
            ctx: self.trace.context(entry.ctx).clone(),
        })
    }

    /// Backward closure over the recorded pairs: a writer joins when its
    /// reader node is in the slice and the reader's call-site context is
    /// fully inside; the writer's own context call sites join with it.
    pub fn slice(&self, criterion: &Criterion) -> Result<SliceResult, SliceError> {
        let started = Instant::now();
        let resolved = self.resolve(criterion)?;
        let limit = self.trace.completions[&resolved.stop()];

        let mut slice: BTreeSet<NodeId> = BTreeSet::new();
        slice.insert(resolved.node);
        slice.extend(resolved.ctx.iter().copied());
        slice.extend(missing_control(&slice, &self.session.deps));

        loop {
            let mut grew = false;
            for &(w, wctx, r, rctx, ev) in &self.node_pairs {
                if ev > limit || !slice.contains(&r) {
                    continue;
                }
                if !self.trace.context(rctx).is_subset(&slice) {
                    continue;
                }
                if slice.insert(w) {
                    grew = true;
                }
                for site in self.trace.context(wctx) {
                    if slice.insert(*site) {
                        grew = true;
                    }
                }
            }
            let ctl = missing_control(&slice, &self.session.deps);
            if !ctl.is_empty() {
                slice.extend(ctl);
                grew = true;
            }
            if !grew {
                break;
            }
        }

        Ok(SliceResult {
            slice,
            iterations: Vec::new(),
            executions: 1,
            total_time: self.tracing_time + started.elapsed(),
            mode: SliceMode::ExecuteOnce,
            criterion: resolved,
            pre_run_steps: 0,
            corroboration_steps: self.trace.steps,
        })
    }

    /// Korel-Laski-style occurrence closure with the identity relation
    /// re-enabled: earlier occurrences of included occurrences join the set.
    /// Study variant only; it is excluded from equivalence checks.
    pub fn slice_with_identity(&self, criterion: &Criterion) -> Result<SliceResult, SliceError> {
        let started = Instant::now();
        let resolved = self.resolve(criterion)?;
        let limit = self.trace.completions[&resolved.stop()];

        // index pairs by reader occurrence
        let mut by_reader: HashMap<Occurrence, Vec<&DuPair>> = HashMap::new();
        for du in &self.trace.du_pairs {
            if du.read_event <= limit {
                by_reader.entry(du.reader).or_default().push(du);
            }
        }
        let position: HashMap<Occurrence, usize> = self
            .trace
            .occurrences
            .iter()
            .enumerate()
            .map(|(i, e)| (e.occ, i))
            .collect();

        let mut relevant: BTreeSet<Occurrence> = BTreeSet::new();
        let mut work = vec![resolved.stop()];
        while let Some(o) = work.pop() {
            if !relevant.insert(o) {
                continue;
            }
            if let Some(pairs) = by_reader.get(&o) {
                for du in pairs {
                    work.push(du.writer);
                }
            }
            // identity: all earlier occurrences of the same node
            for q in 1..o.count {
                work.push(Occurrence::new(o.node, q));
            }
            // dynamic control: last occurrence of the controlling node in the
            // same activation
            if let (Some(&pos), controls) = (
                position.get(&o),
                self.session.deps.control.deps_of(o.node),
            ) {
                let frame = self.trace.occurrences[pos].frame;
                for &c in controls {
                    let prior = self.trace.occurrences[..pos]
                        .iter()
                        .rev()
                        .find(|e| e.occ.node == c && e.frame == frame);
                    if let Some(e) = prior {
                        work.push(e.occ);
                    }
                }
            }
        }

        let mut slice: BTreeSet<NodeId> = relevant.iter().map(|o| o.node).collect();
        slice.insert(resolved.node);
        // call-site closure over contexts of relevant occurrences
        loop {
            let mut grew = false;
            for o in &relevant {
                if let Some(&pos) = position.get(o) {
                    for site in self.trace.context(self.trace.occurrences[pos].ctx) {
                        if slice.insert(*site) {
                            grew = true;
                        }
                    }
                }
            }
            let ctl = missing_control(&slice, &self.session.deps);
            if !ctl.is_empty() {
                slice.extend(ctl);
                grew = true;
            }
            if !grew {
                break;
            }
        }

        Ok(SliceResult {
            slice,
            iterations: Vec::new(),
            executions: 1,
            total_time: self.tracing_time + started.elapsed(),
            mode: SliceMode::ExecuteOnce,
            criterion: resolved,
            pre_run_steps: 0,
            corroboration_steps: self.trace.steps,
        })
    }
}

/// Trace one full run and slice backward from the criterion.
pub fn slice_execute_once(
    program: &Program,
    input: &[i64],
    criterion: &Criterion,
) -> Result<SliceResult, SliceError> {
    let session = SliceSession::new(program);
    ExecuteOnceSession::new(&session, input).slice(criterion)
}

/// One corroboration run targeting all static data dependencies.
pub fn corroborate_upfront_all(
    program: &Program,
    input: &[i64],
    criterion: &Criterion,
) -> Result<CorroborationReport, SliceError> {
    let session = SliceSession::new(program);
    upfront_all_session(&session, input, criterion)
}

pub fn upfront_all_session(
    session: &SliceSession,
    input: &[i64],
    criterion: &Criterion,
) -> Result<CorroborationReport, SliceError> {
    let (resolved, _) = session.resolve(input, criterion)?;
    run_upfront(
        &session.compiled,
        input,
        session.deps.data.clone(),
        resolved,
        SliceMode::UpfrontAll,
    )
}

/// One corroboration run restricted to pairs inside the criterion's static
/// slice.
pub fn corroborate_upfront_static_slice(
    program: &Program,
    input: &[i64],
    criterion: &Criterion,
) -> Result<CorroborationReport, SliceError> {
    let session = SliceSession::new(program);
    upfront_static_slice_session(&session, input, criterion)
}

pub fn upfront_static_slice_session(
    session: &SliceSession,
    input: &[i64],
    criterion: &Criterion,
) -> Result<CorroborationReport, SliceError> {
    let (resolved, _) = session.resolve(input, criterion)?;
    let in_slice = sda::static_slice(session.program, &session.deps, resolved.node);
    let f2c: BTreeSet<(NodeId, NodeId)> = session
        .deps
        .data
        .iter()
        .filter(|(w, r)| in_slice.contains(w) && in_slice.contains(r))
        .copied()
        .collect();
    run_upfront(
        &session.compiled,
        input,
        f2c,
        resolved,
        SliceMode::UpfrontSlice,
    )
}

fn run_upfront(
    compiled: &Compiled,
    input: &[i64],
    f2c: BTreeSet<(NodeId, NodeId)>,
    resolved: ResolvedCriterion,
    mode: SliceMode,
) -> Result<CorroborationReport, SliceError> {
    let started = Instant::now();
    let outcome = exec::corroborate_compiled(compiled, input, &f2c, resolved.stop())?;
    let wall_time = started.elapsed();
    Ok(CorroborationReport {
        targeted: f2c.len(),
        exercised: outcome.exercised,
        run_steps: outcome.steps,
        wall_time,
        max_shadow: outcome.max_shadow,
        criterion: resolved,
        mode,
    })
}

/// Offline closure over a corroboration report's exercised pairs, using the
/// same admission rule as the inter-procedural slicer. No further runs; used
/// for cross-validation of the corroboration engines.
pub fn slice_from_corroborated(report: &CorroborationReport, deps: &StaticDeps) -> BTreeSet<NodeId> {
    let mut slice: BTreeSet<NodeId> = BTreeSet::new();
    slice.insert(report.criterion.node);
    slice.extend(report.criterion.ctx.iter().copied());
    slice.extend(missing_control(&slice, deps));
    loop {
        let mut grew = false;
        for cf in &report.exercised {
            if !slice.contains(&cf.reader) || !cf.reader_ctx.is_subset(&slice) {
                continue;
            }
            if slice.insert(cf.writer) {
                grew = true;
            }
            for &site in &cf.writer_ctx {
                if slice.insert(site) {
                    grew = true;
                }
            }
        }
        let ctl = missing_control(&slice, deps);
        if !ctl.is_empty() {
            slice.extend(ctl);
            grew = true;
        }
        if !grew {
            break;
        }
    }
    slice
}

/// Memory-shape summary of a trace, for the scale-argument assertions.
pub fn trace_footprint(trace: &Trace) -> (usize, usize) {
    let distinct_addresses: BTreeSet<_> = trace.du_pairs.iter().map(|d| d.addr).collect();
    (trace.occurrences.len(), distinct_addresses.len())
}

/// Map a slice to `proc:line` labels, for diffs and reports.
pub fn labels(program: &Program, nodes: &BTreeSet<NodeId>) -> Vec<String> {
    nodes.iter().map(|n| program.node_label(*n)).collect()
}

/// Convenience: node-set difference in both directions.
pub fn slice_diff(
    a: &BTreeSet<NodeId>,
    b: &BTreeSet<NodeId>,
) -> (BTreeSet<NodeId>, BTreeSet<NodeId>) {
    (
        a.difference(b).copied().collect(),
        b.difference(a).copied().collect(),
    )
}
