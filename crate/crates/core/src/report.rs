//! JSON report schema for slice results. Field order and names are part of
//! the interface; timing lives only in `*_ms` fields so consumers can strip
//! it for byte-exact comparisons.

use serde::Serialize;
use serde_json::Value;

use crate::baselines::{self, CorroborationReport};
use crate::minilang::{NodeId, Program};
use crate::sda::StaticDeps;
use crate::slicer::{IterationLog, ResolvedCriterion, SliceResult};

#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub iteration: u32,
    pub frontiers2check: Vec<[String; 2]>,
    pub obs_defs: Vec<String>,
    pub obs_ctxs: Vec<String>,
    pub delta_control: Vec<String>,
    pub kept_frontiers: Vec<[String; 2]>,
    pub run_steps: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SliceReport {
    pub slice: Vec<String>,
    pub executions: u32,
    pub iterations: Vec<IterationReport>,
    pub total_ms: f64,
    pub mode: String,
}

/// A batch entry carries the criterion it answers.
#[derive(Debug, Clone, Serialize)]
pub struct BatchEntry {
    pub criterion: String,
    #[serde(flatten)]
    pub report: SliceReport,
}

pub fn criterion_label(program: &Program, resolved: &ResolvedCriterion) -> String {
    format!(
        "{}#{}",
        program.node_label(resolved.node),
        resolved.occurrence
    )
}

fn node_list(program: &Program, nodes: impl IntoIterator<Item = NodeId>) -> Vec<String> {
    nodes.into_iter().map(|n| program.node_label(n)).collect()
}

fn pair_list(
    program: &Program,
    pairs: impl IntoIterator<Item = (NodeId, NodeId)>,
) -> Vec<[String; 2]> {
    pairs
        .into_iter()
        .map(|(w, r)| [program.node_label(w), program.node_label(r)])
        .collect()
}

fn iteration_report(program: &Program, log: &IterationLog) -> IterationReport {
    IterationReport {
        iteration: log.iteration,
        frontiers2check: pair_list(program, log.frontiers2check.iter().copied()),
        obs_defs: node_list(program, log.obs_defs.iter().copied()),
        obs_ctxs: node_list(program, log.obs_ctxs.iter().copied()),
        delta_control: node_list(program, log.delta_control.iter().copied()),
        kept_frontiers: pair_list(program, log.kept_frontiers.iter().copied()),
        run_steps: log.run_steps,
        wall_ms: duration_ms(log.wall_time),
    }
}

pub fn duration_ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

pub fn slice_report(program: &Program, result: &SliceResult) -> SliceReport {
    SliceReport {
        slice: node_list(program, result.slice.iter().copied()),
        executions: result.executions,
        iterations: result
            .iterations
            .iter()
            .map(|l| iteration_report(program, l))
            .collect(),
        total_ms: duration_ms(result.total_time),
        mode: result.mode.as_str().to_string(),
    }
}

/// Upfront corroboration rendered in the same schema: the slice comes from
/// the offline closure over the exercised pairs, and the single run appears
/// as one iteration with the targeted pairs as its frontier set.
pub fn corroboration_report(
    program: &Program,
    deps: &StaticDeps,
    report: &CorroborationReport,
    targeted_pairs: impl IntoIterator<Item = (NodeId, NodeId)>,
) -> SliceReport {
    let slice = baselines::slice_from_corroborated(report, deps);
    SliceReport {
        slice: node_list(program, slice.iter().copied()),
        executions: 1,
        iterations: vec![IterationReport {
            iteration: 1,
            frontiers2check: pair_list(program, targeted_pairs),
            obs_defs: Vec::new(),
            obs_ctxs: Vec::new(),
            delta_control: Vec::new(),
            kept_frontiers: Vec::new(),
            run_steps: report.run_steps,
            wall_ms: duration_ms(report.wall_time),
        }],
        total_ms: duration_ms(report.wall_time),
        mode: report.mode.as_str().to_string(),
    }
}

/// Remove every `*_ms` field, recursively. Reports stripped this way are
/// byte-identical across repeated runs on identical inputs.
pub fn strip_timing(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("_ms"));
            for v in map.values_mut() {
                strip_timing(v);
            }
        }
        Value::Array(items) => {
            for v in items {
                strip_timing(v);
            }
        }
        _ => {}
    }
}
