//! Benchmark harness: program-family generators, metric collection, rank
//! correlation, and CSV/JSON report emission.

use std::io::Write;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, ExecuteOnceSession};
use crate::exec;
use crate::minilang::{parse_program, NodeId, NodeKind, Program};
use crate::slicer::{Criterion, OccurrenceSpec, SliceError, SliceMode, SliceSession};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("generator failed for seed {seed}: {reason}")]
    Generator { seed: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    SortLoop,
    TwoPhase,
    DoubleCall,
    Recursive,
    RandomCorpus,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::SortLoop => "sort-loop",
            Family::TwoPhase => "two-phase",
            Family::DoubleCall => "double-call",
            Family::Recursive => "recursive",
            Family::RandomCorpus => "random-corpus",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub family: Family,
    pub sizes: Vec<u32>,
    pub seeds: Vec<u64>,
    pub modes: Vec<String>,
    pub trials: u32,
    #[serde(default)]
    pub parallel: bool,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.sizes.is_empty() {
            return Err(BenchError::InvalidConfig("sizes must be non-empty".into()));
        }
        if self.trials < 1 {
            return Err(BenchError::InvalidConfig("trials must be >= 1".into()));
        }
        for m in &self.modes {
            if SliceMode::parse(m).is_none() {
                return Err(BenchError::InvalidConfig(format!("unknown mode {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricRecord {
    pub family: String,
    pub size: u32,
    pub seed: u64,
    pub mode: String,
    pub criterion: String,
    pub slice_size: usize,
    pub executions: u32,
    pub frontiers_checked: usize,
    /// Execution size of the subject run (full-run interpreter steps).
    pub steps: u64,
    pub wall_ms: f64,
    pub status: String,
}

/// A generated benchmark subject: program, its input, and default criteria.
#[derive(Debug, Clone)]
pub struct Generated {
    pub program: Program,
    pub input: Vec<i64>,
    pub criteria: Vec<Criterion>,
}

pub fn criterion_spec_label(program: &Program, c: &Criterion) -> String {
    match c.occurrence {
        OccurrenceSpec::Nth(q) => format!("{}#{}", program.node_label(c.node), q),
        OccurrenceSpec::Last => format!("{}#last", program.node_label(c.node)),
    }
}

// ---------------------------------------------------------------------------
// Program families
// ---------------------------------------------------------------------------

/// Deterministic program for (family, size, seed).
pub fn gen_program(family: Family, size: u32, seed: u64) -> Result<Generated, BenchError> {
    match family {
        Family::TwoPhase => Ok(two_phase(size)),
        Family::SortLoop => Ok(sort_loop(size, seed)),
        Family::DoubleCall => Ok(double_call(size)),
        Family::Recursive => Ok(recursive(size)),
        Family::RandomCorpus => random_program(size, seed),
    }
}

const TWO_PHASE_SRC: &str = "\
array buf[16];
proc main() {
  input n;
  w = 0;
  k = 0;
  while (k < 48) {
    w = w + k;
    k = k + 1;
  }
  a = 3;
  b = 4;
  print a + b;
  i = 0;
  while (i < n) {
    buf[i % 16] = (buf[(i + 3) % 16] + buf[(i + 7) % 16] + i) % 1009;
    i = i + 1;
  }
  c = 5;
  print c;
}
";

const TWO_PHASE_ENTANGLED_SRC: &str = "\
array buf[16];
proc main() {
  input n;
  w = 0;
  k = 0;
  while (k < 48) {
    w = w + k;
    k = k + 1;
  }
  a = 3;
  b = 4;
  print a + b;
  i = 0;
  while (i < n) {
    buf[i % 16] = (buf[(i + 3) % 16] + buf[(i + 7) % 16] + i) % 1009;
    i = i + 1;
  }
  if (n < 0) {
    c = buf[0] + i + w + a + b + n;
  }
  c = 5;
  print c;
}
";

fn two_phase_from(src: &str, size: u32) -> Generated {
    let program = parse_program(src).expect("two-phase template parses");
    // segment cost: 3 occurrences per iteration (condition, store, increment)
    let n = (size / 3).max(1) as i64;
    let prints: Vec<NodeId> = program
        .nodes()
        .iter()
        .filter(|m| m.kind == NodeKind::Print)
        .map(|m| m.id)
        .collect();
    let criteria = vec![
        Criterion::nth(prints[0], 1),         // early: before the segment
        Criterion::nth(*prints.last().unwrap(), 1), // late: after the segment
    ];
    Generated {
        program,
        input: vec![n],
        criteria,
    }
}

/// Two-phase subject: a tiny relevant computation, then an irrelevant
/// write/read-heavy segment whose steps scale with `size`. The early
/// criterion sits before the segment, the late one after it; both have
/// size-independent dynamic slices.
pub fn two_phase(size: u32) -> Generated {
    two_phase_from(TWO_PHASE_SRC, size)
}

/// Variant whose dead branch entangles the late criterion with the whole
/// program statically (static slice > 90% of nodes) while the dynamic slice
/// is unchanged.
pub fn two_phase_entangled(size: u32) -> Generated {
    two_phase_from(TWO_PHASE_ENTANGLED_SRC, size)
}

/// Insertion sort over `size` input elements, followed by a straggler chain
/// that guarantees ten distinct slice sizes. Criteria: every executed line.
pub fn sort_loop(size: u32, seed: u64) -> Generated {
    let size = size.clamp(2, 64);
    let mut src = String::from("array a[64];\nproc main() {\n");
    src.push_str("  input n;\n  i = 0;\n");
    src.push_str("  while (i < n) {\n    input t;\n    a[i] = t;\n    i = i + 1;\n  }\n");
    src.push_str("  i = 1;\n");
    src.push_str("  while (i < n) {\n");
    src.push_str("    key = a[i];\n    j = i - 1;\n    go = 1;\n");
    src.push_str("    while (go > 0) {\n");
    src.push_str("      if (j >= 0) {\n");
    src.push_str("        if (a[j] > key) {\n");
    src.push_str("          a[j + 1] = a[j];\n          j = j - 1;\n");
    src.push_str("        } else {\n          go = 0;\n        }\n");
    src.push_str("      } else {\n        go = 0;\n      }\n");
    src.push_str("    }\n");
    src.push_str("    a[j + 1] = key;\n    i = i + 1;\n  }\n");
    src.push_str("  s = a[0];\n");
    for k in 1..=9 {
        if k == 1 {
            src.push_str("  s1 = s + 1;\n");
        } else {
            src.push_str(&format!("  s{k} = s{} + 1;\n", k - 1));
        }
    }
    src.push_str("  print s9;\n}\n");
    let program = parse_program(&src).expect("sort template parses");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input = vec![size as i64];
    for _ in 0..size {
        input.push(rng.gen_range(-50..50));
    }
    let criteria = executed_line_criteria(&program, &input);
    Generated {
        program,
        input,
        criteria,
    }
}

/// Two calls to a `size`-node callee chain; only the first call feeds the
/// criterion. Size 1 reproduces the canonical two-call shape.
pub fn double_call(size: u32) -> Generated {
    let size = size.max(1);
    let mut src = String::from("proc inc(v) {\n");
    for k in 1..=size {
        if k == 1 {
            src.push_str("  r1 = v + 1;\n");
        } else {
            src.push_str(&format!("  r{k} = r{} + 1;\n", k - 1));
        }
    }
    src.push_str(&format!("  return r{size};\n}}\n"));
    src.push_str("proc main() {\n  x = 1;\n  y = call inc(x);\n  z = call inc(7);\n  print y;\n}\n");
    let program = parse_program(&src).expect("double-call template parses");
    let criterion = Criterion::nth(
        program.node_by_label("main", 4).expect("print y"),
        1,
    );
    Generated {
        program,
        input: Vec::new(),
        criteria: vec![criterion],
    }
}

/// Bounded recursion accumulating into the result; depth = `size`.
pub fn recursive(size: u32) -> Generated {
    let src = "\
proc rec(n) {
  if (n > 0) {
    t = call rec(n - 1);
    s = t + n;
  } else {
    s = 0;
  }
  return s;
}
proc main() {
  input d;
  x = call rec(d);
  print x;
}
";
    let program = parse_program(src).expect("recursive template parses");
    let criterion = Criterion::nth(
        program.node_by_label("main", 3).expect("print x"),
        1,
    );
    Generated {
        program,
        input: vec![size as i64],
        criteria: vec![criterion],
    }
}

/// Every node executed on this input, as last-occurrence criteria.
pub fn executed_line_criteria(program: &Program, input: &[i64]) -> Vec<Criterion> {
    let compiled = exec::Compiled::new(program);
    let run = exec::count_all(&compiled, input).expect("subject runs cleanly");
    program
        .nodes()
        .iter()
        .filter(|m| run.counts[m.id.index()] > 0)
        .map(|m| Criterion::last(m.id))
        .collect()
}

// ---------------------------------------------------------------------------
// Random corpus generator
// ---------------------------------------------------------------------------

const STEP_BUDGET: u64 = 10_000;

struct GenState {
    rng: ChaCha8Rng,
    lines: Vec<String>,
    loop_counter: u32,
    input_count: u32,
    globals: Vec<String>,
    arrays: Vec<(String, i64)>,
}

impl GenState {
    fn pick<'a>(&mut self, items: &'a [String]) -> &'a str {
        &items[self.rng.gen_range(0..items.len())]
    }
}

/// Deterministic random program: up to 6 procedures, bounded recursion,
/// loops with generated bounds so every run terminates within the step
/// budget. Criteria are every executed line.
pub fn random_program(size: u32, seed: u64) -> Result<Generated, BenchError> {
    for attempt in 0..64u64 {
        let sub_seed = seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(attempt.wrapping_mul(0x2545f4914f6cdd1d));
        if let Some(generated) = try_random_program(size, sub_seed) {
            return Ok(generated);
        }
    }
    Err(BenchError::Generator {
        seed,
        reason: "no admissible program within retry budget".into(),
    })
}

fn try_random_program(size: u32, seed: u64) -> Option<Generated> {
    let mut st = GenState {
        rng: ChaCha8Rng::seed_from_u64(seed),
        lines: Vec::new(),
        loop_counter: 0,
        input_count: 0,
        globals: Vec::new(),
        arrays: Vec::new(),
    };
    let size = size.clamp(1, 40);

    let n_globals = st.rng.gen_range(0..=2);
    for i in 0..n_globals {
        st.globals.push(format!("g{i}"));
        st.lines.push(format!("global g{i};"));
    }
    let n_arrays = st.rng.gen_range(0..=2);
    for i in 0..n_arrays {
        let len = st.rng.gen_range(3..=8);
        st.arrays.push((format!("arr{i}"), len));
        st.lines.push(format!("array arr{i}[{len}];"));
    }

    let n_helpers = st.rng.gen_range(0..=5usize).min(1 + size as usize / 6);
    let helper_names: Vec<String> = (0..n_helpers).map(|i| format!("p{i}")).collect();
    for i in 0..n_helpers {
        // helper i may call helpers with larger indices, or itself recursively
        let callees: Vec<String> = helper_names[i + 1..].to_vec();
        let recursive = st.rng.gen_bool(0.3);
        emit_helper(&mut st, &helper_names[i], &callees, recursive, size);
    }
    emit_main(&mut st, &helper_names, size);

    let source = st.lines.join("\n");
    let program = parse_program(&source).ok()?;

    let mut input = Vec::with_capacity(512);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    for _ in 0..512 {
        input.push(rng.gen_range(-20..20));
    }

    let compiled = exec::Compiled::new(&program);
    let run = exec::count_all(&compiled, &input).ok()?;
    if run.steps == 0 || run.steps > STEP_BUDGET {
        return None;
    }
    let criteria: Vec<Criterion> = program
        .nodes()
        .iter()
        .filter(|m| run.counts[m.id.index()] > 0)
        .map(|m| Criterion::last(m.id))
        .collect();
    if criteria.is_empty() {
        return None;
    }
    Some(Generated {
        program,
        input,
        criteria,
    })
}

fn emit_helper(st: &mut GenState, name: &str, callees: &[String], recursive: bool, size: u32) {
    let n_params = st.rng.gen_range(1..=3);
    let params: Vec<String> = (0..n_params).map(|i| format!("a{i}")).collect();
    st.lines.push(format!("proc {name}({}) {{", params.join(", ")));
    let mut vars: Vec<String> = params.clone();
    vars.extend(st.globals.iter().cloned());

    if recursive {
        // bounded self-recursion on a strictly decreasing first argument
        let arg_rest: Vec<String> = params[1..]
            .iter()
            .map(|p| p.clone())
            .chain(std::iter::repeat("1".to_string()))
            .take(n_params - 1)
            .collect();
        let mut call = format!("t0 = call {name}(a0 - 1");
        for a in &arg_rest {
            call.push_str(&format!(", {a}"));
        }
        call.push_str(");");
        st.lines.push("  if (a0 > 0) {".to_string());
        st.lines.push(format!("    {call}"));
        st.lines.push("  } else {".to_string());
        st.lines.push("    t0 = 0;".to_string());
        st.lines.push("  }".to_string());
        vars.push("t0".to_string());
    }

    let budget = st.rng.gen_range(1..=(2 + size / 8).max(2));
    emit_block(st, &mut vars, callees, 1, budget, 2);
    let ret = gen_expr(st, &vars, 2);
    st.lines.push(format!("  return ({ret}) % 1009;"));
    st.lines.push("}".to_string());
}

fn emit_main(st: &mut GenState, callees: &[String], size: u32) {
    st.lines.push("proc main() {".to_string());
    let mut vars: Vec<String> = st.globals.clone();
    // a couple of guaranteed sources
    st.lines.push("  v0 = 1;".to_string());
    vars.push("v0".to_string());
    if st.input_count < 24 {
        st.lines.push("  input v1;".to_string());
        st.input_count += 1;
        vars.push("v1".to_string());
    }
    let budget = (3 + size / 2).max(4);
    emit_block(st, &mut vars, callees, 1, budget, 3);
    let e = gen_expr(st, &vars, 2);
    st.lines.push(format!("  print {e};"));
    st.lines.push("}".to_string());
}

/// Emit up to `budget` statements at `indent`, tracking assigned variables.
fn emit_block(
    st: &mut GenState,
    vars: &mut Vec<String>,
    callees: &[String],
    indent: usize,
    budget: u32,
    depth_left: u32,
) {
    let pad = "  ".repeat(indent);
    let count = st.rng.gen_range(1..=budget.max(1));
    for _ in 0..count {
        let roll: f64 = st.rng.gen();
        if roll < 0.40 {
            let target = gen_target(st, vars);
            let e = gen_expr(st, vars, 2);
            st.lines.push(format!("{pad}{target} = ({e}) % 1009;"));
            if !vars.contains(&target) {
                vars.push(target);
            }
        } else if roll < 0.52 && !st.arrays.is_empty() {
            let (arr, len) = st.arrays[st.rng.gen_range(0..st.arrays.len())].clone();
            let idx = gen_expr(st, vars, 1);
            let val = gen_expr(st, vars, 2);
            st.lines.push(format!(
                "{pad}{arr}[(({idx}) % {len} + {len}) % {len}] = ({val}) % 1009;"
            ));
        } else if roll < 0.64 && depth_left > 0 {
            let cond = gen_cond(st, vars);
            st.lines.push(format!("{pad}if ({cond}) {{"));
            let mut inner = vars.clone();
            emit_block(st, &mut inner, callees, indent + 1, budget / 2 + 1, depth_left - 1);
            if st.rng.gen_bool(0.5) {
                st.lines.push(format!("{pad}}} else {{"));
                let mut inner = vars.clone();
                emit_block(st, &mut inner, callees, indent + 1, budget / 2 + 1, depth_left - 1);
            }
            st.lines.push(format!("{pad}}}"));
        } else if roll < 0.74 && depth_left > 0 {
            let lv = format!("l{}", st.loop_counter);
            st.loop_counter += 1;
            let bound = st.rng.gen_range(1..=5);
            st.lines.push(format!("{pad}{lv} = 0;"));
            st.lines.push(format!("{pad}while ({lv} < {bound}) {{"));
            let mut inner = vars.clone();
            inner.push(lv.clone());
            emit_block(st, &mut inner, callees, indent + 1, budget / 2 + 1, depth_left - 1);
            st.lines.push(format!("{pad}  {lv} = {lv} + 1;"));
            st.lines.push(format!("{pad}}}"));
            vars.push(lv);
        } else if roll < 0.86 && !callees.is_empty() {
            let callee = st.pick(callees).to_string();
            let arity = callee_arity(st, &callee);
            let mut args = Vec::new();
            // recursion depth passed through the first argument stays small
            args.push(format!("{}", st.rng.gen_range(0..=4)));
            for _ in 1..arity {
                args.push(gen_expr(st, vars, 1));
            }
            if st.rng.gen_bool(0.7) {
                let target = gen_target(st, vars);
                st.lines.push(format!(
                    "{pad}{target} = call {callee}({});",
                    args.join(", ")
                ));
                if !vars.contains(&target) {
                    vars.push(target);
                }
            } else {
                st.lines.push(format!("{pad}call {callee}({});", args.join(", ")));
            }
        } else if roll < 0.92 && indent <= 2 && st.input_count < 24 {
            let target = gen_target(st, vars);
            st.lines.push(format!("{pad}input {target};"));
            st.input_count += 1;
            if !vars.contains(&target) {
                vars.push(target);
            }
        } else {
            let e = gen_expr(st, vars, 1);
            st.lines.push(format!("{pad}print {e};"));
        }
    }
}

fn callee_arity(st: &GenState, callee: &str) -> usize {
    // parameters are always a0..a{n-1}; recover n from the emitted header
    st.lines
        .iter()
        .find(|l| l.starts_with(&format!("proc {callee}(")))
        .map(|l| l.matches(", ").count() + 1)
        .unwrap_or(1)
}

fn gen_target(st: &mut GenState, vars: &[String]) -> String {
    if !st.globals.is_empty() && st.rng.gen_bool(0.3) {
        return st.globals[st.rng.gen_range(0..st.globals.len())].clone();
    }
    if !vars.is_empty() && st.rng.gen_bool(0.5) {
        let v = vars[st.rng.gen_range(0..vars.len())].clone();
        if !st.arrays.iter().any(|(a, _)| *a == v) {
            return v;
        }
    }
    format!("x{}", st.rng.gen_range(0..6))
}

fn gen_expr(st: &mut GenState, vars: &[String], depth: u32) -> String {
    if depth == 0 || st.rng.gen_bool(0.35) {
        return gen_leaf(st, vars);
    }
    let l = gen_expr(st, vars, depth - 1);
    let r = gen_expr(st, vars, depth - 1);
    let op = ["+", "-", "*"][st.rng.gen_range(0..3)];
    format!("({l} {op} {r})")
}

fn gen_leaf(st: &mut GenState, vars: &[String]) -> String {
    let roll: f64 = st.rng.gen();
    if roll < 0.5 && !vars.is_empty() {
        let v = &vars[st.rng.gen_range(0..vars.len())];
        return v.clone();
    }
    if roll < 0.62 && !st.arrays.is_empty() && !vars.is_empty() {
        let (arr, len) = st.arrays[st.rng.gen_range(0..st.arrays.len())].clone();
        let v = &vars[st.rng.gen_range(0..vars.len())];
        return format!("{arr}[(({v}) % {len} + {len}) % {len}]");
    }
    format!("{}", st.rng.gen_range(-9..=9))
}

fn gen_cond(st: &mut GenState, vars: &[String]) -> String {
    let l = gen_expr(st, vars, 1);
    let r = gen_expr(st, vars, 1);
    let op = ["<", "<=", ">", ">=", "==", "!="][st.rng.gen_range(0..6)];
    format!("{l} {op} {r}")
}

// ---------------------------------------------------------------------------
// Spearman rank correlation
// ---------------------------------------------------------------------------

/// Spearman rank correlation with mean-rank tie handling.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, BenchError> {
    if xs.len() != ys.len() {
        return Err(BenchError::DegenerateInput("length mismatch"));
    }
    if xs.len() < 2 {
        return Err(BenchError::DegenerateInput("need at least two points"));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..xs.len() {
        let dx = rx[i] - mean;
        let dy = ry[i] - mean;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(BenchError::DegenerateInput("constant input"));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = mean_rank;
        }
        i = j + 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Suite runner
// ---------------------------------------------------------------------------

/// Run every (size, seed, criterion, mode) combination. Wall times are the
/// mean of `trials` runs; failures are recorded per record, not raised.
pub fn run_suite(config: &BenchConfig) -> Result<Vec<MetricRecord>, BenchError> {
    config.validate()?;
    let mut subjects = Vec::new();
    for &size in &config.sizes {
        for &seed in &config.seeds {
            subjects.push((size, seed));
        }
    }

    let mut records = if config.parallel {
        run_subjects_parallel(config, &subjects)?
    } else {
        let mut out = Vec::new();
        for &(size, seed) in &subjects {
            out.extend(run_subject(config, size, seed)?);
        }
        out
    };
    sort_records(&mut records);
    Ok(records)
}

fn run_subjects_parallel(
    config: &BenchConfig,
    subjects: &[(u32, u64)],
) -> Result<Vec<MetricRecord>, BenchError> {
    let mut records = Vec::new();
    let results: Vec<Result<Vec<MetricRecord>, BenchError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = subjects
            .iter()
            .map(|&(size, seed)| scope.spawn(move || run_subject(config, size, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("bench thread panicked"))
            .collect()
    });
    for r in results {
        records.extend(r?);
    }
    Ok(records)
}

fn run_subject(config: &BenchConfig, size: u32, seed: u64) -> Result<Vec<MetricRecord>, BenchError> {
    let generated = gen_program(config.family, size, seed)?;
    let session = SliceSession::new(&generated.program);
    let full_steps = exec::count_all(&session.compiled, &generated.input)
        .map(|r| r.steps)
        .unwrap_or(0);

    let mut records = Vec::new();
    for criterion in &generated.criteria {
        for mode_name in &config.modes {
            let mode = SliceMode::parse(mode_name).expect("validated");
            records.push(measure(
                config,
                &session,
                &generated,
                size,
                seed,
                full_steps,
                criterion,
                mode,
            ));
        }
    }
    Ok(records)
}

struct Measured {
    slice_size: usize,
    executions: u32,
    frontiers_checked: usize,
    wall: Duration,
    status: String,
}

fn measure_once(session: &SliceSession, input: &[i64], criterion: &Criterion, mode: SliceMode) -> Measured {
    let fail = |e: &SliceError| Measured {
        slice_size: 0,
        executions: 0,
        frontiers_checked: 0,
        wall: Duration::ZERO,
        status: status_of(e),
    };
    match mode {
        SliceMode::OndemandInter => match session.slice_inter(input, criterion) {
            Ok(r) => Measured {
                slice_size: r.slice.len(),
                executions: r.executions,
                frontiers_checked: r.frontiers_checked(),
                wall: r.total_time,
                status: "ok".into(),
            },
            Err(e) => fail(&e),
        },
        SliceMode::OndemandIntra => match session.slice_intra(input, criterion) {
            Ok(r) => Measured {
                slice_size: r.slice.len(),
                executions: r.executions,
                frontiers_checked: r.frontiers_checked(),
                wall: r.total_time,
                status: "ok".into(),
            },
            Err(e) => fail(&e),
        },
        SliceMode::ExecuteOnce => {
            let eo = ExecuteOnceSession::new(session, input);
            match eo.slice(criterion) {
                Ok(r) => Measured {
                    slice_size: r.slice.len(),
                    executions: 1,
                    frontiers_checked: 0,
                    wall: r.total_time,
                    status: "ok".into(),
                },
                Err(e) => fail(&e),
            }
        }
        SliceMode::UpfrontAll => match baselines::upfront_all_session(session, input, criterion) {
            Ok(rep) => Measured {
                slice_size: baselines::slice_from_corroborated(&rep, &session.deps).len(),
                executions: 1,
                frontiers_checked: rep.targeted,
                wall: rep.wall_time,
                status: "ok".into(),
            },
            Err(e) => fail(&e),
        },
        SliceMode::UpfrontSlice => {
            match baselines::upfront_static_slice_session(session, input, criterion) {
                Ok(rep) => Measured {
                    slice_size: baselines::slice_from_corroborated(&rep, &session.deps).len(),
                    executions: 1,
                    frontiers_checked: rep.targeted,
                    wall: rep.wall_time,
                    status: "ok".into(),
                },
                Err(e) => fail(&e),
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn measure(
    config: &BenchConfig,
    session: &SliceSession,
    generated: &Generated,
    size: u32,
    seed: u64,
    full_steps: u64,
    criterion: &Criterion,
    mode: SliceMode,
) -> MetricRecord {
    let first = measure_once(session, &generated.input, criterion, mode);
    let mut total_wall = first.wall;
    for _ in 1..config.trials {
        total_wall += measure_once(session, &generated.input, criterion, mode).wall;
    }
    let mean_wall = total_wall.as_secs_f64() * 1000.0 / config.trials as f64;
    MetricRecord {
        family: config.family.as_str().to_string(),
        size,
        seed,
        mode: mode.as_str().to_string(),
        criterion: criterion_spec_label(&generated.program, criterion),
        slice_size: first.slice_size,
        executions: first.executions,
        frontiers_checked: first.frontiers_checked,
        steps: full_steps,
        wall_ms: mean_wall,
        status: first.status,
    }
}

fn status_of(e: &SliceError) -> String {
    match e {
        SliceError::CriterionNeverExecuted(_) => "criterion-never-executed".into(),
        SliceError::CallsNotSupported => "calls-not-supported".into(),
        SliceError::Exec(exec::ExecError::Runtime { kind, .. }) => kind.as_str().into(),
        SliceError::Exec(_) => "execution-error".into(),
        SliceError::InlineBudgetExceeded { .. } => "inline-budget-exceeded".into(),
        SliceError::InlineUnsupported(_) => "inline-unsupported".into(),
    }
}

fn sort_records(records: &mut [MetricRecord]) {
    records.sort_by(|a, b| {
        (&a.family, a.size, a.seed, &a.mode, &a.criterion).cmp(&(
            &b.family, b.size, b.seed, &b.mode, &b.criterion,
        ))
    });
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const CSV_HEADER: &str =
    "family,size,seed,mode,criterion,slice_size,executions,frontiers_checked,steps,wall_ms,status";

/// Write records in deterministic (family, size, seed, mode, criterion)
/// order.
pub fn emit_report(
    records: &[MetricRecord],
    format: ReportFormat,
    out: &mut dyn Write,
) -> Result<(), BenchError> {
    let mut sorted: Vec<MetricRecord> = records.to_vec();
    sort_records(&mut sorted);
    match format {
        ReportFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in &sorted {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{:.3},{}",
                    r.family,
                    r.size,
                    r.seed,
                    r.mode,
                    r.criterion,
                    r.slice_size,
                    r.executions,
                    r.frontiers_checked,
                    r.steps,
                    r.wall_ms,
                    r.status
                )?;
            }
        }
        ReportFormat::Json => {
            let json = serde_json::to_string_pretty(&sorted).expect("records serialize");
            writeln!(out, "{json}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicer;

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap() + 1.0).abs() < 1e-12);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-12);
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(BenchError::DegenerateInput(_))
        ));
        // ties use mean ranks
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_phase_scales_segment_only() {
        let small = two_phase(1000);
        let big = two_phase(8000);
        let s_small = exec::run(&small.program, &small.input).unwrap().steps;
        let s_big = exec::run(&big.program, &big.input).unwrap().steps;
        assert!(s_big > s_small * 4);
        // both criteria have size-independent slices
        for (gen, _) in [(small, 0), (big, 1)] {
            let session = SliceSession::new(&gen.program);
            let early = session.slice_inter(&gen.input, &gen.criteria[0]).unwrap();
            assert_eq!(early.slice.len(), 3);
            let late = session.slice_inter(&gen.input, &gen.criteria[1]).unwrap();
            assert_eq!(late.slice.len(), 2);
        }
    }

    #[test]
    fn two_phase_entangled_static_slice_covers_most_nodes() {
        let gen = two_phase_entangled(600);
        let session = SliceSession::new(&gen.program);
        let late = gen.criteria[1];
        let stat = crate::sda::static_slice(&gen.program, &session.deps, late.node);
        let coverage = stat.len() as f64 / gen.program.node_count() as f64;
        assert!(coverage > 0.9, "coverage {coverage}");
        // while the dynamic slice stays tiny
        let r = session.slice_inter(&gen.input, &late).unwrap();
        assert_eq!(r.slice.len(), 2);
    }

    #[test]
    fn double_call_size_one_is_p3_shaped() {
        let gen = double_call(1);
        assert_eq!(gen.program.node_count(), 6);
        assert_eq!(gen.program.procedures.len(), 2);
        let r = slicer::slice_inter(&gen.program, &[], &gen.criteria[0]).unwrap();
        assert_eq!(r.slice.len(), 5); // second call site excluded
    }

    #[test]
    fn recursive_family_runs() {
        let gen = recursive(4);
        let out = exec::run(&gen.program, &gen.input).unwrap();
        assert_eq!(out.printed, vec![1 + 2 + 3 + 4]);
    }

    #[test]
    fn sort_loop_has_ten_chain_criteria() {
        let gen = sort_loop(8, 42);
        let out = exec::run(&gen.program, &gen.input).unwrap();
        // sorted ascending: last element printed +9 chain increments
        let mut values: Vec<i64> = gen.input[1..].to_vec();
        values.sort();
        assert_eq!(out.printed, vec![values[0] + 9]);
        assert!(gen.criteria.len() >= 20);
    }

    #[test]
    fn random_corpus_is_deterministic() {
        let a = random_program(10, 7).unwrap();
        let b = random_program(10, 7).unwrap();
        assert_eq!(a.program, b.program);
        assert_eq!(a.input, b.input);
        let steps = exec::run(&a.program, &a.input).unwrap().steps;
        assert!(steps > 0 && steps <= STEP_BUDGET);
    }

    #[test]
    fn random_corpus_varies_with_seed() {
        let a = random_program(10, 1).unwrap();
        let b = random_program(10, 2).unwrap();
        assert_ne!(a.program, b.program);
    }

    #[test]
    fn suite_runs_and_reports() {
        let config = BenchConfig {
            family: Family::DoubleCall,
            sizes: vec![1, 2],
            seeds: vec![0],
            modes: vec!["ondemand-inter".into(), "execute-once".into()],
            trials: 2,
            parallel: false,
        };
        let records = run_suite(&config).unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.status == "ok"));
        assert!(records.iter().all(|r| r.slice_size >= 1));

        let mut csv = Vec::new();
        emit_report(&records, ReportFormat::Csv, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.count(), 4);

        let mut json = Vec::new();
        emit_report(&records, ReportFormat::Json, &mut json).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(parsed.as_array().unwrap().len(), 4);
    }

    #[test]
    fn suite_records_failures_without_aborting() {
        let config = BenchConfig {
            family: Family::DoubleCall,
            sizes: vec![1],
            seeds: vec![0],
            modes: vec!["ondemand-intra".into()], // has calls: not supported
            trials: 1,
            parallel: false,
        };
        let records = run_suite(&config).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].status, "calls-not-supported");
    }

    #[test]
    fn parallel_suite_matches_sequential() {
        let mk = |parallel| BenchConfig {
            family: Family::TwoPhase,
            sizes: vec![300, 600],
            seeds: vec![0],
            modes: vec!["ondemand-inter".into()],
            trials: 1,
            parallel,
        };
        let seq = run_suite(&mk(false)).unwrap();
        let par = run_suite(&mk(true)).unwrap();
        let strip = |rs: &[MetricRecord]| -> Vec<(String, u32, String, usize)> {
            rs.iter()
                .map(|r| (r.mode.clone(), r.size, r.criterion.clone(), r.slice_size))
                .collect()
        };
        assert_eq!(strip(&seq), strip(&par));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let config = BenchConfig {
            family: Family::TwoPhase,
            sizes: vec![],
            seeds: vec![0],
            modes: vec![],
            trials: 1,
            parallel: false,
        };
        assert!(matches!(
            run_suite(&config),
            Err(BenchError::InvalidConfig(_))
        ));
    }
}
