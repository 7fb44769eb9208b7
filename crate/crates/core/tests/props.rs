//! Property tests: brute-force equivalence for control dependence, soundness
//! of the static analysis against recorded dynamics, round-trip parsing, and
//! the slicer's fixed-point invariants.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reslice_core::baselines::ExecuteOnceSession;
use reslice_core::bench;
use reslice_core::cfgdep::{self, CfgNode};
use reslice_core::exec;
use reslice_core::minilang::{self, parse_program, NodeId};
use reslice_core::sda;
use reslice_core::slicer::{self, Criterion, SliceSession};

// ---------------------------------------------------------------------------
// Brute-force control dependence
// ---------------------------------------------------------------------------

/// Random structured procedure with at most 12 nodes, reading/writing
/// globals only so validation never interferes.
fn small_proc_source(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = vec![
        "global a;".to_string(),
        "global b;".to_string(),
        "proc main() {".to_string(),
    ];
    let mut nodes = 0usize;
    gen_block(&mut rng, &mut lines, &mut nodes, 1, 3);
    if nodes == 0 {
        lines.push("  a = 1;".to_string());
    }
    lines.push("}".to_string());
    lines.join("\n")
}

fn gen_block(
    rng: &mut ChaCha8Rng,
    lines: &mut Vec<String>,
    nodes: &mut usize,
    indent: usize,
    depth: u32,
) {
    let pad = "  ".repeat(indent);
    let count = rng.gen_range(1..=3);
    for _ in 0..count {
        if *nodes >= 10 {
            return;
        }
        let roll: f64 = rng.gen();
        if roll < 0.5 || depth == 0 {
            lines.push(format!("{pad}a = b + 1;"));
            *nodes += 1;
        } else if roll < 0.75 {
            lines.push(format!("{pad}if (a < b) {{"));
            *nodes += 1;
            gen_block(rng, lines, nodes, indent + 1, depth - 1);
            if rng.gen_bool(0.5) {
                lines.push(format!("{pad}}} else {{"));
                gen_block(rng, lines, nodes, indent + 1, depth - 1);
            }
            lines.push(format!("{pad}}}"));
        } else {
            lines.push(format!("{pad}while (a < b) {{"));
            *nodes += 1;
            gen_block(rng, lines, nodes, indent + 1, depth - 1);
            lines.push(format!("{pad}}}"));
        }
    }
}

/// n post-dominates s iff every path s → Exit passes through n. Checked by
/// path enumeration: is Exit reachable from s while avoiding n?
fn brute_postdominates(cfg: &cfgdep::Cfg, n: CfgNode, s: CfgNode) -> bool {
    if n == s {
        return true;
    }
    let mut seen = BTreeSet::new();
    let mut work = vec![s];
    while let Some(v) = work.pop() {
        if v == n || !seen.insert(v) {
            continue;
        }
        if v == CfgNode::Exit {
            return false; // reached exit without touching n
        }
        work.extend(cfg.successors(v));
    }
    true
}

/// Direct reading of the classic definition over all branch edges.
fn brute_control_deps(cfg: &cfgdep::Cfg) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    let mut out: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for &b in &cfg.branches {
        let bn = CfgNode::Node(b);
        for s in cfg.successors(bn).collect::<Vec<_>>() {
            for &node in &cfg.nodes {
                let n = match node {
                    CfgNode::Node(id) => id,
                    _ => continue,
                };
                if n == b {
                    continue;
                }
                if brute_postdominates(cfg, CfgNode::Node(n), s)
                    && !brute_postdominates(cfg, CfgNode::Node(n), bn)
                {
                    out.entry(n).or_default().insert(b);
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn control_deps_match_brute_force(seed in 0u64..100_000) {
        let src = small_proc_source(seed);
        let program = parse_program(&src).expect("generated procedure parses");
        prop_assume!(program.node_count() <= 12);
        let cfg = cfgdep::build_cfg(&program.procedures[0]);
        let fast = cfgdep::control_deps(&cfg).unwrap();
        let brute = brute_control_deps(&cfg);
        let fast_map: BTreeMap<NodeId, BTreeSet<NodeId>> = fast
            .deps
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        prop_assert_eq!(fast_map, brute, "program:\n{}", src);
    }

    #[test]
    fn postdominators_match_brute_force(seed in 0u64..100_000) {
        let src = small_proc_source(seed);
        let program = parse_program(&src).expect("generated procedure parses");
        prop_assume!(program.node_count() <= 12);
        let cfg = cfgdep::build_cfg(&program.procedures[0]);
        let ipdom = cfgdep::post_dominators(&cfg).unwrap();
        // the immediate post-dominator is the closest strict post-dominator
        for &node in &cfg.nodes {
            if node == CfgNode::Exit {
                continue;
            }
            let idom = ipdom[&node];
            prop_assert!(brute_postdominates(&cfg, idom, node));
            prop_assert_ne!(idom, node);
            // every other strict post-dominator also dominates idom
            for &other in &cfg.nodes {
                if other == node || other == idom {
                    continue;
                }
                if brute_postdominates(&cfg, other, node) {
                    prop_assert!(
                        brute_postdominates(&cfg, other, idom),
                        "{:?} pd {:?} but not its idom {:?}",
                        other,
                        node,
                        idom
                    );
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Corpus-backed properties
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn roundtrip_and_density_on_corpus(seed in 0u64..10_000, size in 4u32..30) {
        let generated = bench::random_program(size, seed).unwrap();
        let program = &generated.program;

        // node ids are dense over statements plus conditions
        for (i, meta) in program.nodes().iter().enumerate() {
            prop_assert_eq!(meta.id.index(), i);
        }

        // pretty-print round trip is node-for-node identical
        let printed = minilang::pretty_print(program);
        let reparsed = parse_program(&printed).expect("printed program parses");
        prop_assert_eq!(program, &reparsed);

        // def/use table is deterministic
        prop_assert_eq!(minilang::node_table(program), minilang::node_table(program));
    }

    #[test]
    fn sda_sound_and_static_covers_dynamic(seed in 0u64..10_000, size in 4u32..30) {
        let generated = bench::random_program(size, seed).unwrap();
        let session = SliceSession::new(&generated.program);
        let eo = ExecuteOnceSession::new(&session, &generated.input);

        // soundness: every recorded DU pair is a static pair
        for du in &eo.trace().du_pairs {
            prop_assert!(
                session.deps.data.contains(&(du.writer.node, du.reader.node)),
                "missing static pair ({}, {})",
                generated.program.node_label(du.writer.node),
                generated.program.node_label(du.reader.node)
            );
        }

        // static slices over-approximate dynamic ones
        for criterion in generated.criteria.iter().take(6) {
            let dynamic = eo.slice(criterion).unwrap();
            let stat = sda::static_slice(&generated.program, &session.deps, criterion.node);
            prop_assert!(dynamic.slice.is_subset(&stat));
        }
    }

    #[test]
    fn sd_data_monotone_under_extension(seed in 0u64..10_000, size in 4u32..24) {
        let generated = bench::random_program(size, seed).unwrap();
        let old = sda::static_data_deps(&generated.program).data;

        // append a statement at the end of main (the last procedure), which
        // leaves all existing node ids untouched
        let printed = minilang::pretty_print(&generated.program);
        let insert_at = printed.rfind("}").unwrap();
        let extended = format!("{}  zz9 = 0 - 1;\n}}\n", &printed[..insert_at]);
        let extended = parse_program(&extended).expect("extended program parses");
        let new = sda::static_data_deps(&extended).data;

        let old_nodes = generated.program.node_count() as u32;
        for pair in &old {
            prop_assert!(new.contains(pair));
        }
        // restriction to old nodes adds nothing but never removes
        let restricted: BTreeSet<_> = new
            .iter()
            .filter(|(w, r)| w.0 < old_nodes && r.0 < old_nodes)
            .copied()
            .collect();
        prop_assert_eq!(restricted, old);
    }

    #[test]
    fn corroboration_matches_trace_filter(seed in 0u64..10_000, size in 4u32..24, pick in 0usize..64) {
        let generated = bench::random_program(size, seed).unwrap();
        let session = SliceSession::new(&generated.program);

        // random f2c subset of the static pairs
        let all_pairs: Vec<_> = session.deps.data.iter().copied().collect();
        prop_assume!(!all_pairs.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (pick as u64) << 32);
        let f2c: BTreeSet<_> = all_pairs
            .iter()
            .filter(|_| rng.gen_bool(0.4))
            .copied()
            .collect();

        // stop at the last occurrence of a random executed node
        let criterion = generated.criteria[pick % generated.criteria.len()];
        let (resolved, _) = session.resolve(&generated.input, &criterion).unwrap();
        let stop = resolved.stop();

        let got = exec::corroborate_frontiers_ctx(
            &generated.program,
            &generated.input,
            &f2c,
            stop,
        )
        .unwrap();

        // oracle: filter the recorded pairs of a stop-bounded trace
        let trace = exec::record_trace(&generated.program, &generated.input, Some(stop)).unwrap();
        let mut expect = BTreeSet::new();
        for du in &trace.du_pairs {
            if f2c.contains(&(du.writer.node, du.reader.node)) {
                expect.insert(exec::ContextualizedFrontier {
                    writer: du.writer.node,
                    writer_ctx: trace.context(du.writer_ctx).clone(),
                    reader: du.reader.node,
                    reader_ctx: trace.context(du.reader_ctx).clone(),
                });
            }
        }
        prop_assert_eq!(got, expect);
    }

    #[test]
    fn dynamic_control_consistency(seed in 0u64..10_000, size in 4u32..24) {
        let generated = bench::random_program(size, seed).unwrap();
        let session = SliceSession::new(&generated.program);
        let eo = ExecuteOnceSession::new(&session, &generated.input);
        let trace = eo.trace();
        for (i, entry) in trace.occurrences.iter().enumerate() {
            for &c in session.deps.control.deps_of(entry.occ.node) {
                let found = trace.occurrences[..i]
                    .iter()
                    .any(|e| e.occ.node == c && e.frame == entry.frame);
                prop_assert!(
                    found,
                    "{} executed without its controller {} in the same activation",
                    generated.program.node_label(entry.occ.node),
                    generated.program.node_label(c)
                );
            }
        }
    }

    #[test]
    fn early_stop_economy(seed in 0u64..10_000, size in 4u32..24, pick in 0usize..64) {
        let generated = bench::random_program(size, seed).unwrap();
        let session = SliceSession::new(&generated.program);
        let trace = exec::record_trace(&generated.program, &generated.input, None).unwrap();

        // choose a non-call occurrence: the run halts right after it
        let call_sites = slicer::call_sites(&generated.program);
        let candidates: Vec<_> = trace
            .occurrences
            .iter()
            .enumerate()
            .filter(|(_, e)| !call_sites.contains(&e.occ.node))
            .collect();
        prop_assume!(!candidates.is_empty());
        let (pos, entry) = candidates[pick % candidates.len()];

        let outcome = exec::corroborate_frontiers(
            &generated.program,
            &generated.input,
            &BTreeSet::new(),
            entry.occ,
        );
        prop_assert!(outcome.is_ok());
        let steps = {
            let (resolved, steps) = session
                .resolve(&generated.input, &Criterion::nth(entry.occ.node, entry.occ.count))
                .unwrap();
            let _ = resolved;
            steps
        };
        prop_assert_eq!(steps, pos as u64 + 1);
    }

    #[test]
    fn slicer_invariants_on_corpus(seed in 0u64..10_000, size in 4u32..24, pick in 0usize..64) {
        let generated = bench::random_program(size, seed).unwrap();
        let session = SliceSession::new(&generated.program);
        let criterion = generated.criteria[pick % generated.criteria.len()];
        let r = session.slice_inter(&generated.input, &criterion).unwrap();

        prop_assert!(r.slice.contains(&criterion.node));
        prop_assert!(r.executions as usize <= r.slice.len() + 1);

        // monotone growth until the final fixpoint check
        for (i, it) in r.iterations.iter().enumerate() {
            let grew = !(it.obs_defs.is_empty()
                && it.obs_ctxs.is_empty()
                && it.delta_control.is_empty());
            prop_assert_eq!(grew, i + 1 < r.iterations.len());
        }

        // checked frontiers never reappear in a later frontiers2check
        for i in 0..r.iterations.len() {
            let checked_i: BTreeSet<_> = r.iterations[i]
                .frontiers2check
                .difference(&r.iterations[i].kept_frontiers)
                .copied()
                .collect();
            for later in &r.iterations[i + 1..] {
                prop_assert!(checked_i.is_disjoint(&later.frontiers2check));
            }
        }

        // fixed point: re-corroborating the final frontiers admits nothing new
        let (resolved, _) = session.resolve(&generated.input, &criterion).unwrap();
        let final_frontiers: BTreeSet<_> = session
            .deps
            .data
            .iter()
            .filter(|(_, rdr)| r.slice.contains(rdr))
            .copied()
            .collect();
        let exercised = exec::corroborate_frontiers_ctx(
            &generated.program,
            &generated.input,
            &final_frontiers,
            resolved.stop(),
        )
        .unwrap();
        for cf in exercised {
            if cf.reader_ctx.is_subset(&r.slice) {
                prop_assert!(r.slice.contains(&cf.writer));
                prop_assert!(cf.writer_ctx.is_subset(&r.slice));
            }
        }
    }

    #[test]
    fn intra_and_inter_agree_on_call_free_corpus(seed in 0u64..10_000, pick in 0usize..64) {
        // size small and no helpers: regenerate until call-free
        let generated = bench::random_program(6, seed).unwrap();
        prop_assume!(generated.program.is_call_free());
        let session = SliceSession::new(&generated.program);
        let criterion = generated.criteria[pick % generated.criteria.len()];
        let a = session.slice_intra(&generated.input, &criterion).unwrap();
        let b = session.slice_inter(&generated.input, &criterion).unwrap();
        prop_assert_eq!(a.slice, b.slice);
        prop_assert_eq!(a.iterations.len(), b.iterations.len());
    }
}

// ---------------------------------------------------------------------------
// Crafted fixtures for the kept-frontier machinery
// ---------------------------------------------------------------------------

/// A frontier exercised only under an irrelevant context stays kept forever;
/// once every submitted pair is already corroborated the iteration resolves
/// from the cache with zero run steps.
#[test]
fn kept_frontiers_and_cache_iterations() {
    let src = "\
global g;
proc b() {
  s = g;
  return s;
}
proc main() {
  g = 5;
  u = call b();
  v = call b();
  print v;
}
";
    let program = parse_program(src).unwrap();
    let session = SliceSession::new(&program);
    // nodes: 0 b1 (s=g), 1 b2 (return s), 2 m1 (g=5), 3 m2, 4 m3, 5 m4
    let criterion = Criterion::nth(NodeId(5), 1);
    let r = session.slice_inter(&[], &criterion).unwrap();

    let expected: BTreeSet<NodeId> = [0, 1, 2, 4, 5].iter().map(|&i| NodeId(i)).collect();
    assert_eq!(r.slice, expected, "u's call site must stay out");

    // (b1, b2) is exercised under both call sites; the {m2} tuple never
    // becomes admissible, so the pair reappears instead of being checked
    let pair = (NodeId(0), NodeId(1));
    let appearances = r
        .iterations
        .iter()
        .filter(|it| it.frontiers2check.contains(&pair))
        .count();
    assert!(appearances >= 2, "kept frontier must be resubmitted");
    assert!(r
        .iterations
        .iter()
        .any(|it| it.kept_frontiers.contains(&pair)));

    // the last iteration is resolved from the corroboration cache
    let last = r.iterations.last().unwrap();
    assert!(last.cached && last.run_steps == 0);
    assert!(r.executions < r.iterations.len() as u32);

    // and the trace-based engine agrees
    let eo = ExecuteOnceSession::new(&session, &[]).slice(&criterion).unwrap();
    assert_eq!(r.slice, eo.slice);
}

/// A kept frontier whose reader context joins the slice later is re-examined
/// in a subsequent iteration.
#[test]
fn kept_frontier_becomes_live_again() {
    let src = "\
global g;
proc f(p) {
  t = p * g;
  return t;
}
proc main() {
  g = 3;
  a = call f(1);
  b = call f(2);
  c = b + 0;
  c2 = c + 0;
  d = a + c2;
  print d;
}
";
    let program = parse_program(src).unwrap();
    let session = SliceSession::new(&program);
    let print_node = program.node_by_label("main", 7).unwrap();
    let r = session.slice_inter(&[], &Criterion::nth(print_node, 1)).unwrap();

    // (f1, f2) must appear kept in one iteration and resubmitted later
    let pair = (NodeId(0), NodeId(1));
    let kept_at = r
        .iterations
        .iter()
        .position(|it| it.kept_frontiers.contains(&pair));
    let kept_at = kept_at.expect("tuple under the second call site is kept first");
    let reappears = r.iterations[kept_at + 1..]
        .iter()
        .any(|it| it.frontiers2check.contains(&pair));
    assert!(reappears, "kept frontier must be re-examined");

    let eo = ExecuteOnceSession::new(&session, &[])
        .slice(&Criterion::nth(print_node, 1))
        .unwrap();
    assert_eq!(r.slice, eo.slice);
}
