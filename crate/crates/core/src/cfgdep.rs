//! Per-procedure control flow graphs, post-dominators, and the classic
//! control-dependence relation.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::minilang::{NodeId, Procedure, Program, Stmt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CfgNode {
    Entry,
    Node(NodeId),
    Exit,
}

impl std::fmt::Display for CfgNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CfgNode::Entry => write!(f, "entry"),
            CfgNode::Node(n) => write!(f, "{n}"),
            CfgNode::Exit => write!(f, "exit"),
        }
    }
}

/// Control flow graph of a single procedure, with synthetic entry/exit.
#[derive(Debug, Clone)]
pub struct Cfg {
    pub nodes: Vec<CfgNode>,
    pub arcs: BTreeSet<(CfgNode, CfgNode)>,
    /// Branch (condition) nodes.
    pub branches: BTreeSet<NodeId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CfgError {
    #[error("node {0:?} cannot reach the exit")]
    UnreachableExit(CfgNode),
}

impl Cfg {
    pub fn successors(&self, n: CfgNode) -> impl Iterator<Item = CfgNode> + '_ {
        self.arcs
            .range((n, CfgNode::Entry)..)
            .take_while(move |(from, _)| *from == n)
            .map(|(_, to)| *to)
    }

    pub fn predecessors(&self, n: CfgNode) -> Vec<CfgNode> {
        self.arcs
            .iter()
            .filter(|(_, to)| *to == n)
            .map(|(from, _)| *from)
            .collect()
    }
}

/// Build the CFG of one procedure. Arcs follow structured semantics:
/// condition → first node of each branch (or the join when a branch is
/// empty), last node of a loop body → loop condition, return → exit.
pub fn build_cfg(procedure: &Procedure) -> Cfg {
    let mut nodes = vec![CfgNode::Entry, CfgNode::Exit];
    let mut arcs = BTreeSet::new();
    let mut branches = BTreeSet::new();
    collect_nodes(&procedure.body, &mut nodes, &mut branches);

    let outs = wire_block(&procedure.body, vec![CfgNode::Entry], &mut arcs);
    for o in outs {
        arcs.insert((o, CfgNode::Exit));
    }
    Cfg {
        nodes,
        arcs,
        branches,
    }
}

fn collect_nodes(block: &[Stmt], nodes: &mut Vec<CfgNode>, branches: &mut BTreeSet<NodeId>) {
    for s in block {
        nodes.push(CfgNode::Node(s.node()));
        match s {
            Stmt::If {
                node,
                then_block,
                else_block,
                ..
            } => {
                branches.insert(*node);
                collect_nodes(then_block, nodes, branches);
                collect_nodes(else_block, nodes, branches);
            }
            Stmt::While { node, body, .. } => {
                branches.insert(*node);
                collect_nodes(body, nodes, branches);
            }
            _ => {}
        }
    }
}

/// Wire a block given the dangling predecessors; returns the dangling outs.
fn wire_block(
    block: &[Stmt],
    mut preds: Vec<CfgNode>,
    arcs: &mut BTreeSet<(CfgNode, CfgNode)>,
) -> Vec<CfgNode> {
    for s in block {
        let node = CfgNode::Node(s.node());
        for p in preds.drain(..) {
            arcs.insert((p, node));
        }
        match s {
            Stmt::If {
                then_block,
                else_block,
                ..
            } => {
                let mut outs = wire_block(then_block, vec![node], arcs);
                if else_block.is_empty() {
                    outs.push(node); // false edge falls through
                } else {
                    outs.extend(wire_block(else_block, vec![node], arcs));
                }
                preds = outs;
            }
            Stmt::While { body, .. } => {
                let body_outs = wire_block(body, vec![node], arcs);
                for o in body_outs {
                    arcs.insert((o, node)); // back edge
                }
                preds = vec![node];
            }
            Stmt::Return { .. } => {
                arcs.insert((node, CfgNode::Exit));
                preds = Vec::new();
            }
            _ => preds = vec![node],
        }
    }
    preds
}

/// Immediate post-dominators, rooted at the exit node.
///
/// Errors with `UnreachableExit` instead of patching in pseudo-edges when a
/// node has no path to the exit.
pub fn post_dominators(cfg: &Cfg) -> Result<BTreeMap<CfgNode, CfgNode>, CfgError> {
    // index nodes; operate on the reverse graph with Exit as root
    let nodes: Vec<CfgNode> = cfg.nodes.clone();
    let index: BTreeMap<CfgNode, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let n = nodes.len();

    let mut rev_succ: Vec<Vec<usize>> = vec![Vec::new(); n]; // predecessors in reverse graph = successors in cfg
    let mut rev_pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (from, to) in &cfg.arcs {
        let (f, t) = (index[from], index[to]);
        // reverse graph edge t -> f
        rev_succ[t].push(f);
        rev_pred[f].push(t);
    }

    let root = index[&CfgNode::Exit];

    // reverse post-order over the reverse graph from Exit
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut stack = vec![(root, 0usize)];
    seen[root] = true;
    while let Some((v, i)) = stack.last_mut() {
        if *i < rev_succ[*v].len() {
            let w = rev_succ[*v][*i];
            *i += 1;
            if !seen[w] {
                seen[w] = true;
                stack.push((w, 0));
            }
        } else {
            order.push(*v);
            stack.pop();
        }
    }
    if let Some(unreached) = (0..n).find(|&v| !seen[v]) {
        return Err(CfgError::UnreachableExit(nodes[unreached]));
    }
    order.reverse(); // reverse post-order, root first
    let mut rpo_number = vec![0usize; n];
    for (i, &v) in order.iter().enumerate() {
        rpo_number[v] = i;
    }

    // Cooper–Harvey–Kennedy iteration
    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[root] = Some(root);
    let mut changed = true;
    while changed {
        changed = false;
        for &v in &order {
            if v == root {
                continue;
            }
            let mut new_idom: Option<usize> = None;
            for &p in &rev_pred[v] {
                if idom[p].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(cur, p, &idom, &rpo_number),
                });
            }
            if new_idom != idom[v] {
                idom[v] = new_idom;
                changed = true;
            }
        }
    }

    let mut out = BTreeMap::new();
    for (v, node) in nodes.iter().enumerate() {
        if v == root {
            continue;
        }
        if let Some(d) = idom[v] {
            out.insert(*node, nodes[d]);
        }
    }
    Ok(out)
}

fn intersect(mut a: usize, mut b: usize, idom: &[Option<usize>], rpo: &[usize]) -> usize {
    while a != b {
        while rpo[a] > rpo[b] {
            a = idom[a].expect("processed");
        }
        while rpo[b] > rpo[a] {
            b = idom[b].expect("processed");
        }
    }
    a
}

/// node → controlling branch nodes (at most one in this structured language).
#[derive(Debug, Clone, Default)]
pub struct ControlDeps {
    pub deps: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl ControlDeps {
    pub fn deps_of(&self, node: NodeId) -> &BTreeSet<NodeId> {
        static EMPTY: BTreeSet<NodeId> = BTreeSet::new();
        self.deps.get(&node).unwrap_or(&EMPTY)
    }

    fn merge(&mut self, other: ControlDeps) {
        for (k, v) in other.deps {
            self.deps.entry(k).or_default().extend(v);
        }
    }
}

/// Ferrante-style control dependence from the immediate post-dominator tree:
/// for each branch edge b→s, every node on the ipdom chain from s up to (and
/// excluding) ipdom(b) depends on b. Self-dependence of loop conditions is
/// excluded so each node maps to its innermost enclosing branch.
pub fn control_deps(cfg: &Cfg) -> Result<ControlDeps, CfgError> {
    let ipdom = post_dominators(cfg)?;
    let mut deps: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for &(from, to) in &cfg.arcs {
        let branch = match from {
            CfgNode::Node(id) if cfg.branches.contains(&id) => id,
            _ => continue,
        };
        let stop = ipdom.get(&CfgNode::Node(branch)).copied();
        let mut runner = to;
        while Some(runner) != stop && runner != CfgNode::Exit {
            if let CfgNode::Node(r) = runner {
                if r != branch {
                    deps.entry(r).or_default().insert(branch);
                }
            }
            runner = match ipdom.get(&runner) {
                Some(next) => *next,
                None => break,
            };
        }
    }
    Ok(ControlDeps { deps })
}

/// Control dependences over all procedures of a program.
pub fn program_control_deps(program: &Program) -> Result<ControlDeps, CfgError> {
    let mut out = ControlDeps::default();
    for p in &program.procedures {
        out.merge(control_deps(&build_cfg(p))?);
    }
    Ok(out)
}

/// caller procedure name → (call-site node, callee name), complete and
/// deterministic.
pub fn call_graph(program: &Program) -> BTreeMap<String, BTreeSet<(NodeId, String)>> {
    let mut out: BTreeMap<String, BTreeSet<(NodeId, String)>> = BTreeMap::new();
    for p in &program.procedures {
        let entry = out.entry(p.name.clone()).or_default();
        collect_calls(&p.body, entry);
    }
    out
}

fn collect_calls(block: &[Stmt], out: &mut BTreeSet<(NodeId, String)>) {
    for s in block {
        match s {
            Stmt::Call { node, callee, .. } => {
                out.insert((*node, callee.clone()));
            }
            Stmt::If {
                then_block,
                else_block,
                ..
            } => {
                collect_calls(then_block, out);
                collect_calls(else_block, out);
            }
            Stmt::While { body, .. } => collect_calls(body, out),
            _ => {}
        }
    }
}

/// `from -> to` edge list for the debug dump.
pub fn dump_cfg(program: &Program, proc_index: usize, cfg: &Cfg) -> String {
    let name = |n: &CfgNode| match n {
        CfgNode::Entry => format!("{}:entry", program.procedures[proc_index].name),
        CfgNode::Exit => format!("{}:exit", program.procedures[proc_index].name),
        CfgNode::Node(id) => program.node_label(*id),
    };
    let mut lines: Vec<String> = cfg
        .arcs
        .iter()
        .map(|(f, t)| format!("{} -> {}", name(f), name(t)))
        .collect();
    lines.sort();
    lines.join("\n")
}

/// `controller -> dependent` edge list for the debug dump.
pub fn dump_control(program: &Program, deps: &ControlDeps) -> String {
    let mut lines: Vec<String> = Vec::new();
    for (n, cs) in &deps.deps {
        for c in cs {
            lines.push(format!(
                "{} -> {}",
                program.node_label(*c),
                program.node_label(*n)
            ));
        }
    }
    lines.sort();
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::fixtures::*;
    use crate::minilang::parse_program;

    fn nid(i: u32) -> NodeId {
        NodeId(i)
    }

    fn n(i: u32) -> CfgNode {
        CfgNode::Node(NodeId(i))
    }

    #[test]
    fn p1_is_a_chain() {
        let p = parse_program(P1).unwrap();
        let cfg = build_cfg(&p.procedures[0]);
        let expected: BTreeSet<(CfgNode, CfgNode)> = [
            (CfgNode::Entry, n(0)),
            (n(0), n(1)),
            (n(1), n(2)),
            (n(2), n(3)),
            (n(3), CfgNode::Exit),
        ]
        .into_iter()
        .collect();
        assert_eq!(cfg.arcs, expected);
    }

    #[test]
    fn p2_branch_arcs() {
        let p = parse_program(P2).unwrap();
        let cfg = build_cfg(&p.procedures[0]);
        for arc in [(n(1), n(2)), (n(1), n(3)), (n(2), n(4)), (n(3), n(4))] {
            assert!(cfg.arcs.contains(&arc), "missing {arc:?}");
        }
    }

    #[test]
    fn while_body_loops_back() {
        let src = "proc main() {\n  i = 0;\n  while (i < 3) {\n    i = i + 1;\n  }\n  print i;\n}\n";
        let p = parse_program(src).unwrap();
        let cfg = build_cfg(&p.procedures[0]);
        assert!(cfg.arcs.contains(&(n(2), n(1)))); // body -> cond back edge
        assert!(cfg.arcs.contains(&(n(1), n(3)))); // cond -> after
    }

    #[test]
    fn p2_immediate_postdominators() {
        let p = parse_program(P2).unwrap();
        let cfg = build_cfg(&p.procedures[0]);
        let ipdom = post_dominators(&cfg).unwrap();
        assert_eq!(ipdom[&n(2)], n(4));
        assert_eq!(ipdom[&n(3)], n(4));
        assert_eq!(ipdom[&n(1)], n(4));
    }

    #[test]
    fn chain_ipdom_is_next_node() {
        let p = parse_program(P1).unwrap();
        let cfg = build_cfg(&p.procedures[0]);
        let ipdom = post_dominators(&cfg).unwrap();
        for i in 0..3 {
            assert_eq!(ipdom[&n(i)], n(i + 1));
        }
        assert_eq!(ipdom[&n(3)], CfgNode::Exit);
    }

    #[test]
    fn loop_body_ipdom_is_condition() {
        let src = "proc main() {\n  i = 0;\n  while (i < 3) {\n    i = i + 1;\n  }\n}\n";
        let p = parse_program(src).unwrap();
        let cfg = build_cfg(&p.procedures[0]);
        let ipdom = post_dominators(&cfg).unwrap();
        assert_eq!(ipdom[&n(2)], n(1));
    }

    #[test]
    fn unreachable_exit_is_reported() {
        // hand-built graph: node 1 only loops to itself, never reaching exit
        let cfg = Cfg {
            nodes: vec![CfgNode::Entry, CfgNode::Exit, n(0), n(1)],
            arcs: [
                (CfgNode::Entry, n(0)),
                (n(0), CfgNode::Exit),
                (n(0), n(1)),
                (n(1), n(1)),
            ]
            .into_iter()
            .collect(),
            branches: BTreeSet::new(),
        };
        assert!(matches!(
            post_dominators(&cfg),
            Err(CfgError::UnreachableExit(_))
        ));
    }

    #[test]
    fn p2_control_deps() {
        let p = parse_program(P2).unwrap();
        let deps = control_deps(&build_cfg(&p.procedures[0])).unwrap();
        assert_eq!(deps.deps_of(nid(2)), &[nid(1)].into_iter().collect());
        assert_eq!(deps.deps_of(nid(3)), &[nid(1)].into_iter().collect());
        assert!(deps.deps_of(nid(4)).is_empty());
        assert!(deps.deps_of(nid(0)).is_empty());
    }

    #[test]
    fn straight_line_has_no_control_deps() {
        let p = parse_program(P1).unwrap();
        let deps = control_deps(&build_cfg(&p.procedures[0])).unwrap();
        assert!(deps.deps.is_empty());
    }

    #[test]
    fn nested_if_in_while_maps_to_innermost() {
        let src = "proc main() {\n  i = 0;\n  while (i < 4) {\n    if (i > 1) {\n      x = 1;\n    }\n    i = i + 1;\n  }\n  print i;\n}\n";
        let p = parse_program(src).unwrap();
        let deps = control_deps(&build_cfg(&p.procedures[0])).unwrap();
        // nodes: 0 i=0, 1 while-cond, 2 if-cond, 3 x=1, 4 i=i+1, 5 print
        assert_eq!(deps.deps_of(nid(3)), &[nid(2)].into_iter().collect());
        assert_eq!(deps.deps_of(nid(2)), &[nid(1)].into_iter().collect());
        assert_eq!(deps.deps_of(nid(4)), &[nid(1)].into_iter().collect());
        // loop condition is not self-dependent
        assert!(deps.deps_of(nid(1)).is_empty());
        assert!(deps.deps_of(nid(5)).is_empty());
    }

    #[test]
    fn p3_call_graph() {
        let p = parse_program(P3).unwrap();
        let cg = call_graph(&p);
        let main_calls = &cg["main"];
        assert_eq!(
            main_calls,
            &[(nid(3), "inc".to_string()), (nid(4), "inc".to_string())]
                .into_iter()
                .collect()
        );
        assert!(cg["inc"].is_empty());
    }

    #[test]
    fn p1_call_graph_is_empty() {
        let p = parse_program(P1).unwrap();
        let cg = call_graph(&p);
        assert!(cg["main"].is_empty());
    }

    #[test]
    fn recursive_call_graph_has_self_edge() {
        let src = "proc f(n) {\n  if (n > 0) {\n    r = call f(n - 1);\n  } else {\n    r = 0;\n  }\n  return r;\n}\nproc main() {\n  x = call f(2);\n  print x;\n}\n";
        let p = parse_program(src).unwrap();
        let cg = call_graph(&p);
        assert!(cg["f"].iter().any(|(_, callee)| callee == "f"));
    }
}
