//! Static dependency analysis: the over-approximate writer→reader relation
//! over abstract locations, plus static slices for the upfront-slice engine.
//!
//! The analysis is flow-, context- and object-insensitive on purpose; the
//! dynamic corroboration phase recovers the precision.

use std::collections::{BTreeMap, BTreeSet};

use crate::cfgdep::{self, ControlDeps};
use crate::minilang::{Expr, NodeId, Program, Stmt};

/// Static name for a set of runtime addresses. Each runtime address maps to
/// exactly one abstract location (array elements collapse to the array).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbstractLocation {
    GlobalScalar(String),
    LocalScalar(String, String),
    ArrayWhole(String),
    Ret(String),
}

impl std::fmt::Display for AbstractLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AbstractLocation::GlobalScalar(g) => write!(f, "{g}"),
            AbstractLocation::LocalScalar(p, n) => write!(f, "{p}::{n}"),
            AbstractLocation::ArrayWhole(a) => write!(f, "{a}[*]"),
            AbstractLocation::Ret(p) => write!(f, "ret({p})"),
        }
    }
}

/// SD_data plus the per-program control relation.
#[derive(Debug, Clone)]
pub struct StaticDeps {
    /// (writer, reader) pairs with defs(writer) ∩ uses(reader) ≠ ∅.
    pub data: BTreeSet<(NodeId, NodeId)>,
    pub control: ControlDeps,
    /// Writers indexed by reader.
    readers: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl StaticDeps {
    pub fn writers_of(&self, reader: NodeId) -> &BTreeSet<NodeId> {
        static EMPTY: BTreeSet<NodeId> = BTreeSet::new();
        self.readers.get(&reader).unwrap_or(&EMPTY)
    }
}

fn scalar_location(program: &Program, proc_index: usize, name: &str) -> AbstractLocation {
    let proc = &program.procedures[proc_index];
    if proc.params.iter().any(|p| p == name) {
        return AbstractLocation::LocalScalar(proc.name.clone(), name.to_string());
    }
    if program.is_global(name) {
        return AbstractLocation::GlobalScalar(name.to_string());
    }
    AbstractLocation::LocalScalar(proc.name.clone(), name.to_string())
}

fn expr_uses(
    program: &Program,
    proc_index: usize,
    expr: &Expr,
    out: &mut BTreeSet<AbstractLocation>,
) {
    match expr {
        Expr::Lit(_) => {}
        Expr::Var(name) => {
            out.insert(scalar_location(program, proc_index, name));
        }
        Expr::ArrayRead(array, idx) => {
            out.insert(AbstractLocation::ArrayWhole(array.clone()));
            expr_uses(program, proc_index, idx, out);
        }
        Expr::Binary(_, l, r) => {
            expr_uses(program, proc_index, l, out);
            expr_uses(program, proc_index, r, out);
        }
        Expr::Unary(_, e) => expr_uses(program, proc_index, e, out),
    }
}

/// Def/use sets of a single statement node (branch bodies excluded: the
/// condition node only uses its condition expression).
pub fn stmt_defs_uses(
    program: &Program,
    proc_index: usize,
    stmt: &Stmt,
) -> (BTreeSet<AbstractLocation>, BTreeSet<AbstractLocation>) {
    let mut defs = BTreeSet::new();
    let mut uses = BTreeSet::new();
    match stmt {
        Stmt::Assign { target, expr, .. } => {
            expr_uses(program, proc_index, expr, &mut uses);
            defs.insert(scalar_location(program, proc_index, target));
        }
        Stmt::Store {
            array,
            index,
            value,
            ..
        } => {
            expr_uses(program, proc_index, index, &mut uses);
            expr_uses(program, proc_index, value, &mut uses);
            // store only: the array is defined, not used
            defs.insert(AbstractLocation::ArrayWhole(array.clone()));
        }
        Stmt::Input { target, .. } => {
            defs.insert(scalar_location(program, proc_index, target));
        }
        Stmt::Print { expr, .. } => expr_uses(program, proc_index, expr, &mut uses),
        Stmt::If { cond, .. } | Stmt::While { cond, .. } => {
            expr_uses(program, proc_index, cond, &mut uses)
        }
        Stmt::Call {
            callee,
            args,
            result,
            ..
        } => {
            for a in args {
                expr_uses(program, proc_index, a, &mut uses);
            }
            if let Some(r) = result {
                uses.insert(AbstractLocation::Ret(callee.clone()));
                defs.insert(scalar_location(program, proc_index, r));
            }
            let callee_index = program.procedure_index(callee).expect("validated");
            for p in &program.procedures[callee_index].params {
                defs.insert(AbstractLocation::LocalScalar(callee.clone(), p.clone()));
            }
        }
        Stmt::Return { expr, .. } => {
            expr_uses(program, proc_index, expr, &mut uses);
            defs.insert(AbstractLocation::Ret(
                program.procedures[proc_index].name.clone(),
            ));
        }
    }
    (defs, uses)
}

/// Def/use sets by node id.
pub fn defs_uses(
    program: &Program,
) -> BTreeMap<NodeId, (BTreeSet<AbstractLocation>, BTreeSet<AbstractLocation>)> {
    crate::minilang::node_table(program)
        .into_iter()
        .map(|info| (info.id, (info.syntactic_defs, info.syntactic_uses)))
        .collect()
}

/// Build SD_data and SD_control for a validated program.
pub fn static_data_deps(program: &Program) -> StaticDeps {
    let table = defs_uses(program);
    let mut data = BTreeSet::new();
    let mut readers: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for (&w, (w_defs, _)) in &table {
        if w_defs.is_empty() {
            continue;
        }
        for (&r, (_, r_uses)) in &table {
            if w_defs.iter().any(|d| r_uses.contains(d)) {
                data.insert((w, r));
                readers.entry(r).or_default().insert(w);
            }
        }
    }
    let control = cfgdep::program_control_deps(program).expect("structured programs reach exit");
    StaticDeps {
        data,
        control,
        readers,
    }
}

/// Writers that may feed `reader`.
pub fn sd_data_of(deps: &StaticDeps, reader: NodeId) -> BTreeSet<NodeId> {
    deps.writers_of(reader).clone()
}

/// Backward closure over SD_data and SD_control, plus call-site closure:
/// including any node of a procedure pulls in all call sites of that
/// procedure. Used to restrict upfront corroboration.
pub fn static_slice(program: &Program, deps: &StaticDeps, criterion: NodeId) -> BTreeSet<NodeId> {
    let call_sites = call_sites_by_callee(program);
    let mut slice: BTreeSet<NodeId> = BTreeSet::new();
    let mut work = vec![criterion];
    while let Some(n) = work.pop() {
        if !slice.insert(n) {
            continue;
        }
        for &w in deps.writers_of(n) {
            work.push(w);
        }
        for &c in deps.control.deps_of(n) {
            work.push(c);
        }
        let owner = program.node_meta(n).proc_index;
        if let Some(sites) = call_sites.get(&owner) {
            for &site in sites {
                work.push(site);
            }
        }
    }
    slice
}

/// callee procedure index → call-site nodes anywhere in the program.
fn call_sites_by_callee(program: &Program) -> BTreeMap<usize, BTreeSet<NodeId>> {
    let mut out: BTreeMap<usize, BTreeSet<NodeId>> = BTreeMap::new();
    for (caller, sites) in cfgdep::call_graph(program) {
        let _ = caller;
        for (site, callee) in sites {
            let ci = program.procedure_index(&callee).expect("validated");
            out.entry(ci).or_default().insert(site);
        }
    }
    out
}

/// Sorted `writer -> reader` lines for the debug dump.
pub fn dump_data(program: &Program, deps: &StaticDeps) -> String {
    let mut lines: Vec<String> = deps
        .data
        .iter()
        .map(|(w, r)| format!("{} -> {}", program.node_label(*w), program.node_label(*r)))
        .collect();
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

    #[test]
    fn p1_data_pairs() {
        let p = parse_program(P1).unwrap();
        let deps = static_data_deps(&p);
        assert!(deps.data.contains(&(nid(0), nid(2)))); // x=1 -> z=x+3
        assert!(deps.data.contains(&(nid(2), nid(3)))); // z=x+3 -> print z
        // y is never read
        assert!(!deps.data.iter().any(|(w, _)| *w == nid(1)));
        assert_eq!(deps.data.len(), 2);
    }

    #[test]
    fn p3_is_context_insensitive() {
        let p = parse_program(P3).unwrap();
        let deps = static_data_deps(&p);
        let (g1, g2) = (nid(0), nid(1));
        let (m2, m3) = (nid(3), nid(4));
        // both call sites read ret(inc), both define inc::v
        assert!(deps.data.contains(&(g2, m2)));
        assert!(deps.data.contains(&(g2, m3)));
        assert!(deps.data.contains(&(m2, g1)));
        assert!(deps.data.contains(&(m3, g1)));
    }

    #[test]
    fn disjoint_variables_produce_no_pairs() {
        let p = parse_program("proc main() {\n  x = 1;\n  y = 2;\n  print 0;\n}\n").unwrap();
        let deps = static_data_deps(&p);
        assert!(deps.data.is_empty());
    }

    #[test]
    fn p3_return_node_defs_uses() {
        use AbstractLocation as L;
        let p = parse_program(P3).unwrap();
        let table = defs_uses(&p);
        let (defs, uses) = &table[&nid(1)]; // return r
        assert_eq!(defs, &[L::Ret("inc".into())].into_iter().collect());
        assert_eq!(
            uses,
            &[L::LocalScalar("inc".into(), "r".into())].into_iter().collect()
        );
    }

    #[test]
    fn array_store_defines_whole_array_without_using_it() {
        use AbstractLocation as L;
        let src = "array a[4];\nproc main() {\n  i = 0;\n  x = 1;\n  a[i] = x;\n}\n";
        let p = parse_program(src).unwrap();
        let table = defs_uses(&p);
        let (defs, uses) = &table[&nid(2)];
        assert_eq!(defs, &[L::ArrayWhole("a".into())].into_iter().collect());
        assert!(!uses.contains(&L::ArrayWhole("a".into())));
        assert_eq!(uses.len(), 2); // i and x
    }

    #[test]
    fn print_of_constant_uses_nothing() {
        let p = parse_program("proc main() {\n  print 7;\n}\n").unwrap();
        let table = defs_uses(&p);
        let (defs, uses) = &table[&nid(0)];
        assert!(defs.is_empty() && uses.is_empty());
    }

    #[test]
    fn sd_data_of_projections() {
        let p = parse_program(P1).unwrap();
        let deps = static_data_deps(&p);
        assert_eq!(sd_data_of(&deps, nid(2)), [nid(0)].into_iter().collect());
        assert!(sd_data_of(&deps, nid(0)).is_empty());

        let p3 = parse_program(P3).unwrap();
        let deps3 = static_data_deps(&p3);
        assert_eq!(
            sd_data_of(&deps3, nid(0)), // g1 reads inc::v
            [nid(3), nid(4)].into_iter().collect()
        );
    }

    #[test]
    fn p1_static_slices() {
        let p = parse_program(P1).unwrap();
        let deps = static_data_deps(&p);
        assert_eq!(
            static_slice(&p, &deps, nid(3)),
            [nid(3), nid(2), nid(0)].into_iter().collect()
        );
        assert_eq!(static_slice(&p, &deps, nid(0)), [nid(0)].into_iter().collect());
    }

    #[test]
    fn p3_static_slice_is_imprecise() {
        let p = parse_program(P3).unwrap();
        let deps = static_data_deps(&p);
        let slice = static_slice(&p, &deps, nid(5)); // print y
        // m3 is included even though only m2 feeds y: context-insensitive
        let expected: BTreeSet<NodeId> =
            [nid(5), nid(3), nid(1), nid(0), nid(2), nid(4)].into_iter().collect();
        assert_eq!(slice, expected);
    }
}
