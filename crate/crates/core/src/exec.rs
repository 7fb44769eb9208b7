//! Deterministic interpreter with three instrumentation levels: plain runs,
//! full-trace recording, and shadow-memory frontier corroboration.
//!
//! Programs compile to per-procedure op vectors with resolved variable slots;
//! the executor is generic over a [`Monitor`] so plain runs pay nothing for
//! the instrumentation hooks.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::minilang::{BinOp, Expr, NodeId, Program, Stmt, UnOp};
use crate::sda::AbstractLocation;

/// The q-th execution of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occurrence {
    pub node: NodeId,
    pub count: u32,
}

impl Occurrence {
    pub fn new(node: NodeId, count: u32) -> Self {
        Occurrence { node, count }
    }
}

impl std::fmt::Display for Occurrence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.node, self.count)
    }
}

/// Concrete runtime address. Frame ids are a monotone activation counter, so
/// addresses are unique within a run and deterministic across identical runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Address {
    Global(u32),
    Frame(u64, u32),
    ArrayElem(u32, i64),
    Ret(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuntimeErrorKind {
    DivByZero,
    ArrayOutOfBounds,
    InputExhausted,
    MissingReturn,
    Overflow,
}

impl RuntimeErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuntimeErrorKind::DivByZero => "div-by-zero",
            RuntimeErrorKind::ArrayOutOfBounds => "array-out-of-bounds",
            RuntimeErrorKind::InputExhausted => "input-exhausted",
            RuntimeErrorKind::MissingReturn => "missing-return",
            RuntimeErrorKind::Overflow => "overflow",
        }
    }
}

impl std::fmt::Display for RuntimeErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("runtime error: {kind} at {occurrence}")]
    Runtime {
        kind: RuntimeErrorKind,
        occurrence: Occurrence,
    },
    #[error("stop occurrence {0} never reached")]
    StopNotReached(Occurrence),
    #[error("frontier ({0}, {1}) is not a static data dependency")]
    InvalidFrontier(NodeId, NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutcome {
    pub printed: Vec<i64>,
    pub steps: u64,
    pub halted_at_criterion: bool,
}

/// A statically possible dependency observed at runtime, annotated with the
/// call-site sets on the activation stack at definition and use time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ContextualizedFrontier {
    pub writer: NodeId,
    pub writer_ctx: BTreeSet<NodeId>,
    pub reader: NodeId,
    pub reader_ctx: BTreeSet<NodeId>,
}

/// One definition-use pair between occurrences, over one address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DuPair {
    pub writer: Occurrence,
    pub writer_ctx: u32,
    pub reader: Occurrence,
    pub reader_ctx: u32,
    pub addr: Address,
    pub read_event: u64,
}

/// One recorded occurrence with its context and activation frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub occ: Occurrence,
    pub ctx: u32,
    pub frame: u64,
}

/// Recorded execution: ordered occurrences with contexts plus the DU pairs.
#[derive(Debug, Clone)]
pub struct Trace {
    pub occurrences: Vec<TraceEntry>,
    /// Context id → set of call-site nodes. Id 0 is the empty set.
    pub contexts: Vec<BTreeSet<NodeId>>,
    pub du_pairs: Vec<DuPair>,
    pub stop: Option<Occurrence>,
    /// Event clock value at which each occurrence's events completed.
    pub completions: HashMap<Occurrence, u64>,
    /// Frame id → procedure index, for mapping addresses to locations.
    pub frame_procs: Vec<u32>,
    pub steps: u64,
}

impl Trace {
    pub fn context(&self, id: u32) -> &BTreeSet<NodeId> {
        &self.contexts[id as usize]
    }

    /// Occurrence count of a node within this trace.
    pub fn count_of(&self, node: NodeId) -> u32 {
        self.occurrences
            .iter()
            .filter(|e| e.occ.node == node)
            .map(|e| e.occ.count)
            .max()
            .unwrap_or(0)
    }

    /// DU pairs whose read happened at or before the completion of `upto`.
    pub fn windowed_du(&self, upto: Occurrence) -> impl Iterator<Item = &DuPair> {
        let limit = self.completions.get(&upto).copied().unwrap_or(0);
        self.du_pairs.iter().filter(move |p| p.read_event <= limit)
    }

    /// Abstract location of a recorded address.
    pub fn address_location(&self, compiled: &Compiled, addr: Address) -> AbstractLocation {
        match addr {
            Address::Global(g) => {
                AbstractLocation::GlobalScalar(compiled.globals[g as usize].clone())
            }
            Address::ArrayElem(a, _) => {
                AbstractLocation::ArrayWhole(compiled.arrays[a as usize].0.clone())
            }
            Address::Frame(fid, slot) => {
                let proc = &compiled.procs[self.frame_procs[fid as usize] as usize];
                AbstractLocation::LocalScalar(
                    proc.name.clone(),
                    proc.local_names[slot as usize].clone(),
                )
            }
            Address::Ret(fid) => {
                let proc = &compiled.procs[self.frame_procs[fid as usize] as usize];
                AbstractLocation::Ret(proc.name.clone())
            }
        }
    }

    /// Debug dump: one `proc:line#count [ctx]` line per occurrence.
    pub fn dump(&self, program: &Program) -> String {
        let mut out = String::new();
        for entry in &self.occurrences {
            let sites: Vec<String> = self.contexts[entry.ctx as usize]
                .iter()
                .map(|n| program.node_label(*n))
                .collect();
            out.push_str(&format!(
                "{}#{} [{}]\n",
                program.node_label(entry.occ.node),
                entry.occ.count,
                sites.join(", ")
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Compilation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum Place {
    Local(u32),
    Global(u32),
}

#[derive(Debug, Clone)]
enum CExpr {
    Lit(i64),
    Local(u32),
    Global(u32),
    ArrayRead(u32, Box<CExpr>),
    Binary(BinOp, Box<CExpr>, Box<CExpr>),
    Unary(UnOp, Box<CExpr>),
}

#[derive(Debug, Clone)]
enum Op {
    Assign {
        node: NodeId,
        place: Place,
        expr: CExpr,
    },
    Store {
        node: NodeId,
        array: u32,
        index: CExpr,
        value: CExpr,
    },
    Input {
        node: NodeId,
        place: Place,
    },
    Print {
        node: NodeId,
        expr: CExpr,
    },
    Branch {
        node: NodeId,
        cond: CExpr,
        on_true: usize,
        on_false: usize,
    },
    Jump {
        target: usize,
    },
    Call {
        node: NodeId,
        callee: u32,
        args: Vec<CExpr>,
        result: Option<Place>,
    },
    Return {
        node: NodeId,
        expr: CExpr,
    },
    EndProc,
}

#[derive(Debug, Clone)]
pub struct CompiledProc {
    pub name: String,
    pub n_params: usize,
    pub local_names: Vec<String>,
    code: Vec<Op>,
}

/// Executable form of a validated program.
#[derive(Debug, Clone)]
pub struct Compiled {
    procs: Vec<CompiledProc>,
    pub globals: Vec<String>,
    pub arrays: Vec<(String, i64)>,
    main: u32,
    node_count: usize,
    node_defs: Vec<BTreeSet<AbstractLocation>>,
    node_uses: Vec<BTreeSet<AbstractLocation>>,
    /// Location → nodes that may define it, for instrumentation planning.
    writers_of_loc: HashMap<AbstractLocation, Vec<NodeId>>,
}

impl Compiled {
    pub fn new(program: &Program) -> Self {
        compile(program)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn node_defs(&self, node: NodeId) -> &BTreeSet<AbstractLocation> {
        &self.node_defs[node.index()]
    }

    pub fn node_uses(&self, node: NodeId) -> &BTreeSet<AbstractLocation> {
        &self.node_uses[node.index()]
    }
}

struct ProcCompiler<'p> {
    program: &'p Program,
    slots: HashMap<String, u32>,
    local_names: Vec<String>,
    global_index: HashMap<String, u32>,
    array_index: HashMap<String, u32>,
    code: Vec<Op>,
}

impl<'p> ProcCompiler<'p> {
    fn place_of(&mut self, name: &str) -> Place {
        if let Some(&slot) = self.slots.get(name) {
            return Place::Local(slot);
        }
        if let Some(&g) = self.global_index.get(name) {
            return Place::Global(g);
        }
        let slot = self.local_names.len() as u32;
        self.slots.insert(name.to_string(), slot);
        self.local_names.push(name.to_string());
        Place::Local(slot)
    }

    fn compile_expr(&mut self, e: &Expr) -> CExpr {
        match e {
            Expr::Lit(v) => CExpr::Lit(*v),
            Expr::Var(name) => match self.place_of(name) {
                Place::Local(s) => CExpr::Local(s),
                Place::Global(g) => CExpr::Global(g),
            },
            Expr::ArrayRead(a, i) => {
                CExpr::ArrayRead(self.array_index[a.as_str()], Box::new(self.compile_expr(i)))
            }
            Expr::Binary(op, l, r) => CExpr::Binary(
                *op,
                Box::new(self.compile_expr(l)),
                Box::new(self.compile_expr(r)),
            ),
            Expr::Unary(op, e) => CExpr::Unary(*op, Box::new(self.compile_expr(e))),
        }
    }

    fn compile_block(&mut self, block: &[Stmt]) {
        for s in block {
            match s {
                Stmt::Assign { node, target, expr } => {
                    let expr = self.compile_expr(expr);
                    let place = self.place_of(target);
                    self.code.push(Op::Assign {
                        node: *node,
                        place,
                        expr,
                    });
                }
                Stmt::Store {
                    node,
                    array,
                    index,
                    value,
                } => {
                    let index = self.compile_expr(index);
                    let value = self.compile_expr(value);
                    self.code.push(Op::Store {
                        node: *node,
                        array: self.array_index[array.as_str()],
                        index,
                        value,
                    });
                }
                Stmt::Input { node, target } => {
                    let place = self.place_of(target);
                    self.code.push(Op::Input { node: *node, place });
                }
                Stmt::Print { node, expr } => {
                    let expr = self.compile_expr(expr);
                    self.code.push(Op::Print { node: *node, expr });
                }
                Stmt::If {
                    node,
                    cond,
                    then_block,
                    else_block,
                } => {
                    let cond = self.compile_expr(cond);
                    let branch_pc = self.code.len();
                    self.code.push(Op::Branch {
                        node: *node,
                        cond,
                        on_true: 0,
                        on_false: 0,
                    });
                    let then_start = self.code.len();
                    self.compile_block(then_block);
                    if else_block.is_empty() {
                        let after = self.code.len();
                        self.patch_branch(branch_pc, then_start, after);
                    } else {
                        let jump_pc = self.code.len();
                        self.code.push(Op::Jump { target: 0 });
                        let else_start = self.code.len();
                        self.compile_block(else_block);
                        let after = self.code.len();
                        self.patch_branch(branch_pc, then_start, else_start);
                        self.code[jump_pc] = Op::Jump { target: after };
                    }
                }
                Stmt::While { node, cond, body } => {
                    let cond_pc = self.code.len();
                    let cond = self.compile_expr(cond);
                    self.code.push(Op::Branch {
                        node: *node,
                        cond,
                        on_true: 0,
                        on_false: 0,
                    });
                    let body_start = self.code.len();
                    self.compile_block(body);
                    self.code.push(Op::Jump { target: cond_pc });
                    let after = self.code.len();
                    self.patch_branch(cond_pc, body_start, after);
                }
                Stmt::Call {
                    node,
                    callee,
                    args,
                    result,
                } => {
                    let args: Vec<CExpr> = args.iter().map(|a| self.compile_expr(a)).collect();
                    let result = result.as_ref().map(|r| self.place_of(r));
                    let callee = self.program.procedure_index(callee).expect("validated") as u32;
                    self.code.push(Op::Call {
                        node: *node,
                        callee,
                        args,
                        result,
                    });
                }
                Stmt::Return { node, expr } => {
                    let expr = self.compile_expr(expr);
                    self.code.push(Op::Return { node: *node, expr });
                }
            }
        }
    }

    fn patch_branch(&mut self, pc: usize, on_true: usize, on_false: usize) {
        if let Op::Branch {
            on_true: t,
            on_false: f,
            ..
        } = &mut self.code[pc]
        {
            *t = on_true;
            *f = on_false;
        }
    }
}

fn compile(program: &Program) -> Compiled {
    let global_index: HashMap<String, u32> = program
        .globals
        .iter()
        .enumerate()
        .map(|(i, g)| (g.clone(), i as u32))
        .collect();
    let array_index: HashMap<String, u32> = program
        .arrays
        .iter()
        .enumerate()
        .map(|(i, (a, _))| (a.clone(), i as u32))
        .collect();

    let mut procs = Vec::new();
    for p in &program.procedures {
        let mut pc = ProcCompiler {
            program,
            slots: HashMap::new(),
            local_names: Vec::new(),
            global_index: global_index.clone(),
            array_index: array_index.clone(),
            code: Vec::new(),
        };
        for prm in &p.params {
            let slot = pc.local_names.len() as u32;
            pc.slots.insert(prm.clone(), slot);
            pc.local_names.push(prm.clone());
        }
        pc.compile_block(&p.body);
        pc.code.push(Op::EndProc);
        procs.push(CompiledProc {
            name: p.name.clone(),
            n_params: p.params.len(),
            local_names: pc.local_names,
            code: pc.code,
        });
    }

    let table = crate::minilang::node_table(program);
    let mut node_defs = vec![BTreeSet::new(); program.node_count()];
    let mut node_uses = vec![BTreeSet::new(); program.node_count()];
    let mut writers_of_loc: HashMap<AbstractLocation, Vec<NodeId>> = HashMap::new();
    for info in table {
        for d in &info.syntactic_defs {
            writers_of_loc.entry(d.clone()).or_default().push(info.id);
        }
        node_defs[info.id.index()] = info.syntactic_defs;
        node_uses[info.id.index()] = info.syntactic_uses;
    }

    Compiled {
        procs,
        globals: program.globals.clone(),
        arrays: program.arrays.clone(),
        main: program.main_index() as u32,
        node_count: program.node_count(),
        node_defs,
        node_uses,
        writers_of_loc,
    }
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Instrumentation hooks. Default implementations are empty so a plain run
/// compiles down to the bare interpreter loop.
pub(crate) trait Monitor {
    #[inline]
    fn on_node(&mut self, _occ: Occurrence, _ctx: u32, _frame: u64) {}
    #[inline]
    fn on_read(&mut self, _addr: Address, _occ: Occurrence, _ctx: u32) {}
    #[inline]
    fn on_write(&mut self, _addr: Address, _occ: Occurrence, _ctx: u32) {}
    #[inline]
    fn on_frame(&mut self, _frame_id: u64, _proc: u32) {}
    #[inline]
    fn on_frame_pop(&mut self) {}
    /// A new call-site set was interned.
    #[inline]
    fn on_new_context(&mut self, _id: u32, _sites: &BTreeSet<NodeId>) {}
    /// Fired when an occurrence's events are complete. For a result-binding
    /// call that is after the callee returned and the result was bound; for
    /// a void call it is at entry, after argument reads and parameter writes.
    #[inline]
    fn on_complete(&mut self, _occ: Occurrence) {}
}

pub(crate) struct NoopMonitor;
impl Monitor for NoopMonitor {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StopMode {
    None,
    /// Halt right after the occurrence completes.
    HaltAt(Occurrence),
}

impl StopMode {
    fn target(&self) -> Option<Occurrence> {
        match self {
            StopMode::None => None,
            StopMode::HaltAt(o) => Some(*o),
        }
    }
}

struct Frame {
    proc: u32,
    pc: usize,
    frame_id: u64,
    ctx: u32,
    locals: Vec<i64>,
    pending: Option<PendingCall>,
}

struct PendingCall {
    occ: Occurrence,
    result: Option<Place>,
    callee_frame: u64,
    halt_after: bool,
}

/// Interned call-site sets; id 0 is the empty set of the main frame.
struct CtxInterner {
    sets: Vec<BTreeSet<NodeId>>,
    by_set: HashMap<BTreeSet<NodeId>, u32>,
    memo: HashMap<(u32, NodeId), u32>,
}

impl CtxInterner {
    fn new() -> Self {
        let empty = BTreeSet::new();
        CtxInterner {
            sets: vec![empty.clone()],
            by_set: HashMap::from([(empty, 0)]),
            memo: HashMap::new(),
        }
    }

    /// Extend `parent` with one call site; returns (id, newly created).
    fn push_site(&mut self, parent: u32, site: NodeId) -> (u32, bool) {
        if let Some(&id) = self.memo.get(&(parent, site)) {
            return (id, false);
        }
        let mut set = self.sets[parent as usize].clone();
        set.insert(site); // recursion dedups naturally
        let (id, created) = match self.by_set.get(&set) {
            Some(&i) => (i, false),
            None => {
                let i = self.sets.len() as u32;
                self.sets.push(set.clone());
                self.by_set.insert(set, i);
                (i, true)
            }
        };
        self.memo.insert((parent, site), id);
        (id, created)
    }
}

pub(crate) struct ExecRun {
    pub printed: Vec<i64>,
    pub steps: u64,
    pub halted: bool,
    pub counts: Vec<u32>,
    pub contexts: Vec<BTreeSet<NodeId>>,
    pub stop_ctx: Option<u32>,
}

struct Machine<'a> {
    input: &'a [i64],
    input_pos: usize,
    globals: Vec<i64>,
    arrays: Vec<Vec<i64>>,
    printed: Vec<i64>,
    counts: Vec<u32>,
    steps: u64,
    frames: Vec<Frame>,
    next_frame: u64,
    interner: CtxInterner,
    stop: StopMode,
    stop_armed: bool,
    stop_ctx: Option<u32>,
    halted: bool,
}

impl<'a> Machine<'a> {
    fn rt_err(&self, kind: RuntimeErrorKind, occ: Occurrence) -> ExecError {
        ExecError::Runtime {
            kind,
            occurrence: occ,
        }
    }
}

fn binop(op: BinOp, l: i64, r: i64, occ: Occurrence, m: &Machine) -> Result<i64, ExecError> {
    let of_bool = |b: bool| if b { 1 } else { 0 };
    match op {
        BinOp::Add => l
            .checked_add(r)
            .ok_or_else(|| m.rt_err(RuntimeErrorKind::Overflow, occ)),
        BinOp::Sub => l
            .checked_sub(r)
            .ok_or_else(|| m.rt_err(RuntimeErrorKind::Overflow, occ)),
        BinOp::Mul => l
            .checked_mul(r)
            .ok_or_else(|| m.rt_err(RuntimeErrorKind::Overflow, occ)),
        BinOp::Div => {
            if r == 0 {
                Err(m.rt_err(RuntimeErrorKind::DivByZero, occ))
            } else {
                l.checked_div(r)
                    .ok_or_else(|| m.rt_err(RuntimeErrorKind::Overflow, occ))
            }
        }
        BinOp::Mod => {
            if r == 0 {
                Err(m.rt_err(RuntimeErrorKind::DivByZero, occ))
            } else {
                l.checked_rem(r)
                    .ok_or_else(|| m.rt_err(RuntimeErrorKind::Overflow, occ))
            }
        }
        BinOp::Eq => Ok(of_bool(l == r)),
        BinOp::Ne => Ok(of_bool(l != r)),
        BinOp::Lt => Ok(of_bool(l < r)),
        BinOp::Le => Ok(of_bool(l <= r)),
        BinOp::Gt => Ok(of_bool(l > r)),
        BinOp::Ge => Ok(of_bool(l >= r)),
        BinOp::And => Ok(of_bool(l != 0 && r != 0)),
        BinOp::Or => Ok(of_bool(l != 0 || r != 0)),
    }
}

fn eval<M: Monitor>(
    e: &CExpr,
    mach: &mut Machine,
    mon: &mut M,
    occ: Occurrence,
    ctx: u32,
) -> Result<i64, ExecError> {
    match e {
        CExpr::Lit(v) => Ok(*v),
        CExpr::Local(slot) => {
            let frame = mach.frames.last().expect("active frame");
            let v = frame.locals[*slot as usize];
            mon.on_read(Address::Frame(frame.frame_id, *slot), occ, ctx);
            Ok(v)
        }
        CExpr::Global(g) => {
            let v = mach.globals[*g as usize];
            mon.on_read(Address::Global(*g), occ, ctx);
            Ok(v)
        }
        CExpr::ArrayRead(aid, idx) => {
            let i = eval(idx, mach, mon, occ, ctx)?;
            let arr = &mach.arrays[*aid as usize];
            if i < 0 || i as usize >= arr.len() {
                return Err(mach.rt_err(RuntimeErrorKind::ArrayOutOfBounds, occ));
            }
            let v = arr[i as usize];
            mon.on_read(Address::ArrayElem(*aid, i), occ, ctx);
            Ok(v)
        }
        CExpr::Binary(op, l, r) => {
            // both operands always evaluated, no short-circuit
            let lv = eval(l, mach, mon, occ, ctx)?;
            let rv = eval(r, mach, mon, occ, ctx)?;
            binop(*op, lv, rv, occ, mach)
        }
        CExpr::Unary(op, inner) => {
            let v = eval(inner, mach, mon, occ, ctx)?;
            match op {
                UnOp::Neg => v
                    .checked_neg()
                    .ok_or_else(|| mach.rt_err(RuntimeErrorKind::Overflow, occ)),
                UnOp::Not => Ok(if v == 0 { 1 } else { 0 }),
            }
        }
    }
}

fn write_place<M: Monitor>(
    place: Place,
    value: i64,
    mach: &mut Machine,
    mon: &mut M,
    occ: Occurrence,
    ctx: u32,
) {
    match place {
        Place::Local(slot) => {
            let frame = mach.frames.last_mut().expect("active frame");
            frame.locals[slot as usize] = value;
            let addr = Address::Frame(frame.frame_id, slot);
            mon.on_write(addr, occ, ctx);
        }
        Place::Global(g) => {
            mach.globals[g as usize] = value;
            mon.on_write(Address::Global(g), occ, ctx);
        }
    }
}

pub(crate) fn execute<M: Monitor>(
    compiled: &Compiled,
    input: &[i64],
    stop: StopMode,
    mon: &mut M,
) -> Result<ExecRun, ExecError> {
    let main = compiled.main;
    let mut mach = Machine {
        input,
        input_pos: 0,
        globals: vec![0; compiled.globals.len()],
        arrays: compiled
            .arrays
            .iter()
            .map(|(_, l)| vec![0; *l as usize])
            .collect(),
        printed: Vec::new(),
        counts: vec![0; compiled.node_count],
        steps: 0,
        frames: Vec::new(),
        next_frame: 0,
        interner: CtxInterner::new(),
        stop,
        stop_armed: stop.target().is_some(),
        stop_ctx: None,
        halted: false,
    };
    mach.frames.push(Frame {
        proc: main,
        pc: 0,
        frame_id: 0,
        ctx: 0,
        locals: vec![0; compiled.procs[main as usize].local_names.len()],
        pending: None,
    });
    mach.next_frame = 1;
    mon.on_frame(0, main);

    while !mach.halted {
        let frame = mach.frames.last().expect("frame");
        let (proc, pc, ctx, fid) = (frame.proc, frame.pc, frame.ctx, frame.frame_id);
        let op = &compiled.procs[proc as usize].code[pc];
        match op {
            Op::Jump { target } => {
                mach.frames.last_mut().unwrap().pc = *target;
            }
            Op::Assign { node, place, expr } => {
                let occ = enter(&mut mach, mon, *node, ctx, fid);
                let is_stop = stop_hits(&mut mach, occ, ctx);
                let v = eval(expr, &mut mach, mon, occ, ctx)?;
                write_place(*place, v, &mut mach, mon, occ, ctx);
                mach.frames.last_mut().unwrap().pc = pc + 1;
                mon.on_complete(occ);
                if is_stop {
                    halt_at_stop(&mut mach);
                }
            }
            Op::Store {
                node,
                array,
                index,
                value,
            } => {
                let occ = enter(&mut mach, mon, *node, ctx, fid);
                let is_stop = stop_hits(&mut mach, occ, ctx);
                let i = eval(index, &mut mach, mon, occ, ctx)?;
                let v = eval(value, &mut mach, mon, occ, ctx)?;
                let arr = &mut mach.arrays[*array as usize];
                if i < 0 || i as usize >= arr.len() {
                    return Err(mach.rt_err(RuntimeErrorKind::ArrayOutOfBounds, occ));
                }
                arr[i as usize] = v;
                mon.on_write(Address::ArrayElem(*array, i), occ, ctx);
                mach.frames.last_mut().unwrap().pc = pc + 1;
                mon.on_complete(occ);
                if is_stop {
                    halt_at_stop(&mut mach);
                }
            }
            Op::Input { node, place } => {
                let occ = enter(&mut mach, mon, *node, ctx, fid);
                let is_stop = stop_hits(&mut mach, occ, ctx);
                if mach.input_pos >= mach.input.len() {
                    return Err(mach.rt_err(RuntimeErrorKind::InputExhausted, occ));
                }
                let v = mach.input[mach.input_pos];
                mach.input_pos += 1;
                write_place(*place, v, &mut mach, mon, occ, ctx);
                mach.frames.last_mut().unwrap().pc = pc + 1;
                mon.on_complete(occ);
                if is_stop {
                    halt_at_stop(&mut mach);
                }
            }
            Op::Print { node, expr } => {
                let occ = enter(&mut mach, mon, *node, ctx, fid);
                let is_stop = stop_hits(&mut mach, occ, ctx);
                let v = eval(expr, &mut mach, mon, occ, ctx)?;
                mach.printed.push(v);
                mach.frames.last_mut().unwrap().pc = pc + 1;
                mon.on_complete(occ);
                if is_stop {
                    halt_at_stop(&mut mach);
                }
            }
            Op::Branch {
                node,
                cond,
                on_true,
                on_false,
            } => {
                let occ = enter(&mut mach, mon, *node, ctx, fid);
                let is_stop = stop_hits(&mut mach, occ, ctx);
                let c = eval(cond, &mut mach, mon, occ, ctx)?;
                mach.frames.last_mut().unwrap().pc = if c != 0 { *on_true } else { *on_false };
                mon.on_complete(occ);
                if is_stop {
                    halt_at_stop(&mut mach);
                }
            }
            Op::Call {
                node,
                callee,
                args,
                result,
            } => {
                let occ = enter(&mut mach, mon, *node, ctx, fid);
                let is_stop = stop_hits(&mut mach, occ, ctx);
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(eval(a, &mut mach, mon, occ, ctx)?);
                }
                let callee_proc = &compiled.procs[*callee as usize];
                let frame_id = mach.next_frame;
                mach.next_frame += 1;
                mon.on_frame(frame_id, *callee);
                // parameter writes belong to the call node
                for i in 0..values.len() {
                    mon.on_write(Address::Frame(frame_id, i as u32), occ, ctx);
                }
                if result.is_none() {
                    // a void call's own events end at entry; the callee body
                    // is not part of the criterion's reads
                    mon.on_complete(occ);
                    if is_stop {
                        halt_at_stop(&mut mach);
                        break;
                    }
                }
                let mut locals = vec![0i64; callee_proc.local_names.len()];
                locals[..values.len()].copy_from_slice(&values);
                let (child_ctx, created) = mach.interner.push_site(ctx, *node);
                if created {
                    mon.on_new_context(child_ctx, &mach.interner.sets[child_ctx as usize]);
                }
                let caller = mach.frames.last_mut().unwrap();
                caller.pc = pc + 1;
                caller.pending = Some(PendingCall {
                    occ,
                    result: *result,
                    callee_frame: frame_id,
                    halt_after: is_stop && result.is_some(),
                });
                mach.frames.push(Frame {
                    proc: *callee,
                    pc: 0,
                    frame_id,
                    ctx: child_ctx,
                    locals,
                    pending: None,
                });
            }
            Op::Return { node, expr } => {
                let occ = enter(&mut mach, mon, *node, ctx, fid);
                let is_stop = stop_hits(&mut mach, occ, ctx);
                let v = eval(expr, &mut mach, mon, occ, ctx)?;
                mon.on_write(Address::Ret(fid), occ, ctx);
                mach.frames.pop();
                mon.on_frame_pop();
                // the return's own events are done; the caller-side binding
                // belongs to the call occurrence
                mon.on_complete(occ);
                if is_stop {
                    halt_at_stop(&mut mach);
                    break;
                }
                bind_return(&mut mach, mon, Some(v))?;
            }
            Op::EndProc => {
                if mach.frames.len() == 1 {
                    break; // main finished
                }
                mach.frames.pop();
                mon.on_frame_pop();
                bind_return(&mut mach, mon, None)?;
            }
        }
    }

    if mach.stop_armed && !mach.halted {
        return Err(ExecError::StopNotReached(stop.target().expect("armed")));
    }
    Ok(ExecRun {
        printed: mach.printed,
        steps: mach.steps,
        halted: mach.halted,
        counts: mach.counts,
        contexts: mach.interner.sets,
        stop_ctx: mach.stop_ctx,
    })
}

fn enter<M: Monitor>(
    mach: &mut Machine,
    mon: &mut M,
    node: NodeId,
    ctx: u32,
    frame: u64,
) -> Occurrence {
    let count = {
        let c = &mut mach.counts[node.index()];
        *c += 1;
        *c
    };
    mach.steps += 1;
    let occ = Occurrence { node, count };
    mon.on_node(occ, ctx, frame);
    occ
}

fn stop_hits(mach: &mut Machine, occ: Occurrence, ctx: u32) -> bool {
    if !mach.stop_armed {
        return false;
    }
    match mach.stop.target() {
        Some(t) if t == occ => {
            mach.stop_ctx = Some(ctx);
            true
        }
        _ => false,
    }
}

fn halt_at_stop(mach: &mut Machine) {
    mach.stop_armed = false;
    mach.halted = true;
}

/// Bind a finished callee back into the caller. `value` is `Some` when the
/// callee executed a return statement.
fn bind_return<M: Monitor>(
    mach: &mut Machine,
    mon: &mut M,
    value: Option<i64>,
) -> Result<(), ExecError> {
    let caller = mach.frames.last_mut().expect("caller frame");
    let pending = caller.pending.take().expect("return without pending call");
    let caller_ctx = caller.ctx;
    match (pending.result, value) {
        (Some(place), Some(v)) => {
            mon.on_read(Address::Ret(pending.callee_frame), pending.occ, caller_ctx);
            write_place(place, v, mach, mon, pending.occ, caller_ctx);
            mon.on_complete(pending.occ);
        }
        (Some(_), None) => {
            return Err(ExecError::Runtime {
                kind: RuntimeErrorKind::MissingReturn,
                occurrence: pending.occ,
            });
        }
        (None, _) => {}
    }
    if pending.halt_after {
        mach.halted = true;
        mach.stop_armed = false;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Trace recording
// ---------------------------------------------------------------------------

struct TraceMonitor {
    occurrences: Vec<TraceEntry>,
    last_writer: HashMap<Address, (Occurrence, u32)>,
    du: HashMap<(Occurrence, u32, Occurrence, u32, Address), u64>,
    events: u64,
    completions: HashMap<Occurrence, u64>,
    contexts: Vec<BTreeSet<NodeId>>,
    frame_procs: Vec<u32>,
}

impl TraceMonitor {
    fn new() -> Self {
        TraceMonitor {
            occurrences: Vec::new(),
            last_writer: HashMap::new(),
            du: HashMap::new(),
            events: 0,
            completions: HashMap::new(),
            contexts: vec![BTreeSet::new()],
            frame_procs: Vec::new(),
        }
    }

    fn into_trace(self, stop: Option<Occurrence>) -> Trace {
        let steps = self.occurrences.len() as u64;
        let mut du_pairs: Vec<DuPair> = self
            .du
            .into_iter()
            .map(|((w, wctx, r, rctx, addr), ev)| DuPair {
                writer: w,
                writer_ctx: wctx,
                reader: r,
                reader_ctx: rctx,
                addr,
                read_event: ev,
            })
            .collect();
        du_pairs.sort();
        Trace {
            occurrences: self.occurrences,
            contexts: self.contexts,
            du_pairs,
            stop,
            completions: self.completions,
            frame_procs: self.frame_procs,
            steps,
        }
    }
}

impl Monitor for TraceMonitor {
    fn on_node(&mut self, occ: Occurrence, ctx: u32, frame: u64) {
        self.occurrences.push(TraceEntry { occ, ctx, frame });
    }

    fn on_read(&mut self, addr: Address, occ: Occurrence, ctx: u32) {
        self.events += 1;
        if let Some(&(w, wctx)) = self.last_writer.get(&addr) {
            self.du.entry((w, wctx, occ, ctx, addr)).or_insert(self.events);
        }
    }

    fn on_write(&mut self, addr: Address, occ: Occurrence, ctx: u32) {
        self.events += 1;
        self.last_writer.insert(addr, (occ, ctx));
    }

    fn on_frame(&mut self, frame_id: u64, proc: u32) {
        debug_assert_eq!(frame_id as usize, self.frame_procs.len());
        self.frame_procs.push(proc);
    }

    fn on_new_context(&mut self, id: u32, sites: &BTreeSet<NodeId>) {
        debug_assert_eq!(id as usize, self.contexts.len());
        self.contexts.push(sites.clone());
    }

    fn on_complete(&mut self, occ: Occurrence) {
        self.completions.insert(occ, self.events);
    }
}

/// Record occurrences, contexts and DU pairs. With `stop`, recording halts
/// right after the stop occurrence completes; otherwise the full run is
/// recorded.
pub fn record_trace(
    program: &Program,
    input: &[i64],
    stop: Option<Occurrence>,
) -> Result<Trace, ExecError> {
    let compiled = Compiled::new(program);
    record_trace_compiled(&compiled, input, stop)
}

pub(crate) fn record_trace_compiled(
    compiled: &Compiled,
    input: &[i64],
    stop: Option<Occurrence>,
) -> Result<Trace, ExecError> {
    let mut mon = TraceMonitor::new();
    let mode = match stop {
        Some(o) => StopMode::HaltAt(o),
        None => StopMode::None,
    };
    execute(compiled, input, mode, &mut mon)?;
    Ok(mon.into_trace(stop))
}

/// Record the full run, tolerating a runtime error: the partial trace up to
/// the failure is returned alongside the error.
pub(crate) fn record_trace_full(
    compiled: &Compiled,
    input: &[i64],
) -> (Trace, Option<ExecError>) {
    let mut mon = TraceMonitor::new();
    match execute(compiled, input, StopMode::None, &mut mon) {
        Ok(_) => (mon.into_trace(None), None),
        Err(e) => (mon.into_trace(None), Some(e)),
    }
}

// ---------------------------------------------------------------------------
// Plain runs
// ---------------------------------------------------------------------------

/// Execute to completion, collecting printed values.
pub fn run(program: &Program, input: &[i64]) -> Result<ExecOutcome, ExecError> {
    let compiled = Compiled::new(program);
    run_compiled(&compiled, input)
}

pub(crate) fn run_compiled(compiled: &Compiled, input: &[i64]) -> Result<ExecOutcome, ExecError> {
    let run = execute(compiled, input, StopMode::None, &mut NoopMonitor)?;
    Ok(ExecOutcome {
        printed: run.printed,
        steps: run.steps,
        halted_at_criterion: run.halted,
    })
}

/// Number of times `node` executes in a full run; 0 if never executed.
pub fn count_occurrences(program: &Program, input: &[i64], node: NodeId) -> Result<u32, ExecError> {
    let compiled = Compiled::new(program);
    let run = execute(&compiled, input, StopMode::None, &mut NoopMonitor)?;
    Ok(run.counts[node.index()])
}

// ---------------------------------------------------------------------------
// Shadow-memory corroboration
// ---------------------------------------------------------------------------

struct ShadowMonitor {
    watched_reader: Vec<bool>,
    instrumented_writer: Vec<bool>,
    pairs: HashSet<(NodeId, NodeId)>,
    /// Address → last potential writer of a watched location, with context.
    shadow: HashMap<Address, (NodeId, u32)>,
    exercised: HashSet<(NodeId, u32, NodeId, u32)>,
    max_shadow: usize,
    contexts: Vec<BTreeSet<NodeId>>,
}

impl Monitor for ShadowMonitor {
    fn on_read(&mut self, addr: Address, occ: Occurrence, ctx: u32) {
        if !self.watched_reader[occ.node.index()] {
            return;
        }
        if let Some(&(w, wctx)) = self.shadow.get(&addr) {
            if self.pairs.contains(&(w, occ.node)) {
                self.exercised.insert((w, wctx, occ.node, ctx));
            }
        }
    }

    fn on_write(&mut self, addr: Address, occ: Occurrence, ctx: u32) {
        if !self.instrumented_writer[occ.node.index()] {
            return;
        }
        self.shadow.insert(addr, (occ.node, ctx));
        if self.shadow.len() > self.max_shadow {
            self.max_shadow = self.shadow.len();
        }
    }

    fn on_new_context(&mut self, id: u32, sites: &BTreeSet<NodeId>) {
        debug_assert_eq!(id as usize, self.contexts.len());
        self.contexts.push(sites.clone());
    }
}

pub(crate) struct CorroborationOutcome {
    pub exercised: BTreeSet<ContextualizedFrontier>,
    pub steps: u64,
    pub max_shadow: usize,
}

/// Run once with shadow instrumentation for `f2c`, halting after `stop`.
///
/// Every node that may define an address used by a watched reader
/// participates in shadow updates, watched or not, so a watched reader
/// always sees its true last writer.
pub(crate) fn corroborate_compiled(
    compiled: &Compiled,
    input: &[i64],
    f2c: &BTreeSet<(NodeId, NodeId)>,
    stop: Occurrence,
) -> Result<CorroborationOutcome, ExecError> {
    let n = compiled.node_count;
    let mut watched_reader = vec![false; n];
    let mut instrumented_writer = vec![false; n];
    for (_, r) in f2c {
        if !watched_reader[r.index()] {
            watched_reader[r.index()] = true;
            for loc in &compiled.node_uses[r.index()] {
                if let Some(writers) = compiled.writers_of_loc.get(loc) {
                    for w in writers {
                        instrumented_writer[w.index()] = true;
                    }
                }
            }
        }
    }

    let mut mon = ShadowMonitor {
        watched_reader,
        instrumented_writer,
        pairs: f2c.iter().copied().collect(),
        shadow: HashMap::new(),
        exercised: HashSet::new(),
        max_shadow: 0,
        contexts: vec![BTreeSet::new()],
    };
    let run = execute(compiled, input, StopMode::HaltAt(stop), &mut mon)?;

    let exercised = mon
        .exercised
        .iter()
        .map(|&(w, wctx, r, rctx)| ContextualizedFrontier {
            writer: w,
            writer_ctx: mon.contexts[wctx as usize].clone(),
            reader: r,
            reader_ctx: mon.contexts[rctx as usize].clone(),
        })
        .collect();
    Ok(CorroborationOutcome {
        exercised,
        steps: run.steps,
        max_shadow: mon.max_shadow,
    })
}

/// Which of the given frontier pairs are exercised at or before `stop`.
pub fn corroborate_frontiers(
    program: &Program,
    input: &[i64],
    f2c: &BTreeSet<(NodeId, NodeId)>,
    stop: Occurrence,
) -> Result<BTreeSet<(NodeId, NodeId)>, ExecError> {
    let compiled = Compiled::new(program);
    let outcome = corroborate_compiled(&compiled, input, f2c, stop)?;
    Ok(outcome
        .exercised
        .into_iter()
        .map(|cf| (cf.writer, cf.reader))
        .collect())
}

/// Contextualized variant: every distinct (writer ctx, reader ctx) pair of an
/// exercised frontier appears. Rejects pairs that are not static data
/// dependencies.
pub fn corroborate_frontiers_ctx(
    program: &Program,
    input: &[i64],
    f2c: &BTreeSet<(NodeId, NodeId)>,
    stop: Occurrence,
) -> Result<BTreeSet<ContextualizedFrontier>, ExecError> {
    let compiled = Compiled::new(program);
    for &(w, r) in f2c {
        let defs = &compiled.node_defs[w.index()];
        let uses = &compiled.node_uses[r.index()];
        if !defs.iter().any(|d| uses.contains(d)) {
            return Err(ExecError::InvalidFrontier(w, r));
        }
    }
    Ok(corroborate_compiled(&compiled, input, f2c, stop)?.exercised)
}

// ---------------------------------------------------------------------------
// Criterion resolution support
// ---------------------------------------------------------------------------

pub(crate) struct ResolvedOccurrence {
    pub count: u32,
    pub ctx: BTreeSet<NodeId>,
    /// Steps executed by the resolving pre-run.
    pub steps: u64,
}

/// Monitor that remembers the context of every occurrence of one node.
struct NodeCtxMonitor {
    node: NodeId,
    last: Option<(u32, u32)>, // (count, ctx)
}

impl Monitor for NodeCtxMonitor {
    fn on_node(&mut self, occ: Occurrence, ctx: u32, _frame: u64) {
        if occ.node == self.node {
            self.last = Some((occ.count, ctx));
        }
    }
}

/// Resolve the q-th occurrence of a node with an early-stopped run.
pub(crate) fn resolve_nth(
    compiled: &Compiled,
    input: &[i64],
    node: NodeId,
    q: u32,
) -> Result<ResolvedOccurrence, ExecError> {
    let stop = Occurrence { node, count: q };
    let run = execute(compiled, input, StopMode::HaltAt(stop), &mut NoopMonitor)?;
    let ctx = run
        .stop_ctx
        .map(|c| run.contexts[c as usize].clone())
        .unwrap_or_default();
    Ok(ResolvedOccurrence {
        count: q,
        ctx,
        steps: run.steps,
    })
}

/// Resolve the last occurrence of a node with a full counting run.
pub(crate) fn resolve_last(
    compiled: &Compiled,
    input: &[i64],
    node: NodeId,
) -> Result<Option<ResolvedOccurrence>, ExecError> {
    let mut mon = NodeCtxMonitor { node, last: None };
    let run = execute(compiled, input, StopMode::None, &mut mon)?;
    Ok(mon.last.map(|(count, ctx)| ResolvedOccurrence {
        count,
        ctx: run.contexts[ctx as usize].clone(),
        steps: run.steps,
    }))
}

/// Full counting run; exposes per-node occurrence counts.
pub(crate) fn count_all(compiled: &Compiled, input: &[i64]) -> Result<ExecRun, ExecError> {
    execute(compiled, input, StopMode::None, &mut NoopMonitor)
}

/// Context of every occurrence of every node, for shared criterion
/// resolution in batch slicing.
pub(crate) struct AllCtxMonitor {
    pub per_node: BTreeMap<NodeId, Vec<u32>>,
    pub contexts: Vec<BTreeSet<NodeId>>,
}

impl AllCtxMonitor {
    pub fn new() -> Self {
        AllCtxMonitor {
            per_node: BTreeMap::new(),
            contexts: vec![BTreeSet::new()],
        }
    }
}

impl Monitor for AllCtxMonitor {
    fn on_node(&mut self, occ: Occurrence, ctx: u32, _frame: u64) {
        self.per_node.entry(occ.node).or_default().push(ctx);
    }

    fn on_new_context(&mut self, id: u32, sites: &BTreeSet<NodeId>) {
        debug_assert_eq!(id as usize, self.contexts.len());
        self.contexts.push(sites.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::fixtures::*;
    use crate::minilang::parse_program;

    fn nid(i: u32) -> NodeId {
        NodeId(i)
    }

    fn occ(i: u32, c: u32) -> Occurrence {
        Occurrence::new(nid(i), c)
    }

    #[test]
    fn p1_runs_to_four() {
        let p = parse_program(P1).unwrap();
        let out = run(&p, &[]).unwrap();
        assert_eq!(out.printed, vec![4]);
        assert_eq!(out.steps, 4);
    }

    #[test]
    fn p2_takes_then_branch() {
        let p = parse_program(P2).unwrap();
        assert_eq!(run(&p, &[5]).unwrap().printed, vec![1]);
        assert_eq!(run(&p, &[-2]).unwrap().printed, vec![2]);
    }

    #[test]
    fn empty_input_exhausts() {
        let p = parse_program("proc main() {\n  input x;\n  print x;\n}\n").unwrap();
        assert!(matches!(
            run(&p, &[]).unwrap_err(),
            ExecError::Runtime {
                kind: RuntimeErrorKind::InputExhausted,
                ..
            }
        ));
    }

    #[test]
    fn arithmetic_errors() {
        let p = parse_program("proc main() {\n  x = 1 / 0;\n}\n").unwrap();
        assert!(matches!(
            run(&p, &[]).unwrap_err(),
            ExecError::Runtime {
                kind: RuntimeErrorKind::DivByZero,
                ..
            }
        ));
        let p = parse_program("proc main() {\n  x = 9223372036854775807 + 1;\n}\n").unwrap();
        assert!(matches!(
            run(&p, &[]).unwrap_err(),
            ExecError::Runtime {
                kind: RuntimeErrorKind::Overflow,
                ..
            }
        ));
        let p = parse_program("array a[2];\nproc main() {\n  x = a[5];\n}\n").unwrap();
        assert!(matches!(
            run(&p, &[]).unwrap_err(),
            ExecError::Runtime {
                kind: RuntimeErrorKind::ArrayOutOfBounds,
                ..
            }
        ));
    }

    #[test]
    fn logical_ops_evaluate_both_sides() {
        let p = parse_program("proc main() {\n  x = 1 || 1 / 0;\n}\n").unwrap();
        assert!(matches!(
            run(&p, &[]).unwrap_err(),
            ExecError::Runtime {
                kind: RuntimeErrorKind::DivByZero,
                ..
            }
        ));
    }

    #[test]
    fn count_occurrences_examples() {
        let p1 = parse_program(P1).unwrap();
        assert_eq!(count_occurrences(&p1, &[], nid(2)).unwrap(), 1);

        let loopy =
            parse_program("proc main() {\n  i = 0;\n  while (i < 3) {\n    i = i + 1;\n  }\n}\n")
                .unwrap();
        assert_eq!(count_occurrences(&loopy, &[], nid(2)).unwrap(), 3);
        assert_eq!(count_occurrences(&loopy, &[], nid(1)).unwrap(), 4);

        let p2 = parse_program(P2).unwrap();
        assert_eq!(count_occurrences(&p2, &[5], nid(3)).unwrap(), 0);
    }

    #[test]
    fn p1_trace_du_pairs() {
        let p = parse_program(P1).unwrap();
        let t = record_trace(&p, &[], Some(occ(3, 1))).unwrap();
        let pairs: BTreeSet<(Occurrence, Occurrence)> =
            t.du_pairs.iter().map(|d| (d.writer, d.reader)).collect();
        assert_eq!(
            pairs,
            [(occ(0, 1), occ(2, 1)), (occ(2, 1), occ(3, 1))]
                .into_iter()
                .collect()
        );
        assert_eq!(t.stop, Some(occ(3, 1)));
        assert_eq!(t.occurrences.len(), 4);
    }

    #[test]
    fn p3_trace_records_return_pair_with_context() {
        let p = parse_program(P3).unwrap();
        // nodes: 0 g1, 1 g2, 2 m1, 3 m2, 4 m3, 5 m4
        let t = record_trace(&p, &[], Some(occ(5, 1))).unwrap();
        let ret_pair = t
            .du_pairs
            .iter()
            .find(|d| matches!(d.addr, Address::Ret(_)) && d.reader.node == nid(3))
            .expect("return value pair");
        assert_eq!(ret_pair.writer, occ(1, 1));
        assert_eq!(
            t.context(ret_pair.writer_ctx),
            &[nid(3)].into_iter().collect()
        );
        assert!(t.context(ret_pair.reader_ctx).is_empty());
        // the call's completion covers its resume-time return-value read
        assert!(t.completions[&occ(3, 1)] >= ret_pair.read_event);
    }

    #[test]
    fn trace_of_pure_print_has_no_pairs() {
        let p = parse_program("proc main() {\n  print 0;\n}\n").unwrap();
        let t = record_trace(&p, &[], None).unwrap();
        assert!(t.du_pairs.is_empty());
    }

    #[test]
    fn trace_determinism() {
        let p = parse_program(P3).unwrap();
        let a = record_trace(&p, &[], None).unwrap();
        let b = record_trace(&p, &[], None).unwrap();
        assert_eq!(a.occurrences, b.occurrences);
        assert_eq!(a.du_pairs, b.du_pairs);
    }

    #[test]
    fn stop_not_reached() {
        let p = parse_program(P2).unwrap();
        let err = record_trace(&p, &[5], Some(occ(3, 1))).unwrap_err();
        assert!(matches!(err, ExecError::StopNotReached(_)));
    }

    #[test]
    fn corroborate_p1() {
        let p = parse_program(P1).unwrap();
        // (n2,n3) is not statically possible; the plain variant tolerates it
        let f2c: BTreeSet<_> = [(nid(0), nid(2)), (nid(1), nid(2))].into_iter().collect();
        let hit = corroborate_frontiers(&p, &[], &f2c, occ(3, 1)).unwrap();
        assert_eq!(hit, [(nid(0), nid(2))].into_iter().collect());
    }

    #[test]
    fn corroborate_empty_is_free() {
        let p = parse_program(P1).unwrap();
        let compiled = Compiled::new(&p);
        let out = corroborate_compiled(&compiled, &[], &BTreeSet::new(), occ(3, 1)).unwrap();
        assert!(out.exercised.is_empty());
        assert_eq!(out.max_shadow, 0);
        assert_eq!(out.steps, 4);
    }

    #[test]
    fn corroborate_p2_dead_branch() {
        let p = parse_program(P2).unwrap();
        let f2c: BTreeSet<_> = [(nid(2), nid(4)), (nid(3), nid(4))].into_iter().collect();
        let hit = corroborate_frontiers(&p, &[5], &f2c, occ(4, 1)).unwrap();
        assert_eq!(hit, [(nid(2), nid(4))].into_iter().collect());
    }

    #[test]
    fn corroborate_ctx_rejects_non_static_pair() {
        let p = parse_program(P3).unwrap();
        let f2c: BTreeSet<_> = [(nid(1), nid(5))].into_iter().collect(); // (g2, m4)
        assert!(matches!(
            corroborate_frontiers_ctx(&p, &[], &f2c, occ(5, 1)),
            Err(ExecError::InvalidFrontier(_, _))
        ));
    }

    #[test]
    fn corroborate_ctx_p3_return_value() {
        let p = parse_program(P3).unwrap();
        let f2c: BTreeSet<_> = [(nid(1), nid(3))].into_iter().collect(); // (g2, m2)
        let hit = corroborate_frontiers_ctx(&p, &[], &f2c, occ(5, 1)).unwrap();
        assert_eq!(hit.len(), 1);
        let cf = hit.first().unwrap();
        assert_eq!(cf.writer, nid(1));
        assert_eq!(cf.writer_ctx, [nid(3)].into_iter().collect());
        assert_eq!(cf.reader, nid(3));
        assert!(cf.reader_ctx.is_empty());
    }

    #[test]
    fn corroborate_ctx_p3_both_call_sites() {
        let p = parse_program(P3).unwrap();
        let f2c: BTreeSet<_> = [(nid(3), nid(0)), (nid(4), nid(0))].into_iter().collect();
        let hit = corroborate_frontiers_ctx(&p, &[], &f2c, occ(5, 1)).unwrap();
        assert_eq!(hit.len(), 2);
        let mut it = hit.iter();
        let a = it.next().unwrap();
        let b = it.next().unwrap();
        // (m2, ∅, g1, {m2}) and (m3, ∅, g1, {m3})
        assert_eq!(a.writer, nid(3));
        assert!(a.writer_ctx.is_empty());
        assert_eq!(a.reader_ctx, [nid(3)].into_iter().collect());
        assert_eq!(b.writer, nid(4));
        assert_eq!(b.reader_ctx, [nid(4)].into_iter().collect());
    }

    #[test]
    fn early_stop_economy() {
        let p = parse_program(P1).unwrap();
        let compiled = Compiled::new(&p);
        let out = corroborate_compiled(&compiled, &[], &BTreeSet::new(), occ(1, 1)).unwrap();
        assert_eq!(out.steps, 2); // halted right after the second node
    }

    #[test]
    fn return_from_inside_loop() {
        let src = "proc f(a) {\n  while (a > 0) {\n    return a;\n  }\n  x = 0;\n  return x;\n}\nproc main() {\n  y = call f(1);\n  print y;\n}\n";
        let p = parse_program(src).unwrap();
        assert_eq!(run(&p, &[]).unwrap().printed, vec![1]);
    }

    #[test]
    fn void_call_stop_halts_at_entry() {
        let src = "global g;\nproc f() {\n  g = 1;\n  g = 2;\n}\nproc main() {\n  call f();\n  print g;\n}\n";
        let p = parse_program(src).unwrap();
        // nodes: 0 g=1, 1 g=2, 2 call, 3 print
        let t = record_trace(&p, &[], Some(occ(2, 1))).unwrap();
        assert_eq!(t.occurrences.len(), 1); // callee body never ran
        assert_eq!(t.stop, Some(occ(2, 1)));
    }

    #[test]
    fn tolerant_trace_survives_post_criterion_error() {
        let src = "proc main() {\n  x = 1;\n  print x;\n  y = 1 / 0;\n}\n";
        let p = parse_program(src).unwrap();
        let compiled = Compiled::new(&p);
        let (trace, err) = record_trace_full(&compiled, &[]);
        assert!(err.is_some());
        assert!(trace.completions.contains_key(&occ(1, 1)));
        assert!(trace.windowed_du(occ(1, 1)).any(|d| d.reader.node == nid(1)));
        // the failing division never completed
        assert!(!trace.completions.contains_key(&occ(2, 1)));
    }
}
