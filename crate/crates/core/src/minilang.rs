//! The mini imperative language whose executions get sliced.
//!
//! Programs are line oriented: one statement per line, blocks opened by a
//! trailing `{` and closed by `}` on its own line. Every statement and every
//! `if`/`while` condition is a program node with a globally dense `NodeId`;
//! nodes are also addressable as `proc:line`, where `line` is the 1-based
//! position of the node inside its procedure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Globally unique, dense statement/condition identifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

/// Side-effect-free expression. Logical operators evaluate both operands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(i64),
    Var(String),
    ArrayRead(String, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Assign {
        node: NodeId,
        target: String,
        expr: Expr,
    },
    Store {
        node: NodeId,
        array: String,
        index: Expr,
        value: Expr,
    },
    Input {
        node: NodeId,
        target: String,
    },
    Print {
        node: NodeId,
        expr: Expr,
    },
    If {
        node: NodeId,
        cond: Expr,
        then_block: Vec<Stmt>,
        else_block: Vec<Stmt>,
    },
    While {
        node: NodeId,
        cond: Expr,
        body: Vec<Stmt>,
    },
    Call {
        node: NodeId,
        callee: String,
        args: Vec<Expr>,
        result: Option<String>,
    },
    Return {
        node: NodeId,
        expr: Expr,
    },
}

impl Stmt {
    pub fn node(&self) -> NodeId {
        match self {
            Stmt::Assign { node, .. }
            | Stmt::Store { node, .. }
            | Stmt::Input { node, .. }
            | Stmt::Print { node, .. }
            | Stmt::If { node, .. }
            | Stmt::While { node, .. }
            | Stmt::Call { node, .. }
            | Stmt::Return { node, .. } => *node,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Procedure {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
}

/// Statement kind tag, used by the static def/use modeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Assign,
    Store,
    Input,
    Print,
    IfCond,
    WhileCond,
    Call,
    Return,
}

impl NodeKind {
    pub fn is_branch(self) -> bool {
        matches!(self, NodeKind::IfCond | NodeKind::WhileCond)
    }
}

/// Per-node metadata: owning procedure and 1-based position within it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMeta {
    pub id: NodeId,
    pub proc_index: usize,
    pub line: u32,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub procedures: Vec<Procedure>,
    pub globals: Vec<String>,
    pub arrays: Vec<(String, i64)>,
    pub entry: String,
    nodes: Vec<NodeMeta>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProgramError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
}

impl Program {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_meta(&self, node: NodeId) -> &NodeMeta {
        &self.nodes[node.index()]
    }

    pub fn nodes(&self) -> &[NodeMeta] {
        &self.nodes
    }

    pub fn procedure(&self, index: usize) -> &Procedure {
        &self.procedures[index]
    }

    pub fn procedure_index(&self, name: &str) -> Option<usize> {
        self.procedures.iter().position(|p| p.name == name)
    }

    pub fn main_index(&self) -> usize {
        self.procedure_index(&self.entry).expect("validated program has an entry")
    }

    /// `proc:line` label used by criteria, reports and dumps.
    pub fn node_label(&self, node: NodeId) -> String {
        let meta = self.node_meta(node);
        format!("{}:{}", self.procedures[meta.proc_index].name, meta.line)
    }

    /// Resolve a `proc:line` label back to a node.
    pub fn node_by_label(&self, proc_name: &str, line: u32) -> Option<NodeId> {
        let proc_index = self.procedure_index(proc_name)?;
        self.nodes
            .iter()
            .find(|m| m.proc_index == proc_index && m.line == line)
            .map(|m| m.id)
    }

    /// Nodes of one procedure in textual order.
    pub fn proc_nodes(&self, proc_index: usize) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|m| m.proc_index == proc_index)
            .map(|m| m.id)
            .collect()
    }

    pub fn is_global(&self, name: &str) -> bool {
        self.globals.iter().any(|g| g == name)
    }

    pub fn array_len(&self, name: &str) -> Option<i64> {
        self.arrays.iter().find(|(a, _)| a == name).map(|(_, l)| *l)
    }

    /// True when no procedure other than `main` exists and no call statements occur.
    pub fn is_call_free(&self) -> bool {
        self.procedures.len() == 1 && !block_has_call(&self.procedures[0].body)
    }
}

fn block_has_call(block: &[Stmt]) -> bool {
    block.iter().any(|s| match s {
        Stmt::Call { .. } => true,
        Stmt::If {
            then_block,
            else_block,
            ..
        } => block_has_call(then_block) || block_has_call(else_block),
        Stmt::While { body, .. } => block_has_call(body),
        _ => false,
    })
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
}

fn lex_line(line: &str, lineno: usize) -> Result<Vec<Tok>, ProgramError> {
    let mut toks = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '#' {
            break;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            toks.push(Tok::Ident(line[start..i].to_string()));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            let text = &line[start..i];
            let value = text.parse::<i64>().map_err(|_| ProgramError::Syntax {
                line: lineno,
                message: format!("integer literal out of range: {text}"),
            })?;
            toks.push(Tok::Int(value));
            continue;
        }
        let two = if i + 1 < bytes.len() { &line[i..i + 2] } else { "" };
        let sym2 = match two {
            "==" => Some("=="),
            "!=" => Some("!="),
            "<=" => Some("<="),
            ">=" => Some(">="),
            "&&" => Some("&&"),
            "||" => Some("||"),
            _ => None,
        };
        if let Some(s) = sym2 {
            toks.push(Tok::Sym(s));
            i += 2;
            continue;
        }
        let sym1 = match c {
            '(' => "(",
            ')' => ")",
            '{' => "{",
            '}' => "}",
            '[' => "[",
            ']' => "]",
            ';' => ";",
            ',' => ",",
            '=' => "=",
            '+' => "+",
            '-' => "-",
            '*' => "*",
            '/' => "/",
            '%' => "%",
            '<' => "<",
            '>' => ">",
            '!' => "!",
            _ => {
                return Err(ProgramError::Syntax {
                    line: lineno,
                    message: format!("unexpected character '{c}'"),
                })
            }
        };
        toks.push(Tok::Sym(sym1));
        i += 1;
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Expression parser (precedence climbing over one line's tokens)
// ---------------------------------------------------------------------------

struct ExprParser<'a> {
    toks: &'a [Tok],
    pos: usize,
    lineno: usize,
}

impl<'a> ExprParser<'a> {
    fn err(&self, message: impl Into<String>) -> ProgramError {
        ProgramError::Syntax {
            line: self.lineno,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ProgramError> {
        let found = self.bump().cloned();
        match found {
            Some(Tok::Sym(s)) if s == sym => Ok(()),
            other => Err(self.err(format!("expected '{sym}', found {other:?}"))),
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, ProgramError> {
        self.parse_binary(1)
    }

    fn parse_binary(&mut self, min_prec: u8) -> Result<Expr, ProgramError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym(s)) => match *s {
                    "||" => BinOp::Or,
                    "&&" => BinOp::And,
                    "==" => BinOp::Eq,
                    "!=" => BinOp::Ne,
                    "<" => BinOp::Lt,
                    "<=" => BinOp::Le,
                    ">" => BinOp::Gt,
                    ">=" => BinOp::Ge,
                    "+" => BinOp::Add,
                    "-" => BinOp::Sub,
                    "*" => BinOp::Mul,
                    "/" => BinOp::Div,
                    "%" => BinOp::Mod,
                    _ => break,
                },
                _ => break,
            };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.parse_binary(prec + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr, ProgramError> {
        match self.peek() {
            Some(Tok::Sym("-")) => {
                self.bump();
                Ok(Expr::Unary(UnOp::Neg, Box::new(self.parse_unary()?)))
            }
            Some(Tok::Sym("!")) => {
                self.bump();
                Ok(Expr::Unary(UnOp::Not, Box::new(self.parse_unary()?)))
            }
            _ => self.parse_primary(),
        }
    }

    fn parse_primary(&mut self) -> Result<Expr, ProgramError> {
        match self.bump().cloned() {
            Some(Tok::Int(v)) => Ok(Expr::Lit(v)),
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::Sym("["))) {
                    self.bump();
                    let idx = self.parse_expr()?;
                    self.expect_sym("]")?;
                    Ok(Expr::ArrayRead(name, Box::new(idx)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Tok::Sym("(")) => {
                let e = self.parse_expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            other => Err(self.err(format!("expected expression, found {other:?}"))),
        }
    }
}

fn parse_full_expr(toks: &[Tok], lineno: usize) -> Result<Expr, ProgramError> {
    let mut p = ExprParser {
        toks,
        pos: 0,
        lineno,
    };
    let e = p.parse_expr()?;
    if p.pos != toks.len() {
        return Err(p.err("trailing tokens after expression"));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Program parser
// ---------------------------------------------------------------------------

struct Parser {
    node_counter: u32,
    proc_line: u32,
    nodes: Vec<NodeMeta>,
    proc_index: usize,
}

impl Parser {
    fn fresh_node(&mut self, kind: NodeKind) -> NodeId {
        let id = NodeId(self.node_counter);
        self.node_counter += 1;
        self.proc_line += 1;
        self.nodes.push(NodeMeta {
            id,
            proc_index: self.proc_index,
            line: self.proc_line,
            kind,
        });
        id
    }
}

/// What ended a block: `}` alone, or `} else {`.
enum BlockEnd {
    Close,
    CloseElse,
}

/// Parse and validate a program.
pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    let lines: Vec<(usize, Vec<Tok>)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| lex_line(l, i + 1).map(|t| (i + 1, t)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|(_, toks)| !toks.is_empty())
        .collect();

    let mut globals = Vec::new();
    let mut arrays: Vec<(String, i64)> = Vec::new();
    let mut procedures = Vec::new();
    let mut parser = Parser {
        node_counter: 0,
        proc_line: 0,
        nodes: Vec::new(),
        proc_index: 0,
    };

    let mut pos = 0;
    while pos < lines.len() {
        let (lineno, toks) = &lines[pos];
        let lineno = *lineno;
        match toks.first() {
            Some(Tok::Ident(kw)) if kw == "global" => {
                match &toks[1..] {
                    [Tok::Ident(name), Tok::Sym(";")] => globals.push(name.clone()),
                    _ => {
                        return Err(ProgramError::Syntax {
                            line: lineno,
                            message: "expected `global name;`".into(),
                        })
                    }
                }
                pos += 1;
            }
            Some(Tok::Ident(kw)) if kw == "array" => {
                match &toks[1..] {
                    [Tok::Ident(name), Tok::Sym("["), Tok::Int(len), Tok::Sym("]"), Tok::Sym(";")] =>
                    {
                        if *len <= 0 {
                            return Err(ProgramError::Syntax {
                                line: lineno,
                                message: format!("array length must be positive, got {len}"),
                            });
                        }
                        arrays.push((name.clone(), *len));
                    }
                    _ => {
                        return Err(ProgramError::Syntax {
                            line: lineno,
                            message: "expected `array name[len];`".into(),
                        })
                    }
                }
                pos += 1;
            }
            Some(Tok::Ident(kw)) if kw == "proc" => {
                let (name, params) = parse_proc_header(toks, lineno)?;
                parser.proc_index = procedures.len();
                parser.proc_line = 0;
                pos += 1;
                let (body, end, next) = parse_block(&lines, pos, &mut parser)?;
                if matches!(end, BlockEnd::CloseElse) {
                    return Err(ProgramError::Syntax {
                        line: lines[next - 1].0,
                        message: "unexpected `} else {` closing a procedure".into(),
                    });
                }
                pos = next;
                procedures.push(Procedure { name, params, body });
            }
            _ => {
                return Err(ProgramError::Syntax {
                    line: lineno,
                    message: "expected `global`, `array` or `proc` at top level".into(),
                })
            }
        }
    }

    let program = Program {
        procedures,
        globals,
        arrays,
        entry: "main".to_string(),
        nodes: parser.nodes,
    };
    validate(&program)?;
    Ok(program)
}

fn parse_proc_header(toks: &[Tok], lineno: usize) -> Result<(String, Vec<String>), ProgramError> {
    // proc name ( p1 , p2 ) {
    let err = |m: &str| ProgramError::Syntax {
        line: lineno,
        message: m.into(),
    };
    let mut it = toks.iter();
    it.next(); // proc
    let name = match it.next() {
        Some(Tok::Ident(n)) => n.clone(),
        _ => return Err(err("expected procedure name")),
    };
    if it.next() != Some(&Tok::Sym("(")) {
        return Err(err("expected '(' after procedure name"));
    }
    let mut params = Vec::new();
    let mut expect_ident = true;
    loop {
        match it.next() {
            Some(Tok::Sym(")")) => break,
            Some(Tok::Ident(p)) if expect_ident => {
                params.push(p.clone());
                expect_ident = false;
            }
            Some(Tok::Sym(",")) if !expect_ident => expect_ident = true,
            other => return Err(err(&format!("bad parameter list near {other:?}"))),
        }
    }
    match (it.next(), it.next()) {
        (Some(Tok::Sym("{")), None) => Ok((name, params)),
        _ => Err(err("expected '{' ending the procedure header")),
    }
}

fn parse_block(
    lines: &[(usize, Vec<Tok>)],
    mut pos: usize,
    parser: &mut Parser,
) -> Result<(Vec<Stmt>, BlockEnd, usize), ProgramError> {
    let mut block = Vec::new();
    while pos < lines.len() {
        let (lineno, toks) = &lines[pos];
        let lineno = *lineno;
        if toks.as_slice() == [Tok::Sym("}")] {
            return Ok((block, BlockEnd::Close, pos + 1));
        }
        if toks.as_slice()
            == [
                Tok::Sym("}"),
                Tok::Ident("else".to_string()),
                Tok::Sym("{"),
            ]
        {
            return Ok((block, BlockEnd::CloseElse, pos + 1));
        }
        let (stmt, next) = parse_stmt(lines, pos, parser)?;
        let _ = lineno;
        block.push(stmt);
        pos = next;
    }
    Err(ProgramError::Syntax {
        line: lines.last().map(|(l, _)| *l).unwrap_or(0),
        message: "unexpected end of input inside a block".into(),
    })
}

fn parse_stmt(
    lines: &[(usize, Vec<Tok>)],
    pos: usize,
    parser: &mut Parser,
) -> Result<(Stmt, usize), ProgramError> {
    let (lineno, toks) = &lines[pos];
    let lineno = *lineno;
    let err = |m: String| ProgramError::Syntax {
        line: lineno,
        message: m,
    };

    match toks.first() {
        Some(Tok::Ident(kw)) if kw == "input" => match &toks[1..] {
            [Tok::Ident(name), Tok::Sym(";")] => {
                let node = parser.fresh_node(NodeKind::Input);
                Ok((
                    Stmt::Input {
                        node,
                        target: name.clone(),
                    },
                    pos + 1,
                ))
            }
            _ => Err(err("expected `input name;`".into())),
        },
        Some(Tok::Ident(kw)) if kw == "print" => {
            let rest = strip_semi(&toks[1..], lineno)?;
            let expr = parse_full_expr(rest, lineno)?;
            let node = parser.fresh_node(NodeKind::Print);
            Ok((Stmt::Print { node, expr }, pos + 1))
        }
        Some(Tok::Ident(kw)) if kw == "return" => {
            let rest = strip_semi(&toks[1..], lineno)?;
            let expr = parse_full_expr(rest, lineno)?;
            let node = parser.fresh_node(NodeKind::Return);
            Ok((Stmt::Return { node, expr }, pos + 1))
        }
        Some(Tok::Ident(kw)) if kw == "call" => {
            let rest = strip_semi(&toks[1..], lineno)?;
            let (callee, args) = parse_call_tail(rest, lineno)?;
            let node = parser.fresh_node(NodeKind::Call);
            Ok((
                Stmt::Call {
                    node,
                    callee,
                    args,
                    result: None,
                },
                pos + 1,
            ))
        }
        Some(Tok::Ident(kw)) if kw == "if" || kw == "while" => {
            let is_if = kw == "if";
            let n = toks.len();
            if n < 4
                || toks[1] != Tok::Sym("(")
                || toks[n - 1] != Tok::Sym("{")
                || toks[n - 2] != Tok::Sym(")")
            {
                return Err(err(format!("expected `{kw} (cond) {{`")));
            }
            let cond = parse_full_expr(&toks[2..n - 2], lineno)?;
            let node = parser.fresh_node(if is_if {
                NodeKind::IfCond
            } else {
                NodeKind::WhileCond
            });
            let (first_block, end, next) = parse_block(lines, pos + 1, parser)?;
            if is_if {
                match end {
                    BlockEnd::Close => Ok((
                        Stmt::If {
                            node,
                            cond,
                            then_block: first_block,
                            else_block: Vec::new(),
                        },
                        next,
                    )),
                    BlockEnd::CloseElse => {
                        let (else_block, end2, next2) = parse_block(lines, next, parser)?;
                        if matches!(end2, BlockEnd::CloseElse) {
                            return Err(ProgramError::Syntax {
                                line: lines[next2 - 1].0,
                                message: "duplicate `else`".into(),
                            });
                        }
                        Ok((
                            Stmt::If {
                                node,
                                cond,
                                then_block: first_block,
                                else_block,
                            },
                            next2,
                        ))
                    }
                }
            } else {
                if matches!(end, BlockEnd::CloseElse) {
                    return Err(ProgramError::Syntax {
                        line: lines[next - 1].0,
                        message: "`else` after a while block".into(),
                    });
                }
                Ok((
                    Stmt::While {
                        node,
                        cond,
                        body: first_block,
                    },
                    next,
                ))
            }
        }
        Some(Tok::Ident(name)) => {
            // assignment forms: `x = ...;`, `a[e] = ...;`
            let name = name.clone();
            if toks.get(1) == Some(&Tok::Sym("=")) {
                let rest = strip_semi(&toks[2..], lineno)?;
                if rest.first() == Some(&Tok::Ident("call".to_string())) {
                    let (callee, args) = parse_call_tail(&rest[1..], lineno)?;
                    let node = parser.fresh_node(NodeKind::Call);
                    Ok((
                        Stmt::Call {
                            node,
                            callee,
                            args,
                            result: Some(name),
                        },
                        pos + 1,
                    ))
                } else {
                    let expr = parse_full_expr(rest, lineno)?;
                    let node = parser.fresh_node(NodeKind::Assign);
                    Ok((
                        Stmt::Assign {
                            node,
                            target: name,
                            expr,
                        },
                        pos + 1,
                    ))
                }
            } else if toks.get(1) == Some(&Tok::Sym("[")) {
                // find the `]` that closes the index at depth 0
                let mut depth = 0usize;
                let mut close = None;
                for (i, t) in toks.iter().enumerate().skip(2) {
                    match t {
                        Tok::Sym("[") => depth += 1,
                        Tok::Sym("]") => {
                            if depth == 0 {
                                close = Some(i);
                                break;
                            }
                            depth -= 1;
                        }
                        _ => {}
                    }
                }
                let close = close.ok_or_else(|| err("unterminated index".into()))?;
                if toks.get(close + 1) != Some(&Tok::Sym("=")) {
                    return Err(err("expected '=' after indexed target".into()));
                }
                let index = parse_full_expr(&toks[2..close], lineno)?;
                let rest = strip_semi(&toks[close + 2..], lineno)?;
                let value = parse_full_expr(rest, lineno)?;
                let node = parser.fresh_node(NodeKind::Store);
                Ok((
                    Stmt::Store {
                        node,
                        array: name,
                        index,
                        value,
                    },
                    pos + 1,
                ))
            } else {
                Err(err(format!("cannot parse statement starting with `{name}`")))
            }
        }
        other => Err(err(format!("cannot parse statement starting with {other:?}"))),
    }
}

fn strip_semi<'a>(toks: &'a [Tok], lineno: usize) -> Result<&'a [Tok], ProgramError> {
    match toks.last() {
        Some(Tok::Sym(";")) => Ok(&toks[..toks.len() - 1]),
        _ => Err(ProgramError::Syntax {
            line: lineno,
            message: "missing ';'".into(),
        }),
    }
}

fn parse_call_tail(toks: &[Tok], lineno: usize) -> Result<(String, Vec<Expr>), ProgramError> {
    let err = |m: &str| ProgramError::Syntax {
        line: lineno,
        message: m.into(),
    };
    let name = match toks.first() {
        Some(Tok::Ident(n)) => n.clone(),
        _ => return Err(err("expected callee name")),
    };
    if toks.get(1) != Some(&Tok::Sym("(")) || toks.last() != Some(&Tok::Sym(")")) {
        return Err(err("expected argument list"));
    }
    let inner = &toks[2..toks.len() - 1];
    let mut args = Vec::new();
    if !inner.is_empty() {
        // split on top-level commas
        let mut depth = 0usize;
        let mut start = 0usize;
        for (i, t) in inner.iter().enumerate() {
            match t {
                Tok::Sym("(") | Tok::Sym("[") => depth += 1,
                Tok::Sym(")") | Tok::Sym("]") => depth -= 1,
                Tok::Sym(",") if depth == 0 => {
                    args.push(parse_full_expr(&inner[start..i], lineno)?);
                    start = i + 1;
                }
                _ => {}
            }
        }
        args.push(parse_full_expr(&inner[start..], lineno)?);
    }
    Ok((name, args))
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

fn validate(program: &Program) -> Result<(), ProgramError> {
    let verr = |m: String| ProgramError::Validation(m);

    let main_count = program
        .procedures
        .iter()
        .filter(|p| p.name == "main")
        .count();
    if main_count != 1 {
        return Err(verr(format!(
            "expected exactly one procedure named main, found {main_count}"
        )));
    }
    let mut seen = BTreeSet::new();
    for p in &program.procedures {
        if !seen.insert(p.name.clone()) {
            return Err(verr(format!("duplicate procedure name {}", p.name)));
        }
    }
    let mut names = BTreeSet::new();
    for g in &program.globals {
        if !names.insert(g.clone()) {
            return Err(verr(format!("duplicate global {g}")));
        }
    }
    for (a, _) in &program.arrays {
        if !names.insert(a.clone()) {
            return Err(verr(format!("array name {a} collides with another declaration")));
        }
    }

    // procedures that must return a value: any call site binds a result
    let mut needs_return: BTreeSet<String> = BTreeSet::new();
    for p in &program.procedures {
        collect_value_callees(&p.body, &mut needs_return);
    }

    for p in &program.procedures {
        if p.name == "main" && !p.params.is_empty() {
            return Err(verr("main takes no parameters".into()));
        }
        let mut param_set = BTreeSet::new();
        for prm in &p.params {
            if !param_set.insert(prm.clone()) {
                return Err(verr(format!("duplicate parameter {prm} in {}", p.name)));
            }
            if program.is_global(prm) || program.array_len(prm).is_some() {
                return Err(verr(format!(
                    "parameter {prm} of {} shadows a top-level declaration",
                    p.name
                )));
            }
        }
        let mut assigned: BTreeSet<String> = param_set.clone();
        validate_block(program, p, &p.body, &mut assigned)?;
        if needs_return.contains(&p.name) && !block_always_returns(&p.body) {
            return Err(verr(format!(
                "procedure {} is called for a result but does not return on every path",
                p.name
            )));
        }
    }
    Ok(())
}

fn collect_value_callees(block: &[Stmt], out: &mut BTreeSet<String>) {
    for s in block {
        match s {
            Stmt::Call {
                callee,
                result: Some(_),
                ..
            } => {
                out.insert(callee.clone());
            }
            Stmt::If {
                then_block,
                else_block,
                ..
            } => {
                collect_value_callees(then_block, out);
                collect_value_callees(else_block, out);
            }
            Stmt::While { body, .. } => collect_value_callees(body, out),
            _ => {}
        }
    }
}

fn block_always_returns(block: &[Stmt]) -> bool {
    block.iter().any(|s| match s {
        Stmt::Return { .. } => true,
        Stmt::If {
            then_block,
            else_block,
            ..
        } => {
            !else_block.is_empty()
                && block_always_returns(then_block)
                && block_always_returns(else_block)
        }
        _ => false,
    })
}

fn validate_block(
    program: &Program,
    proc: &Procedure,
    block: &[Stmt],
    assigned: &mut BTreeSet<String>,
) -> Result<(), ProgramError> {
    let verr = |m: String| ProgramError::Validation(m);
    for s in block {
        match s {
            Stmt::Assign { target, expr, .. } => {
                validate_expr(program, proc, expr, assigned)?;
                validate_scalar_target(program, proc, target)?;
                assigned.insert(target.clone());
            }
            Stmt::Store {
                array,
                index,
                value,
                ..
            } => {
                if program.array_len(array).is_none() {
                    return Err(verr(format!("store to undeclared array {array} in {}", proc.name)));
                }
                validate_expr(program, proc, index, assigned)?;
                validate_expr(program, proc, value, assigned)?;
            }
            Stmt::Input { target, .. } => {
                validate_scalar_target(program, proc, target)?;
                assigned.insert(target.clone());
            }
            Stmt::Print { expr, .. } => validate_expr(program, proc, expr, assigned)?,
            Stmt::If {
                cond,
                then_block,
                else_block,
                ..
            } => {
                validate_expr(program, proc, cond, assigned)?;
                validate_block(program, proc, then_block, assigned)?;
                validate_block(program, proc, else_block, assigned)?;
            }
            Stmt::While { cond, body, .. } => {
                validate_expr(program, proc, cond, assigned)?;
                validate_block(program, proc, body, assigned)?;
            }
            Stmt::Call {
                callee,
                args,
                result,
                ..
            } => {
                let target = program
                    .procedures
                    .iter()
                    .find(|p| p.name == *callee)
                    .ok_or_else(|| verr(format!("call to undefined procedure {callee}")))?;
                if target.params.len() != args.len() {
                    return Err(verr(format!(
                        "call to {callee} passes {} arguments, expected {}",
                        args.len(),
                        target.params.len()
                    )));
                }
                for a in args {
                    validate_expr(program, proc, a, assigned)?;
                }
                if let Some(r) = result {
                    validate_scalar_target(program, proc, r)?;
                    assigned.insert(r.clone());
                }
            }
            Stmt::Return { expr, .. } => {
                if proc.name == "main" {
                    return Err(verr("return is not allowed in main".into()));
                }
                validate_expr(program, proc, expr, assigned)?;
            }
        }
    }
    Ok(())
}

fn validate_scalar_target(
    program: &Program,
    proc: &Procedure,
    name: &str,
) -> Result<(), ProgramError> {
    if program.array_len(name).is_some() {
        return Err(ProgramError::Validation(format!(
            "array {name} used as a scalar in {}",
            proc.name
        )));
    }
    Ok(())
}

fn validate_expr(
    program: &Program,
    proc: &Procedure,
    expr: &Expr,
    assigned: &BTreeSet<String>,
) -> Result<(), ProgramError> {
    match expr {
        Expr::Lit(_) => Ok(()),
        Expr::Var(name) => {
            if program.array_len(name).is_some() {
                return Err(ProgramError::Validation(format!(
                    "array {name} read without a subscript in {}",
                    proc.name
                )));
            }
            if assigned.contains(name) || program.is_global(name) {
                Ok(())
            } else {
                Err(ProgramError::Validation(format!(
                    "variable {name} read before assignment in {}",
                    proc.name
                )))
            }
        }
        Expr::ArrayRead(name, idx) => {
            if program.array_len(name).is_none() {
                return Err(ProgramError::Validation(format!(
                    "read from undeclared array {name} in {}",
                    proc.name
                )));
            }
            validate_expr(program, proc, idx, assigned)
        }
        Expr::Binary(_, l, r) => {
            validate_expr(program, proc, l, assigned)?;
            validate_expr(program, proc, r, assigned)
        }
        Expr::Unary(_, e) => validate_expr(program, proc, e, assigned),
    }
}

// ---------------------------------------------------------------------------
// Pretty printer
// ---------------------------------------------------------------------------

/// Canonical source form; reparsing yields a node-for-node identical program.
pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    for g in &program.globals {
        out.push_str(&format!("global {g};\n"));
    }
    for (a, len) in &program.arrays {
        out.push_str(&format!("array {a}[{len}];\n"));
    }
    if !program.globals.is_empty() || !program.arrays.is_empty() {
        out.push('\n');
    }
    for p in &program.procedures {
        out.push_str(&format!("proc {}({}) {{\n", p.name, p.params.join(", ")));
        print_block(&p.body, 1, &mut out);
        out.push_str("}\n");
    }
    out
}

fn print_block(block: &[Stmt], indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    for s in block {
        match s {
            Stmt::Assign { target, expr, .. } => {
                out.push_str(&format!("{pad}{target} = {};\n", print_expr(expr, 0)))
            }
            Stmt::Store {
                array,
                index,
                value,
                ..
            } => out.push_str(&format!(
                "{pad}{array}[{}] = {};\n",
                print_expr(index, 0),
                print_expr(value, 0)
            )),
            Stmt::Input { target, .. } => out.push_str(&format!("{pad}input {target};\n")),
            Stmt::Print { expr, .. } => {
                out.push_str(&format!("{pad}print {};\n", print_expr(expr, 0)))
            }
            Stmt::If {
                cond,
                then_block,
                else_block,
                ..
            } => {
                out.push_str(&format!("{pad}if ({}) {{\n", print_expr(cond, 0)));
                print_block(then_block, indent + 1, out);
                if else_block.is_empty() {
                    out.push_str(&format!("{pad}}}\n"));
                } else {
                    out.push_str(&format!("{pad}}} else {{\n"));
                    print_block(else_block, indent + 1, out);
                    out.push_str(&format!("{pad}}}\n"));
                }
            }
            Stmt::While { cond, body, .. } => {
                out.push_str(&format!("{pad}while ({}) {{\n", print_expr(cond, 0)));
                print_block(body, indent + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
            Stmt::Call {
                callee,
                args,
                result,
                ..
            } => {
                let args = args
                    .iter()
                    .map(|a| print_expr(a, 0))
                    .collect::<Vec<_>>()
                    .join(", ");
                match result {
                    Some(r) => out.push_str(&format!("{pad}{r} = call {callee}({args});\n")),
                    None => out.push_str(&format!("{pad}call {callee}({args});\n")),
                }
            }
            Stmt::Return { expr, .. } => {
                out.push_str(&format!("{pad}return {};\n", print_expr(expr, 0)))
            }
        }
    }
}

fn print_expr(expr: &Expr, parent_prec: u8) -> String {
    match expr {
        Expr::Lit(v) => {
            if *v < 0 {
                format!("({v})")
            } else {
                v.to_string()
            }
        }
        Expr::Var(n) => n.clone(),
        Expr::ArrayRead(a, i) => format!("{a}[{}]", print_expr(i, 0)),
        Expr::Binary(op, l, r) => {
            let prec = op.precedence();
            let s = format!(
                "{} {} {}",
                print_expr(l, prec),
                op.symbol(),
                print_expr(r, prec + 1)
            );
            if prec < parent_prec {
                format!("({s})")
            } else {
                s
            }
        }
        Expr::Unary(op, e) => {
            let s = match op {
                UnOp::Neg => format!("-{}", print_expr(e, 6)),
                UnOp::Not => format!("!{}", print_expr(e, 6)),
            };
            if parent_prec > 5 {
                format!("({s})")
            } else {
                s
            }
        }
    }
}

/// One entry per node: kind plus the static def/use sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo {
    pub id: NodeId,
    pub kind: NodeKind,
    pub syntactic_uses: BTreeSet<crate::sda::AbstractLocation>,
    pub syntactic_defs: BTreeSet<crate::sda::AbstractLocation>,
}

/// Def/use table for every node, in NodeId order.
pub fn node_table(program: &Program) -> Vec<NodeInfo> {
    let mut by_id: BTreeMap<NodeId, NodeInfo> = BTreeMap::new();
    for (pi, proc) in program.procedures.iter().enumerate() {
        collect_node_infos(program, pi, &proc.body, &mut by_id);
    }
    by_id.into_values().collect()
}

fn collect_node_infos(
    program: &Program,
    proc_index: usize,
    block: &[Stmt],
    out: &mut BTreeMap<NodeId, NodeInfo>,
) {
    for s in block {
        let node = s.node();
        let (defs, uses) = crate::sda::stmt_defs_uses(program, proc_index, s);
        out.insert(
            node,
            NodeInfo {
                id: node,
                kind: program.node_meta(node).kind,
                syntactic_uses: uses,
                syntactic_defs: defs,
            },
        );
        match s {
            Stmt::If {
                then_block,
                else_block,
                ..
            } => {
                collect_node_infos(program, proc_index, then_block, out);
                collect_node_infos(program, proc_index, else_block, out);
            }
            Stmt::While { body, .. } => collect_node_infos(program, proc_index, body, out),
            _ => {}
        }
    }
}

#[cfg(test)]
pub mod fixtures {
    //! Small programs shared across the crate's tests.

    pub const P1: &str = "proc main() {\n  x = 1;\n  y = 2;\n  z = x + 3;\n  print z;\n}\n";

    pub const P2: &str = "proc main() {\n  input a;\n  if (a > 0) {\n    b = 1;\n  } else {\n    b = 2;\n  }\n  print b;\n}\n";

    pub const P3: &str = "proc inc(v) {\n  r = v + 1;\n  return r;\n}\nproc main() {\n  x = 1;\n  y = call inc(x);\n  z = call inc(7);\n  print y;\n}\n";
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn empty_text_has_no_main() {
        let err = parse_program("").unwrap_err();
        assert!(matches!(err, ProgramError::Validation(_)), "{err}");
    }

    #[test]
    fn p1_has_four_nodes() {
        let p = parse_program(P1).unwrap();
        assert_eq!(p.node_count(), 4);
        assert_eq!(p.node_label(NodeId(0)), "main:1");
        assert_eq!(p.node_label(NodeId(3)), "main:4");
    }

    #[test]
    fn p3_has_six_nodes_in_two_procs() {
        let p = parse_program(P3).unwrap();
        assert_eq!(p.node_count(), 6);
        assert_eq!(p.node_label(NodeId(0)), "inc:1");
        assert_eq!(p.node_label(NodeId(1)), "inc:2");
        assert_eq!(p.node_label(NodeId(2)), "main:1");
        assert_eq!(p.node_label(NodeId(5)), "main:4");
        assert_eq!(p.node_by_label("main", 2), Some(NodeId(3)));
    }

    #[test]
    fn node_ids_are_dense_and_conditions_count() {
        let p = parse_program(P2).unwrap();
        assert_eq!(p.node_count(), 5); // input, cond, b=1, b=2, print
        for (i, m) in p.nodes().iter().enumerate() {
            assert_eq!(m.id.index(), i);
        }
        assert_eq!(p.node_meta(NodeId(1)).kind, NodeKind::IfCond);
    }

    #[test]
    fn validation_rejects_bad_programs() {
        // unresolved callee
        assert!(parse_program("proc main() {\n  call nope();\n}\n").is_err());
        // arity mismatch
        assert!(parse_program(
            "proc f(a) {\n  return a;\n}\nproc main() {\n  x = call f(1, 2);\n}\n"
        )
        .is_err());
        // return in main
        assert!(parse_program("proc main() {\n  return 1;\n}\n").is_err());
        // read before assignment
        assert!(parse_program("proc main() {\n  x = y + 1;\n}\n").is_err());
        // array as scalar
        assert!(parse_program("array a[4];\nproc main() {\n  x = a;\n}\n").is_err());
        // value call into a procedure that may not return
        assert!(parse_program(
            "proc f(a) {\n  if (a > 0) {\n    return 1;\n  }\n}\nproc main() {\n  x = call f(1);\n}\n"
        )
        .is_err());
        // globals are readable without assignment
        assert!(parse_program("global g;\nproc main() {\n  x = g;\n}\n").is_ok());
    }

    #[test]
    fn syntax_error_carries_line() {
        let err = parse_program("proc main() {\n  x = ;\n}\n").unwrap_err();
        match err {
            ProgramError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn p1_node_table_matches_hand_rules() {
        use crate::sda::AbstractLocation as L;
        let p = parse_program(P1).unwrap();
        let table = node_table(&p);
        let n3 = &table[2]; // z = x + 3
        assert_eq!(
            n3.syntactic_uses,
            [L::LocalScalar("main".into(), "x".into())].into_iter().collect()
        );
        assert_eq!(
            n3.syntactic_defs,
            [L::LocalScalar("main".into(), "z".into())].into_iter().collect()
        );
        let n4 = &table[3]; // print z
        assert!(n4.syntactic_defs.is_empty());
    }

    #[test]
    fn p3_call_node_defs_uses() {
        use crate::sda::AbstractLocation as L;
        let p = parse_program(P3).unwrap();
        let table = node_table(&p);
        let m2 = &table[3]; // y = call inc(x)
        assert_eq!(
            m2.syntactic_uses,
            [
                L::LocalScalar("main".into(), "x".into()),
                L::Ret("inc".into())
            ]
            .into_iter()
            .collect()
        );
        assert_eq!(
            m2.syntactic_defs,
            [
                L::LocalScalar("main".into(), "y".into()),
                L::LocalScalar("inc".into(), "v".into())
            ]
            .into_iter()
            .collect()
        );
    }

    #[test]
    fn roundtrip_fixture_programs() {
        for src in [P1, P2, P3] {
            let p = parse_program(src).unwrap();
            let printed = pretty_print(&p);
            let q = parse_program(&printed).unwrap();
            assert_eq!(p, q, "round trip changed the program:\n{printed}");
        }
    }

    #[test]
    fn roundtrip_operators_and_nesting() {
        let src = "global g;\narray a[8];\nproc main() {\n  x = -3 + 2 * (g - 1) % 5;\n  a[x + 1] = a[0] / 2;\n  y = !(x < 3) && g >= 0 || x == 4;\n  while (y != 0) {\n    if (x > 0) {\n      y = 0;\n    } else {\n      y = y - 1;\n    }\n  }\n  print y;\n}\n";
        let p = parse_program(src).unwrap();
        let q = parse_program(&pretty_print(&p)).unwrap();
        assert_eq!(p, q);
    }
}
