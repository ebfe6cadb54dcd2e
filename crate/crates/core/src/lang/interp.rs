//! Direct concrete interpreter over the unpreprocessed AST. It shares no
//! code with preprocessing or symbolic execution and serves as the
//! reference semantics in tests.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::{indexed_name, share_name, BinOp, Builtin, Expr, ExprKind, Pos, Program, Stmt, StmtKind, VarRef};
use crate::field::{FieldCtx, FieldElem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("{pos}: {msg}")]
    Runtime { pos: Pos, msg: String },
    #[error("no procedure `{0}`")]
    UnknownProc(String),
    #[error("affine `{0}` is declared without a body and no table was supplied")]
    NoTable(String),
    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
}

fn rt(pos: Pos, msg: impl Into<String>) -> InterpError {
    InterpError::Runtime { pos, msg: msg.into() }
}

#[derive(Clone, Debug)]
enum Val {
    Scalar(u16),
    Enc(Vec<u16>),
}

pub struct Interpreter<'a> {
    prog: &'a Program,
    field: &'a FieldCtx,
    tables: HashMap<String, Vec<FieldElem>>,
}

#[derive(Default)]
struct Frame {
    vars: HashMap<String, u16>,
    encodings: HashSet<String>,
    loops: Vec<(String, i64)>,
    shares: Option<u32>,
    in_affine: bool,
}

impl Frame {
    fn loop_var(&self, name: &str) -> Option<i64> {
        self.loops.iter().rev().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

impl<'a> Interpreter<'a> {
    pub fn new(prog: &'a Program, field: &'a FieldCtx) -> Self {
        Interpreter { prog, field, tables: HashMap::new() }
    }

    /// Supplies a function table for a declared-only affine symbol.
    pub fn with_table(mut self, name: &str, table: Vec<FieldElem>) -> Self {
        self.tables.insert(name.to_string(), table);
        self
    }

    pub fn run_orig(&self, proc_name: &str, inputs: &[FieldElem]) -> Result<FieldElem, InterpError> {
        let p = self
            .prog
            .proc(proc_name)
            .ok_or_else(|| InterpError::UnknownProc(proc_name.to_string()))?;
        if inputs.len() != p.inputs.len() {
            return Err(InterpError::Arity { expected: p.inputs.len(), got: inputs.len() });
        }
        let mut fr = Frame::default();
        for (n, v) in p.inputs.iter().zip(inputs) {
            fr.vars.insert(n.clone(), v.0);
        }
        let pos = p.pos;
        let mut no_rand = || -> Result<u16, InterpError> { Err(rt(pos, "rand in original block")) };
        self.block(&p.orig, &mut fr, &mut no_rand)?;
        let v = fr
            .vars
            .get(&p.output)
            .ok_or_else(|| rt(p.pos, format!("output `{}` unassigned", p.output)))?;
        Ok(FieldElem(*v))
    }

    /// Runs the masked block on one share tuple per input. `rand` supplies
    /// random values in execution order.
    pub fn run_masked(
        &self,
        proc_name: &str,
        shares: &[Vec<FieldElem>],
        rand: &mut dyn FnMut() -> FieldElem,
    ) -> Result<Vec<FieldElem>, InterpError> {
        let mut r = || Ok(rand().0);
        self.masked_inner(proc_name, &shares.iter().map(|s| s.iter().map(|e| e.0).collect()).collect::<Vec<Vec<u16>>>(), &mut r)
            .map(|v| v.into_iter().map(FieldElem).collect())
    }

    /// Number of random values one masked run consumes.
    pub fn count_randoms(&self, proc_name: &str) -> Result<usize, InterpError> {
        let p = self
            .prog
            .proc(proc_name)
            .ok_or_else(|| InterpError::UnknownProc(proc_name.to_string()))?;
        let zeros = vec![vec![FieldElem::ZERO; p.shares as usize]; p.inputs.len()];
        let mut count = 0usize;
        self.run_masked(proc_name, &zeros, &mut || {
            count += 1;
            FieldElem::ZERO
        })?;
        Ok(count)
    }

    fn masked_inner(
        &self,
        proc_name: &str,
        shares: &[Vec<u16>],
        rand: &mut dyn FnMut() -> Result<u16, InterpError>,
    ) -> Result<Vec<u16>, InterpError> {
        let p = self
            .prog
            .proc(proc_name)
            .ok_or_else(|| InterpError::UnknownProc(proc_name.to_string()))?;
        if shares.len() != p.inputs.len() {
            return Err(InterpError::Arity { expected: p.inputs.len(), got: shares.len() });
        }
        let mut fr = Frame { shares: Some(p.shares), ..Frame::default() };
        for (n, s) in p.inputs.iter().zip(shares) {
            if s.len() != p.shares as usize {
                return Err(InterpError::Arity { expected: p.shares as usize, got: s.len() });
            }
            for (j, v) in s.iter().enumerate() {
                fr.vars.insert(share_name(n, j as u32), *v);
            }
            fr.encodings.insert(n.clone());
        }
        self.block(&p.masked, &mut fr, rand)?;
        (0..p.shares)
            .map(|j| {
                let s = share_name(&p.output, j);
                fr.vars
                    .get(&s)
                    .copied()
                    .ok_or_else(|| rt(p.pos, format!("output share `{s}` unassigned")))
            })
            .collect()
    }

    pub fn apply_affine(&self, name: &str, x: FieldElem) -> Result<FieldElem, InterpError> {
        self.affine(name, x.0, Pos::default()).map(FieldElem)
    }

    fn affine(&self, name: &str, x: u16, pos: Pos) -> Result<u16, InterpError> {
        if let Some(t) = self.tables.get(name) {
            return Ok(t[x as usize].0);
        }
        let Some(def) = self.prog.affine_def(name) else {
            if self.prog.is_affine(name) {
                return Err(InterpError::NoTable(name.to_string()));
            }
            return Err(rt(pos, format!("unknown function `{name}`")));
        };
        let mut fr = Frame { in_affine: true, ..Frame::default() };
        fr.vars.insert(def.input.clone(), x);
        let mut no_rand = || -> Result<u16, InterpError> { Err(rt(pos, "rand in affine body")) };
        self.block(&def.body, &mut fr, &mut no_rand)?;
        fr.vars
            .get(&def.output)
            .copied()
            .ok_or_else(|| rt(def.pos, format!("output `{}` unassigned", def.output)))
    }

    fn block(
        &self,
        body: &[Stmt],
        fr: &mut Frame,
        rand: &mut dyn FnMut() -> Result<u16, InterpError>,
    ) -> Result<(), InterpError> {
        for s in body {
            self.stmt(s, fr, rand)?;
        }
        Ok(())
    }

    fn name_of(&self, v: &VarRef, fr: &Frame) -> Result<String, InterpError> {
        if v.indices.is_empty() {
            return Ok(v.name.clone());
        }
        let idx = v
            .indices
            .iter()
            .map(|e| self.int(e, fr))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(indexed_name(&v.name, &idx))
    }

    fn stmt(
        &self,
        s: &Stmt,
        fr: &mut Frame,
        rand: &mut dyn FnMut() -> Result<u16, InterpError>,
    ) -> Result<(), InterpError> {
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let name = self.name_of(target, fr)?;
                let v = match &value.kind {
                    ExprKind::Call(callee, args) if self.prog.proc(callee).is_some() => {
                        self.call_proc(callee, args, fr, rand, s.pos)?
                    }
                    _ => self.eval(value, fr)?,
                };
                match v {
                    Val::Scalar(x) => {
                        fr.encodings.remove(&name);
                        fr.vars.insert(name, x);
                    }
                    Val::Enc(xs) => {
                        for (j, x) in xs.into_iter().enumerate() {
                            fr.vars.insert(share_name(&name, j as u32), x);
                        }
                        fr.encodings.insert(name);
                    }
                }
            }
            StmtKind::Rand { target } => {
                if fr.shares.is_none() {
                    return Err(rt(s.pos, "rand outside a masked block"));
                }
                let name = self.name_of(target, fr)?;
                let v = rand()?;
                fr.encodings.remove(&name);
                fr.vars.insert(name, v);
            }
            StmtKind::For { var, lo, hi, body } => {
                let (lo, hi) = (self.int(lo, fr)?, self.int(hi, fr)?);
                for i in lo..hi {
                    fr.loops.push((var.clone(), i));
                    let r = self.block(body, fr, rand);
                    fr.loops.pop();
                    r?;
                }
            }
            StmtKind::If { cond, then_body, else_body } => {
                if self.int(cond, fr)? != 0 {
                    self.block(then_body, fr, rand)?;
                } else {
                    self.block(else_body, fr, rand)?;
                }
            }
            StmtKind::Assume(_) | StmtKind::Assert(_) => {}
        }
        Ok(())
    }

    fn call_proc(
        &self,
        callee: &str,
        args: &[Expr],
        fr: &mut Frame,
        rand: &mut dyn FnMut() -> Result<u16, InterpError>,
        pos: Pos,
    ) -> Result<Val, InterpError> {
        if fr.in_affine {
            return Err(rt(pos, "procedure call in affine body"));
        }
        match fr.shares {
            None => {
                let vals = args
                    .iter()
                    .map(|a| match self.eval(a, fr)? {
                        Val::Scalar(x) => Ok(FieldElem(x)),
                        Val::Enc(_) => Err(rt(a.pos, "encoding in original block")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Val::Scalar(self.run_orig(callee, &vals)?.0))
            }
            Some(shares) => {
                let p = self.prog.proc(callee).expect("checked by caller");
                if p.shares != shares {
                    return Err(rt(pos, "share count mismatch"));
                }
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    match self.eval(a, fr)? {
                        Val::Enc(xs) => vals.push(xs),
                        Val::Scalar(_) => return Err(rt(a.pos, "argument is not an encoding")),
                    }
                }
                Ok(Val::Enc(self.masked_inner(callee, &vals, rand)?))
            }
        }
    }

    fn lit(&self, v: u64, pos: Pos) -> Result<u16, InterpError> {
        self.field
            .elem(v)
            .map(|e| e.0)
            .map_err(|e| rt(pos, e.to_string()))
    }

    fn eval(&self, e: &Expr, fr: &Frame) -> Result<Val, InterpError> {
        let f = self.field;
        match &e.kind {
            ExprKind::Lit(v) => Ok(Val::Scalar(self.lit(*v, e.pos)?)),
            ExprKind::Var(v) => {
                if v.indices.is_empty() {
                    if let Some(i) = fr.loop_var(&v.name) {
                        let i = u64::try_from(i).map_err(|_| rt(e.pos, "negative loop value"))?;
                        return Ok(Val::Scalar(self.lit(i, e.pos)?));
                    }
                }
                let name = self.name_of(v, fr)?;
                if fr.encodings.contains(&name) {
                    let d = fr.shares.expect("encodings only in masked blocks");
                    let xs = (0..d)
                        .map(|j| fr.vars[&share_name(&name, j)])
                        .collect();
                    return Ok(Val::Enc(xs));
                }
                fr.vars
                    .get(&name)
                    .map(|x| Val::Scalar(*x))
                    .ok_or_else(|| rt(e.pos, format!("`{name}` unassigned")))
            }
            ExprKind::Bin(op @ (BinOp::Xor | BinOp::Mul), a, b) => {
                let (a, b) = (self.eval(a, fr)?, self.eval(b, fr)?);
                let g = |x: u16, y: u16| match op {
                    BinOp::Xor => x ^ y,
                    _ => f.mul(FieldElem(x), FieldElem(y)).0,
                };
                Ok(match (op, a, b) {
                    (_, Val::Scalar(x), Val::Scalar(y)) => Val::Scalar(g(x, y)),
                    (BinOp::Xor, Val::Enc(xs), Val::Enc(ys)) => {
                        Val::Enc(xs.iter().zip(&ys).map(|(x, y)| x ^ y).collect())
                    }
                    (BinOp::Xor, Val::Enc(mut xs), Val::Scalar(s))
                    | (BinOp::Xor, Val::Scalar(s), Val::Enc(mut xs)) => {
                        xs[0] ^= s;
                        Val::Enc(xs)
                    }
                    (BinOp::Mul, Val::Enc(xs), Val::Scalar(s))
                    | (BinOp::Mul, Val::Scalar(s), Val::Enc(xs)) => {
                        Val::Enc(xs.into_iter().map(|x| g(x, s)).collect())
                    }
                    _ => return Err(rt(e.pos, "product of encodings")),
                })
            }
            ExprKind::Bin(op, ..) => Err(rt(e.pos, format!("`{}` on field values", op.symbol()))),
            ExprKind::Not(_) | ExprKind::Neg(_) => Err(rt(e.pos, "integer operator on field values")),
            ExprKind::Call(name, args) => {
                if let Some(b) = Builtin::from_name(name) {
                    if !fr.in_affine {
                        return Err(rt(e.pos, "builtin outside affine body"));
                    }
                    let x = self.scalar(&args[0], fr)?;
                    let amount = match b.arity() {
                        1 => 0,
                        _ if b.takes_amount() => self.int(&args[1], fr)? as u64,
                        _ => u64::from(self.scalar(&args[1], fr)?),
                    };
                    return Ok(Val::Scalar(b.apply(f.width(), x, amount)));
                }
                if args.len() != 1 {
                    return Err(rt(e.pos, "affine application takes one argument"));
                }
                match self.eval(&args[0], fr)? {
                    Val::Scalar(x) => Ok(Val::Scalar(self.affine(name, x, e.pos)?)),
                    Val::Enc(xs) => {
                        let mut out = xs
                            .iter()
                            .map(|x| self.affine(name, *x, e.pos))
                            .collect::<Result<Vec<_>, _>>()?;
                        if out.len() % 2 == 0 {
                            out[0] ^= self.affine(name, 0, e.pos)?;
                        }
                        Ok(Val::Enc(out))
                    }
                }
            }
        }
    }

    fn scalar(&self, e: &Expr, fr: &Frame) -> Result<u16, InterpError> {
        match self.eval(e, fr)? {
            Val::Scalar(x) => Ok(x),
            Val::Enc(_) => Err(rt(e.pos, "encoding where a value is expected")),
        }
    }

    fn int(&self, e: &Expr, fr: &Frame) -> Result<i64, InterpError> {
        Ok(match &e.kind {
            ExprKind::Lit(v) => *v as i64,
            ExprKind::Var(v) if v.indices.is_empty() => fr
                .loop_var(&v.name)
                .ok_or_else(|| rt(e.pos, format!("`{}` is not constant", v.name)))?,
            ExprKind::Not(a) => i64::from(self.int(a, fr)? == 0),
            ExprKind::Neg(a) => -self.int(a, fr)?,
            ExprKind::Bin(op, a, b) => {
                let (x, y) = (self.int(a, fr)?, self.int(b, fr)?);
                match op {
                    BinOp::Xor => x ^ y,
                    BinOp::Mul => x * y,
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Div => x.checked_div(y).ok_or_else(|| rt(e.pos, "division by zero"))?,
                    BinOp::Rem => x.checked_rem(y).ok_or_else(|| rt(e.pos, "division by zero"))?,
                    BinOp::Lt => i64::from(x < y),
                    BinOp::Le => i64::from(x <= y),
                    BinOp::Gt => i64::from(x > y),
                    BinOp::Ge => i64::from(x >= y),
                    BinOp::Eq => i64::from(x == y),
                    BinOp::Ne => i64::from(x != y),
                    BinOp::And => i64::from(x != 0 && y != 0),
                    BinOp::Or => i64::from(x != 0 || y != 0),
                }
            }
            _ => return Err(rt(e.pos, "not an integer constant")),
        })
    }
}
