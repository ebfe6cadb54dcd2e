//! Loop unrolling, branch elimination, procedure inlining and lowering of
//! encoding-level statements to share-level ones.
//!
//! After preprocessing every body holds only assignments and `rand`
//! statements over plain variable names, and expressions use only `^`,
//! `*`, literals, variables, affine applications and (inside affine
//! bodies) builtins with literal amounts.

use std::collections::{HashMap, HashSet};

use super::{
    indexed_name, share_name, BinOp, Builtin, Expr, ExprKind, LangError, Pos, Proc, Program, Stmt,
    StmtKind, VarRef,
};

/// Upper bound on emitted statements per body, guarding runaway unrolling.
const MAX_STMTS: usize = 4_000_000;

pub fn preprocess(prog: &Program) -> Result<Program, LangError> {
    let graph = prog.call_graph()?;
    let order: Vec<String> = graph
        .topological_order()?
        .into_iter()
        .map(str::to_string)
        .collect();

    let no_procs = HashMap::new();
    let mut affine_defs = Vec::with_capacity(prog.affine_defs.len());
    for a in &prog.affine_defs {
        let mut f = Flattener::new(prog, &no_procs, Mode::Affine);
        f.define(&a.input);
        f.block(&a.body)?;
        if !f.defined.contains(&a.output) {
            return Err(LangError::MissingOutput {
                proc_name: a.name.clone(),
                name: a.output.clone(),
            });
        }
        let mut a2 = a.clone();
        a2.body = f.out;
        affine_defs.push(a2);
    }

    let mut done: HashMap<String, Proc> = HashMap::new();
    for name in &order {
        let Some(p) = prog.proc(name) else { continue };
        let mut orig = Flattener::new(prog, &done, Mode::Orig);
        for i in &p.inputs {
            orig.define(i);
        }
        orig.block(&p.orig)?;
        if !orig.defined.contains(&p.output) {
            return Err(LangError::MissingOutput {
                proc_name: p.name.clone(),
                name: p.output.clone(),
            });
        }
        let mut masked = Flattener::new(prog, &done, Mode::Masked { shares: p.shares });
        for i in &p.inputs {
            masked.encodings.insert(i.clone());
            for j in 0..p.shares {
                masked.define(&share_name(i, j));
            }
        }
        masked.block(&p.masked)?;
        for j in 0..p.shares {
            let s = share_name(&p.output, j);
            if !masked.defined.contains(&s) {
                return Err(LangError::MissingOutput { proc_name: p.name.clone(), name: s });
            }
        }
        let mut p2 = p.clone();
        p2.orig = orig.out;
        p2.masked = masked.out;
        done.insert(name.clone(), p2);
    }

    Ok(Program {
        field: prog.field.clone(),
        affine_defs,
        affine_decls: prog.affine_decls.clone(),
        procs: prog
            .procs
            .iter()
            .map(|p| done.remove(&p.name).expect("every proc is in the call graph"))
            .collect(),
    })
}

/// True when every body consists of plain assignments and `rand`.
pub fn is_straight_line(prog: &Program) -> bool {
    let ok = |body: &[Stmt]| {
        body.iter().all(|s| match &s.kind {
            StmtKind::Assign { target, .. } | StmtKind::Rand { target } => target.indices.is_empty(),
            _ => false,
        })
    };
    prog.affine_defs.iter().all(|a| ok(&a.body))
        && prog.procs.iter().all(|p| ok(&p.orig) && ok(&p.masked))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Orig,
    Masked { shares: u32 },
    Affine,
}

enum Lowered {
    Scalar(Expr),
    Enc(Vec<Expr>),
}

struct Flattener<'a> {
    prog: &'a Program,
    done: &'a HashMap<String, Proc>,
    mode: Mode,
    out: Vec<Stmt>,
    loops: Vec<(String, i64)>,
    defined: HashSet<String>,
    encodings: HashSet<String>,
    /// Source position of the `rand` statement that introduced each name.
    rand_origin: HashMap<String, Pos>,
    rename: HashMap<String, String>,
    calls: HashMap<String, u32>,
}

impl<'a> Flattener<'a> {
    fn new(prog: &'a Program, done: &'a HashMap<String, Proc>, mode: Mode) -> Self {
        Flattener {
            prog,
            done,
            mode,
            out: Vec::new(),
            loops: Vec::new(),
            defined: HashSet::new(),
            encodings: HashSet::new(),
            rand_origin: HashMap::new(),
            rename: HashMap::new(),
            calls: HashMap::new(),
        }
    }

    fn define(&mut self, name: &str) {
        self.defined.insert(name.to_string());
    }

    fn emit(&mut self, kind: StmtKind, pos: Pos) -> Result<(), LangError> {
        if self.out.len() >= MAX_STMTS {
            return Err(LangError::invalid(pos, "body exceeds the unrolling limit"));
        }
        self.out.push(Stmt { kind, pos });
        Ok(())
    }

    fn loop_var(&self, name: &str) -> Option<i64> {
        self.loops.iter().rev().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    fn block(&mut self, body: &[Stmt]) -> Result<(), LangError> {
        for s in body {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), LangError> {
        match &s.kind {
            StmtKind::Assign { target, value } => self.assign(target, value, s.pos),
            StmtKind::Rand { target } => self.rand(target, s.pos),
            StmtKind::For { var, lo, hi, body } => {
                let lo = self.eval_int(lo)?;
                let hi = self.eval_int(hi)?;
                for v in lo..hi {
                    self.loops.push((var.clone(), v));
                    let r = self.block(body);
                    self.loops.pop();
                    r?;
                }
                Ok(())
            }
            StmtKind::If { cond, then_body, else_body } => {
                if self.eval_int(cond)? != 0 {
                    self.block(then_body)
                } else {
                    self.block(else_body)
                }
            }
            StmtKind::Assume(_) | StmtKind::Assert(_) => Ok(()),
        }
    }

    fn target_name(&self, target: &VarRef, pos: Pos) -> Result<String, LangError> {
        if target.indices.is_empty() && self.loop_var(&target.name).is_some() {
            return Err(LangError::invalid(
                pos,
                format!("cannot assign to loop variable `{}`", target.name),
            ));
        }
        self.resolve(target)
    }

    fn resolve(&self, v: &VarRef) -> Result<String, LangError> {
        if v.indices.is_empty() {
            return Ok(v.name.clone());
        }
        let mut idx = Vec::with_capacity(v.indices.len());
        for e in &v.indices {
            let i = self.eval_int(e)?;
            if i < 0 {
                return Err(LangError::invalid(e.pos, format!("negative index {i}")));
            }
            idx.push(i);
        }
        Ok(indexed_name(&v.name, &idx))
    }

    fn rand(&mut self, target: &VarRef, pos: Pos) -> Result<(), LangError> {
        match self.mode {
            Mode::Orig => {
                return Err(LangError::invalid(pos, "`rand` is not allowed in the original block"))
            }
            Mode::Affine => {
                return Err(LangError::invalid(pos, "`rand` is not allowed in affine bodies"))
            }
            Mode::Masked { .. } => {}
        }
        let name = self.target_name(target, pos)?;
        let fresh = match self.rand_origin.get(&name) {
            Some(&origin) if origin == pos => {
                let mut k = 1u32;
                loop {
                    let cand = format!("{name}_{k}");
                    if !self.defined.contains(&cand) && !self.rand_origin.contains_key(&cand) {
                        break cand;
                    }
                    k += 1;
                }
            }
            Some(_) => return Err(LangError::RandomRedefined { pos, name }),
            None => {
                if self.defined.contains(&name) {
                    return Err(LangError::invalid(
                        pos,
                        format!("random `{name}` shadows an existing variable"),
                    ));
                }
                name.clone()
            }
        };
        self.rand_origin.insert(name.clone(), pos);
        self.rand_origin.insert(fresh.clone(), pos);
        if fresh != name {
            self.rename.insert(name.clone(), fresh.clone());
        } else {
            self.rename.remove(&name);
        }
        self.encodings.remove(&name);
        self.define(&fresh);
        self.emit(StmtKind::Rand { target: VarRef::plain(fresh) }, pos)
    }

    fn assign(&mut self, target: &VarRef, value: &Expr, pos: Pos) -> Result<(), LangError> {
        let name = self.target_name(target, pos)?;
        if let ExprKind::Call(callee, args) = &value.kind {
            if self.prog.proc(callee).is_some() {
                return self.inline_call(&name, callee, args, pos);
            }
        }
        if let Mode::Masked { shares } = self.mode {
            if self.mentions_encoding(value)? {
                let lowered = self.lower_enc(value)?;
                let exprs = match lowered {
                    Lowered::Enc(v) => v,
                    Lowered::Scalar(_) => unreachable!("expression mentions an encoding"),
                };
                debug_assert_eq!(exprs.len(), shares as usize);
                for (j, e) in exprs.into_iter().enumerate() {
                    let s = share_name(&name, j as u32);
                    self.emit(StmtKind::Assign { target: VarRef::plain(s.clone()), value: e }, pos)?;
                    self.define(&s);
                    self.rename.remove(&s);
                }
                self.encodings.insert(name);
                return Ok(());
            }
        }
        let e = self.lower_field(value)?;
        self.emit(StmtKind::Assign { target: VarRef::plain(name.clone()), value: e }, pos)?;
        self.rename.remove(&name);
        self.encodings.remove(&name);
        self.define(&name);
        Ok(())
    }

    fn inline_call(
        &mut self,
        target: &str,
        callee: &str,
        args: &[Expr],
        pos: Pos,
    ) -> Result<(), LangError> {
        if self.mode == Mode::Affine {
            return Err(LangError::invalid(
                pos,
                format!("procedure `{callee}` cannot be called from an affine body"),
            ));
        }
        let proc_ = self
            .done
            .get(callee)
            .ok_or_else(|| LangError::Recursion(callee.to_string()))?;
        if args.len() != proc_.inputs.len() {
            return Err(LangError::invalid(
                pos,
                format!(
                    "`{callee}` takes {} arguments, got {}",
                    proc_.inputs.len(),
                    args.len()
                ),
            ));
        }
        let k = {
            let c = self.calls.entry(callee.to_string()).or_insert(0);
            *c += 1;
            *c
        };
        let prefix = format!("{callee}.{k}.");
        let rn = |v: &str| format!("{prefix}{v}");
        match self.mode {
            Mode::Orig => {
                for (input, arg) in proc_.inputs.iter().zip(args) {
                    let e = self.lower_field(arg)?;
                    self.emit(StmtKind::Assign { target: VarRef::plain(rn(input)), value: e }, pos)?;
                }
                for s in &proc_.orig {
                    let kind = rename_stmt(&s.kind, &rn);
                    self.emit(kind, pos)?;
                }
                let value = Expr::var(rn(&proc_.output), pos);
                self.emit(StmtKind::Assign { target: VarRef::plain(target), value }, pos)?;
                self.rename.remove(target);
                self.encodings.remove(target);
                self.define(target);
            }
            Mode::Masked { shares } => {
                if proc_.shares != shares {
                    return Err(LangError::ShareMismatch {
                        pos,
                        callee: callee.to_string(),
                        got: shares,
                        expected: proc_.shares,
                    });
                }
                let mut arg_names = Vec::with_capacity(args.len());
                for arg in args {
                    let name = match &arg.kind {
                        ExprKind::Var(v) => self.resolve(v)?,
                        _ => String::new(),
                    };
                    if !self.encodings.contains(&name) {
                        return Err(LangError::invalid(
                            arg.pos,
                            format!("arguments of `{callee}` in a masked block must be encodings"),
                        ));
                    }
                    arg_names.push(name);
                }
                for (input, arg) in proc_.inputs.iter().zip(&arg_names) {
                    for j in 0..shares {
                        let value = Expr::var(share_name(arg, j), pos);
                        let t = rn(&share_name(input, j));
                        self.emit(StmtKind::Assign { target: VarRef::plain(t), value }, pos)?;
                    }
                }
                for s in &proc_.masked {
                    let kind = rename_stmt(&s.kind, &rn);
                    if let StmtKind::Rand { target: t } = &kind {
                        self.rand_origin.insert(t.name.clone(), pos);
                        self.define(&t.name);
                    }
                    self.emit(kind, pos)?;
                }
                for j in 0..shares {
                    let s = share_name(target, j);
                    let value = Expr::var(rn(&share_name(&proc_.output, j)), pos);
                    self.emit(StmtKind::Assign { target: VarRef::plain(s.clone()), value }, pos)?;
                    self.rename.remove(&s);
                    self.define(&s);
                }
                self.encodings.insert(target.to_string());
            }
            Mode::Affine => unreachable!(),
        }
        Ok(())
    }

    fn mentions_encoding(&self, e: &Expr) -> Result<bool, LangError> {
        Ok(match &e.kind {
            ExprKind::Lit(_) => false,
            ExprKind::Var(v) => {
                if v.indices.is_empty() && self.loop_var(&v.name).is_some() {
                    false
                } else {
                    let n = self.resolve(v)?;
                    !self.rename.contains_key(&n) && self.encodings.contains(&n)
                }
            }
            ExprKind::Bin(_, a, b) => self.mentions_encoding(a)? || self.mentions_encoding(b)?,
            ExprKind::Not(a) | ExprKind::Neg(a) => self.mentions_encoding(a)?,
            ExprKind::Call(_, args) => {
                let mut any = false;
                for a in args {
                    any |= self.mentions_encoding(a)?;
                }
                any
            }
        })
    }

    fn read_var(&self, v: &VarRef, pos: Pos) -> Result<Expr, LangError> {
        if v.indices.is_empty() {
            if let Some(val) = self.loop_var(&v.name) {
                if val < 0 {
                    return Err(LangError::invalid(
                        pos,
                        format!("negative loop value {val} used as a field element"),
                    ));
                }
                return Ok(Expr::lit(val as u64, pos));
            }
        }
        let name = self.resolve(v)?;
        let name = self.rename.get(&name).cloned().unwrap_or(name);
        if !self.defined.contains(&name) {
            return Err(LangError::UseBeforeDef { pos, name });
        }
        Ok(Expr::var(name, pos))
    }

    fn lower_field(&self, e: &Expr) -> Result<Expr, LangError> {
        match &e.kind {
            ExprKind::Lit(v) => Ok(Expr::lit(*v, e.pos)),
            ExprKind::Var(v) => {
                if let Mode::Masked { .. } = self.mode {
                    let n = self.resolve(v)?;
                    if self.encodings.contains(&n) && !self.rename.contains_key(&n) {
                        return Err(LangError::invalid(
                            e.pos,
                            format!("encoding `{n}` used where a single value is expected"),
                        ));
                    }
                }
                self.read_var(v, e.pos)
            }
            ExprKind::Bin(op, a, b) if op.is_field_op() => {
                Ok(Expr::bin(*op, self.lower_field(a)?, self.lower_field(b)?))
            }
            ExprKind::Bin(op, ..) => Err(LangError::invalid(
                e.pos,
                format!("integer operator `{}` used on field values", op.symbol()),
            )),
            ExprKind::Not(_) | ExprKind::Neg(_) => Err(LangError::invalid(
                e.pos,
                "integer operator used on field values",
            )),
            ExprKind::Call(name, args) => self.lower_call(name, args, e.pos),
        }
    }

    fn lower_call(&self, name: &str, args: &[Expr], pos: Pos) -> Result<Expr, LangError> {
        if let Some(b) = Builtin::from_name(name) {
            if self.mode != Mode::Affine {
                return Err(LangError::invalid(
                    pos,
                    format!("builtin `{name}` is only allowed in affine bodies"),
                ));
            }
            if args.len() != b.arity() {
                return Err(LangError::invalid(
                    pos,
                    format!("`{name}` takes {} arguments, got {}", b.arity(), args.len()),
                ));
            }
            let mut out = vec![self.lower_field(&args[0])?];
            if b.arity() == 2 {
                if b.takes_amount() {
                    let k = self.eval_int(&args[1])?;
                    if k < 0 {
                        return Err(LangError::invalid(args[1].pos, "negative shift amount"));
                    }
                    out.push(Expr::lit(k as u64, args[1].pos));
                } else {
                    out.push(self.lower_field(&args[1])?);
                }
            }
            return Ok(Expr::call(name, out, pos));
        }
        if self.prog.is_affine(name) {
            if args.len() != 1 {
                return Err(LangError::invalid(
                    pos,
                    format!("affine `{name}` takes one argument, got {}", args.len()),
                ));
            }
            return Ok(Expr::call(name, vec![self.lower_field(&args[0])?], pos));
        }
        if self.prog.proc(name).is_some() {
            return Err(LangError::invalid(
                pos,
                format!("call to procedure `{name}` must be the whole right-hand side"),
            ));
        }
        Err(LangError::Unresolved { pos, name: name.to_string() })
    }

    fn lower_enc(&self, e: &Expr) -> Result<Lowered, LangError> {
        let Mode::Masked { shares } = self.mode else {
            unreachable!("encodings exist only in masked blocks")
        };
        let pos = e.pos;
        match &e.kind {
            ExprKind::Var(v) => {
                let is_loop = v.indices.is_empty() && self.loop_var(&v.name).is_some();
                if !is_loop {
                    let n = self.resolve(v)?;
                    if self.encodings.contains(&n) && !self.rename.contains_key(&n) {
                        let mut out = Vec::with_capacity(shares as usize);
                        for j in 0..shares {
                            out.push(self.read_var(&VarRef::plain(share_name(&n, j)), pos)?);
                        }
                        return Ok(Lowered::Enc(out));
                    }
                }
                Ok(Lowered::Scalar(self.read_var(v, pos)?))
            }
            ExprKind::Bin(op @ (BinOp::Xor | BinOp::Mul), a, b) => {
                let (la, lb) = (self.lower_enc(a)?, self.lower_enc(b)?);
                Ok(match (*op, la, lb) {
                    (op, Lowered::Scalar(x), Lowered::Scalar(y)) => Lowered::Scalar(Expr::bin(op, x, y)),
                    (BinOp::Xor, Lowered::Enc(xs), Lowered::Enc(ys)) => Lowered::Enc(
                        xs.into_iter().zip(ys).map(|(x, y)| Expr::bin(BinOp::Xor, x, y)).collect(),
                    ),
                    (BinOp::Xor, Lowered::Enc(mut xs), Lowered::Scalar(s)) => {
                        xs[0] = Expr::bin(BinOp::Xor, xs[0].clone(), s);
                        Lowered::Enc(xs)
                    }
                    (BinOp::Xor, Lowered::Scalar(s), Lowered::Enc(mut ys)) => {
                        ys[0] = Expr::bin(BinOp::Xor, s, ys[0].clone());
                        Lowered::Enc(ys)
                    }
                    (BinOp::Mul, Lowered::Enc(xs), Lowered::Scalar(s)) => Lowered::Enc(
                        xs.into_iter().map(|x| Expr::bin(BinOp::Mul, x, s.clone())).collect(),
                    ),
                    (BinOp::Mul, Lowered::Scalar(s), Lowered::Enc(ys)) => Lowered::Enc(
                        ys.into_iter().map(|y| Expr::bin(BinOp::Mul, s.clone(), y)).collect(),
                    ),
                    (BinOp::Mul, Lowered::Enc(_), Lowered::Enc(_)) => {
                        return Err(LangError::invalid(
                            pos,
                            "product of two encodings needs a masked multiplication gadget",
                        ))
                    }
                    _ => unreachable!(),
                })
            }
            ExprKind::Call(name, args) if self.prog.is_affine(name) && args.len() == 1 => {
                match self.lower_enc(&args[0])? {
                    Lowered::Scalar(x) => Ok(Lowered::Scalar(Expr::call(name, vec![x], pos))),
                    Lowered::Enc(xs) => {
                        let mut out: Vec<Expr> = xs
                            .into_iter()
                            .map(|x| Expr::call(name.as_str(), vec![x], pos))
                            .collect();
                        if shares % 2 == 0 {
                            let c = Expr::call(name.as_str(), vec![Expr::lit(0, pos)], pos);
                            out[0] = Expr::bin(BinOp::Xor, out[0].clone(), c);
                        }
                        Ok(Lowered::Enc(out))
                    }
                }
            }
            _ => Ok(Lowered::Scalar(self.lower_field(e)?)),
        }
    }

    fn eval_int(&self, e: &Expr) -> Result<i64, LangError> {
        let not_const = |msg: String| LangError::NotConstant { pos: e.pos, msg };
        Ok(match &e.kind {
            ExprKind::Lit(v) => {
                i64::try_from(*v).map_err(|_| not_const(format!("literal {v} too large")))?
            }
            ExprKind::Var(v) if v.indices.is_empty() => self
                .loop_var(&v.name)
                .ok_or_else(|| not_const(format!("`{}` is not a loop variable", v.name)))?,
            ExprKind::Var(v) => return Err(not_const(format!("`{}[..]` is a variable", v.name))),
            ExprKind::Not(a) => i64::from(self.eval_int(a)? == 0),
            ExprKind::Neg(a) => self.eval_int(a)?.wrapping_neg(),
            ExprKind::Bin(op, a, b) => {
                let (x, y) = (self.eval_int(a)?, self.eval_int(b)?);
                match op {
                    BinOp::Xor => x ^ y,
                    BinOp::Mul => x.wrapping_mul(y),
                    BinOp::Add => x.wrapping_add(y),
                    BinOp::Sub => x.wrapping_sub(y),
                    BinOp::Div | BinOp::Rem if y == 0 => {
                        return Err(LangError::invalid(e.pos, "division by zero"))
                    }
                    BinOp::Div => x.wrapping_div(y),
                    BinOp::Rem => x.wrapping_rem(y),
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
            ExprKind::Call(name, _) => {
                return Err(not_const(format!("call to `{name}` in a constant context")))
            }
        })
    }
}

fn rename_expr(e: &Expr, rn: &dyn Fn(&str) -> String) -> Expr {
    let kind = match &e.kind {
        ExprKind::Lit(v) => ExprKind::Lit(*v),
        ExprKind::Var(v) => ExprKind::Var(VarRef::plain(rn(&v.name))),
        ExprKind::Bin(op, a, b) => {
            ExprKind::Bin(*op, Box::new(rename_expr(a, rn)), Box::new(rename_expr(b, rn)))
        }
        ExprKind::Not(a) => ExprKind::Not(Box::new(rename_expr(a, rn))),
        ExprKind::Neg(a) => ExprKind::Neg(Box::new(rename_expr(a, rn))),
        ExprKind::Call(name, args) => {
            ExprKind::Call(name.clone(), args.iter().map(|a| rename_expr(a, rn)).collect())
        }
    };
    Expr { kind, pos: e.pos }
}

fn rename_stmt(kind: &StmtKind, rn: &dyn Fn(&str) -> String) -> StmtKind {
    match kind {
        StmtKind::Assign { target, value } => StmtKind::Assign {
            target: VarRef::plain(rn(&target.name)),
            value: rename_expr(value, rn),
        },
        StmtKind::Rand { target } => StmtKind::Rand { target: VarRef::plain(rn(&target.name)) },
        other => unreachable!("flattened bodies are straight-line: {other:?}"),
    }
}
