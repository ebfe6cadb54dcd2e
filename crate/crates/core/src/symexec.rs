//! Symbolic execution of preprocessed straight-line blocks into terms.

use std::collections::HashMap;

use thiserror::Error;

use crate::field::{FieldCtx, FieldError};
use crate::lang::{share_name, AffineDef, BinOp, Builtin, Expr, ExprKind, Pos, Proc, Program, Stmt, StmtKind};
use crate::term::{Sym, TermError, TermId, TermStore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymError {
    #[error("{pos}: `{name}` is read before it is assigned")]
    UseBeforeDef { pos: Pos, name: String },
    #[error("{pos}: not a straight-line field expression: {msg}")]
    Unsupported { pos: Pos, msg: String },
    #[error("output `{0}` is never assigned")]
    MissingOutput(String),
    #[error("{pos}: {source}")]
    Field {
        pos: Pos,
        #[source]
        source: FieldError,
    },
    #[error(transparent)]
    Term(#[from] TermError),
}

/// Variable environment and the random variables met so far.
#[derive(Clone, Debug, Default)]
pub struct SymState {
    pub env: HashMap<String, TermId>,
    pub randoms: Vec<Sym>,
}

/// Symbolic outputs of a masked block.
#[derive(Clone, Debug)]
pub struct MaskedOutput {
    pub shares: Vec<TermId>,
    pub randoms: Vec<Sym>,
}

/// A store with every affine symbol of `prog` declared.
pub fn store_for(prog: &Program) -> TermStore {
    TermStore::with_symbols(prog.affine_names())
}

enum Outcome {
    Done,
    /// A builtin bit operation was met.
    Opaque,
}

struct Exec<'a> {
    store: &'a mut TermStore,
    field: &'a FieldCtx,
    state: SymState,
    allow_builtins: bool,
}

impl Exec<'_> {
    fn block(&mut self, body: &[Stmt]) -> Result<Outcome, SymError> {
        for s in body {
            match &s.kind {
                StmtKind::Assign { target, value } => {
                    let Some(t) = self.expr(value)? else {
                        return Ok(Outcome::Opaque);
                    };
                    self.state.env.insert(target.name.clone(), t);
                }
                StmtKind::Rand { target } => {
                    let t = self.store.mk_var(&target.name);
                    self.state.randoms.push(Sym::from(target.name.as_str()));
                    self.state.env.insert(target.name.clone(), t);
                }
                StmtKind::Assume(_) | StmtKind::Assert(_) => {}
                StmtKind::For { .. } | StmtKind::If { .. } => {
                    return Err(SymError::Unsupported {
                        pos: s.pos,
                        msg: "loops and conditionals must be preprocessed away".into(),
                    })
                }
            }
        }
        Ok(Outcome::Done)
    }

    /// `None` when the expression uses a builtin.
    fn expr(&mut self, e: &Expr) -> Result<Option<TermId>, SymError> {
        Ok(Some(match &e.kind {
            ExprKind::Lit(v) => {
                let c = self.field.elem(*v).map_err(|source| SymError::Field { pos: e.pos, source })?;
                self.store.mk_const(c)
            }
            ExprKind::Var(v) => {
                if !v.indices.is_empty() {
                    return Err(SymError::Unsupported { pos: e.pos, msg: format!("indexed `{}`", v.name) });
                }
                *self.state.env.get(&v.name).ok_or_else(|| SymError::UseBeforeDef {
                    pos: e.pos,
                    name: v.name.clone(),
                })?
            }
            ExprKind::Bin(op, a, b) if op.is_field_op() => {
                let Some(a) = self.expr(a)? else { return Ok(None) };
                let Some(b) = self.expr(b)? else { return Ok(None) };
                match op {
                    BinOp::Xor => self.store.mk_add(a, b),
                    _ => self.store.mk_mul(a, b),
                }
            }
            ExprKind::Call(name, args) if Builtin::from_name(name).is_some() => {
                if self.allow_builtins {
                    return Ok(None);
                }
                return Err(SymError::Unsupported { pos: e.pos, msg: format!("builtin `{name}`") });
            }
            ExprKind::Call(name, args) if args.len() == 1 && self.store.is_symbol(name) => {
                let Some(a) = self.expr(&args[0])? else { return Ok(None) };
                self.store.mk_app(name, a)?
            }
            _ => {
                return Err(SymError::Unsupported {
                    pos: e.pos,
                    msg: "only `^`, `*`, literals, variables and affine applications".into(),
                })
            }
        }))
    }
}

/// Term of the original block over the scalar inputs.
pub fn exec_origin(store: &mut TermStore, field: &FieldCtx, proc: &Proc) -> Result<TermId, SymError> {
    let mut ex = Exec { store, field, state: SymState::default(), allow_builtins: false };
    for i in &proc.inputs {
        let t = ex.store.mk_var(i);
        ex.state.env.insert(i.clone(), t);
    }
    ex.block(&proc.orig)?;
    ex.state
        .env
        .get(&proc.output)
        .copied()
        .ok_or_else(|| SymError::MissingOutput(proc.output.clone()))
}

/// One term per output share over the input shares `{input}{j}` and the
/// random variables.
pub fn exec_masked(store: &mut TermStore, field: &FieldCtx, proc: &Proc) -> Result<MaskedOutput, SymError> {
    let mut ex = Exec { store, field, state: SymState::default(), allow_builtins: false };
    for i in &proc.inputs {
        for j in 0..proc.shares {
            let name = share_name(i, j);
            let t = ex.store.mk_var(&name);
            ex.state.env.insert(name, t);
        }
    }
    ex.block(&proc.masked)?;
    let mut shares = Vec::with_capacity(proc.shares as usize);
    for j in 0..proc.shares {
        let name = share_name(&proc.output, j);
        let t = ex.state.env.get(&name).copied().ok_or(SymError::MissingOutput(name))?;
        shares.push(t);
    }
    Ok(MaskedOutput { shares, randoms: ex.state.randoms })
}

/// Body term of an affine definition over its input variable, or `None`
/// when the body uses builtin bit operations and stays opaque.
pub fn exec_affine_body(store: &mut TermStore, field: &FieldCtx, def: &AffineDef) -> Result<Option<TermId>, SymError> {
    let mut ex = Exec { store, field, state: SymState::default(), allow_builtins: true };
    let x = ex.store.mk_var(&def.input);
    ex.state.env.insert(def.input.clone(), x);
    match ex.block(&def.body)? {
        Outcome::Opaque => Ok(None),
        Outcome::Done => ex
            .state
            .env
            .get(&def.output)
            .copied()
            .map(Some)
            .ok_or_else(|| SymError::MissingOutput(def.output.clone())),
    }
}

/// Left fold of XOR over the shares.
pub fn xor_fold(store: &mut TermStore, shares: &[TermId]) -> TermId {
    let (&first, rest) = shares.split_first().expect("at least one share");
    rest.iter().fold(first, |acc, &t| store.mk_add(acc, t))
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::field::FieldElem;
    use crate::lang::{parse, preprocess, Interpreter};
    use crate::term::Interpretation;

    const FIG2: &str = include_str!("../msl/fig2.msl");

    fn fig2() -> (Program, Program) {
        let p = parse(FIG2).unwrap();
        let q = preprocess(&p).unwrap();
        (p, q)
    }

    #[test]
    fn origin_terms() {
        let (_, q) = fig2();
        let f = FieldCtx::aes();
        let mut s = store_for(&q);
        let t = exec_origin(&mut s, &f, q.proc("sec_mult").unwrap()).unwrap();
        assert_eq!(s.display(t).to_string(), "a*b");
        let t = exec_origin(&mut s, &f, q.proc("refresh_masks").unwrap()).unwrap();
        assert_eq!(s.display(t).to_string(), "x");
        let t = exec_origin(&mut s, &f, q.proc("sec_exp254").unwrap()).unwrap();
        assert!(s.symbols_in(t).iter().map(|x| &**x).eq(["exp16", "exp2", "exp4"]));
    }

    #[test]
    fn masked_terms() {
        let (_, q) = fig2();
        let f = FieldCtx::aes();
        let mut s = store_for(&q);
        let out = exec_masked(&mut s, &f, q.proc("sec_mult").unwrap()).unwrap();
        assert_eq!(s.display(out.shares[0]).to_string(), "a0*b0 ^ r0");
        assert_eq!(s.display(out.shares[1]).to_string(), "a1*b1 ^ r0 ^ a0*b1 ^ a1*b0");
        assert_eq!(out.randoms.len(), 1);
        let out = exec_masked(&mut s, &f, q.proc("refresh_masks").unwrap()).unwrap();
        let shown: Vec<String> = out.shares.iter().map(|&t| s.display(t).to_string()).collect();
        assert_eq!(shown, ["x0 ^ r0", "x1 ^ r0"]);
        let sum = xor_fold(&mut s, &out.shares);
        assert_eq!(s.display(sum).to_string(), "x0 ^ r0 ^ x1 ^ r0");
    }

    #[test]
    fn identity_and_single_share() {
        let p = parse("proc f(x) -> y { y <- x; shares 2; y0 <- x0; y1 <- x1; }").unwrap();
        let f = FieldCtx::gf16();
        let mut s = store_for(&p);
        let out = exec_masked(&mut s, &f, &p.procs[0]).unwrap();
        let x0 = s.mk_var("x0");
        let x1 = s.mk_var("x1");
        assert_eq!(out.shares, vec![x0, x1]);
        assert_eq!(xor_fold(&mut s, &[x0]), x0);
    }

    #[test]
    fn affine_bodies() {
        let p = parse(
            "affine sq(x) -> y { y <- x * x; }
             affine rot(x) -> y { t <- rotl(x, 1); y <- t ^ x; }",
        )
        .unwrap();
        let q = preprocess(&p).unwrap();
        let f = FieldCtx::aes();
        let mut s = store_for(&q);
        let t = exec_affine_body(&mut s, &f, q.affine_def("sq").unwrap()).unwrap().unwrap();
        assert_eq!(s.display(t).to_string(), "x*x");
        assert_eq!(exec_affine_body(&mut s, &f, q.affine_def("rot").unwrap()).unwrap(), None);
    }

    #[test]
    fn errors() {
        let f = FieldCtx::gf16();
        let p = parse("proc f(x) -> y { y <- x ^ 16; shares 1; y0 <- x0; }").unwrap();
        let mut s = store_for(&p);
        assert!(matches!(exec_origin(&mut s, &f, &p.procs[0]), Err(SymError::Field { .. })));
        let p = parse("proc f(x) -> y { y <- x; shares 2; y0 <- x0; }").unwrap();
        assert_eq!(
            exec_masked(&mut s, &f, &p.procs[0]).unwrap_err(),
            SymError::MissingOutput("y1".into())
        );
    }

    /// Symbolic outputs agree with the direct interpreter on the
    /// unpreprocessed program.
    #[test]
    fn agrees_with_interpreter() {
        let (p, q) = fig2();
        let f = FieldCtx::aes();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut interp = Interpretation::new();
        for (name, e) in [("exp2", 2u64), ("exp4", 4), ("exp16", 16)] {
            interp.insert(name, f.elements().map(|x| f.pow(x, e)).collect());
        }
        let reference = Interpreter::new(&p, &f);
        for proc in &q.procs {
            let mut s = store_for(&q);
            let origin = exec_origin(&mut s, &f, proc).unwrap();
            let masked = exec_masked(&mut s, &f, proc).unwrap();
            for _ in 0..32 {
                let inputs: Vec<FieldElem> = proc.inputs.iter().map(|_| FieldElem(rng.gen::<u8>().into())).collect();
                let shares: Vec<Vec<FieldElem>> = proc
                    .inputs
                    .iter()
                    .map(|_| (0..proc.shares).map(|_| FieldElem(rng.gen::<u8>().into())).collect())
                    .collect();
                let rands: Vec<FieldElem> =
                    (0..masked.randoms.len()).map(|_| FieldElem(rng.gen::<u8>().into())).collect();

                let mut env: HashMap<Sym, FieldElem> =
                    proc.inputs.iter().zip(&inputs).map(|(i, v)| (Sym::from(i.as_str()), *v)).collect();
                assert_eq!(
                    s.eval(origin, &f, &env, &interp).unwrap(),
                    reference.run_orig(&proc.name, &inputs).unwrap()
                );
                for (i, sh) in proc.inputs.iter().zip(&shares) {
                    for (j, v) in sh.iter().enumerate() {
                        env.insert(Sym::from(share_name(i, j as u32).as_str()), *v);
                    }
                }
                for (r, v) in masked.randoms.iter().zip(&rands) {
                    env.insert(r.clone(), *v);
                }
                let mut it = rands.iter().copied();
                let expect = reference.run_masked(&proc.name, &shares, &mut || it.next().unwrap()).unwrap();
                let got: Vec<FieldElem> =
                    masked.shares.iter().map(|&t| s.eval(t, &f, &env, &interp).unwrap()).collect();
                assert_eq!(got, expect, "{}", proc.name);
            }
        }
    }
}
