//! The rewriting rules R1–R13 with constant folding and exponent
//! reduction, and normalization of terms into polynomials.
//!
//! [`normalize`] evaluates a term bottom-up in the polynomial algebra,
//! which is the strategy the rules induce once every subterm is a
//! polynomial. [`apply_rule`] and [`rewrite_randomly`] perform single
//! rewriting steps on terms and are used to test the rules one by one.

mod step;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::field::{FieldCtx, FieldElem};
use crate::term::{cmp_body, Factor, Monomial, Polynomial, Sym, TermError, TermId, TermNode, TermStore};

pub use step::{apply_rule, find_redexes, rewrite_randomly, Redex};

pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
    R10,
    R11,
    R12,
    R13,
    /// `c1·m ⊕ c2·m → (c1 ⊕ c2)·m`.
    FoldAdd,
    /// `c1 ⊗ c2 → c` for adjacent constant factors.
    FoldMul,
    /// Drop `2^n - 1` copies from a run of at least `2^n` equal factors.
    Fermat,
    /// `f(c·m) → f(c1·m) ⊕ f(c2·m) ⊕ λ(f)` where `c1` is the top bit of
    /// a coefficient `c = c1 ⊕ c2` with more than one bit set.
    Split,
}

impl Rule {
    pub const ALL: [Rule; 17] = [
        Rule::R1,
        Rule::R2,
        Rule::R3,
        Rule::R4,
        Rule::R5,
        Rule::R6,
        Rule::R7,
        Rule::R8,
        Rule::R9,
        Rule::R10,
        Rule::R11,
        Rule::R12,
        Rule::R13,
        Rule::FoldAdd,
        Rule::FoldMul,
        Rule::Fermat,
        Rule::Split,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::R1 => "R1",
            Rule::R2 => "R2",
            Rule::R3 => "R3",
            Rule::R4 => "R4",
            Rule::R5 => "R5",
            Rule::R6 => "R6",
            Rule::R7 => "R7",
            Rule::R8 => "R8",
            Rule::R9 => "R9",
            Rule::R10 => "R10",
            Rule::R11 => "R11",
            Rule::R12 => "R12",
            Rule::R13 => "R13",
            Rule::FoldAdd => "fold-add",
            Rule::FoldMul => "fold-mul",
            Rule::Fermat => "fermat",
            Rule::Split => "split",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Rule application counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleStats {
    counts: [u64; 17],
}

impl RuleStats {
    pub fn get(&self, rule: Rule) -> u64 {
        self.counts[rule.index()]
    }

    pub fn add(&mut self, rule: Rule, k: u64) {
        self.counts[rule.index()] += k;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &RuleStats) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    /// Nonzero counts in rule order.
    pub fn nonzero(&self) -> impl Iterator<Item = (Rule, u64)> + '_ {
        Rule::ALL
            .iter()
            .map(|&r| (r, self.get(r)))
            .filter(|&(_, k)| k > 0)
    }
}

impl Serialize for RuleStats {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(None)?;
        for (r, k) in self.nonzero() {
            map.serialize_entry(r.name(), &k)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("affine constant of `{0}` is unknown")]
    UnknownConstant(String),
    #[error("{rule} does not apply: {msg}")]
    Premise { rule: Rule, msg: String },
    #[error("no subterm at position {0:?}")]
    BadPosition(Vec<u8>),
    #[error("term is not in normal form: {0}")]
    NotNormal(String),
    #[error(transparent)]
    Term(#[from] TermError),
}

/// Field, affine constants λ, step budget, statistics and optional trace.
#[derive(Clone, Debug)]
pub struct RewriteCtx {
    pub field: FieldCtx,
    lambda: HashMap<Sym, FieldElem>,
    pub budget: u64,
    pub steps: u64,
    pub stats: RuleStats,
    pub trace: Option<Vec<String>>,
}

impl RewriteCtx {
    pub fn new(field: FieldCtx) -> Self {
        RewriteCtx {
            field,
            lambda: HashMap::new(),
            budget: DEFAULT_STEP_BUDGET,
            steps: 0,
            stats: RuleStats::default(),
            trace: None,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget.max(1);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn set_constant(&mut self, symbol: &str, c: FieldElem) {
        self.lambda.insert(Arc::from(symbol), c);
    }

    pub fn constant(&self, symbol: &str) -> Option<FieldElem> {
        self.lambda.get(symbol).copied()
    }

    pub fn constants(&self) -> impl Iterator<Item = (&str, FieldElem)> {
        self.lambda.iter().map(|(k, v)| (&**k, *v))
    }

    fn lambda_of(&self, symbol: &str) -> Result<FieldElem, RewriteError> {
        self.constant(symbol)
            .ok_or_else(|| RewriteError::UnknownConstant(symbol.to_string()))
    }

    fn charge(&mut self, rule: Rule, k: u64) -> Result<(), RewriteError> {
        if k == 0 {
            return Ok(());
        }
        self.stats.add(rule, k);
        self.steps += k;
        if self.steps > self.budget {
            return Err(RewriteError::BudgetExhausted(self.budget));
        }
        Ok(())
    }

    fn log(&mut self, rule: Rule, redex: impl FnOnce() -> String) {
        if let Some(t) = &mut self.trace {
            t.push(format!("{rule}: {}", redex()));
        }
    }
}

/// Normal form of `root`: a polynomial with strictly descending monomials
/// and descending factors.
pub fn normalize(store: &TermStore, root: TermId, ctx: &mut RewriteCtx) -> Result<Polynomial, RewriteError> {
    let order = store.post_order(root);
    // Remaining parent edges per node; an entry leaves the memo after its last use.
    let mut uses: HashMap<TermId, u32> = HashMap::with_capacity(order.len());
    for &id in &order {
        for c in store.children(id) {
            *uses.entry(c).or_insert(0) += 1;
        }
    }
    let mut memo: HashMap<TermId, Arc<Polynomial>> = HashMap::with_capacity(order.len());
    // The child's polynomial, removed from the memo on its last use.
    let mut take = |memo: &mut HashMap<TermId, Arc<Polynomial>>, c: TermId| -> Arc<Polynomial> {
        let left = uses.get_mut(&c).expect("child counted");
        *left -= 1;
        if *left == 0 {
            memo.remove(&c).expect("child normalized")
        } else {
            memo[&c].clone()
        }
    };
    for id in order {
        let p = match store.node(id) {
            TermNode::Const(c) => Polynomial::constant(*c),
            TermNode::Var(v) => Polynomial { terms: vec![Monomial::var(v.clone())] },
            TermNode::Add(a, b) => {
                let (pa, pb) = (take(&mut memo, *a), take(&mut memo, *b));
                if pb.is_zero() {
                    ctx.charge(Rule::R6, 1)?;
                    owned(pa)
                } else if pa.is_zero() {
                    ctx.charge(Rule::R7, 1)?;
                    owned(pb)
                } else {
                    add_polys_owned(owned(pa), owned(pb), ctx)?
                }
            }
            TermNode::Mul(a, b) => {
                let (pa, pb) = (take(&mut memo, *a), take(&mut memo, *b));
                mul_polys(&pa, &pb, ctx)?
            }
            TermNode::App(f, a) => {
                let pa = take(&mut memo, *a);
                let r = apply_symbol(f, &pa, ctx)?;
                if ctx.trace.is_some() && r.len() != 1 {
                    let rule = if pa.is_zero() { Rule::R13 } else { Rule::R12 };
                    ctx.log(rule, || store.display(id).to_string());
                }
                r
            }
        };
        memo.insert(id, Arc::new(p));
    }
    let out = Arc::try_unwrap(memo.remove(&root).expect("root normalized"))
        .unwrap_or_else(|p| (*p).clone());
    debug_assert!(out.check_shape(&ctx.field).is_ok(), "{out}");
    Ok(out)
}

fn owned(p: Arc<Polynomial>) -> Polynomial {
    Arc::try_unwrap(p).unwrap_or_else(|p| (*p).clone())
}

/// [`add_polys`] moving monomials out of its arguments.
fn add_polys_owned(a: Polynomial, b: Polynomial, ctx: &mut RewriteCtx) -> Result<Polynomial, RewriteError> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut ia, mut ib) = (a.terms.into_iter().peekable(), b.terms.into_iter().peekable());
    let (mut cancels, mut folds) = (0, 0);
    while let (Some(ma), Some(mb)) = (ia.peek(), ib.peek()) {
        match cmp_body(ma, mb) {
            Ordering::Greater => out.push(ia.next().unwrap()),
            Ordering::Less => out.push(ib.next().unwrap()),
            Ordering::Equal => {
                let (mut ma, mb) = (ia.next().unwrap(), ib.next().unwrap());
                if ma.coeff == mb.coeff {
                    cancels += 1;
                } else {
                    folds += 1;
                }
                ma.coeff = ctx.field.add(ma.coeff, mb.coeff);
                if !ma.coeff.is_zero() {
                    out.push(ma);
                }
            }
        }
    }
    out.extend(ia);
    out.extend(ib);
    ctx.charge(Rule::R1, 1)?;
    ctx.charge(Rule::R3, cancels)?;
    ctx.charge(Rule::FoldAdd, folds)?;
    Ok(Polynomial { terms: out })
}

/// XOR of two normal forms: a sorted merge in which equal monomials
/// cancel and equal bodies add their coefficients.
pub fn add_polys(a: &Polynomial, b: &Polynomial, ctx: &mut RewriteCtx) -> Result<Polynomial, RewriteError> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let (mut cancels, mut folds) = (0, 0);
    while i < a.len() && j < b.len() {
        let (ma, mb) = (&a.terms[i], &b.terms[j]);
        match cmp_body(ma, mb) {
            Ordering::Greater => {
                out.push(ma.clone());
                i += 1;
            }
            Ordering::Less => {
                out.push(mb.clone());
                j += 1;
            }
            Ordering::Equal => {
                let c = ctx.field.add(ma.coeff, mb.coeff);
                if ma.coeff == mb.coeff {
                    cancels += 1;
                } else {
                    folds += 1;
                }
                if !c.is_zero() {
                    out.push(Monomial { powers: ma.powers.clone(), coeff: c });
                }
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a.terms[i..]);
    out.extend_from_slice(&b.terms[j..]);
    ctx.charge(Rule::R1, 1)?;
    ctx.charge(Rule::R3, cancels)?;
    ctx.charge(Rule::FoldAdd, folds)?;
    Ok(Polynomial { terms: out })
}

/// Product of two normal forms by distribution, then sorting and merging.
pub fn mul_polys(a: &Polynomial, b: &Polynomial, ctx: &mut RewriteCtx) -> Result<Polynomial, RewriteError> {
    if b.is_zero() {
        ctx.charge(Rule::R4, 1)?;
        return Ok(Polynomial::zero());
    }
    if a.is_zero() {
        ctx.charge(Rule::R5, 1)?;
        return Ok(Polynomial::zero());
    }
    if b.as_constant() == Some(FieldElem::ONE) {
        ctx.charge(Rule::R8, 1)?;
        return Ok(a.clone());
    }
    if a.as_constant() == Some(FieldElem::ONE) {
        ctx.charge(Rule::R9, 1)?;
        return Ok(b.clone());
    }
    let products = (a.len() as u64).saturating_mul(b.len() as u64);
    if b.len() > 1 {
        ctx.charge(Rule::R10, (b.len() as u64 - 1) * a.len() as u64)?;
    }
    if a.len() > 1 {
        ctx.charge(Rule::R11, a.len() as u64 - 1)?;
    }
    ctx.charge(Rule::R2, products)?;
    let group = ctx.field.group_order();
    let mut terms = Vec::with_capacity(products as usize);
    let (mut fermat, mut fold_mul) = (0, 0);
    for ma in &a.terms {
        for mb in &b.terms {
            let m = ma.mul(mb, &ctx.field);
            if m.coeff.is_zero() {
                continue;
            }
            if ma.coeff != FieldElem::ONE && mb.coeff != FieldElem::ONE {
                fold_mul += 1;
            }
            fermat += count_reductions(ma, mb, group);
            terms.push(m);
        }
    }
    ctx.charge(Rule::FoldMul, fold_mul)?;
    ctx.charge(Rule::Fermat, fermat)?;
    let merged = merge_sorted(terms, ctx)?;
    Ok(merged)
}

fn count_reductions(a: &Monomial, b: &Monomial, group: u64) -> u64 {
    let mut n = 0;
    for (f, ka) in &a.powers {
        if let Some((_, kb)) = b.powers.iter().find(|(g, _)| g == f) {
            if u64::from(*ka) + u64::from(*kb) > group {
                n += 1;
            }
        }
    }
    n
}

/// Sorts monomials descending and merges equal bodies.
fn merge_sorted(mut terms: Vec<Monomial>, ctx: &mut RewriteCtx) -> Result<Polynomial, RewriteError> {
    terms.sort_unstable_by(|a, b| cmp_body(b, a));
    let mut out: Vec<Monomial> = Vec::with_capacity(terms.len());
    let (mut cancels, mut folds) = (0, 0);
    for m in terms {
        if let Some(last) = out.last_mut() {
            if last.same_body(&m) {
                if last.coeff == m.coeff {
                    cancels += 1;
                } else {
                    folds += 1;
                }
                last.coeff = ctx.field.add(last.coeff, m.coeff);
                continue;
            }
        }
        out.push(m);
    }
    out.retain(|m| !m.coeff.is_zero());
    ctx.charge(Rule::R3, cancels)?;
    ctx.charge(Rule::FoldAdd, folds)?;
    Ok(Polynomial { terms: out })
}

/// `f` applied to a normal form: R13 on 0, otherwise the generalized R12
/// `f(m1 ⊕ … ⊕ mk) → f(m1) ⊕ … ⊕ f(mk)`, plus `λ(f)` when `k` is even.
/// Argument coefficients are split into single bits first, so that
/// `f(3·m)` and `f(2·m) ⊕ f(m) ⊕ λ(f)` share one normal form.
pub fn apply_symbol(f: &Sym, arg: &Polynomial, ctx: &mut RewriteCtx) -> Result<Polynomial, RewriteError> {
    if arg.is_zero() {
        let c = ctx.lambda_of(f)?;
        ctx.charge(Rule::R13, 1)?;
        return Ok(Polynomial::constant(c));
    }
    let mut terms: Vec<Monomial> = Vec::with_capacity(arg.len());
    for m in &arg.terms {
        for bit in coefficient_bits(m.coeff) {
            let a = Monomial { powers: m.powers.clone(), coeff: bit };
            terms.push(Monomial {
                powers: vec![(Factor::App(f.clone(), Arc::new(a)), 1)],
                coeff: FieldElem::ONE,
            });
        }
    }
    let k = terms.len();
    if k == 1 {
        return Ok(Polynomial { terms });
    }
    let c = ctx.lambda_of(f)?;
    ctx.charge(Rule::R12, arg.len() as u64 - 1)?;
    ctx.charge(Rule::Split, (k - arg.len()) as u64)?;
    // Distinct arguments give distinct applications, ordered by argument.
    terms.sort_unstable_by(|a, b| cmp_body(b, a));
    if k.is_multiple_of(2) && !c.is_zero() {
        terms.push(Monomial::constant(c));
    }
    Ok(Polynomial { terms })
}

/// Single-bit summands of `c`, highest first.
pub fn coefficient_bits(c: FieldElem) -> impl Iterator<Item = FieldElem> {
    (0..16u16).rev().filter(move |i| c.0 >> i & 1 == 1).map(|i| FieldElem(1 << i))
}

/// Right-associated XOR of monomials, each a right-associated product with
/// every power `α^k` spelled out as `k` copies and the coefficient last.
pub fn poly_to_term(store: &mut TermStore, p: &Polynomial) -> Result<TermId, TermError> {
    let mut sums = Vec::with_capacity(p.len());
    for m in &p.terms {
        sums.push(monomial_to_term(store, m)?);
    }
    Ok(store.mk_sum(&sums))
}

pub fn monomial_to_term(store: &mut TermStore, m: &Monomial) -> Result<TermId, TermError> {
    let mut factors = Vec::new();
    for (f, k) in &m.powers {
        let t = factor_to_term(store, f)?;
        factors.extend(std::iter::repeat_n(t, *k as usize));
    }
    if m.coeff != FieldElem::ONE || factors.is_empty() {
        factors.push(store.mk_const(m.coeff));
    }
    Ok(store.mk_product(&factors))
}

fn factor_to_term(store: &mut TermStore, f: &Factor) -> Result<TermId, TermError> {
    match f {
        Factor::Const(c) => Ok(store.mk_const(*c)),
        Factor::Var(v) => Ok(store.mk_var(v)),
        Factor::App(s, arg) => {
            let a = monomial_to_term(store, arg)?;
            store.mk_app(s, a)
        }
    }
}

/// Reads a term in the layout produced by [`poly_to_term`] back into a
/// polynomial, failing if it is not a normal form.
pub fn read_normal_form(store: &TermStore, root: TermId, field: &FieldCtx) -> Result<Polynomial, RewriteError> {
    if let TermNode::Const(c) = store.node(root) {
        if c.is_zero() {
            return Ok(Polynomial::zero());
        }
    }
    let mut terms = Vec::new();
    for s in spine(store, root, true) {
        terms.push(read_monomial(store, s)?);
    }
    let p = Polynomial { terms };
    p.check_shape(field)
        .map_err(|e| RewriteError::NotNormal(e.to_string()))?;
    Ok(p)
}

fn read_monomial(store: &TermStore, id: TermId) -> Result<Monomial, RewriteError> {
    let factors = spine(store, id, false);
    let mut powers: Vec<(Factor, u32)> = Vec::new();
    let mut coeff = FieldElem::ONE;
    for (i, &t) in factors.iter().enumerate() {
        let f = match store.node(t) {
            TermNode::Const(c) => {
                if i + 1 != factors.len() || *c == FieldElem::ONE && factors.len() > 1 {
                    return Err(RewriteError::NotNormal(format!(
                        "misplaced constant in {}",
                        store.display(id)
                    )));
                }
                coeff = *c;
                continue;
            }
            TermNode::Var(v) => Factor::Var(v.clone()),
            TermNode::App(s, a) => Factor::App(s.clone(), Arc::new(read_monomial(store, *a)?)),
            TermNode::Add(..) | TermNode::Mul(..) => {
                return Err(RewriteError::NotNormal(format!(
                    "nested operator in {}",
                    store.display(id)
                )))
            }
        };
        match powers.last_mut() {
            Some((g, k)) if *g == f => *k += 1,
            _ => powers.push((f, 1)),
        }
    }
    Ok(Monomial { powers, coeff })
}

/// Operands of the maximal XOR (or product) spine at `id`, left to right.
pub(crate) fn spine(store: &TermStore, id: TermId, add: bool) -> Vec<TermId> {
    let mut out = Vec::new();
    let mut stack = vec![id];
    while let Some(t) = stack.pop() {
        match (store.node(t), add) {
            (TermNode::Add(a, b), true) | (TermNode::Mul(a, b), false) => {
                stack.push(*b);
                stack.push(*a);
            }
            _ => out.push(t),
        }
    }
    out
}
