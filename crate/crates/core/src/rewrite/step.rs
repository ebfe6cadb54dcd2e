//! Single rewriting steps on terms. XOR and product spines are treated
//! modulo associativity: R1 and R2 sort a whole spine into its canonical
//! right-associated form, and R3, constant folding and exponent
//! reduction act on adjacent spine operands.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{monomial_to_term, spine, RewriteCtx, RewriteError, Rule};
use crate::field::FieldElem;
use crate::term::{cmp_factor, cmp_monomial, Factor, Monomial, TermId, TermNode, TermStore};

/// A rule together with the position of its redex: child indices from the
/// root, `0` for the left operand or the argument, `1` for the right.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Redex {
    pub path: Vec<u8>,
    pub rule: Rule,
}

fn subterm(store: &TermStore, root: TermId, path: &[u8]) -> Option<TermId> {
    let mut t = root;
    for &i in path {
        t = store.children(t).nth(i as usize)?;
    }
    Some(t)
}

fn replace_at(store: &mut TermStore, root: TermId, path: &[u8], new: TermId) -> TermId {
    let Some((&i, rest)) = path.split_first() else {
        return new;
    };
    let mut kids: Vec<TermId> = store.children(root).collect();
    kids[i as usize] = replace_at(store, kids[i as usize], rest, new);
    store.rebuild(root, &kids)
}

fn is_const(store: &TermStore, t: TermId, c: FieldElem) -> bool {
    matches!(store.node(t), TermNode::Const(v) if *v == c)
}

fn is_add(store: &TermStore, t: TermId) -> bool {
    matches!(store.node(t), TermNode::Add(..))
}

fn is_mul(store: &TermStore, t: TermId) -> bool {
    matches!(store.node(t), TermNode::Mul(..))
}

/// Sorting key of an XOR-free operand of a product.
fn factor_key(store: &TermStore, t: TermId, ctx: &RewriteCtx) -> Option<Factor> {
    match store.node(t) {
        TermNode::Const(c) => Some(Factor::Const(*c)),
        TermNode::Var(v) => Some(Factor::Var(v.clone())),
        TermNode::App(f, a) => Some(Factor::App(f.clone(), monomial_key(store, *a, ctx)?.into())),
        TermNode::Add(..) | TermNode::Mul(..) => None,
    }
}

/// Sorting key of an XOR-free term: its factors sorted, constants folded
/// into the coefficient, exponents unreduced.
fn monomial_key(store: &TermStore, t: TermId, ctx: &RewriteCtx) -> Option<Monomial> {
    let mut coeff = FieldElem::ONE;
    let mut factors = Vec::new();
    for s in spine(store, t, false) {
        match factor_key(store, s, ctx)? {
            Factor::Const(c) => coeff = ctx.field.mul(coeff, c),
            f => factors.push(f),
        }
    }
    factors.sort_by(|a, b| cmp_factor(b, a));
    let mut powers: Vec<(Factor, u32)> = Vec::new();
    for f in factors {
        match powers.last_mut() {
            Some((g, k)) if *g == f => *k += 1,
            _ => powers.push((f, 1)),
        }
    }
    Some(Monomial { powers, coeff })
}

fn right_assoc(store: &TermStore, t: TermId, add: bool) -> bool {
    let mut t = t;
    loop {
        match (store.node(t), add) {
            (TermNode::Add(a, b), true) | (TermNode::Mul(a, b), false) => {
                if (add && is_add(store, *a)) || (!add && is_mul(store, *a)) {
                    return false;
                }
                t = *b;
            }
            _ => return true,
        }
    }
}

/// Stable descending sort of spine operands; `None` if some operand has
/// no key.
fn sorted_operands(store: &TermStore, t: TermId, add: bool, ctx: &RewriteCtx) -> Option<(Vec<TermId>, bool)> {
    let ops = spine(store, t, add);
    let mut keyed = Vec::with_capacity(ops.len());
    for &o in &ops {
        if add {
            keyed.push((o, Key::M(monomial_key(store, o, ctx)?)));
        } else {
            keyed.push((o, Key::F(factor_key(store, o, ctx)?)));
        }
    }
    keyed.sort_by(|(_, a), (_, b)| b.cmp(a));
    let sorted: Vec<TermId> = keyed.into_iter().map(|(o, _)| o).collect();
    let changed = sorted != ops || !right_assoc(store, t, add);
    Some((sorted, changed))
}

enum Key {
    M(Monomial),
    F(Factor),
}

impl Key {
    fn cmp(&self, other: &Key) -> std::cmp::Ordering {
        match (self, other) {
            (Key::M(a), Key::M(b)) => cmp_monomial(a, b),
            (Key::F(a), Key::F(b)) => cmp_factor(a, b),
            _ => unreachable!("keys of one spine share a kind"),
        }
    }
}

fn adjacent_equal(ops: &[TermId]) -> Option<usize> {
    ops.windows(2).position(|w| w[0] == w[1])
}

/// First adjacent pair of distinct summands with equal bodies.
fn fold_add_pair(store: &TermStore, ops: &[TermId], ctx: &RewriteCtx) -> Option<(usize, Monomial)> {
    for (i, w) in ops.windows(2).enumerate() {
        if w[0] == w[1] {
            continue;
        }
        let (Some(a), Some(b)) = (monomial_key(store, w[0], ctx), monomial_key(store, w[1], ctx)) else {
            continue;
        };
        if a.same_body(&b) {
            let coeff = ctx.field.add(a.coeff, b.coeff);
            return Some((i, Monomial { powers: a.powers, coeff }));
        }
    }
    None
}

/// The argument key with its coefficient's top bit split off, when the
/// coefficient has more than one bit set.
fn split_coefficient(store: &TermStore, arg: TermId, ctx: &RewriteCtx) -> Option<(Monomial, Monomial)> {
    let m = monomial_key(store, arg, ctx)?;
    if m.coeff.0.count_ones() < 2 {
        return None;
    }
    let top = FieldElem(1 << (15 - m.coeff.0.leading_zeros()));
    let rest = FieldElem(m.coeff.0 ^ top.0);
    Some((
        Monomial { powers: m.powers.clone(), coeff: top },
        Monomial { powers: m.powers, coeff: rest },
    ))
}

fn const_pair(store: &TermStore, ops: &[TermId]) -> Option<(usize, FieldElem, FieldElem)> {
    ops.windows(2).enumerate().find_map(|(i, w)| match (store.node(w[0]), store.node(w[1])) {
        (TermNode::Const(a), TermNode::Const(b)) => Some((i, *a, *b)),
        _ => None,
    })
}

fn fermat_run(ops: &[TermId], group: u64) -> Option<usize> {
    let mut start = 0;
    for i in 1..=ops.len() {
        if i == ops.len() || ops[i] != ops[start] {
            if (i - start) as u64 > group {
                return Some(start);
            }
            start = i;
        }
    }
    None
}

fn is_spine_root(store: &TermStore, parent: Option<TermId>, t: TermId) -> bool {
    match parent {
        None => true,
        Some(p) => std::mem::discriminant(store.node(p)) != std::mem::discriminant(store.node(t)),
    }
}

/// Every applicable rule with its position. Spine rules are reported at
/// maximal spine roots only.
pub fn find_redexes(store: &TermStore, root: TermId, ctx: &RewriteCtx) -> Vec<Redex> {
    let mut out = Vec::new();
    let mut stack: Vec<(TermId, Option<TermId>, Vec<u8>)> = vec![(root, None, Vec::new())];
    while let Some((t, parent, path)) = stack.pop() {
        let mut push = |rule: Rule| out.push(Redex { path: path.clone(), rule });
        let zero = FieldElem::ZERO;
        let one = FieldElem::ONE;
        match store.node(t) {
            TermNode::Const(_) | TermNode::Var(_) => {}
            TermNode::Add(a, b) => {
                let root_of_spine = is_spine_root(store, parent, t);
                let ops = spine(store, t, true);
                if a == b || (root_of_spine && adjacent_equal(&ops).is_some()) {
                    push(Rule::R3);
                }
                if is_const(store, *b, zero) {
                    push(Rule::R6);
                }
                if is_const(store, *a, zero) {
                    push(Rule::R7);
                }
                if root_of_spine {
                    if let Some((_, true)) = sorted_operands(store, t, true, ctx) {
                        push(Rule::R1);
                    }
                    if fold_add_pair(store, &ops, ctx).is_some() {
                        push(Rule::FoldAdd);
                    }
                }
            }
            TermNode::Mul(a, b) => {
                if is_const(store, *b, zero) {
                    push(Rule::R4);
                }
                if is_const(store, *a, zero) {
                    push(Rule::R5);
                }
                if is_const(store, *b, one) {
                    push(Rule::R8);
                }
                if is_const(store, *a, one) {
                    push(Rule::R9);
                }
                if is_add(store, *a) {
                    push(Rule::R10);
                }
                if is_add(store, *b) {
                    push(Rule::R11);
                }
                if is_spine_root(store, parent, t) {
                    let ops = spine(store, t, false);
                    if let Some((_, true)) = sorted_operands(store, t, false, ctx) {
                        push(Rule::R2);
                    }
                    if const_pair(store, &ops).is_some() {
                        push(Rule::FoldMul);
                    }
                    if fermat_run(&ops, ctx.field.group_order()).is_some() {
                        push(Rule::Fermat);
                    }
                }
            }
            TermNode::App(_, a) => {
                if is_const(store, *a, zero) {
                    push(Rule::R13);
                }
                if is_add(store, *a) {
                    push(Rule::R12);
                }
                if split_coefficient(store, *a, ctx).is_some() {
                    push(Rule::Split);
                }
            }
        }
        let kids: Vec<TermId> = store.children(t).collect();
        for (i, k) in kids.into_iter().enumerate().rev() {
            let mut p = path.clone();
            p.push(i as u8);
            stack.push((k, Some(t), p));
        }
    }
    out
}

fn premise(rule: Rule, msg: &str) -> RewriteError {
    RewriteError::Premise { rule, msg: msg.to_string() }
}

/// One rewriting step: `rule` applied at `path` in `root`.
pub fn apply_rule(
    store: &mut TermStore,
    ctx: &mut RewriteCtx,
    rule: Rule,
    root: TermId,
    path: &[u8],
) -> Result<TermId, RewriteError> {
    let t = subterm(store, root, path).ok_or_else(|| RewriteError::BadPosition(path.to_vec()))?;
    let node = store.node(t).clone();
    let zero = FieldElem::ZERO;
    let one = FieldElem::ONE;
    let new = match (rule, node) {
        (Rule::R3, TermNode::Add(a, b)) => {
            if a == b {
                store.zero()
            } else {
                let mut ops = spine(store, t, true);
                let i = adjacent_equal(&ops).ok_or_else(|| premise(rule, "no equal adjacent summands"))?;
                ops.drain(i..i + 2);
                store.mk_sum(&ops)
            }
        }
        (Rule::R4, TermNode::Mul(_, b)) if is_const(store, b, zero) => store.zero(),
        (Rule::R5, TermNode::Mul(a, _)) if is_const(store, a, zero) => store.zero(),
        (Rule::R6, TermNode::Add(a, b)) if is_const(store, b, zero) => a,
        (Rule::R7, TermNode::Add(a, b)) if is_const(store, a, zero) => b,
        (Rule::R8, TermNode::Mul(a, b)) if is_const(store, b, one) => a,
        (Rule::R9, TermNode::Mul(a, b)) if is_const(store, a, one) => b,
        (Rule::R10, TermNode::Mul(a, c)) => match *store.node(a) {
            TermNode::Add(a1, a2) => {
                let l = store.mk_mul(a1, c);
                let r = store.mk_mul(a2, c);
                store.mk_add(l, r)
            }
            _ => return Err(premise(rule, "left operand is not a sum")),
        },
        (Rule::R11, TermNode::Mul(c, b)) => match *store.node(b) {
            TermNode::Add(b1, b2) => {
                let l = store.mk_mul(c, b1);
                let r = store.mk_mul(c, b2);
                store.mk_add(l, r)
            }
            _ => return Err(premise(rule, "right operand is not a sum")),
        },
        (Rule::R12, TermNode::App(f, a)) => match *store.node(a) {
            TermNode::Add(a1, a2) => {
                let c = ctx.lambda_of(&f)?;
                let c = store.mk_const(c);
                let fa = store.mk_app(&f, a1)?;
                let fb = store.mk_app(&f, a2)?;
                let tail = store.mk_add(fb, c);
                store.mk_add(fa, tail)
            }
            _ => return Err(premise(rule, "argument is not a sum")),
        },
        (Rule::Split, TermNode::App(f, a)) => {
            let (hi, lo) = split_coefficient(store, a, ctx)
                .ok_or_else(|| premise(rule, "argument coefficient is a single bit"))?;
            let c = ctx.lambda_of(&f)?;
            let c = store.mk_const(c);
            let hi = monomial_to_term(store, &hi)?;
            let lo = monomial_to_term(store, &lo)?;
            let fa = store.mk_app(&f, hi)?;
            let fb = store.mk_app(&f, lo)?;
            let tail = store.mk_add(fb, c);
            store.mk_add(fa, tail)
        }
        (Rule::R13, TermNode::App(f, a)) if is_const(store, a, zero) => {
            let c = ctx.lambda_of(&f)?;
            store.mk_const(c)
        }
        (Rule::R1, TermNode::Add(..)) | (Rule::R2, TermNode::Mul(..)) => {
            let add = rule == Rule::R1;
            match sorted_operands(store, t, add, ctx) {
                Some((ops, true)) if add => store.mk_sum(&ops),
                Some((ops, true)) => store.mk_product(&ops),
                Some(_) => return Err(premise(rule, "already sorted")),
                None => return Err(premise(rule, "operand is not a monomial or factor")),
            }
        }
        (Rule::FoldAdd, TermNode::Add(..)) => {
            let mut ops = spine(store, t, true);
            let (i, m) =
                fold_add_pair(store, &ops, ctx).ok_or_else(|| premise(rule, "no foldable summands"))?;
            if m.coeff.is_zero() {
                ops.drain(i..i + 2);
            } else {
                let merged = monomial_to_term(store, &m)?;
                ops.splice(i..i + 2, [merged]);
            }
            store.mk_sum(&ops)
        }
        (Rule::FoldMul, TermNode::Mul(..)) => {
            let mut ops = spine(store, t, false);
            let (i, a, b) = const_pair(store, &ops).ok_or_else(|| premise(rule, "no adjacent constants"))?;
            let c = store.mk_const(ctx.field.mul(a, b));
            ops.splice(i..i + 2, [c]);
            store.mk_product(&ops)
        }
        (Rule::Fermat, TermNode::Mul(..)) => {
            let mut ops = spine(store, t, false);
            let group = ctx.field.group_order();
            let i = fermat_run(&ops, group).ok_or_else(|| premise(rule, "no long run of equal factors"))?;
            ops.drain(i..i + group as usize);
            store.mk_product(&ops)
        }
        _ => return Err(premise(rule, "redex has the wrong shape")),
    };
    ctx.charge(rule, 1)?;
    ctx.log(rule, || store.display(t).to_string());
    Ok(replace_at(store, root, path, new))
}

/// Rewrites until no rule applies, picking each redex uniformly at random.
pub fn rewrite_randomly<R: Rng>(
    store: &mut TermStore,
    ctx: &mut RewriteCtx,
    root: TermId,
    rng: &mut R,
) -> Result<TermId, RewriteError> {
    let mut t = root;
    loop {
        let redexes = find_redexes(store, t, ctx);
        let Some(r) = redexes.choose(rng) else {
            return Ok(t);
        };
        t = apply_rule(store, ctx, r.rule, t, &r.path)?;
    }
}
