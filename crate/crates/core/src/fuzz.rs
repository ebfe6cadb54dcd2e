//! Random terms and random straight-line gadgets for property testing.

use rand::Rng;

use crate::field::{FieldCtx, FieldElem};
use crate::term::{TermId, TermStore};

/// Shape parameters for [`random_term`].
#[derive(Clone, Debug)]
pub struct TermGen {
    pub vars: Vec<String>,
    pub symbols: Vec<String>,
    /// Upper bound on the number of nodes, read as a tree.
    pub max_size: usize,
}

impl TermGen {
    pub fn new(vars: &[&str], symbols: &[&str], max_size: usize) -> Self {
        TermGen {
            vars: vars.iter().map(|s| s.to_string()).collect(),
            symbols: symbols.iter().map(|s| s.to_string()).collect(),
            max_size: max_size.max(1),
        }
    }

    /// A term of tree size between 1 and `max_size`. Symbols must already
    /// be declared in `store`.
    pub fn term<R: Rng>(&self, store: &mut TermStore, field: &FieldCtx, rng: &mut R) -> TermId {
        let size = rng.gen_range(1..=self.max_size);
        self.sized(store, field, rng, size)
    }

    fn sized<R: Rng>(&self, store: &mut TermStore, field: &FieldCtx, rng: &mut R, size: usize) -> TermId {
        if size <= 2 {
            return self.leaf(store, field, rng);
        }
        let choice = rng.gen_range(0..10);
        if choice < 2 && !self.symbols.is_empty() {
            let f = &self.symbols[rng.gen_range(0..self.symbols.len())];
            let arg = self.sized(store, field, rng, size - 1);
            return store.mk_app(f, arg).expect("generator symbols are declared");
        }
        let left = rng.gen_range(1..size - 1);
        let a = self.sized(store, field, rng, left);
        let b = self.sized(store, field, rng, size - 1 - left);
        if choice < 6 {
            store.mk_add(a, b)
        } else {
            store.mk_mul(a, b)
        }
    }

    fn leaf<R: Rng>(&self, store: &mut TermStore, field: &FieldCtx, rng: &mut R) -> TermId {
        if self.vars.is_empty() || rng.gen_range(0..4) == 0 {
            let c = match rng.gen_range(0..3) {
                0 => FieldElem::ZERO,
                1 => FieldElem::ONE,
                _ => FieldElem(rng.gen_range(0..field.order()) as u16),
            };
            store.mk_const(c)
        } else {
            let v = &self.vars[rng.gen_range(0..self.vars.len())];
            store.mk_var(v)
        }
    }
}

/// Expression of a generated gadget statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GExpr {
    Var(String),
    Const(u16),
    Add(Box<GExpr>, Box<GExpr>),
    Mul(Box<GExpr>, Box<GExpr>),
    Call(String, Box<GExpr>),
}

impl GExpr {
    fn var(name: impl Into<String>) -> Self {
        GExpr::Var(name.into())
    }

    fn add(a: GExpr, b: GExpr) -> Self {
        GExpr::Add(Box::new(a), Box::new(b))
    }

    fn mul(a: GExpr, b: GExpr) -> Self {
        GExpr::Mul(Box::new(a), Box::new(b))
    }

    fn call(f: &str, a: GExpr) -> Self {
        GExpr::Call(f.to_string(), Box::new(a))
    }

    fn leaf_count(&self) -> usize {
        match self {
            GExpr::Var(_) | GExpr::Const(_) => 1,
            GExpr::Add(a, b) | GExpr::Mul(a, b) => a.leaf_count() + b.leaf_count(),
            GExpr::Call(_, a) => a.leaf_count(),
        }
    }

    /// Replaces the `k`-th leaf in left-to-right order.
    fn replace_leaf(&mut self, k: &mut usize, new: &GExpr) -> bool {
        match self {
            GExpr::Var(_) | GExpr::Const(_) => {
                if *k == 0 {
                    *self = new.clone();
                    return true;
                }
                *k -= 1;
                false
            }
            GExpr::Add(a, b) | GExpr::Mul(a, b) => a.replace_leaf(k, new) || b.replace_leaf(k, new),
            GExpr::Call(_, a) => a.replace_leaf(k, new),
        }
    }
}

impl std::fmt::Display for GExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GExpr::Var(v) => f.write_str(v),
            GExpr::Const(c) => write!(f, "{c}"),
            GExpr::Add(a, b) => write!(f, "({a} ^ {b})"),
            GExpr::Mul(a, b) => write!(f, "({a} * {b})"),
            GExpr::Call(g, a) => write!(f, "{g}({a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GStmt {
    Assign(String, GExpr),
    Rand(String),
}

/// A one-output straight-line procedure over GF(2^4) with its masked
/// block, plus the affine definitions it calls.
#[derive(Clone, Debug)]
pub struct RandomGadget {
    pub inputs: Vec<String>,
    pub shares: u32,
    /// Affine symbols with bodies in `x`.
    pub affine: Vec<(String, GExpr)>,
    pub orig: Vec<GStmt>,
    pub masked: Vec<GStmt>,
    /// Whether a mutation was applied to the faithful translation.
    pub mutated: bool,
}

pub const GADGET_OUTPUT: &str = "c";

fn gadget_affines() -> Vec<(String, GExpr, u16)> {
    let x = || GExpr::var("x");
    vec![
        // x^2 ^ 3, constant 3.
        ("sq".into(), GExpr::add(GExpr::mul(x(), x()), GExpr::Const(3)), 3),
        // x^4 ^ 5 x^2, linear.
        ("lq".into(), GExpr::add(GExpr::mul(GExpr::mul(x(), x()), GExpr::mul(x(), x())), GExpr::mul(GExpr::Const(5), GExpr::mul(x(), x()))), 0),
    ]
}

impl RandomGadget {
    /// MSL source with a `field 4 0x13` directive.
    pub fn to_msl(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("field 4 0x13;\n");
        for (name, body) in &self.affine {
            writeln!(s, "affine {name}(x) -> y {{ y <- {body}; }}").unwrap();
        }
        writeln!(s, "proc p({}) -> {GADGET_OUTPUT} {{", self.inputs.join(", ")).unwrap();
        let stmt = |s: &mut String, st: &GStmt| match st {
            GStmt::Assign(v, e) => writeln!(s, "    {v} <- {e};").unwrap(),
            GStmt::Rand(v) => writeln!(s, "    {v} <- rand;").unwrap(),
        };
        for st in &self.orig {
            stmt(&mut s, st);
        }
        writeln!(s, "    shares {};", self.shares).unwrap();
        for st in &self.masked {
            stmt(&mut s, st);
        }
        s.push_str("}\n");
        s
    }

    /// Random gadget with d ≤ 1, at most `max_stmts` masked statements and
    /// at most `max_vars` input shares plus randoms. About half are
    /// mutated after a faithful share-wise translation.
    pub fn generate<R: Rng>(rng: &mut R, max_stmts: usize, max_vars: usize) -> Self {
        let shares = rng.gen_range(1..=2u32);
        let n_inputs = rng.gen_range(1..=2usize);
        let inputs: Vec<String> = ["a", "b"][..n_inputs].iter().map(|s| s.to_string()).collect();
        let affines = gadget_affines();
        let s = shares as usize;
        let mut orig = Vec::new();
        let mut masked: Vec<GStmt> = Vec::new();
        // Original names and their per-share names.
        let mut values: Vec<(String, Vec<String>)> =
            inputs.iter().map(|i| (i.clone(), (0..s).map(|j| format!("{i}{j}")).collect())).collect();
        let mut vars = n_inputs * s;
        let mut used_affine = [false; 2];
        let n_ops = rng.gen_range(1..=3);
        let mut op = 0;
        while op < n_ops {
            let last = op + 1 == n_ops;
            let (t, ts): (String, Vec<String>) = if last {
                (GADGET_OUTPUT.into(), (0..s).map(|j| format!("{GADGET_OUTPUT}{j}")).collect())
            } else {
                (format!("t{op}"), (0..s).map(|j| format!("t{op}_{j}")).collect())
            };
            let pick = |rng: &mut R| values[rng.gen_range(0..values.len())].clone();
            let kind = rng.gen_range(0..4);
            let cost = match kind {
                2 if s == 2 => 3,
                _ => s,
            };
            let needs_rand = kind == 2 && s == 2;
            if masked.len() + cost > max_stmts || (needs_rand && vars + 1 > max_vars) {
                if masked.len() + s > max_stmts {
                    break;
                }
                // Fall back to a share-wise operation.
                let (u, us) = pick(rng);
                let k = rng.gen_range(1..16u16);
                orig.push(GStmt::Assign(t.clone(), GExpr::mul(GExpr::Const(k), GExpr::var(&u))));
                for j in 0..s {
                    masked.push(GStmt::Assign(ts[j].clone(), GExpr::mul(GExpr::Const(k), GExpr::var(&us[j]))));
                }
                values.push((t, ts));
                op += 1;
                continue;
            }
            match kind {
                0 => {
                    let (u, us) = pick(rng);
                    let (v, vs) = pick(rng);
                    orig.push(GStmt::Assign(t.clone(), GExpr::add(GExpr::var(&u), GExpr::var(&v))));
                    for j in 0..s {
                        masked.push(GStmt::Assign(ts[j].clone(), GExpr::add(GExpr::var(&us[j]), GExpr::var(&vs[j]))));
                    }
                }
                1 => {
                    let (u, us) = pick(rng);
                    let k = rng.gen_range(1..16u16);
                    orig.push(GStmt::Assign(t.clone(), GExpr::mul(GExpr::Const(k), GExpr::var(&u))));
                    for j in 0..s {
                        masked.push(GStmt::Assign(ts[j].clone(), GExpr::mul(GExpr::Const(k), GExpr::var(&us[j]))));
                    }
                }
                2 => {
                    let (u, us) = pick(rng);
                    let (v, vs) = pick(rng);
                    orig.push(GStmt::Assign(t.clone(), GExpr::mul(GExpr::var(&u), GExpr::var(&v))));
                    if s == 1 {
                        masked.push(GStmt::Assign(ts[0].clone(), GExpr::mul(GExpr::var(&us[0]), GExpr::var(&vs[0]))));
                    } else {
                        let r = format!("r{op}");
                        vars += 1;
                        masked.push(GStmt::Rand(r.clone()));
                        let cross = GExpr::add(
                            GExpr::add(GExpr::var(&r), GExpr::mul(GExpr::var(&us[0]), GExpr::var(&vs[1]))),
                            GExpr::mul(GExpr::var(&us[1]), GExpr::var(&vs[0])),
                        );
                        masked.push(GStmt::Assign(
                            ts[0].clone(),
                            GExpr::add(GExpr::mul(GExpr::var(&us[0]), GExpr::var(&vs[0])), GExpr::var(&r)),
                        ));
                        masked.push(GStmt::Assign(
                            ts[1].clone(),
                            GExpr::add(GExpr::mul(GExpr::var(&us[1]), GExpr::var(&vs[1])), cross),
                        ));
                    }
                }
                _ => {
                    let which = rng.gen_range(0..affines.len());
                    let (f, _, lambda) = &affines[which];
                    used_affine[which] = true;
                    let (u, us) = pick(rng);
                    orig.push(GStmt::Assign(t.clone(), GExpr::call(f, GExpr::var(&u))));
                    for j in 0..s {
                        let mut e = GExpr::call(f, GExpr::var(&us[j]));
                        // An even share count needs λ once more.
                        if j == 0 && s.is_multiple_of(2) && *lambda != 0 {
                            e = GExpr::add(e, GExpr::Const(*lambda));
                        }
                        masked.push(GStmt::Assign(ts[j].clone(), e));
                    }
                }
            }
            values.push((t, ts));
            op += 1;
        }
        // The loop can stop early; the last value written becomes the output.
        if !orig.iter().any(|st| matches!(st, GStmt::Assign(v, _) if v == GADGET_OUTPUT)) {
            let (u, us) = values.last().unwrap().clone();
            for st in orig.iter_mut().chain(masked.iter_mut()) {
                if let GStmt::Assign(v, _) = st {
                    if *v == u {
                        *v = GADGET_OUTPUT.into();
                    } else if let Some(j) = us.iter().position(|x| x == v) {
                        *v = format!("{GADGET_OUTPUT}{j}");
                    }
                }
            }
        }
        let mut g = RandomGadget {
            inputs,
            shares,
            affine: affines
                .into_iter()
                .zip(used_affine)
                .filter(|(_, u)| *u)
                .map(|((n, b, _), _)| (n, b))
                .collect(),
            orig,
            masked,
            mutated: false,
        };
        if rng.gen_bool(0.5) {
            g.mutate(rng);
        }
        g
    }

    /// Names readable before masked statement `i`.
    fn visible(&self, i: usize) -> Vec<String> {
        let mut names: Vec<String> = self
            .inputs
            .iter()
            .flat_map(|x| (0..self.shares).map(move |j| format!("{x}{j}")))
            .collect();
        for st in &self.masked[..i] {
            match st {
                GStmt::Assign(v, _) | GStmt::Rand(v) => names.push(v.clone()),
            }
        }
        names
    }

    fn mutate<R: Rng>(&mut self, rng: &mut R) {
        let assigns: Vec<usize> = (0..self.masked.len())
            .filter(|&i| matches!(self.masked[i], GStmt::Assign(..)))
            .collect();
        let i = assigns[rng.gen_range(0..assigns.len())];
        let visible = self.visible(i);
        let GStmt::Assign(_, e) = &mut self.masked[i] else { unreachable!() };
        match rng.gen_range(0..3) {
            0 => {
                let mut k = rng.gen_range(0..e.leaf_count());
                let v = GExpr::Var(visible[rng.gen_range(0..visible.len())].clone());
                e.replace_leaf(&mut k, &v);
            }
            1 => *e = GExpr::add(e.clone(), GExpr::Const(rng.gen_range(1..16))),
            _ => {
                if let GExpr::Add(a, b) = e.clone() {
                    *e = if rng.gen_bool(0.5) { *a } else { *b };
                } else {
                    let v = visible[rng.gen_range(0..visible.len())].clone();
                    *e = GExpr::add(e.clone(), GExpr::Var(v));
                }
            }
        }
        self.mutated = true;
    }
}
