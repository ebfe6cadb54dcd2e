//! Affine constants λ(f) with f(x ⊕ y) = f(x) ⊕ f(y) ⊕ λ(f), computed by
//! rewriting first, then random disproof, then a complete table check.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::field::{FieldCtx, FieldElem};
use crate::lang::{AffineDef, BinOp, Builtin, Expr, ExprKind, LangError, Program, StmtKind};
use crate::rewrite::{normalize, RewriteCtx, RewriteError, RuleStats, DEFAULT_STEP_BUDGET};
use crate::symexec::{exec_affine_body, store_for, SymError};
use crate::term::{Interpretation, Polynomial};
use crate::verify::inline_affine;

/// Random pairs tried before the table check.
pub const DISPROOF_PAIRS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AffineError {
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error("`{0}` uses the declared affine `{1}`, which has no table")]
    NoTable(String, String),
    #[error("`{0}` is not an affine definition")]
    NotDefined(String),
    #[error("`{name}`: {msg}")]
    Eval { name: String, msg: String },
}

/// Two input pairs on which f(x ⊕ y) ⊕ f(x) ⊕ f(y) differs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairWitness {
    pub first: (FieldElem, FieldElem),
    pub first_value: FieldElem,
    pub second: (FieldElem, FieldElem),
    pub second_value: FieldElem,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AffineResult {
    Constant(FieldElem),
    NotAffine(PairWitness),
    /// Declared without a body: λ = 0 by assumption.
    AssumedLinear,
    /// The residual mentions declared symbols, so no table exists.
    Unknown(Polynomial),
}

impl AffineResult {
    pub fn constant(&self) -> Option<FieldElem> {
        match self {
            AffineResult::Constant(c) => Some(*c),
            AffineResult::AssumedLinear => Some(FieldElem::ZERO),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AffineMethod {
    Trs,
    Testing,
    Table,
    Sampled,
    Assumed,
    None,
}

impl AffineMethod {
    pub fn name(self) -> &'static str {
        match self {
            AffineMethod::Trs => "trs",
            AffineMethod::Testing => "testing",
            AffineMethod::Table => "table",
            AffineMethod::Sampled => "sampled",
            AffineMethod::Assumed => "assumed",
            AffineMethod::None => "none",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SymbolReport {
    pub name: String,
    pub result: AffineResult,
    pub method: AffineMethod,
    /// Symbols inlined before the result was reached.
    pub inlined: Vec<String>,
    /// Pair evaluations spent by the table check.
    pub oracle_calls: u64,
    /// Pair evaluations spent on random disproof.
    pub test_pairs: u64,
    pub stats: RuleStats,
    pub wall: Duration,
}

/// Per-symbol results in processing order plus the tables of every
/// symbol whose table is computable.
#[derive(Clone, Debug, Default)]
pub struct AffineReport {
    pub symbols: Vec<SymbolReport>,
    pub tables: Interpretation,
}

impl AffineReport {
    pub fn get(&self, name: &str) -> Option<&SymbolReport> {
        self.symbols.iter().find(|s| s.name == name)
    }

    /// λ for every symbol that has one.
    pub fn lambda(&self) -> HashMap<String, FieldElem> {
        self.symbols
            .iter()
            .filter_map(|s| s.result.constant().map(|c| (s.name.clone(), c)))
            .collect()
    }

    /// A rewriting context preloaded with every known λ.
    pub fn rewrite_ctx(&self, field: &FieldCtx) -> RewriteCtx {
        let mut ctx = RewriteCtx::new(field.clone());
        for (f, c) in self.lambda() {
            ctx.set_constant(&f, c);
        }
        ctx
    }
}

#[derive(Clone, Debug)]
pub struct AffineConfig {
    pub seed: u64,
    pub step_budget: u64,
    /// Largest number of pair evaluations done exhaustively.
    pub budget: u64,
}

impl Default for AffineConfig {
    fn default() -> Self {
        AffineConfig {
            seed: crate::oracle::DEFAULT_SEED,
            step_budget: DEFAULT_STEP_BUDGET,
            budget: crate::oracle::DEFAULT_BUDGET,
        }
    }
}

fn eval_err(name: &str, msg: impl Into<String>) -> AffineError {
    AffineError::Eval { name: name.to_string(), msg: msg.into() }
}

fn eval_expr(
    e: &Expr,
    env: &HashMap<&str, u16>,
    field: &FieldCtx,
    tables: &Interpretation,
    name: &str,
) -> Result<u16, AffineError> {
    Ok(match &e.kind {
        ExprKind::Lit(v) => field.elem(*v).map_err(|err| eval_err(name, err.to_string()))?.0,
        ExprKind::Var(v) => *env
            .get(v.name.as_str())
            .ok_or_else(|| eval_err(name, format!("`{}` read before assignment", v.name)))?,
        ExprKind::Bin(BinOp::Xor, a, b) => {
            eval_expr(a, env, field, tables, name)? ^ eval_expr(b, env, field, tables, name)?
        }
        ExprKind::Bin(BinOp::Mul, a, b) => {
            let a = eval_expr(a, env, field, tables, name)?;
            let b = eval_expr(b, env, field, tables, name)?;
            field.mul(FieldElem(a), FieldElem(b)).0
        }
        ExprKind::Call(f, args) => match Builtin::from_name(f) {
            Some(b) => {
                let a = eval_expr(&args[0], env, field, tables, name)?;
                let k = match (b.takes_amount(), args.get(1)) {
                    (true, Some(Expr { kind: ExprKind::Lit(k), .. })) => *k,
                    (false, Some(arg)) => u64::from(eval_expr(arg, env, field, tables, name)?),
                    (_, None) => 0,
                    (true, Some(_)) => return Err(eval_err(name, format!("`{f}` needs a literal amount"))),
                };
                b.apply(field.width(), a, k)
            }
            None => {
                let a = eval_expr(&args[0], env, field, tables, name)?;
                tables
                    .table(f)
                    .ok_or_else(|| AffineError::NoTable(name.to_string(), f.clone()))?[a as usize]
                    .0
            }
        },
        _ => return Err(eval_err(name, format!("unsupported expression `{e}`"))),
    })
}

/// Concrete table of a preprocessed affine definition at every field
/// element. Called symbols must already have tables in `tables`.
pub fn table_of(def: &AffineDef, field: &FieldCtx, tables: &Interpretation) -> Result<Vec<FieldElem>, AffineError> {
    let mut out = Vec::with_capacity(field.order() as usize);
    for x in field.elements() {
        let mut env: HashMap<&str, u16> = HashMap::new();
        env.insert(&def.input, x.0);
        for s in &def.body {
            match &s.kind {
                StmtKind::Assign { target, value } => {
                    let v = eval_expr(value, &env, field, tables, &def.name)?;
                    env.insert(&target.name, v);
                }
                StmtKind::Assume(_) | StmtKind::Assert(_) => {}
                _ => return Err(eval_err(&def.name, "body is not straight-line")),
            }
        }
        let y = *env
            .get(def.output.as_str())
            .ok_or_else(|| eval_err(&def.name, format!("output `{}` unassigned", def.output)))?;
        out.push(FieldElem(y));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TableCheck {
    Constant(FieldElem),
    NotAffine(PairWitness),
}

fn tau_at(table: &[FieldElem], x: u16, y: u16) -> FieldElem {
    FieldElem(table[(x ^ y) as usize].0 ^ table[x as usize].0 ^ table[y as usize].0)
}

/// Fixes c at the pair (0, 0) and checks every pair in order.
pub fn check_affine_table(table: &[FieldElem]) -> TableCheck {
    check_table_counted(table).0
}

fn check_table_counted(table: &[FieldElem]) -> (TableCheck, u64) {
    let c = tau_at(table, 0, 0);
    let size = table.len() as u32;
    let mut calls = 1u64;
    for x in 0..size {
        for y in 0..size {
            calls += 1;
            let v = tau_at(table, x as u16, y as u16);
            if v != c {
                let w = PairWitness {
                    first: (FieldElem::ZERO, FieldElem::ZERO),
                    first_value: c,
                    second: (FieldElem(x as u16), FieldElem(y as u16)),
                    second_value: v,
                };
                return (TableCheck::NotAffine(w), calls);
            }
        }
    }
    (TableCheck::Constant(c), calls)
}

fn random_pairs(table: &[FieldElem], rng: &mut ChaCha8Rng, count: usize) -> Option<PairWitness> {
    let size = table.len() as u32;
    let draw = |rng: &mut ChaCha8Rng| (rng.gen_range(0..size) as u16, rng.gen_range(0..size) as u16);
    let first = draw(rng);
    let first_value = tau_at(table, first.0, first.1);
    for _ in 1..count {
        let p = draw(rng);
        let v = tau_at(table, p.0, p.1);
        if v != first_value {
            return Some(PairWitness {
                first: (FieldElem(first.0), FieldElem(first.1)),
                first_value,
                second: (FieldElem(p.0), FieldElem(p.1)),
                second_value: v,
            });
        }
    }
    None
}

struct Solver<'a> {
    prog: &'a Program,
    field: &'a FieldCtx,
    config: &'a AffineConfig,
    report: AffineReport,
    rng: ChaCha8Rng,
}

impl Solver<'_> {
    fn symbol(&mut self, def: &AffineDef) -> Result<SymbolReport, AffineError> {
        let start = Instant::now();
        let table = match table_of(def, self.field, &self.report.tables) {
            Ok(t) => Some(t),
            Err(AffineError::NoTable(..)) => None,
            Err(e) => return Err(e),
        };
        let mut rep = SymbolReport {
            name: def.name.clone(),
            result: AffineResult::Unknown(Polynomial::zero()),
            method: AffineMethod::None,
            inlined: Vec::new(),
            oracle_calls: 0,
            test_pairs: 0,
            stats: RuleStats::default(),
            wall: Duration::ZERO,
        };
        let mut residual = Polynomial::zero();

        let mut store = store_for(self.prog);
        if let Some(body) = exec_affine_body(&mut store, self.field, def)? {
            let (x, y) = (store.mk_var("x"), store.mk_var("y"));
            let xy = store.mk_add(x, y);
            let input = def.input.as_str();
            let a = store.substitute_names(body, &[(input, xy)]);
            let b = store.substitute_names(body, &[(input, x)]);
            let c = store.substitute_names(body, &[(input, y)]);
            let ab = store.mk_add(a, b);
            let mut tau = store.mk_add(ab, c);
            let mut ctx = self.report.rewrite_ctx(self.field).with_budget(self.config.step_budget);
            loop {
                match normalize(&store, tau, &mut ctx) {
                    Ok(p) => {
                        if let Some(c) = p.as_constant() {
                            rep.result = AffineResult::Constant(c);
                            rep.method = AffineMethod::Trs;
                            break;
                        }
                        residual = p;
                    }
                    Err(RewriteError::UnknownConstant(_)) | Err(RewriteError::BudgetExhausted(_)) => {}
                    Err(e) => return Err(eval_err(&def.name, e.to_string())),
                }
                let next = store
                    .symbols_in(tau)
                    .into_iter()
                    .find(|f| self.prog.affine_def(f).is_some() && !rep.inlined.iter().any(|g| **g == **f));
                let Some(g) = next else { break };
                let gdef = self.prog.affine_def(&g).expect("defined symbol");
                let Some(gbody) = exec_affine_body(&mut store, self.field, gdef)? else {
                    // Builtin bodies cannot be inlined symbolically.
                    rep.inlined.push(g.to_string());
                    continue;
                };
                tau = inline_affine(&mut store, tau, &g, gbody, &gdef.input);
                rep.inlined.push(g.to_string());
                ctx.steps = 0;
            }
            rep.stats = ctx.stats;
        }

        if rep.method == AffineMethod::None {
            match &table {
                None => rep.result = AffineResult::Unknown(residual),
                Some(t) => {
                    rep.test_pairs = DISPROOF_PAIRS as u64;
                    if let Some(w) = random_pairs(t, &mut self.rng, DISPROOF_PAIRS) {
                        rep.result = AffineResult::NotAffine(w);
                        rep.method = AffineMethod::Testing;
                    } else {
                        let pairs = (t.len() as u64).saturating_mul(t.len() as u64);
                        if pairs <= self.config.budget {
                            let (r, calls) = check_table_counted(t);
                            rep.oracle_calls = calls;
                            rep.method = AffineMethod::Table;
                            rep.result = match r {
                                TableCheck::Constant(c) => AffineResult::Constant(c),
                                TableCheck::NotAffine(w) => AffineResult::NotAffine(w),
                            };
                        } else {
                            rep.method = AffineMethod::Sampled;
                            rep.oracle_calls = self.config.budget;
                            rep.result = match random_pairs(t, &mut self.rng, self.config.budget as usize) {
                                Some(w) => AffineResult::NotAffine(w),
                                None => AffineResult::Constant(tau_at(t, 0, 0)),
                            };
                        }
                    }
                }
            }
        }
        if let Some(t) = table {
            self.report.tables.insert(&def.name, t);
        }
        rep.wall = start.elapsed();
        Ok(rep)
    }
}

/// λ for every affine symbol of a preprocessed program, callees first.
/// Declared symbols are assumed linear.
pub fn aff_const_all(prog: &Program, field: &FieldCtx, config: &AffineConfig) -> Result<AffineReport, AffineError> {
    let graph = prog.call_graph()?;
    let order: Vec<String> = graph
        .topological_order()?
        .into_iter()
        .filter(|n| prog.is_affine(n))
        .map(str::to_string)
        .collect();
    let mut solver = Solver {
        prog,
        field,
        config,
        report: AffineReport::default(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };
    for name in order {
        let rep = match prog.affine_def(&name) {
            Some(def) => solver.symbol(def)?,
            None => SymbolReport {
                name: name.clone(),
                result: AffineResult::AssumedLinear,
                method: AffineMethod::Assumed,
                inlined: Vec::new(),
                oracle_calls: 0,
                test_pairs: 0,
                stats: RuleStats::default(),
                wall: Duration::ZERO,
            },
        };
        solver.report.symbols.push(rep);
    }
    Ok(solver.report)
}
