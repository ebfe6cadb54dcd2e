//! Concrete decision procedures over the finite field: seeded random
//! testing, exhaustive enumeration, and SMT-LIB2 emission for external
//! solvers.

mod smtlib;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::field::{FieldCtx, FieldElem};
use crate::term::{Interpretation, Sym, TermError, TermId, TermNode, TermStore};

pub use smtlib::{emit_smtlib, gf_mul_smtlib, SmtContext, SmtMode};

pub const DEFAULT_SEED: u64 = 0xF15C;
pub const DEFAULT_TRIALS: u32 = 64;
pub const DEFAULT_BUDGET: u64 = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    pub seed: u64,
    pub trials: u32,
    /// Maximum number of evaluations for exhaustive enumeration.
    pub budget: u64,
    /// Directory for emitted SMT-LIB2 scripts.
    pub emit_dir: Option<PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            seed: DEFAULT_SEED,
            trials: DEFAULT_TRIALS,
            budget: DEFAULT_BUDGET,
            emit_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("exhaustive check needs {needed} evaluations, budget is {budget}")]
    BudgetExceeded { needed: String, budget: u64 },
    #[error(transparent)]
    Term(#[from] TermError),
    #[error("cannot write SMT-LIB2 script: {0}")]
    Io(String),
}

/// An assignment under which a term evaluates to a nonzero value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub assignment: BTreeMap<String, FieldElem>,
    pub value: FieldElem,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SampleResult {
    ZeroSoFar,
    Nonzero(Witness),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExhaustiveResult {
    Zero,
    Nonzero(Witness),
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(u16),
    Var(usize),
    Add(usize, usize),
    Mul(usize, usize),
    App(usize, usize),
}

/// A term compiled to straight-line code over a fixed variable order.
pub struct Evaluator {
    ops: Vec<Op>,
    vars: Vec<Sym>,
    tables: Vec<std::sync::Arc<[FieldElem]>>,
    mul_table: Option<Vec<u16>>,
    field: FieldCtx,
    scratch: Vec<u16>,
}

impl Evaluator {
    /// Compiles `root`; its variables are taken in sorted order. Every
    /// affine symbol must have a table in `interp`.
    pub fn new(store: &TermStore, root: TermId, field: &FieldCtx, interp: &Interpretation) -> Result<Self, TermError> {
        let vars: Vec<Sym> = store.vars(root).into_iter().collect();
        Self::with_vars(store, root, field, interp, vars)
    }

    pub fn with_vars(
        store: &TermStore,
        root: TermId,
        field: &FieldCtx,
        interp: &Interpretation,
        vars: Vec<Sym>,
    ) -> Result<Self, TermError> {
        let var_index: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (&**v, i)).collect();
        let mut slot: HashMap<TermId, usize> = HashMap::new();
        let mut ops = Vec::new();
        let mut tables: Vec<std::sync::Arc<[FieldElem]>> = Vec::new();
        let mut table_index: HashMap<Sym, usize> = HashMap::new();
        for id in store.post_order(root) {
            let op = match store.node(id) {
                TermNode::Const(c) => Op::Const(c.0),
                TermNode::Var(v) => Op::Var(
                    *var_index
                        .get(&**v)
                        .ok_or_else(|| TermError::UnboundVar(v.to_string()))?,
                ),
                TermNode::Add(a, b) => Op::Add(slot[a], slot[b]),
                TermNode::Mul(a, b) => Op::Mul(slot[a], slot[b]),
                TermNode::App(f, a) => {
                    let k = match table_index.get(f) {
                        Some(&k) => k,
                        None => {
                            let t = interp
                                .table(f)
                                .ok_or_else(|| TermError::MissingTable(f.to_string()))?;
                            tables.push(t.into());
                            table_index.insert(f.clone(), tables.len() - 1);
                            tables.len() - 1
                        }
                    };
                    Op::App(k, slot[a])
                }
            };
            slot.insert(id, ops.len());
            ops.push(op);
        }
        let mul_table = (field.width() <= 8).then(|| {
            let n = field.order() as usize;
            let mut t = vec![0u16; n * n];
            for a in 0..n {
                for b in 0..n {
                    t[a * n + b] = field.mul(FieldElem(a as u16), FieldElem(b as u16)).0;
                }
            }
            t
        });
        let scratch = vec![0; ops.len()];
        Ok(Evaluator { ops, vars, tables, mul_table, field: field.clone(), scratch })
    }

    pub fn vars(&self) -> &[Sym] {
        &self.vars
    }

    /// Value under `values`, one per variable in [`Evaluator::vars`] order.
    pub fn eval(&mut self, values: &[FieldElem]) -> FieldElem {
        let n = self.field.order() as usize;
        for i in 0..self.ops.len() {
            let v = match self.ops[i] {
                Op::Const(c) => c,
                Op::Var(k) => values[k].0,
                Op::Add(a, b) => self.scratch[a] ^ self.scratch[b],
                Op::Mul(a, b) => {
                    let (x, y) = (self.scratch[a], self.scratch[b]);
                    match &self.mul_table {
                        Some(t) => t[x as usize * n + y as usize],
                        None => self.field.mul(FieldElem(x), FieldElem(y)).0,
                    }
                }
                Op::App(k, a) => self.tables[k][self.scratch[a] as usize].0,
            };
            self.scratch[i] = v;
        }
        FieldElem(*self.scratch.last().unwrap_or(&0))
    }

    fn witness(&self, values: &[FieldElem], value: FieldElem) -> Witness {
        Witness {
            assignment: self.vars.iter().map(|v| v.to_string()).zip(values.iter().copied()).collect(),
            value,
        }
    }
}

/// Evaluates at `config.trials` seeded random assignments and reports the
/// first nonzero value.
pub fn sample_check_zero(ev: &mut Evaluator, config: &OracleConfig) -> SampleResult {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let order = ev.field.order();
    let mut values = vec![FieldElem::ZERO; ev.vars.len()];
    for _ in 0..config.trials {
        for v in values.iter_mut() {
            *v = FieldElem(rng.gen_range(0..order) as u16);
        }
        let r = ev.eval(&values);
        if !r.is_zero() {
            return SampleResult::Nonzero(ev.witness(&values, r));
        }
    }
    SampleResult::ZeroSoFar
}

/// Number of assignments of `vars` variables, if it fits in `u64`.
pub fn assignment_count(field: &FieldCtx, vars: usize) -> Option<u64> {
    1u64.checked_shl(field.width().checked_mul(vars as u32)?)
        .filter(|_| field.width() as usize * vars < 64)
}

/// Enumerates every assignment in lexicographic order (first variable
/// most significant); the first nonzero value is the witness.
pub fn exhaustive_check_zero(ev: &mut Evaluator, config: &OracleConfig) -> Result<ExhaustiveResult, OracleError> {
    let k = ev.vars.len();
    let total = assignment_count(&ev.field, k);
    match total {
        Some(t) if t <= config.budget => {}
        _ => {
            return Err(OracleError::BudgetExceeded {
                needed: format!("2^{}", ev.field.width() as usize * k),
                budget: config.budget,
            })
        }
    }
    let mask = ev.field.mask();
    let mut values = vec![FieldElem::ZERO; k];
    loop {
        let r = ev.eval(&values);
        if !r.is_zero() {
            return Ok(ExhaustiveResult::Nonzero(ev.witness(&values, r)));
        }
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(ExhaustiveResult::Zero);
            }
            i -= 1;
            if values[i].0 == mask {
                values[i] = FieldElem::ZERO;
            } else {
                values[i].0 += 1;
                break;
            }
        }
    }
}

/// A zero-test question handed to the deciders.
pub struct Query<'a> {
    pub store: &'a TermStore,
    pub root: TermId,
    pub field: &'a FieldCtx,
    pub interp: &'a Interpretation,
    pub smt: &'a SmtContext<'a>,
    pub config: &'a OracleConfig,
    /// Base name for emitted files.
    pub label: &'a str,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Zero,
    Nonzero(Witness),
    Undecided(String),
}

/// A procedure that decides whether a term is identically zero.
pub trait Decider: Send + Sync {
    fn name(&self) -> &'static str;
    fn decide(&self, q: &Query<'_>) -> Decision;
}

/// Complete enumeration within the configured budget.
pub struct Exhaustive;

impl Decider for Exhaustive {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn decide(&self, q: &Query<'_>) -> Decision {
        let mut ev = match Evaluator::new(q.store, q.root, q.field, q.interp) {
            Ok(ev) => ev,
            Err(e) => return Decision::Undecided(e.to_string()),
        };
        match exhaustive_check_zero(&mut ev, q.config) {
            Ok(ExhaustiveResult::Zero) => Decision::Zero,
            Ok(ExhaustiveResult::Nonzero(w)) => Decision::Nonzero(w),
            Err(e) => Decision::Undecided(e.to_string()),
        }
    }
}

/// Writes an equivalence script for an external solver when an output
/// directory is configured. Never decides by itself.
pub struct SmtLib;

impl Decider for SmtLib {
    fn name(&self) -> &'static str {
        "smtlib"
    }

    fn decide(&self, q: &Query<'_>) -> Decision {
        let Some(dir) = &q.config.emit_dir else {
            return Decision::Undecided("no SMT-LIB2 output directory".into());
        };
        let script = emit_smtlib(q.store, q.root, &SmtMode::Equivalence, q.smt);
        let path = dir.join(format!("{}.smt2", q.label));
        match std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, script)) {
            Ok(()) => Decision::Undecided(format!("SMT-LIB2 script written to {}", path.display())),
            Err(e) => Decision::Undecided(OracleError::Io(e.to_string()).to_string()),
        }
    }
}

/// Deciders tried in registration order until one decides.
pub struct DeciderRegistry {
    deciders: Vec<Box<dyn Decider>>,
}

impl Default for DeciderRegistry {
    fn default() -> Self {
        let mut r = DeciderRegistry::empty();
        r.register(Box::new(Exhaustive));
        r.register(Box::new(SmtLib));
        r
    }
}

impl DeciderRegistry {
    pub fn empty() -> Self {
        DeciderRegistry { deciders: Vec::new() }
    }

    pub fn register(&mut self, d: Box<dyn Decider>) {
        self.deciders.push(d);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.deciders.iter().map(|d| d.name()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&dyn Decider> {
        self.deciders.iter().find(|d| d.name() == name).map(|d| &**d)
    }

    /// The first definite answer with the name of the decider that gave
    /// it, or the collected reasons when none decides.
    pub fn decide(&self, q: &Query<'_>) -> (Decision, Option<&'static str>) {
        let mut reasons = Vec::new();
        for d in &self.deciders {
            match d.decide(q) {
                Decision::Undecided(why) => reasons.push(format!("{}: {why}", d.name())),
                other => return (other, Some(d.name())),
            }
        }
        (Decision::Undecided(reasons.join("; ")), None)
    }
}
