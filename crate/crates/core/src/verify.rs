//! Equivalence of each masked procedure with its original: normalize the
//! equivalence term, inline affine definitions, then test and decide.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::affine::AffineReport;
use crate::field::{FieldCtx, FieldElem};
use crate::lang::{share_name, Proc, Program};
use crate::oracle::{
    sample_check_zero, Decision, DeciderRegistry, Evaluator, OracleConfig, Query, SampleResult, SmtContext,
    Witness,
};
use crate::rewrite::{normalize, poly_to_term, RewriteCtx, RewriteError, RuleStats, DEFAULT_STEP_BUDGET};
use crate::symexec::{exec_masked, exec_origin, store_for, xor_fold, SymError};
use crate::term::{Polynomial, Sym, TermId, TermNode, TermStore};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Correct,
    Incorrect(Witness),
    MaybeIncorrect { residual: Option<Polynomial>, reason: String },
    Unknown(String),
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Correct => "correct",
            Verdict::Incorrect(_) => "incorrect",
            Verdict::MaybeIncorrect { .. } => "maybe-incorrect",
            Verdict::Unknown(_) => "unknown",
        }
    }

    pub fn is_correct(&self) -> bool {
        matches!(self, Verdict::Correct)
    }
}

/// How the verdict was reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Trs,
    Testing,
    Oracle,
    None,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Trs => "trs",
            Method::Testing => "testing",
            Method::Oracle => "oracle",
            Method::None => "none",
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub oracle: OracleConfig,
    pub step_budget: u64,
    /// Record every rule application.
    pub trace: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { oracle: OracleConfig::default(), step_budget: DEFAULT_STEP_BUDGET, trace: false }
    }
}

#[derive(Clone, Debug)]
pub struct ProcReport {
    pub name: String,
    pub verdict: Verdict,
    pub method: Method,
    /// Decider that settled an oracle verdict.
    pub decider: Option<&'static str>,
    pub inlined: Vec<String>,
    /// Number of monomials in the last normal form.
    pub normal_form_size: usize,
    pub stats: RuleStats,
    /// Variables of the equivalence term: input shares and randoms.
    pub vars: usize,
    /// Random variables in execution order.
    pub randoms: Vec<String>,
    pub trace: Vec<String>,
    pub wall: Duration,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub procs: Vec<ProcReport>,
}

impl VerifyReport {
    /// 0 when every procedure is correct, 1 when any is incorrect, else 2.
    pub fn exit_code(&self) -> i32 {
        if self.procs.iter().any(|p| matches!(p.verdict, Verdict::Incorrect(_))) {
            1
        } else if self.procs.iter().all(|p| p.verdict.is_correct()) {
            0
        } else {
            2
        }
    }

    pub fn get(&self, name: &str) -> Option<&ProcReport> {
        self.procs.iter().find(|p| p.name == name)
    }
}

/// The equivalence term: the original output over XOR-ed input shares,
/// XOR-ed with every masked output share. Zero exactly when the masked
/// procedure is correct.
pub fn equivalence_term(store: &mut TermStore, field: &FieldCtx, proc: &Proc) -> Result<(TermId, Vec<Sym>), SymError> {
    let origin = exec_origin(store, field, proc)?;
    let mut subst: Vec<(String, TermId)> = Vec::new();
    for input in &proc.inputs {
        let shares: Vec<TermId> = (0..proc.shares).map(|j| store.mk_var(&share_name(input, j))).collect();
        subst.push((input.clone(), xor_fold(store, &shares)));
    }
    let pairs: Vec<(&str, TermId)> = subst.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let origin = store.substitute_names(origin, &pairs);
    let masked = exec_masked(store, field, proc)?;
    let out = xor_fold(store, &masked.shares);
    Ok((store.mk_add(origin, out), masked.randoms))
}

/// Replaces every application `f(u)` by `body[input ↦ u]`.
pub fn inline_affine(store: &mut TermStore, root: TermId, f: &str, body: TermId, input: &str) -> TermId {
    store.map_bottom_up(root, |store, id, kids| match store.node(id) {
        TermNode::App(g, _) if &**g == f => Some(store.substitute_names(body, &[(input, kids[0])])),
        _ => None,
    })
}

/// Inlinable symbol applied at the innermost position, ties broken by name.
fn innermost(store: &TermStore, root: TermId, candidate: impl Fn(&str) -> bool) -> Option<Sym> {
    let mut height: HashMap<TermId, u32> = HashMap::new();
    let mut best: Option<(u32, Sym)> = None;
    for id in store.post_order(root) {
        let below = store.children(id).map(|c| height[&c]).max().unwrap_or(0);
        let h = match store.node(id) {
            TermNode::App(f, _) if candidate(f) => {
                let key = (below, f.clone());
                if best.as_ref().is_none_or(|b| key < *b) {
                    best = Some(key);
                }
                below + 1
            }
            _ => below,
        };
        height.insert(id, h);
    }
    best.map(|(_, f)| f)
}

struct Run<'a> {
    prog: &'a Program,
    field: &'a FieldCtx,
    affine: &'a AffineReport,
    config: &'a VerifyConfig,
    deciders: &'a DeciderRegistry,
}

impl Run<'_> {
    fn proc(&self, proc: &Proc) -> ProcReport {
        let start = Instant::now();
        let mut rep = ProcReport {
            name: proc.name.clone(),
            verdict: Verdict::Unknown(String::new()),
            method: Method::None,
            decider: None,
            inlined: Vec::new(),
            normal_form_size: 0,
            stats: RuleStats::default(),
            vars: 0,
            randoms: Vec::new(),
            trace: Vec::new(),
            wall: Duration::ZERO,
        };
        rep.verdict = match self.decide(proc, &mut rep) {
            Ok(v) => v,
            Err(e) => Verdict::Unknown(e),
        };
        rep.wall = start.elapsed();
        rep
    }

    fn decide(&self, proc: &Proc, rep: &mut ProcReport) -> Result<Verdict, String> {
        let mut store = store_for(self.prog);
        let (tau, randoms) = equivalence_term(&mut store, self.field, proc).map_err(|e| e.to_string())?;
        let all_vars: Vec<Sym> = store.vars(tau).into_iter().collect();
        rep.vars = all_vars.len();
        rep.randoms = randoms.iter().map(|r| r.to_string()).collect();

        let mut ctx = self.affine.rewrite_ctx(self.field).with_budget(self.config.step_budget);
        if self.config.trace {
            ctx = ctx.with_trace();
        }
        let result = self.reduce(proc, rep, &mut store, tau, &all_vars, &mut ctx);
        rep.trace = ctx.trace.take().unwrap_or_default();
        rep.stats = ctx.stats;
        result
    }

    fn reduce(
        &self,
        proc: &Proc,
        rep: &mut ProcReport,
        store: &mut TermStore,
        mut tau: TermId,
        all_vars: &[Sym],
        ctx: &mut RewriteCtx,
    ) -> Result<Verdict, String> {
        let mut residual: Option<Polynomial>;
        let mut failure: Option<RewriteError>;
        loop {
            ctx.steps = 0;
            if self.config.trace && !rep.inlined.is_empty() {
                let g = rep.inlined.last().cloned().unwrap_or_default();
                ctx.trace.get_or_insert_with(Vec::new).push(format!("inline: {g}"));
            }
            match normalize(store, tau, ctx) {
                Ok(p) => {
                    rep.normal_form_size = p.len();
                    if p.is_zero() {
                        rep.method = Method::Trs;
                        return Ok(Verdict::Correct);
                    }
                    if let Some(c) = p.as_constant() {
                        rep.method = Method::Trs;
                        let assignment = all_vars.iter().map(|v| (v.to_string(), FieldElem::ZERO)).collect();
                        return Ok(Verdict::Incorrect(Witness { assignment, value: c }));
                    }
                    residual = Some(p);
                    failure = None;
                }
                Err(e @ (RewriteError::UnknownConstant(_) | RewriteError::BudgetExhausted(_))) => {
                    residual = None;
                    failure = Some(e);
                }
                Err(e) => return Err(e.to_string()),
            }
            let inlined = &rep.inlined;
            let wanted = residual.as_ref().map(Polynomial::symbols);
            let in_residual = |f: &str| wanted.as_ref().is_none_or(|s| s.contains(f));
            let next = innermost(store, tau, |f| {
                self.prog.affine_def(f).is_some() && !inlined.iter().any(|g| g == f) && in_residual(f)
            });
            let Some(g) = next else { break };
            let gdef = self.prog.affine_def(&g).expect("defined symbol");
            rep.inlined.push(g.to_string());
            if let Some(body) = crate::symexec::exec_affine_body(store, self.field, gdef).map_err(|e| e.to_string())? {
                tau = inline_affine(store, tau, &g, body, &gdef.input);
            }
        }

        // The residual is equivalent to τ and usually has fewer variables.
        let target = match &residual {
            Some(p) => poly_to_term(store, p).map_err(|e| e.to_string())?,
            None => tau,
        };
        let uninterpreted: Vec<Sym> =
            store.symbols_in(target).into_iter().filter(|f| !self.affine.tables.contains(f)).collect();
        if !uninterpreted.is_empty() {
            let names: Vec<&str> = uninterpreted.iter().map(|f| &**f).collect();
            let mut reason = format!("uninterpreted symbols remain: {}", names.join(", "));
            if let Some(smt) = self.deciders.get("smtlib") {
                let q = self.query(store, target, proc);
                if let Decision::Undecided(why) = smt.decide(&q.0.with(&q.1)) {
                    reason.push_str("; ");
                    reason.push_str(&why);
                }
            }
            return Ok(Verdict::MaybeIncorrect { residual, reason });
        }

        let complete = |w: Witness| {
            let mut assignment: BTreeMap<String, FieldElem> =
                all_vars.iter().map(|v| (v.to_string(), FieldElem::ZERO)).collect();
            assignment.extend(w.assignment);
            Witness { assignment, value: w.value }
        };
        let mut ev = Evaluator::new(store, target, self.field, &self.affine.tables).map_err(|e| e.to_string())?;
        if let SampleResult::Nonzero(w) = sample_check_zero(&mut ev, &self.config.oracle) {
            rep.method = Method::Testing;
            return Ok(Verdict::Incorrect(complete(w)));
        }
        let q = self.query(store, target, proc);
        let (decision, by) = self.deciders.decide(&q.0.with(&q.1));
        rep.decider = by;
        Ok(match decision {
            Decision::Zero => {
                rep.method = Method::Oracle;
                Verdict::Correct
            }
            Decision::Nonzero(w) => {
                rep.method = Method::Oracle;
                Verdict::Incorrect(complete(w))
            }
            Decision::Undecided(why) => {
                let reason = match failure {
                    Some(e) => format!("{e}; {why}"),
                    None => why,
                };
                match residual {
                    Some(_) => Verdict::MaybeIncorrect { residual, reason },
                    None => Verdict::Unknown(reason),
                }
            }
        })
    }

    fn query<'s>(&'s self, store: &'s TermStore, root: TermId, proc: &'s Proc) -> (QueryParts<'s>, SmtContext<'s>) {
        (
            QueryParts { store, root, field: self.field, affine: self.affine, config: &self.config.oracle, label: &proc.name },
            SmtContext { field: self.field, prog: Some(self.prog) },
        )
    }
}

struct QueryParts<'a> {
    store: &'a TermStore,
    root: TermId,
    field: &'a FieldCtx,
    affine: &'a AffineReport,
    config: &'a OracleConfig,
    label: &'a str,
}

impl<'a> QueryParts<'a> {
    fn with(&self, smt: &'a SmtContext<'a>) -> Query<'a> {
        Query {
            store: self.store,
            root: self.root,
            field: self.field,
            interp: &self.affine.tables,
            smt,
            config: self.config,
            label: self.label,
        }
    }
}

/// Verdict for one procedure of a preprocessed program.
pub fn verify_proc(
    prog: &Program,
    proc: &Proc,
    field: &FieldCtx,
    affine: &AffineReport,
    config: &VerifyConfig,
) -> ProcReport {
    let deciders = DeciderRegistry::default();
    Run { prog, field, affine, config, deciders: &deciders }.proc(proc)
}

/// Verdicts for every procedure in source order, computed by up to `jobs`
/// worker threads.
pub fn verify_all_jobs(
    prog: &Program,
    field: &FieldCtx,
    affine: &AffineReport,
    config: &VerifyConfig,
    jobs: usize,
) -> VerifyReport {
    let n = prog.procs.len();
    if jobs <= 1 || n <= 1 {
        return verify_all(prog, field, affine, config);
    }
    let deciders = DeciderRegistry::default();
    let run = Run { prog, field, affine, config, deciders: &deciders };
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ProcReport>>> = Mutex::new(vec![None; n]);
    std::thread::scope(|s| {
        for _ in 0..jobs.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = run.proc(&prog.procs[i]);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    let procs = slots.into_inner().expect("worker panicked").into_iter().flatten().collect();
    VerifyReport { procs }
}

/// Verdicts for every procedure in source order.
pub fn verify_all(prog: &Program, field: &FieldCtx, affine: &AffineReport, config: &VerifyConfig) -> VerifyReport {
    let deciders = DeciderRegistry::default();
    let run = Run { prog, field, affine, config, deciders: &deciders };
    VerifyReport { procs: prog.procs.iter().map(|p| run.proc(p)).collect() }
}

#[cfg(test)]
mod tests;
