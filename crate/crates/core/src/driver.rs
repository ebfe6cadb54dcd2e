//! Pipeline from MSL source to reports: parse, preprocess, affine
//! constants, verification, and text or JSON rendering.

use std::fmt::Write;
use std::path::PathBuf;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use crate::affine::{aff_const_all, AffineConfig, AffineError, AffineReport, AffineResult};
use crate::field::{FieldCtx, FieldElem};
use crate::gadgets::GadgetRegistry;
use crate::lang::{parse_units, preprocess, InterpError, Interpreter, LangError, Program};
use crate::oracle::{OracleConfig, Witness, DEFAULT_BUDGET, DEFAULT_SEED, DEFAULT_TRIALS};
use crate::rewrite::DEFAULT_STEP_BUDGET;
use crate::verify::{verify_all_jobs, Verdict, VerifyConfig, VerifyReport};

pub const SCHEMA: &str = "maskverify/report/v1";

/// Exit status for unreadable or invalid input.
pub const EXIT_INPUT_ERROR: i32 = 3;

#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Field for units without a `field` directive.
    pub field: FieldCtx,
    pub trials: u32,
    pub step_budget: u64,
    pub oracle_budget: u64,
    pub seed: u64,
    pub emit_smt: Option<PathBuf>,
    pub trace: bool,
    /// Include wall-clock times in reports.
    pub timings: bool,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            field: FieldCtx::aes(),
            trials: DEFAULT_TRIALS,
            step_budget: DEFAULT_STEP_BUDGET,
            oracle_budget: DEFAULT_BUDGET,
            seed: DEFAULT_SEED,
            emit_smt: None,
            trace: false,
            timings: false,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            oracle: OracleConfig {
                seed: self.seed,
                trials: self.trials,
                budget: self.oracle_budget,
                emit_dir: self.emit_smt.clone(),
            },
            step_budget: self.step_budget,
            trace: self.trace,
        }
    }

    pub fn affine_config(&self) -> AffineConfig {
        AffineConfig { seed: self.seed, step_budget: self.step_budget, budget: self.oracle_budget }
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("{0}")]
    Lang(#[from] LangError),
    #[error("{0}")]
    Affine(#[from] AffineError),
}

/// One `field` section of a file, before and after preprocessing.
#[derive(Clone, Debug)]
pub struct Unit {
    pub field: FieldCtx,
    pub source: Program,
    pub prog: Program,
}

pub fn load_units(src: &str, default_field: &FieldCtx) -> Result<Vec<Unit>, LangError> {
    parse_units(src)?
        .into_iter()
        .map(|source| {
            let field = source.field.clone().unwrap_or_else(|| default_field.clone());
            let prog = preprocess(&source)?;
            Ok(Unit { field, source, prog })
        })
        .collect()
}

pub struct AffineRun {
    pub units: Vec<(Unit, AffineReport)>,
}

impl AffineRun {
    /// 0 when every constant is known, 1 when a symbol is not affine,
    /// else 2.
    pub fn exit_code(&self) -> i32 {
        let results = || self.units.iter().flat_map(|(_, r)| r.symbols.iter().map(|s| &s.result));
        if results().any(|r| matches!(r, AffineResult::NotAffine(_))) {
            1
        } else if results().any(|r| matches!(r, AffineResult::Unknown(_))) {
            2
        } else {
            0
        }
    }
}

pub struct VerifyRun {
    pub units: Vec<(Unit, AffineReport, VerifyReport)>,
}

impl VerifyRun {
    pub fn exit_code(&self) -> i32 {
        let codes: Vec<i32> = self.units.iter().map(|(_, _, v)| v.exit_code()).collect();
        if codes.contains(&1) {
            1
        } else if codes.contains(&2) {
            2
        } else {
            0
        }
    }

    pub fn procs(&self) -> impl Iterator<Item = (&Unit, &crate::verify::ProcReport)> {
        self.units.iter().flat_map(|(u, _, v)| v.procs.iter().map(move |p| (u, p)))
    }
}

pub fn run_affine(src: &str, config: &RunConfig) -> Result<AffineRun, DriverError> {
    let mut units = Vec::new();
    for u in load_units(src, &config.field)? {
        let rep = aff_const_all(&u.prog, &u.field, &config.affine_config())?;
        units.push((u, rep));
    }
    Ok(AffineRun { units })
}

pub fn run_verify(src: &str, config: &RunConfig) -> Result<VerifyRun, DriverError> {
    let mut units = Vec::new();
    for u in load_units(src, &config.field)? {
        let aff = aff_const_all(&u.prog, &u.field, &config.affine_config())?;
        let rep = verify_all_jobs(&u.prog, &u.field, &aff, &config.verify_config(), config.jobs);
        units.push((u, aff, rep));
    }
    Ok(VerifyRun { units })
}

/// Runs the masked block of `proc_name` on the witness with the direct
/// interpreter and returns original ⊕ decoded masked output.
pub fn replay_witness(unit: &Unit, proc_name: &str, randoms: &[String], w: &Witness) -> Result<FieldElem, InterpError> {
    let interp = Interpreter::new(&unit.source, &unit.field);
    let p = unit.source.proc(proc_name).ok_or_else(|| InterpError::UnknownProc(proc_name.to_string()))?;
    let get = |name: &str| w.assignment.get(name).copied().unwrap_or(FieldElem::ZERO);
    let shares: Vec<Vec<FieldElem>> = p
        .inputs
        .iter()
        .map(|i| (0..p.shares).map(|j| get(&crate::lang::share_name(i, j))).collect())
        .collect();
    let plain: Vec<FieldElem> = shares.iter().map(|s| FieldElem(s.iter().fold(0, |a, e| a ^ e.0))).collect();
    let mut next = randoms.iter();
    let mut rand = || next.next().map(|r| get(r)).unwrap_or(FieldElem::ZERO);
    let out = interp.run_masked(proc_name, &shares, &mut rand)?;
    let orig = interp.run_orig(proc_name, &plain)?;
    Ok(FieldElem(out.iter().fold(orig.0, |a, e| a ^ e.0)))
}

fn hex(v: u32) -> String {
    format!("0x{v:X}")
}

fn millis(d: Duration) -> f64 {
    (d.as_secs_f64() * 1e6).round() / 1e3
}

fn field_json(f: &FieldCtx) -> Value {
    json!({ "n": f.width(), "poly": hex(f.poly()) })
}

fn affine_result_json(r: &AffineResult) -> Value {
    match r {
        AffineResult::Constant(c) => json!({ "kind": "constant", "constant": c.0 }),
        AffineResult::AssumedLinear => json!({ "kind": "assumed-linear", "constant": 0 }),
        AffineResult::NotAffine(w) => json!({
            "kind": "not-affine",
            "witness": [
                { "x": w.first.0 .0, "y": w.first.1 .0, "tau": w.first_value.0 },
                { "x": w.second.0 .0, "y": w.second.1 .0, "tau": w.second_value.0 },
            ],
        }),
        AffineResult::Unknown(p) => json!({ "kind": "unknown", "residual": p.to_string() }),
    }
}

fn affine_json(rep: &AffineReport, timings: bool) -> Value {
    Value::Array(
        rep.symbols
            .iter()
            .map(|s| {
                let mut v = json!({
                    "name": s.name,
                    "method": s.method.name(),
                    "result": affine_result_json(&s.result),
                    "inlined": s.inlined,
                    "oracle_calls": s.oracle_calls,
                    "test_pairs": s.test_pairs,
                    "rules": s.stats,
                });
                if timings {
                    v["wall_ms"] = json!(millis(s.wall));
                }
                v
            })
            .collect(),
    )
}

fn config_json(config: &RunConfig) -> Value {
    json!({
        "seed": format!("0x{:X}", config.seed),
        "trials": config.trials,
        "step_budget": config.step_budget,
        "oracle_budget": config.oracle_budget,
    })
}

pub fn affine_report_json(run: &AffineRun, file: &str, config: &RunConfig) -> String {
    let units: Vec<Value> = run
        .units
        .iter()
        .map(|(u, r)| json!({ "field": field_json(&u.field), "affine": affine_json(r, config.timings) }))
        .collect();
    let doc = json!({
        "schema": SCHEMA,
        "command": "affine",
        "file": file,
        "config": config_json(config),
        "units": units,
        "exit_code": run.exit_code(),
    });
    serde_json::to_string_pretty(&doc).expect("JSON values serialize") + "\n"
}

pub fn verify_report_json(run: &VerifyRun, file: &str, config: &RunConfig) -> String {
    let units: Vec<Value> = run
        .units
        .iter()
        .map(|(u, aff, rep)| {
            let procs: Vec<Value> = rep
                .procs
                .iter()
                .map(|p| {
                    let mut v = json!({
                        "name": p.name,
                        "verdict": p.verdict.name(),
                        "method": p.method.name(),
                        "normal_form_size": p.normal_form_size,
                        "rules": p.stats,
                        "rule_applications": p.stats.total(),
                        "inlined": p.inlined,
                        "vars": p.vars,
                        "randoms": p.randoms.len(),
                    });
                    if let Some(d) = p.decider {
                        v["decider"] = json!(d);
                    }
                    match &p.verdict {
                        Verdict::Incorrect(w) => {
                            v["witness"] = json!(w.assignment);
                            v["value"] = json!(w.value);
                        }
                        Verdict::MaybeIncorrect { residual, reason } => {
                            v["reason"] = json!(reason);
                            if let Some(r) = residual {
                                v["residual"] = json!(r.to_string());
                            }
                        }
                        Verdict::Unknown(msg) => v["reason"] = json!(msg),
                        Verdict::Correct => {}
                    }
                    if config.trace {
                        v["trace"] = json!(p.trace);
                    }
                    if config.timings {
                        v["wall_ms"] = json!(millis(p.wall));
                    }
                    v
                })
                .collect();
            json!({ "field": field_json(&u.field), "affine": affine_json(aff, config.timings), "procs": procs })
        })
        .collect();
    let doc = json!({
        "schema": SCHEMA,
        "command": "verify",
        "file": file,
        "config": config_json(config),
        "units": units,
        "exit_code": run.exit_code(),
    });
    serde_json::to_string_pretty(&doc).expect("JSON values serialize") + "\n"
}

fn affine_result_text(r: &AffineResult) -> String {
    match r {
        AffineResult::Constant(c) => c.to_string(),
        AffineResult::AssumedLinear => "0 (assumed)".into(),
        AffineResult::NotAffine(w) => format!(
            "NOT-AFFINE  tau({}, {}) = {} but tau({}, {}) = {}",
            w.first.0, w.first.1, w.first_value, w.second.0, w.second.1, w.second_value
        ),
        AffineResult::Unknown(p) => format!("UNKNOWN  residual {p}"),
    }
}

fn affine_text(out: &mut String, rep: &AffineReport, timings: bool) {
    for s in &rep.symbols {
        write!(out, "  {:<12} {:<8} {}", s.name, s.method.name(), affine_result_text(&s.result)).unwrap();
        if !s.inlined.is_empty() {
            write!(out, "  [inlined {}]", s.inlined.join(", ")).unwrap();
        }
        if timings {
            write!(out, "  {:.3} ms", millis(s.wall)).unwrap();
        }
        out.push('\n');
    }
}

pub fn affine_report_text(run: &AffineRun, file: &str, config: &RunConfig) -> String {
    let mut out = String::new();
    for (u, rep) in &run.units {
        writeln!(out, "{file}: {}", u.field).unwrap();
        writeln!(out, "  {:<12} {:<8} constant", "symbol", "method").unwrap();
        affine_text(&mut out, rep, config.timings);
    }
    out
}

fn witness_text(w: &Witness) -> String {
    let parts: Vec<String> = w.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{} gives {}", parts.join(" "), w.value)
}

pub fn verify_report_text(run: &VerifyRun, file: &str, config: &RunConfig) -> String {
    let mut out = String::new();
    for (u, aff, rep) in &run.units {
        writeln!(out, "{file}: {}", u.field).unwrap();
        if !aff.symbols.is_empty() {
            out.push_str("affine constants:\n");
            affine_text(&mut out, aff, config.timings);
        }
        for p in &rep.procs {
            write!(
                out,
                "  {:<16} {:<16} {:<8} nf={} rules={}",
                p.name,
                p.verdict.name().to_uppercase(),
                p.method.name(),
                p.normal_form_size,
                p.stats.total()
            )
            .unwrap();
            if !p.inlined.is_empty() {
                write!(out, " inlined={}", p.inlined.join(",")).unwrap();
            }
            if let Some(d) = p.decider {
                write!(out, " decider={d}").unwrap();
            }
            if config.timings {
                write!(out, " {:.3} ms", millis(p.wall)).unwrap();
            }
            out.push('\n');
            match &p.verdict {
                Verdict::Incorrect(w) => writeln!(out, "    witness: {}", witness_text(w)).unwrap(),
                Verdict::MaybeIncorrect { residual, reason } => {
                    writeln!(out, "    reason: {reason}").unwrap();
                    if let Some(r) = residual {
                        writeln!(out, "    residual: {r}").unwrap();
                    }
                }
                Verdict::Unknown(msg) => writeln!(out, "    reason: {msg}").unwrap(),
                Verdict::Correct => {}
            }
            for line in &p.trace {
                writeln!(out, "    {line}").unwrap();
            }
        }
    }
    out
}

/// Shipped golden inputs: name and source.
pub const FIG2_MSL: &str = include_str!("../msl/fig2.msl");
pub const TABLE1_MSL: &str = include_str!("../msl/table1.msl");
pub const MUTANTS: &[(&str, &str)] = &[
    ("drop_cross_term", include_str!("../msl/mutants/drop_cross_term.msl")),
    ("drop_other_cross_term", include_str!("../msl/mutants/drop_other_cross_term.msl")),
    ("drop_random_in_c0", include_str!("../msl/mutants/drop_random_in_c0.msl")),
    ("reuse_r1_in_c0", include_str!("../msl/mutants/reuse_r1_in_c0.msl")),
    ("reuse_r0_in_c1", include_str!("../msl/mutants/reuse_r0_in_c1.msl")),
    ("swap_b_index", include_str!("../msl/mutants/swap_b_index.msl")),
    ("swap_a_index", include_str!("../msl/mutants/swap_a_index.msl")),
    ("refresh_two_randoms", include_str!("../msl/mutants/refresh_two_randoms.msl")),
    ("refresh_drop_random", include_str!("../msl/mutants/refresh_drop_random.msl")),
    ("refresh_swap_share", include_str!("../msl/mutants/refresh_swap_share.msl")),
    ("drop_affine_constant", include_str!("../msl/mutants/drop_affine_constant.msl")),
    ("drop_aes_affine_constant", include_str!("../msl/mutants/drop_aes_affine_constant.msl")),
];

/// Expected affine constants of the table subjects; `None` is not affine.
pub const TABLE1_EXPECTED: &[(&str, Option<u16>)] = &[
    ("exp2", Some(0)),
    ("exp4", Some(0)),
    ("exp8", Some(0)),
    ("exp16", Some(0)),
    ("rotl1", Some(0)),
    ("rotl2", Some(0)),
    ("rotl3", Some(0)),
    ("rotl4", Some(0)),
    ("af", Some(99)),
    ("L1", Some(0)),
    ("L3", Some(0)),
    ("L5", Some(0)),
    ("L7", Some(0)),
    ("f1", None),
    ("f2", Some(1)),
    ("f3", None),
    ("f4", Some(99)),
];

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), passed, detail: detail.into() }
}

/// Runs the golden corpus: the example program, the affine table, the
/// mutants and a few generated gadgets.
pub fn selftest(config: &RunConfig) -> Vec<Check> {
    let mut out = Vec::new();
    match run_verify(FIG2_MSL, config) {
        Ok(run) => {
            for (_, p) in run.procs() {
                let ok = p.verdict.is_correct() && p.method == crate::verify::Method::Trs;
                out.push(check(format!("fig2 {}", p.name), ok, format!("{} by {}", p.verdict.name(), p.method.name())));
            }
        }
        Err(e) => out.push(check("fig2", false, e.to_string())),
    }
    match run_affine(TABLE1_MSL, config) {
        Ok(run) => {
            for (name, want) in TABLE1_EXPECTED {
                let got = run.units.iter().find_map(|(_, r)| r.get(name));
                let (ok, detail) = match (want, got.map(|s| &s.result)) {
                    (Some(c), Some(AffineResult::Constant(g))) => (g.0 == *c, g.to_string()),
                    (None, Some(AffineResult::NotAffine(_))) => (true, "not affine".to_string()),
                    (_, Some(r)) => (false, affine_result_text(r)),
                    (_, None) => (false, "missing".to_string()),
                };
                out.push(check(format!("table1 {name}"), ok, detail));
            }
        }
        Err(e) => out.push(check("table1", false, e.to_string())),
    }
    for (name, src) in MUTANTS {
        let result = run_verify(src, config).map(|run| {
            let mut ok = run.exit_code() == 1;
            let mut detail = String::new();
            for (u, p) in run.procs() {
                match &p.verdict {
                    Verdict::Incorrect(w) => match replay_witness(u, &p.name, &p.randoms, w) {
                        Ok(v) if !v.is_zero() && v == w.value => detail = format!("witness replays to {v}"),
                        Ok(v) => {
                            ok = false;
                            detail = format!("witness replays to {v}, reported {}", w.value);
                        }
                        Err(e) => {
                            ok = false;
                            detail = e.to_string();
                        }
                    },
                    v => {
                        ok = false;
                        detail = v.name().to_string();
                    }
                }
            }
            check(format!("mutant {name}"), ok, detail)
        });
        out.push(result.unwrap_or_else(|e| check(format!("mutant {name}"), false, e.to_string())));
    }
    let reg = GadgetRegistry::default();
    for kind in reg.kinds() {
        for d in [0, 1, 2, 3] {
            let name = format!("gen {kind} d={d}");
            let c = match reg.generate(kind, d, &config.field).map_err(|e| e.to_string()).and_then(|src| {
                run_verify(&src, config).map_err(|e| e.to_string())
            }) {
                Ok(run) => check(name, run.exit_code() == 0, format!("exit {}", run.exit_code())),
                Err(e) => check(name, false, e),
            };
            out.push(c);
        }
    }
    out
}

pub fn selftest_text(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        writeln!(out, "{} {:<36} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail).unwrap();
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(out, "{} checks, {} failed", checks.len(), failed).unwrap();
    out
}

#[cfg(test)]
mod tests;
