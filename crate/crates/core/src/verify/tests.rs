use std::collections::HashMap;

use super::*;
use crate::affine::{aff_const_all, AffineConfig};
use crate::lang::{parse, preprocess};
use crate::term::Interpretation;

const FIG2: &str = include_str!("../../msl/fig2.msl");

fn check(src: &str, config: &VerifyConfig) -> (Program, FieldCtx, AffineReport, VerifyReport) {
    let parsed = parse(src).unwrap();
    let field = parsed.field.clone().unwrap_or_else(FieldCtx::aes);
    let prog = preprocess(&parsed).unwrap();
    let affine = aff_const_all(&prog, &field, &AffineConfig::default()).unwrap();
    let rep = verify_all(&prog, &field, &affine, config);
    (prog, field, affine, rep)
}

/// Re-evaluates the equivalence term under a witness with plain tree
/// evaluation.
fn replay(prog: &Program, field: &FieldCtx, tables: &Interpretation, name: &str, w: &Witness) -> FieldElem {
    let mut store = store_for(prog);
    let (tau, _) = equivalence_term(&mut store, field, prog.proc(name).unwrap()).unwrap();
    let env: HashMap<Sym, FieldElem> = w.assignment.iter().map(|(k, v)| (Sym::from(k.as_str()), *v)).collect();
    store.eval(tau, field, &env, tables).unwrap()
}

#[test]
fn example_program_is_correct_by_rewriting() {
    let (_, _, _, rep) = check(FIG2, &VerifyConfig::default());
    assert_eq!(rep.procs.len(), 3);
    for p in &rep.procs {
        assert_eq!(p.verdict, Verdict::Correct, "{}", p.name);
        assert_eq!(p.method, Method::Trs, "{}", p.name);
        assert!(p.inlined.is_empty(), "{}", p.name);
    }
    assert_eq!(rep.exit_code(), 0);
    assert_eq!(rep.get("sec_mult").unwrap().randoms, vec!["r0".to_string()]);
}

#[test]
fn dropped_cross_term_is_caught() {
    let src = "field 8 0x11B;\n\
               proc sec_mult(a, b) -> c {\n c <- a * b;\n shares 2;\n r0 <- rand;\n\
               c0 <- (a0 * b0) ^ r0;\n r1 <- r0 ^ (a1 * b0);\n c1 <- (a1 * b1) ^ r1;\n}";
    let (prog, field, affine, rep) = check(src, &VerifyConfig::default());
    let p = rep.get("sec_mult").unwrap();
    let Verdict::Incorrect(w) = &p.verdict else { panic!("{:?}", p.verdict) };
    assert!(!w.value.is_zero());
    assert_eq!(replay(&prog, &field, &affine.tables, "sec_mult", w), w.value);
    assert_eq!(rep.exit_code(), 1);

    // τ is a0 * b1 here, so a0 = b1 = 1 with everything else 0 gives 1.
    let mut w1 = w.clone();
    for v in w1.assignment.values_mut() {
        *v = FieldElem::ZERO;
    }
    w1.assignment.insert("a0".into(), FieldElem::ONE);
    w1.assignment.insert("b1".into(), FieldElem::ONE);
    assert_eq!(replay(&prog, &field, &affine.tables, "sec_mult", &w1), FieldElem::ONE);
}

#[test]
fn constant_residuals_are_incorrect() {
    let src = "field 4 0x13;\nproc p(x) -> y { y <- x; shares 2; y0 <- x0 ^ 1; y1 <- x1; }";
    let (prog, field, affine, rep) = check(src, &VerifyConfig::default());
    let p = &rep.procs[0];
    assert_eq!(p.method, Method::Trs);
    let Verdict::Incorrect(w) = &p.verdict else { panic!() };
    assert_eq!(w.value, FieldElem::ONE);
    assert_eq!(replay(&prog, &field, &affine.tables, "p", w), FieldElem::ONE);
}

#[test]
fn inlining_examples() {
    let field = FieldCtx::aes();
    let prog = preprocess(&parse(FIG2).unwrap()).unwrap();
    let mut store = store_for(&prog);
    let exp4 = crate::symexec::exec_affine_body(&mut store, &field, prog.affine_def("exp4").unwrap())
        .unwrap()
        .unwrap();
    let u = store.mk_var("u");
    let t = store.mk_app("exp4", u).unwrap();
    let got = inline_affine(&mut store, t, "exp4", exp4, "x");
    let inner = store.mk_app("exp2", u).unwrap();
    let want = store.mk_app("exp2", inner).unwrap();
    assert_eq!(got, want);
    assert_eq!(inline_affine(&mut store, u, "exp4", exp4, "x"), u);

    let exp2 = crate::symexec::exec_affine_body(&mut store, &field, prog.affine_def("exp2").unwrap())
        .unwrap()
        .unwrap();
    let (a0, a1) = (store.mk_var("a0"), store.mk_var("a1"));
    let s = store.mk_add(a0, a1);
    let t = store.mk_app("exp2", s).unwrap();
    let got = inline_affine(&mut store, t, "exp2", exp2, "x");
    assert_eq!(got, store.mk_mul(s, s));
}

#[test]
fn innermost_application_goes_first() {
    let mut store = TermStore::with_symbols(["f", "g"]);
    let x = store.mk_var("x");
    let gx = store.mk_app("g", x).unwrap();
    let fgx = store.mk_app("f", gx).unwrap();
    assert_eq!(innermost(&store, fgx, |_| true).as_deref(), Some("g"));
    assert_eq!(innermost(&store, fgx, |s| s == "f").as_deref(), Some("f"));
    assert_eq!(innermost(&store, x, |_| true), None);
}

#[test]
fn opaque_identities_need_the_oracle() {
    let src = "field 8 0x11B;\n\
               affine rotl1(x) -> y { y <- rotl(x, 1); }\n\
               affine rotl2(x) -> y { y <- rotl(x, 2); }\n\
               proc p(x) -> y { y <- rotl2(x); shares 2; y0 <- rotl1(rotl1(x0)); y1 <- rotl1(rotl1(x1)); }";
    let (_, _, _, rep) = check(src, &VerifyConfig::default());
    let p = &rep.procs[0];
    assert_eq!(p.verdict, Verdict::Correct);
    assert_eq!(p.method, Method::Oracle);
    assert_eq!(p.decider, Some("exhaustive"));
}

#[test]
fn uninterpreted_symbols_never_give_incorrect() {
    let src = "field 4 0x13;\naffine h;\n\
               proc p(x) -> y { y <- h(x); shares 2; y0 <- h(x0); y1 <- h(x1) ^ h(x0 * x1); }";
    let (_, _, _, rep) = check(src, &VerifyConfig::default());
    let Verdict::MaybeIncorrect { residual, reason } = &rep.procs[0].verdict else { panic!() };
    assert!(residual.as_ref().unwrap().symbols().contains("h"));
    assert!(reason.contains("uninterpreted"), "{reason}");
    assert_eq!(rep.exit_code(), 2);

    // A linear use of h is proved under λ(h) = 0.
    let src = "field 4 0x13;\naffine h;\nproc p(x) -> y { y <- h(x); shares 2; y0 <- h(x0); y1 <- h(x1); }";
    let (_, _, _, rep) = check(src, &VerifyConfig::default());
    assert_eq!(rep.procs[0].verdict, Verdict::Correct);
}

#[test]
fn smt_scripts_are_emitted_for_undecided_terms() {
    let dir = std::env::temp_dir().join(format!("mv-verify-{}", std::process::id()));
    let config = VerifyConfig {
        oracle: OracleConfig { emit_dir: Some(dir.clone()), ..OracleConfig::default() },
        ..VerifyConfig::default()
    };
    let src = "field 4 0x13;\naffine h;\n\
               proc p(x) -> y { y <- h(x); shares 2; y0 <- h(x0); y1 <- h(x1) ^ h(x0 * x1); }";
    let (_, _, _, rep) = check(src, &config);
    let Verdict::MaybeIncorrect { reason, .. } = &rep.procs[0].verdict else { panic!() };
    assert!(reason.contains("p.smt2"), "{reason}");
    let text = std::fs::read_to_string(dir.join("p.smt2")).unwrap();
    assert!(text.contains("(declare-fun h"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn exhausted_step_budget_is_unknown() {
    let config = VerifyConfig { step_budget: 1, ..VerifyConfig::default() };
    let (_, _, _, rep) = check(FIG2, &config);
    let p = rep.get("sec_mult").unwrap();
    let Verdict::Unknown(msg) = &p.verdict else { panic!("{:?}", p.verdict) };
    assert!(msg.contains("budget"), "{msg}");
    assert_eq!(rep.exit_code(), 2);
}

#[test]
fn empty_program_gives_empty_report() {
    let (_, _, _, rep) = check("", &VerifyConfig::default());
    assert!(rep.procs.is_empty());
    assert_eq!(rep.exit_code(), 0);
}
