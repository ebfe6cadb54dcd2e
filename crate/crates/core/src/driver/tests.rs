use super::*;
use crate::verify::Method;

fn quiet() -> RunConfig {
    RunConfig::default()
}

#[test]
fn field_directive_overrides_default() {
    let src = "field 4 0x13;\nproc p(x) -> y { y <- x; shares 2; y0 <- x0; y1 <- x1; }";
    let units = load_units(src, &FieldCtx::aes()).unwrap();
    assert_eq!(units[0].field.width(), 4);
    let units = load_units("proc p(x) -> y { y <- x; shares 1; y0 <- x0; }", &FieldCtx::gf16()).unwrap();
    assert_eq!(units[0].field.width(), 4);
}

#[test]
fn example_program_reports() {
    let run = run_verify(FIG2_MSL, &quiet()).unwrap();
    assert_eq!(run.exit_code(), 0);
    assert!(run.procs().all(|(_, p)| p.method == Method::Trs));
    let text = verify_report_text(&run, "fig2.msl", &quiet());
    assert!(text.contains("sec_mult"));
    assert!(text.contains("CORRECT"));
    assert!(!text.contains(" ms"));
    let json: serde_json::Value = serde_json::from_str(&verify_report_json(&run, "fig2.msl", &quiet())).unwrap();
    assert_eq!(json["schema"], SCHEMA);
    assert_eq!(json["exit_code"], 0);
    assert_eq!(json["units"][0]["procs"].as_array().unwrap().len(), 3);
    assert!(json["units"][0]["procs"][0].get("wall_ms").is_none());
}

#[test]
fn json_is_deterministic_without_timings() {
    let a = verify_report_json(&run_verify(MUTANTS[0].1, &quiet()).unwrap(), "m", &quiet());
    let b = verify_report_json(&run_verify(MUTANTS[0].1, &quiet()).unwrap(), "m", &quiet());
    assert_eq!(a, b);
    let timed = RunConfig { timings: true, ..quiet() };
    let c = verify_report_json(&run_verify(MUTANTS[0].1, &timed).unwrap(), "m", &timed);
    assert!(c.contains("wall_ms"));
}

#[test]
fn mutant_witnesses_replay_in_the_interpreter() {
    for (name, src) in MUTANTS {
        let run = run_verify(src, &quiet()).unwrap();
        assert_eq!(run.exit_code(), 1, "{name}");
        for (u, p) in run.procs() {
            let Verdict::Incorrect(w) = &p.verdict else { panic!("{name}: {:?}", p.verdict) };
            let v = replay_witness(u, &p.name, &p.randoms, w).unwrap();
            assert!(!v.is_zero(), "{name}");
            assert_eq!(v, w.value, "{name}");
        }
    }
}

#[test]
fn affine_exit_codes() {
    let run = run_affine(TABLE1_MSL, &quiet()).unwrap();
    assert_eq!(run.exit_code(), 1);
    let text = affine_report_text(&run, "t", &quiet());
    assert!(text.contains("NOT-AFFINE"));
    assert_eq!(run_affine("affine e(x) -> y { y <- x * x; }", &quiet()).unwrap().exit_code(), 0);
    let src = "affine h;\naffine g(x) -> y { t <- h(x); y <- t * t * x; }";
    assert_eq!(run_affine(src, &quiet()).unwrap().exit_code(), 2);
}

#[test]
fn parse_errors_surface() {
    assert!(matches!(run_verify("proc (", &quiet()), Err(DriverError::Lang(_))));
}

#[test]
fn parallel_jobs_match_sequential() {
    let src = GadgetRegistry::default().generate("aes-sbox-inverse", 1, &FieldCtx::aes()).unwrap();
    let seq = verify_report_json(&run_verify(&src, &quiet()).unwrap(), "g", &quiet());
    let par_cfg = RunConfig { jobs: 4, ..quiet() };
    let par = verify_report_json(&run_verify(&src, &par_cfg).unwrap(), "g", &quiet());
    assert_eq!(seq, par);
}

#[test]
fn selftest_passes() {
    let checks = selftest(&quiet());
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert!(selftest_text(&checks).ends_with("0 failed\n"));
}
