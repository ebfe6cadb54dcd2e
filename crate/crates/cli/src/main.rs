//! `maskverify`: check masked GF(2^n) programs against their unmasked
//! originals.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maskverify::driver::{
    affine_report_json, affine_report_text, run_affine, run_verify, selftest, selftest_text,
    verify_report_json, verify_report_text, RunConfig, EXIT_INPUT_ERROR,
};
use maskverify::field::{parse_poly, FieldCtx};
use maskverify::gadgets::GadgetRegistry;
use maskverify::oracle::{DEFAULT_BUDGET, DEFAULT_SEED, DEFAULT_TRIALS};
use maskverify::rewrite::DEFAULT_STEP_BUDGET;

#[derive(Parser)]
#[command(name = "maskverify", version, about = "Functional-equivalence checking of masked GF(2^n) programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every procedure's masked block against its original.
    Verify {
        file: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
        /// Write an SMT-LIB script for each undecided procedure here.
        #[arg(long, value_name = "DIR")]
        emit_smt: Option<PathBuf>,
        /// Worker threads for independent procedures.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compute the affine constant of every affine symbol.
    Affine {
        file: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Print a generated gadget at masking order D.
    Gen {
        /// One of isw-mult, refresh-masks, refreshm, aes-sbox-inverse.
        kind: String,
        #[arg(long, short = 'd', value_name = "D")]
        order: u32,
        #[arg(long, short, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        field: FieldOpts,
    },
    /// Run the shipped examples and mutants.
    Selftest,
}

#[derive(Args)]
struct FieldOpts {
    /// Field width, used when the file has no field directive.
    #[arg(long, default_value_t = 8)]
    n: u32,
    /// Reduction polynomial, hex or decimal.
    #[arg(long, default_value = "0x11B")]
    poly: String,
}

impl FieldOpts {
    fn field(&self) -> Result<FieldCtx, String> {
        let poly = parse_poly(&self.poly).ok_or_else(|| format!("bad polynomial `{}`", self.poly))?;
        FieldCtx::new(self.n, poly).map_err(|e| e.to_string())
    }
}

#[derive(Args)]
struct RunOpts {
    #[command(flatten)]
    field: FieldOpts,
    /// Random trials before the exhaustive oracle.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: u32,
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    step_budget: u64,
    /// Largest number of assignments the exhaustive oracle enumerates.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    oracle_budget: u64,
    #[arg(long, default_value_t = DEFAULT_SEED, value_parser = parse_seed)]
    seed: u64,
    #[arg(long)]
    json: bool,
    /// Show rule applications and inlining steps.
    #[arg(long)]
    trace: bool,
    /// Include wall-clock times.
    #[arg(long)]
    timings: bool,
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|e| e.to_string())
}

impl RunOpts {
    fn config(&self) -> Result<RunConfig, String> {
        Ok(RunConfig {
            field: self.field.field()?,
            trials: self.trials,
            step_budget: self.step_budget,
            oracle_budget: self.oracle_budget,
            seed: self.seed,
            emit_smt: None,
            trace: self.trace,
            timings: self.timings,
            jobs: 1,
        })
    }
}

fn read(file: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))
}

fn run(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Verify { file, opts, emit_smt, jobs } => {
            let mut config = opts.config()?;
            config.emit_smt = emit_smt;
            config.jobs = jobs.max(1);
            let src = read(&file)?;
            let name = file.display().to_string();
            let run = run_verify(&src, &config).map_err(|e| format!("{name}: {e}"))?;
            if opts.json {
                print!("{}", verify_report_json(&run, &name, &config));
            } else {
                print!("{}", verify_report_text(&run, &name, &config));
            }
            Ok(run.exit_code())
        }
        Command::Affine { file, opts } => {
            let config = opts.config()?;
            let src = read(&file)?;
            let name = file.display().to_string();
            let run = run_affine(&src, &config).map_err(|e| format!("{name}: {e}"))?;
            if opts.json {
                print!("{}", affine_report_json(&run, &name, &config));
            } else {
                print!("{}", affine_report_text(&run, &name, &config));
            }
            Ok(run.exit_code())
        }
        Command::Gen { kind, order, out, field } => {
            let src = GadgetRegistry::default()
                .generate(&kind, order, &field.field()?)
                .map_err(|e| e.to_string())?;
            match out {
                Some(path) => std::fs::write(&path, src).map_err(|e| format!("{}: {e}", path.display()))?,
                None => print!("{src}"),
            }
            Ok(0)
        }
        Command::Selftest => {
            let checks = selftest(&RunConfig::default());
            print!("{}", selftest_text(&checks));
            Ok(if checks.iter().all(|c| c.passed) { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT_ERROR as u8)
        }
    }
}
