//! `karcher` command-line tool.
//!
//! Machine-readable JSON goes to stdout, human-readable tables to stderr.
//! Exit codes: 0 success, 1 input error, 2 non-convergence, 3 verification
//! failure.

use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use karcher::experiments::{self, ExperimentConfig};
use karcher::means::{self, KarcherConfig, KarcherOutcome};
use karcher::sequences::{Schedule, ScheduleSpec};
use karcher::verify::{self, VerifyConfig};
use karcher::{Error, MatrixSet, SpdMatrix};
use serde_json::{json, Value};

const EXIT_INPUT: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "karcher", version, about = "Geometric means of SPD matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Karcher mean of a matrix-set file (`-` reads stdin).
    Mean {
        set: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        grad_tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
    },
    /// Inductive mean S_N of a scheduled stream over a matrix set.
    Approx {
        set: PathBuf,
        /// JSON schedule (`{"kind":"block_perm","seed":7}`) or a bare kind name.
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        n: usize,
    },
    /// Convergence experiment from a JSON config; writes the CSV table.
    Converge {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampled check of the metric inequalities.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Random matrix-set file.
    Gen {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e3)]
        cond: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure carrying its exit code; the message goes to stderr.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoConvergence(_) => EXIT_NO_CONVERGENCE,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

type CmdResult = Result<u8, Failure>;

fn load_set(path: &PathBuf) -> Result<MatrixSet, Failure> {
    let text = if path.as_os_str() == "-" {
        let mut buf = String::new();
        io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| input_error(format!("reading stdin: {e}")))?;
        buf
    } else {
        fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?
    };
    MatrixSet::from_json_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn matrix_json(m: &SpdMatrix) -> Value {
    json!(m.to_row_major())
}

fn emit(value: &Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| input_error(e.to_string()))?;
    writeln!(out).map_err(|e| input_error(e.to_string()))
}

fn cmd_mean(set: PathBuf, grad_tol: f64, max_iters: usize) -> CmdResult {
    let set = load_set(&set)?;
    let cfg = KarcherConfig {
        grad_tol,
        max_iters,
        ..KarcherConfig::default()
    };
    let (outcome, code) = match means::karcher_mean(&set, &cfg) {
        Ok(out) => (out, 0),
        Err(Error::NoConvergence(out)) => (*out, EXIT_NO_CONVERGENCE),
        Err(e) => return Err(e.into()),
    };
    let KarcherOutcome { mean, diagnostics } = outcome;
    emit(&json!({
        "dim": set.dim(),
        "m": set.len(),
        "mean": matrix_json(&mean),
        "diagnostics": diagnostics,
    }))?;
    if code != 0 {
        eprintln!(
            "karcher: no convergence after {} iterations (gradient norm {:e})",
            diagnostics.iterations, diagnostics.gradient_norm
        );
    }
    Ok(code)
}

fn parse_schedule(text: &str, m: usize) -> Result<Schedule, Failure> {
    let spec: ScheduleSpec = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| input_error(format!("--schedule: {e}")))?
    } else {
        ScheduleSpec {
            kind: text.to_string(),
            m: None,
            k: None,
            seed: None,
            permutations: None,
        }
    };
    let spec = spec.with_m(m).map_err(|e| input_error(format!("--schedule: {e}")))?;
    Schedule::try_from(spec).map_err(|e| input_error(format!("--schedule: {e}")))
}

fn cmd_approx(set: PathBuf, schedule: String, n: usize) -> CmdResult {
    if n == 0 {
        return Err(input_error("--n must be at least 1"));
    }
    let set = load_set(&set)?;
    let schedule = parse_schedule(&schedule, set.len())?;
    let s = means::inductive_mean(&set, &schedule, n)?;
    emit(&json!({
        "dim": set.dim(),
        "n": n,
        "schedule": schedule,
        "mean": matrix_json(&s),
    }))?;
    Ok(0)
}

fn cmd_converge(config: PathBuf, out: Option<PathBuf>) -> CmdResult {
    let cfg = ExperimentConfig::load(&config)
        .map_err(|e| input_error(format!("{}: {e}", config.display())))?;
    let out = out.or_else(|| cfg.output.clone());
    let run = experiments::run_convergence(&cfg)?;
    if let Some(path) = &out {
        experiments::emit_csv(&run.records, path)
            .map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    }
    let last = run.records.last().map(|r| r.err_sq);
    emit(&json!({
        "seed": cfg.seed,
        "dim": cfg.dim,
        "m": cfg.m,
        "n_max": cfg.n_max,
        "schedule": run.schedule,
        "constants": run.constants,
        "solver": run.diagnostics,
        "final_err_sq": last,
        "block_bound": run.block_report,
        "off_boundary": run.off_boundary,
        "csv": out,
        "passed": run.passed(),
    }))?;
    eprintln!("seed {}  dim {}  m {}  n_max {}", cfg.seed, cfg.dim, cfg.m, cfg.n_max);
    eprintln!(
        "Delta = {:.6e}  alpha = {:.6e}  L = {:.6e}",
        run.constants.delta_max, run.constants.alpha, run.constants.rate_constant
    );
    if let Some(r) = &run.block_report {
        eprintln!(
            "block bound   {:>8} checks  max violation {:>12.4e}  {}",
            r.checked,
            r.max_violation,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    if let Some(r) = &run.off_boundary {
        eprintln!(
            "off-boundary  {:>8} checks  max violation {:>12.4e}  {}",
            r.checked,
            r.max_violation,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    if !run.diagnostics.converged {
        eprintln!(
            "karcher: mean solver stopped at gradient norm {:e}; bounds are against its best iterate",
            run.diagnostics.gradient_norm
        );
        return Ok(EXIT_NO_CONVERGENCE);
    }
    Ok(if run.passed() { 0 } else { EXIT_VERIFY })
}

fn cmd_verify(seed: u64, samples: usize, dim: usize, tol: f64) -> CmdResult {
    if dim == 0 || samples == 0 {
        return Err(input_error("--dim and --samples must be positive"));
    }
    if !(tol >= 0.0) {
        return Err(input_error("--tol must be non-negative"));
    }
    let cfg = VerifyConfig {
        seed,
        samples,
        dim,
        tol,
        ..VerifyConfig::default()
    };
    let report = verify::run_suite(&cfg);
    eprintln!("seed {seed}  dim {dim}  samples {samples}  tol {tol:e}");
    eprintln!("{:<30} {:>8} {:>14}  result", "property", "samples", "max violation");
    for p in &report.properties {
        eprintln!(
            "{:<30} {:>8} {:>14.4e}  {}",
            p.name,
            p.samples,
            p.max_violation,
            if p.passed { "PASS" } else { "FAIL" }
        );
    }
    emit(&serde_json::to_value(&report).map_err(|e| input_error(e.to_string()))?)?;
    Ok(if report.passed { 0 } else { EXIT_VERIFY })
}

fn cmd_gen(dim: usize, m: usize, seed: u64, cond: f64, out: Option<PathBuf>) -> CmdResult {
    let set = MatrixSet::random(dim, m, seed, cond)?;
    match out {
        Some(path) => {
            set.save(&path)
                .map_err(|e| input_error(format!("{}: {e}", path.display())))?;
            eprintln!("seed {seed}: wrote {m} matrices of dim {dim} to {}", path.display());
        }
        None => println!("{}", set.to_json_string()),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Mean {
            set,
            grad_tol,
            max_iters,
        } => cmd_mean(set, grad_tol, max_iters),
        Command::Approx { set, schedule, n } => cmd_approx(set, schedule, n),
        Command::Converge { config, out } => cmd_converge(config, out),
        Command::Verify {
            seed,
            samples,
            dim,
            tol,
        } => cmd_verify(seed, samples, dim, tol),
        Command::Gen {
            dim,
            m,
            seed,
            cond,
            out,
        } => cmd_gen(dim, m, seed, cond, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("karcher: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
