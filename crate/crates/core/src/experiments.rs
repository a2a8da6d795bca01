//! Convergence harness: streams the inductive mean of a scheduled family,
//! records `δ²(Sₙ, G)` at every step and checks `δ²(S_{km}, G) ≤ L/k` at
//! block boundaries.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::HadamardPoint;
use crate::matrix_set::MatrixSet;
use crate::means::{self, InductiveState, KarcherConfig, KarcherDiagnostics, MeanConstants};
use crate::sequences::{Schedule, ScheduleSpec};
use crate::spd::{SpdMatrix, Whitener};

pub const CSV_HEADER: [&str; 5] = ["n", "k", "err_sq", "bound", "slack"];

fn default_schedule() -> ScheduleSpec {
    ScheduleSpec {
        kind: "block_perm".into(),
        m: None,
        k: None,
        seed: None,
        permutations: None,
    }
}

fn default_n_max() -> u64 {
    10_000
}

fn default_condition_cap() -> f64 {
    1e3
}

fn default_bound_tol() -> f64 {
    1e-8
}

fn default_grad_tol() -> f64 {
    1e-12
}

fn default_max_iters() -> usize {
    10_000
}

fn default_true() -> bool {
    true
}

/// One convergence run. Mirrors the JSON config file accepted by the CLI;
/// every field but `dim`, `m` and `seed` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub m: usize,
    pub seed: u64,
    /// `m` may be omitted; a missing schedule seed falls back to `seed`.
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleSpec,
    #[serde(default = "default_n_max")]
    pub n_max: u64,
    #[serde(default = "default_condition_cap")]
    pub condition_cap: f64,
    /// Additive tolerance on `err_sq ≤ L/k`.
    #[serde(default = "default_bound_tol")]
    pub bound_tol: f64,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Also check `δ(S_{km}, Sₙ) ≤ d/(km+d) · Δ` between boundaries.
    #[serde(default = "default_true")]
    pub check_off_boundary: bool,
    /// Load the family from a matrix-set file instead of generating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_set: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dim: usize, m: usize, seed: u64, schedule: ScheduleSpec) -> Self {
        ExperimentConfig {
            dim,
            m,
            seed,
            schedule,
            n_max: default_n_max(),
            condition_cap: default_condition_cap(),
            bound_tol: default_bound_tol(),
            grad_tol: default_grad_tol(),
            max_iters: default_max_iters(),
            check_off_boundary: true,
            matrix_set: None,
            output: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.dim == 0 || self.m == 0 {
            return bad("dim and m must be positive");
        }
        if self.n_max < self.m as u64 {
            return bad("n_max must be at least m");
        }
        if !(self.bound_tol > 0.0 && self.grad_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.condition_cap >= 1.0) {
            return bad("condition_cap must be at least 1");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        Ok(())
    }

    pub fn build_schedule(&self) -> Result<Schedule> {
        let mut spec = self.schedule.clone().with_m(self.m)?;
        spec.seed.get_or_insert(self.seed);
        Schedule::try_from(spec)
    }

    pub fn build_set(&self) -> Result<MatrixSet> {
        match &self.matrix_set {
            Some(path) => {
                let set = MatrixSet::load(path)?;
                if set.len() != self.m || set.dim() != self.dim {
                    return Err(Error::InvalidArgument(format!(
                        "matrix set has m = {}, dim = {}; config says m = {}, dim = {}",
                        set.len(),
                        set.dim(),
                        self.m,
                        self.dim
                    )));
                }
                Ok(set)
            }
            None => MatrixSet::random(self.dim, self.m, self.seed, self.condition_cap),
        }
    }
}

/// One row of a convergence table. `n = k·b + d` with `b` the schedule's
/// block length and `0 ≤ d < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    pub n: u64,
    pub k: u64,
    pub err_sq: f64,
    /// `L / k`, present at block boundaries (`d = 0`, `k ≥ 1`).
    pub bound: Option<f64>,
    /// `bound − err_sq`.
    pub slack: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub checked: usize,
    /// `max(err_sq − L/k)` over the boundaries; `-inf` when none were checked.
    pub max_violation: f64,
    pub worst_k: Option<u64>,
    pub min_slack: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffBoundaryReport {
    pub checked: usize,
    /// `max(δ(S_{kb}, Sₙ) − d/(kb+d) · Δ)`.
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub set: MatrixSet,
    pub schedule: Schedule,
    pub mean: SpdMatrix,
    pub diagnostics: KarcherDiagnostics,
    pub constants: MeanConstants,
    pub records: Vec<ConvergenceRecord>,
    pub block_report: Option<BoundReport>,
    pub off_boundary: Option<OffBoundaryReport>,
}

impl ConvergenceRun {
    /// All applicable bound checks passed.
    pub fn passed(&self) -> bool {
        self.block_report.is_none_or(|r| r.passed) && self.off_boundary.is_none_or(|r| r.passed)
    }
}

/// Streams `Sₙ` for `n = 1..=n_max` and records `err_sq(Sₙ)`.
///
/// With `constants`, block boundaries carry the bound `L/k`; otherwise
/// bound and slack are left empty.
pub fn trace_convergence<P, F>(
    points: &[P],
    schedule: &Schedule,
    n_max: u64,
    constants: Option<&MeanConstants>,
    mut err_sq: F,
) -> Result<Vec<ConvergenceRecord>>
where
    P: HadamardPoint,
    F: FnMut(&P) -> Result<f64>,
{
    let block = schedule.block_len() as u64;
    let mut state = InductiveState::new();
    let mut records = Vec::with_capacity(n_max as usize);
    for p in schedule.materialize(points, n_max as usize)? {
        state.push(p)?;
        let n = state.n();
        let k = n / block;
        let e = err_sq(state.current().expect("state advanced"))?;
        let bound = match constants {
            Some(c) if n % block == 0 && k >= 1 => Some(c.rate_constant / k as f64),
            _ => None,
        };
        records.push(ConvergenceRecord {
            n,
            k,
            err_sq: e,
            bound,
            slack: bound.map(|b| b - e),
        });
    }
    Ok(records)
}

/// Largest `δ(S_{kb}, Sₙ) − d/(kb+d) · Δ` over `kb < n < (k+1)b`, `k ≥ 1`.
pub fn off_boundary_violation<P: HadamardPoint>(
    points: &[P],
    schedule: &Schedule,
    n_max: u64,
    delta_max: f64,
    tol: f64,
) -> Result<OffBoundaryReport> {
    let block = schedule.block_len() as u64;
    let mut state = InductiveState::new();
    let mut anchor: Option<P> = None;
    let mut max_violation = f64::NEG_INFINITY;
    let mut checked = 0;
    for p in schedule.materialize(points, n_max as usize)? {
        state.push(p)?;
        let n = state.n();
        let current = state.current().expect("state advanced");
        let d = n % block;
        if d == 0 {
            anchor = Some(current.clone());
        } else if let Some(a) = &anchor {
            let allowed = d as f64 / n as f64 * delta_max;
            max_violation = max_violation.max(a.distance_to(current)? - allowed);
            checked += 1;
        }
    }
    Ok(OffBoundaryReport {
        checked,
        max_violation,
        tolerance: tol,
        passed: max_violation <= tol,
    })
}

/// Checks `err_sq ≤ L/k + tol` at every block boundary of `records`.
/// `block_len` is the schedule's block length.
pub fn check_block_bound(
    records: &[ConvergenceRecord],
    constants: &MeanConstants,
    block_len: u64,
    tol: f64,
) -> BoundReport {
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst_k = None;
    let mut min_slack: Option<f64> = None;
    let mut checked = 0;
    for r in records.iter().filter(|r| r.n % block_len == 0 && r.n >= block_len) {
        let k = r.n / block_len;
        let bound = constants.rate_constant / k as f64;
        let violation = r.err_sq - bound;
        checked += 1;
        if violation > max_violation {
            max_violation = violation;
            worst_k = Some(k);
        }
        min_slack = Some(min_slack.map_or(-violation, |s| s.min(-violation)));
    }
    BoundReport {
        checked,
        max_violation,
        worst_k,
        min_slack,
        tolerance: tol,
        passed: max_violation <= tol,
    }
}

/// Generates (or loads) the family, computes `G` and the constants, and
/// traces the inductive mean up to `n_max`. A solver that stops short of
/// `grad_tol` does not abort the run: its best iterate stands in for `G` and
/// `diagnostics.converged` is false.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceRun> {
    cfg.validate()?;
    let set = cfg.build_set()?;
    let schedule = cfg.build_schedule()?;
    let karcher_cfg = KarcherConfig {
        grad_tol: cfg.grad_tol,
        max_iters: cfg.max_iters,
        ..KarcherConfig::default()
    };
    let outcome = match means::karcher_mean(&set, &karcher_cfg) {
        Err(Error::NoConvergence(out)) => *out,
        other => other?,
    };
    let constants = means::constants(&set, &outcome.mean)?;
    let whitener = Whitener::new(&outcome.mean)?;
    let bounded = schedule.has_block_property();
    let records = trace_convergence(
        &set,
        &schedule,
        cfg.n_max,
        bounded.then_some(&constants),
        |s| whitener.distance_to(s).map(|d| d * d),
    )?;
    let block_len = schedule.block_len() as u64;
    let block_report = bounded.then(|| check_block_bound(&records, &constants, block_len, cfg.bound_tol));
    let off_boundary = if bounded && cfg.check_off_boundary {
        Some(off_boundary_violation(
            &set,
            &schedule,
            cfg.n_max,
            constants.delta_max,
            cfg.bound_tol,
        )?)
    } else {
        None
    };
    Ok(ConvergenceRun {
        set,
        schedule,
        mean: outcome.mean,
        diagnostics: outcome.diagnostics,
        constants,
        records,
        block_report,
        off_boundary,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the convergence table as CSV (LF endings, shortest round-trip floats).
pub fn write_csv<W: Write>(records: &[ConvergenceRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            r.k.to_string(),
            r.err_sq.to_string(),
            fmt_opt(r.bound),
            fmt_opt(r.slack),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[ConvergenceRecord], path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_csv(records, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ConvergenceRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::Parse("unexpected convergence CSV header".into()));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
    };
    let int = |s: &str| -> Result<u64> {
        s.parse::<u64>()
            .map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
    };
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    };
    r.records()
        .map(|row| {
            let row = row?;
            if row.len() != CSV_HEADER.len() {
                return Err(Error::Parse(format!("expected 5 fields, found {}", row.len())));
            }
            Ok(ConvergenceRecord {
                n: int(&row[0])?,
                k: int(&row[1])?,
                err_sq: num(&row[2])?,
                bound: opt(&row[3])?,
                slack: opt(&row[4])?,
            })
        })
        .collect()
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<ConvergenceRecord>> {
    read_csv(fs::File::open(path)?)
}
