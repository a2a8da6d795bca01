//! Inductive means, the Karcher (least-squares) mean, and the constants
//! that govern the inductive-mean convergence rate.
//!
//! The inductive mean of a stream `A₁, A₂, …` is
//!
//! ```text
//! S₁ = A₁,    Sₙ = Sₙ₋₁ #_{1/n} Aₙ
//! ```
//!
//! and the Karcher mean `G` minimizes `Σⱼ δ²(Aⱼ, C)`. For block schedules
//! `δ²(S_{km}, G) ≤ L / k` with `L = α + 3Δ²`, where `Δ` is the largest
//! pairwise distance of the family and `α = (1/m) Σ δ²(G, Aᵢ)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::HadamardPoint;
use crate::sequences::Schedule;
use crate::spd::{self, symmetrize, SpdMatrix};

/// Running state `(n, Sₙ)` of the inductive-mean recursion.
#[derive(Debug, Clone)]
pub struct InductiveState<P> {
    n: u64,
    current: Option<P>,
}

impl<P> Default for InductiveState<P> {
    fn default() -> Self {
        InductiveState { n: 0, current: None }
    }
}

impl<P: HadamardPoint> InductiveState<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `Sₙ`, or `None` before the first point.
    pub fn current(&self) -> Option<&P> {
        self.current.as_ref()
    }

    pub fn into_current(self) -> Option<P> {
        self.current
    }

    /// Consumes the next point: `Sₙ₊₁ = Sₙ #_{1/(n+1)} A_{n+1}`.
    pub fn push(&mut self, next: &P) -> Result<()> {
        let updated = match &self.current {
            None => next.clone(),
            Some(s) => {
                if s.dim() != next.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: s.dim(),
                        found: next.dim(),
                    });
                }
                s.geodesic_to(next, 1.0 / (self.n + 1) as f64)?
            }
        };
        self.current = Some(updated);
        self.n += 1;
        Ok(())
    }
}

pub fn inductive_step<P: HadamardPoint>(mut state: InductiveState<P>, next: &P) -> Result<InductiveState<P>> {
    state.push(next)?;
    Ok(state)
}

/// `Sₙ` of the stream that `schedule` draws from `points`.
pub fn inductive_mean<P: HadamardPoint>(points: &[P], schedule: &Schedule, n: usize) -> Result<P> {
    if n == 0 {
        return Err(Error::InvalidArgument("inductive mean needs n >= 1".into()));
    }
    let mut state = InductiveState::new();
    for p in schedule.materialize(points, n)? {
        state.push(p)?;
    }
    Ok(state.into_current().expect("n >= 1 points consumed"))
}

/// `Σⱼ δ²(Aⱼ, C)`.
pub fn objective<P: HadamardPoint>(c: &P, points: &[P]) -> Result<f64> {
    points
        .iter()
        .map(|a| a.distance_to(c).map(|d| d * d))
        .sum()
}

/// Variance-inequality slack
/// `(1/m) Σⱼ (δ²(Z, Aⱼ) − δ²(G, Aⱼ)) − δ²(Z, G)`; nonnegative when `G` is
/// the barycenter.
pub fn variance_check<P: HadamardPoint>(z: &P, points: &[P], g: &P) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let m = points.len() as f64;
    let mut acc = 0.0;
    for a in points {
        acc += z.distance_to(a)?.powi(2) - g.distance_to(a)?.powi(2);
    }
    Ok(acc / m - z.distance_to(g)?.powi(2))
}

/// `Δ`, `α` and `L = α + 3Δ²` for a family and its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanConstants {
    pub delta_max: f64,
    pub alpha: f64,
    #[serde(rename = "L")]
    pub rate_constant: f64,
}

pub fn constants<P: HadamardPoint>(points: &[P], g: &P) -> Result<MeanConstants> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut delta_max = 0.0_f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            delta_max = delta_max.max(a.distance_to(b)?);
        }
    }
    let alpha = objective(g, points)? / points.len() as f64;
    Ok(MeanConstants {
        delta_max,
        alpha,
        rate_constant: alpha + 3.0 * delta_max * delta_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    /// Arithmetic mean rescaled to the determinant of the Karcher mean,
    /// `(Π det Aᵢ)^{1/m}`.
    ArithmeticLike,
    FirstPoint,
    /// Cyclic inductive mean after the given number of steps.
    InductiveWarmStart(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KarcherConfig {
    pub max_iters: usize,
    /// Stop once `‖(1/m) Σ log(G^{-1/2} Aᵢ G^{-1/2})‖_F ≤ grad_tol`.
    pub grad_tol: f64,
    /// Initial (and largest) step along the mean log direction, in `(0, 1]`.
    pub step: f64,
    pub initializer: Initializer,
}

impl Default for KarcherConfig {
    fn default() -> Self {
        KarcherConfig {
            max_iters: 10_000,
            grad_tol: 1e-12,
            step: 1.0,
            initializer: Initializer::ArithmeticLike,
        }
    }
}

impl KarcherConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument("grad_tol must be positive".into()));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::InvalidArgument("step must lie in (0, 1]".into()));
        }
        if self.initializer == Initializer::InductiveWarmStart(0) {
            return Err(Error::InvalidArgument("warm start needs at least one step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KarcherDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    /// `Σⱼ δ²(Aⱼ, G)` at the returned iterate.
    pub objective: f64,
    pub converged: bool,
    /// Step length in use when the iteration stopped.
    pub final_step: f64,
}

/// A Karcher iterate and how it was reached.
#[derive(Debug, Clone)]
pub struct KarcherOutcome {
    pub mean: SpdMatrix,
    pub diagnostics: KarcherDiagnostics,
}

/// Whitened logs `log(L⁻¹ Aᵢ L⁻ᵀ)` at `G = L Lᵀ` with their mean and
/// objective value. `L⁻¹ Aᵢ L⁻ᵀ` is orthogonally similar to
/// `G^{-1/2} Aᵢ G^{-1/2}`, so norms and the update below match the
/// symmetric-square-root form exactly.
struct Linearization {
    factor: DMatrix<f64>,
    mean_log: DMatrix<f64>,
    gradient_norm: f64,
    objective: f64,
}

fn linearize(g: &SpdMatrix, points: &[SpdMatrix]) -> Result<Linearization> {
    let factor = g
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(Error::EigenFailure)?
        .unpack();
    let n = g.dim();
    let mut mean_log = DMatrix::zeros(n, n);
    let mut objective = 0.0;
    for a in points {
        // L⁻¹ A L⁻ᵀ via two triangular solves
        let left = factor
            .solve_lower_triangular(a.as_matrix())
            .ok_or(Error::EigenFailure)?;
        let whitened = factor
            .solve_lower_triangular(&left.transpose())
            .ok_or(Error::EigenFailure)?;
        let eig = spd::symmetric_eigen(&symmetrize(&whitened))?;
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::EigenFailure);
        }
        objective += eig.eigenvalues.iter().map(|l| l.ln().powi(2)).sum::<f64>();
        mean_log += eig.map(f64::ln);
    }
    mean_log /= points.len() as f64;
    let gradient_norm = mean_log.norm();
    Ok(Linearization {
        factor,
        mean_log,
        gradient_norm,
        objective,
    })
}

fn initial_point(points: &[SpdMatrix], init: Initializer) -> Result<SpdMatrix> {
    match init {
        Initializer::FirstPoint => Ok(points[0].clone()),
        Initializer::InductiveWarmStart(steps) => {
            inductive_mean(points, &Schedule::cyclic(points.len())?, steps)
        }
        Initializer::ArithmeticLike => {
            let n = points[0].dim();
            let m = points.len() as f64;
            let mut sum = DMatrix::zeros(n, n);
            let mut log_det = 0.0;
            for a in points {
                sum += a.as_matrix();
                log_det += a.eig()?.eigenvalues.iter().map(|l| l.ln()).sum::<f64>();
            }
            let mean = SpdMatrix::from_computed(sum / m)?;
            let mean_log_det: f64 = mean.eig()?.eigenvalues.iter().map(|l| l.ln()).sum();
            let scale = ((log_det / m - mean_log_det) / n as f64).exp();
            SpdMatrix::from_computed(mean.into_matrix() * scale)
        }
    }
}

/// Karcher mean by the fixed-point iteration
/// `G ← G^{1/2} exp(s · (1/m) Σ log(G^{-1/2} Aᵢ G^{-1/2})) G^{1/2}`.
///
/// The step `s` starts at `cfg.step`; a trial that raises the objective
/// (or, once the objective change is at rounding level, fails to reduce
/// the gradient) is retried with half the step. Accepted steps grow back
/// toward `cfg.step`.
///
/// On exhaustion returns [`Error::NoConvergence`] carrying the best iterate.
pub fn karcher_mean(points: &[SpdMatrix], cfg: &KarcherConfig) -> Result<KarcherOutcome> {
    cfg.validate()?;
    let first = points.first().ok_or(Error::EmptySet)?;
    if let Some((_, bad)) = points.iter().enumerate().find(|(_, p)| p.dim() != first.dim()) {
        return Err(Error::DimensionMismatch {
            expected: first.dim(),
            found: bad.dim(),
        });
    }

    let mut g = initial_point(points, cfg.initializer)?;
    let mut lin = linearize(&g, points)?;
    let mut step = cfg.step;
    let mut iterations = 0;

    while lin.gradient_norm > cfg.grad_tol && iterations < cfg.max_iters {
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let inner = spd::matrix_exp(&(&lin.mean_log * step))?;
            let trial = SpdMatrix::from_computed(&lin.factor * inner.as_matrix() * lin.factor.transpose())?;
            let next = linearize(&trial, points)?;
            let slack = 1e-13 * (1.0 + lin.objective);
            let better = next.objective < lin.objective - slack
                || (next.objective <= lin.objective + slack && next.gradient_norm < lin.gradient_norm);
            if better {
                g = trial;
                lin = next;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent at any step length: rounding floor reached
            break;
        }
        step = (step * 1.5).min(cfg.step);
    }

    let diagnostics = KarcherDiagnostics {
        iterations,
        gradient_norm: lin.gradient_norm,
        objective: lin.objective,
        converged: lin.gradient_norm <= cfg.grad_tol,
        final_step: step,
    };
    let outcome = KarcherOutcome { mean: g, diagnostics };
    if diagnostics.converged {
        Ok(outcome)
    } else {
        Err(Error::NoConvergence(Box::new(outcome)))
    }
}

/// Riemannian gradient norm `‖(1/m) Σ log(G^{-1/2} Aᵢ G^{-1/2})‖_F`, computed
/// with the symmetric square root.
pub fn gradient_norm(g: &SpdMatrix, points: &[SpdMatrix]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let whitener = spd::Whitener::new(g)?;
    let n = g.dim();
    let mut acc = DMatrix::zeros(n, n);
    for a in points {
        acc += spd::symmetric_eigen(&whitener.whiten(a)?)?.map(f64::ln);
    }
    Ok((acc / points.len() as f64).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EuclideanPoint;
    use crate::matrix_set::MatrixSet;
    use crate::sequences::ScheduleKind;
    use std::f64::consts::E;

    fn scalar(x: f64) -> SpdMatrix {
        SpdMatrix::from_diagonal(&[x]).unwrap()
    }

    #[test]
    fn constant_stream_stays_put() {
        let a = spd::random_spd(3, 4, 100.0);
        let mut st = InductiveState::new();
        for _ in 0..20 {
            st.push(&a).unwrap();
            assert!(st.current().unwrap().frobenius_distance(&a) < 1e-11);
        }
        assert_eq!(st.n(), 20);
    }

    #[test]
    fn euclidean_inductive_mean_is_running_average() {
        let pts: Vec<EuclideanPoint> = (0..7)
            .map(|i| EuclideanPoint::new(vec![i as f64, (i * i) as f64 - 3.0]).unwrap())
            .collect();
        let mut st = InductiveState::new();
        let mut sum = [0.0, 0.0];
        for (i, p) in pts.iter().enumerate() {
            st = inductive_step(st, p).unwrap();
            sum[0] += p.coords()[0];
            sum[1] += p.coords()[1];
            let c = st.current().unwrap().coords();
            let k = (i + 1) as f64;
            assert!((c[0] - sum[0] / k).abs() < 1e-12 && (c[1] - sum[1] / k).abs() < 1e-12);
        }
    }

    #[test]
    fn two_scalar_inductive_midpoint() {
        let pts = [scalar(1.0), scalar(E * E)];
        let s2 = inductive_mean(&pts, &Schedule::cyclic(2).unwrap(), 2).unwrap();
        assert!((s2.scalar().unwrap() - E).abs() < 1e-14);
        let s1 = inductive_mean(&pts, &Schedule::cyclic(2).unwrap(), 1).unwrap();
        assert_eq!(s1, pts[0]);
        assert!(inductive_mean(&pts, &Schedule::cyclic(2).unwrap(), 0).is_err());
    }

    #[test]
    fn push_rejects_dimension_change() {
        let mut st = InductiveState::new();
        st.push(&SpdMatrix::identity(2)).unwrap();
        assert!(matches!(
            st.push(&SpdMatrix::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diagonal_inductive_mean_is_entrywise() {
        let diags = [[1.0, 5.0, 0.3], [2.0, 0.1, 7.0], [9.0, 1.0, 1.0]];
        let pts: Vec<SpdMatrix> = diags.iter().map(|d| SpdMatrix::from_diagonal(d).unwrap()).collect();
        let sched = Schedule::new(ScheduleKind::BlockPermutation, 3, 2).unwrap();
        let n = 50;
        let s = inductive_mean(&pts, &sched, n).unwrap();
        // scalar oracle: running average of logs per entry
        let mut logs = [0.0; 3];
        for (i, idx) in sched.iter().take(n).enumerate() {
            for e in 0..3 {
                logs[e] += (diags[idx][e].ln() - logs[e]) / (i + 1) as f64;
            }
        }
        for e in 0..3 {
            assert!((s.as_matrix()[(e, e)] - logs[e].exp()).abs() < 1e-12);
        }
        assert!(s.as_matrix()[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn karcher_of_equal_points() {
        let a = spd::random_spd(3, 8, 1e3);
        let out = karcher_mean(&[a.clone(), a.clone(), a.clone()], &KarcherConfig::default()).unwrap();
        assert!(out.diagnostics.iterations <= 1);
        assert!(spd::distance(&out.mean, &a).unwrap() < 1e-12);
    }

    #[test]
    fn karcher_of_two_is_midpoint() {
        for seed in 0..5 {
            let a = spd::random_spd(4, seed, 1e3);
            let b = spd::random_spd(4, seed + 100, 1e3);
            let out = karcher_mean(&[a.clone(), b.clone()], &KarcherConfig::default()).unwrap();
            let mid = spd::geodesic(&a, &b, 0.5).unwrap();
            assert!(spd::distance(&out.mean, &mid).unwrap() < 1e-9);
        }
    }

    #[test]
    fn karcher_of_diagonals_is_log_mean() {
        let diags = [[1.0, 3.0], [4.0, 0.5], [0.2, 2.0], [10.0, 1.0]];
        let pts: Vec<SpdMatrix> = diags.iter().map(|d| SpdMatrix::from_diagonal(d).unwrap()).collect();
        let out = karcher_mean(&pts, &KarcherConfig::default()).unwrap();
        for e in 0..2 {
            let oracle = (diags.iter().map(|d| d[e].ln()).sum::<f64>() / 4.0).exp();
            assert!((out.mean.as_matrix()[(e, e)] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn karcher_gradient_and_initializers() {
        let set = MatrixSet::random(3, 5, 21, 1e3).unwrap();
        let mut first = None;
        for init in [
            Initializer::ArithmeticLike,
            Initializer::FirstPoint,
            Initializer::InductiveWarmStart(50),
        ] {
            let cfg = KarcherConfig {
                initializer: init,
                ..KarcherConfig::default()
            };
            let out = karcher_mean(&set, &cfg).unwrap();
            assert!(out.diagnostics.gradient_norm <= 1e-12);
            assert!(gradient_norm(&out.mean, &set).unwrap() <= 1e-11);
            match &first {
                None => first = Some(out.mean),
                Some(g) => assert!(spd::distance(g, &out.mean).unwrap() <= 1e-8),
            }
        }
    }

    #[test]
    fn karcher_reports_no_convergence() {
        let set = MatrixSet::random(3, 4, 2, 1e3).unwrap();
        let cfg = KarcherConfig {
            max_iters: 1,
            ..KarcherConfig::default()
        };
        match karcher_mean(&set, &cfg) {
            Err(Error::NoConvergence(out)) => {
                assert_eq!(out.diagnostics.iterations, 1);
                assert!(!out.diagnostics.converged);
                assert!(out.diagnostics.objective.is_finite());
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn karcher_config_validation() {
        let pts = [SpdMatrix::identity(2)];
        for cfg in [
            KarcherConfig { max_iters: 0, ..Default::default() },
            KarcherConfig { grad_tol: 0.0, ..Default::default() },
            KarcherConfig { step: 1.5, ..Default::default() },
            KarcherConfig { step: 0.0, ..Default::default() },
        ] {
            assert!(matches!(karcher_mean(&pts, &cfg), Err(Error::InvalidArgument(_))));
        }
        assert!(matches!(karcher_mean(&[], &KarcherConfig::default()), Err(Error::EmptySet)));
    }

    #[test]
    fn objective_examples() {
        let a = spd::random_spd(3, 1, 1e2);
        let b = spd::random_spd(3, 2, 1e2);
        assert!(objective(&a, std::slice::from_ref(&a)).unwrap() < 1e-20);
        let mid = spd::geodesic(&a, &b, 0.5).unwrap();
        let d = spd::distance(&a, &b).unwrap();
        let f = objective(&mid, &[a.clone(), b.clone()]).unwrap();
        assert!((f - 0.5 * d * d).abs() < 1e-10 * (1.0 + d * d));
    }

    #[test]
    fn objective_is_minimal_at_karcher_mean() {
        let set = MatrixSet::random(3, 4, 5, 1e3).unwrap();
        let g = karcher_mean(&set, &KarcherConfig::default()).unwrap().mean;
        let f_g = objective(&g, &set).unwrap();
        for seed in 0..100 {
            let dir = spd::random_spd(3, 1000 + seed, 10.0);
            let nudge = spd::geodesic(&g, &dir, 0.01).unwrap();
            assert!(objective(&nudge, &set).unwrap() >= f_g);
        }
    }

    #[test]
    fn constants_scalar_oracle() {
        let pts = [scalar(1.0), scalar(E * E)];
        let g = karcher_mean(&pts, &KarcherConfig::default()).unwrap().mean;
        assert!((g.scalar().unwrap() - E).abs() < 1e-12);
        let c = constants(&pts, &g).unwrap();
        assert!((c.delta_max - 2.0).abs() < 1e-12);
        assert!((c.alpha - 1.0).abs() < 1e-12);
        assert!((c.rate_constant - 13.0).abs() < 1e-12);
    }

    #[test]
    fn constants_of_equal_points_vanish() {
        let a = spd::random_spd(2, 3, 10.0);
        let c = constants(&[a.clone(), a.clone()], &a).unwrap();
        assert!(c.delta_max < 1e-12 && c.alpha < 1e-20 && c.rate_constant < 1e-20);
    }

    #[test]
    fn delta_is_order_free() {
        let set = MatrixSet::random(3, 4, 13, 1e3).unwrap();
        let g = karcher_mean(&set, &KarcherConfig::default()).unwrap().mean;
        let c1 = constants(&set, &g).unwrap();
        let c2 = constants(&set.permuted(&[3, 1, 0, 2]).unwrap(), &g).unwrap();
        // δ is symmetric only up to rounding
        assert!((c1.delta_max - c2.delta_max).abs() <= 1e-12 * c1.delta_max);
    }

    #[test]
    fn variance_check_examples() {
        let a = spd::random_spd(3, 30, 1e2);
        let b = spd::random_spd(3, 31, 1e2);
        let g = spd::geodesic(&a, &b, 0.5).unwrap();
        let set = [a.clone(), b.clone()];
        assert!(variance_check(&g, &set, &g).unwrap().abs() < 1e-12);
        // Z = A: ½δ²(A,B) − ¼δ²(A,B) − ¼δ²(A,B) = 0 up to the midpoint algebra
        let s = variance_check(&a, &set, &g).unwrap();
        assert!(s >= -1e-10, "{s}");
    }
}
