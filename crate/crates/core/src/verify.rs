//! Sampled verification of the metric inequalities behind the
//! inductive-mean bound.
//!
//! Every property reports a scaled violation per sample: `(lhs − rhs) / (1 + s)`
//! for an inequality `lhs ≤ rhs`, or `|lhs − rhs| / (1 + s)` for an identity,
//! with `s` the magnitude of the terms involved. A property passes iff its
//! largest violation is at most the tolerance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{self, EuclideanPoint};
use crate::means::{self, InductiveState, KarcherConfig};
use crate::sequences::{Schedule, ScheduleKind};
use crate::spd::{self, SpdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub samples: usize,
    pub dim: usize,
    pub tol: f64,
    pub condition_cap: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            samples: 500,
            dim: 3,
            tol: 1e-8,
            condition_cap: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub samples: usize,
    pub max_violation: f64,
    /// Samples whose evaluation raised a numerical error.
    pub errors: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub properties: Vec<PropertyResult>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    dim: usize,
    cap: f64,
}

impl Sampler {
    fn spd(&mut self) -> SpdMatrix {
        spd::random_spd(self.dim, self.rng.random(), self.cap)
    }

    fn unit(&mut self) -> f64 {
        self.rng.random_range(0.0..=1.0)
    }

    /// `U diag(σ) Vᵀ` with `σ ∈ [1/2, 2]` and random orthogonal `U`, `V`.
    fn invertible(&mut self) -> DMatrix<f64> {
        let n = self.dim;
        let mut orth = || {
            let g = DMatrix::from_fn(n, n, |_, _| -> f64 { StandardNormal.sample(&mut self.rng) });
            g.qr().q()
        };
        let u = orth();
        let v = orth();
        let sigma: Vec<f64> = (0..n).map(|_| self.rng.random_range(0.5..=2.0)).collect();
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sigma));
        u * sigma * v.transpose()
    }

    fn euclidean(&mut self) -> EuclideanPoint {
        let coords = (0..self.dim).map(|_| self.rng.random_range(-10.0..=10.0)).collect();
        EuclideanPoint::new(coords).expect("finite")
    }
}

fn ineq(lhs: f64, rhs: f64, scale: f64) -> f64 {
    (lhs - rhs) / (1.0 + scale)
}

fn ident(lhs: f64, rhs: f64, scale: f64) -> f64 {
    (lhs - rhs).abs() / (1.0 + scale)
}

fn run_property<F>(name: &'static str, cfg: &VerifyConfig, stream: u64, mut sample: F) -> PropertyResult
where
    F: FnMut(&mut Sampler) -> Result<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut s = Sampler {
        rng,
        dim: cfg.dim,
        cap: cfg.condition_cap,
    };
    let mut max_violation = f64::NEG_INFINITY;
    let mut errors = 0;
    for _ in 0..cfg.samples {
        match sample(&mut s) {
            Ok(v) => max_violation = max_violation.max(v),
            Err(_) => errors += 1,
        }
    }
    PropertyResult {
        name,
        samples: cfg.samples,
        max_violation,
        errors,
        passed: errors == 0 && max_violation <= cfg.tol,
    }
}

fn d2(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    spd::distance(a, b).map(|d| d * d)
}

fn inductive_prefixes(points: &[SpdMatrix]) -> Result<Vec<SpdMatrix>> {
    let mut state = InductiveState::new();
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        state.push(p)?;
        out.push(state.current().expect("pushed").clone());
    }
    Ok(out)
}

pub fn semiparallelogram(cfg: &VerifyConfig) -> PropertyResult {
    run_property("semiparallelogram", cfg, 1, |s| {
        let (x, y, z) = (s.spd(), s.spd(), s.spd());
        let (lhs, rhs, scale) = geometry::semiparallelogram_terms(&x, &y, &z)?;
        Ok(ineq(lhs, rhs, scale))
    })
}

pub fn geodesic_inequality(cfg: &VerifyConfig) -> PropertyResult {
    run_property("geodesic_inequality", cfg, 2, |s| {
        let (x, y, z) = (s.spd(), s.spd(), s.spd());
        let t = s.unit();
        let lhs = d2(&spd::geodesic(&x, &y, t)?, &z)?;
        let (xz, yz, xy) = (d2(&x, &z)?, d2(&y, &z)?, d2(&x, &y)?);
        let rhs = (1.0 - t) * xz + t * yz - t * (1.0 - t) * xy;
        Ok(ineq(lhs, rhs, xz + yz + xy))
    })
}

pub fn geodesic_convexity(cfg: &VerifyConfig) -> PropertyResult {
    run_property("geodesic_convexity", cfg, 3, |s| {
        let (a, a2, b, b2) = (s.spd(), s.spd(), s.spd(), s.spd());
        let t = s.unit();
        let lhs = spd::distance(&spd::geodesic(&a, &a2, t)?, &spd::geodesic(&b, &b2, t)?)?;
        let (ab, ab2) = (spd::distance(&a, &b)?, spd::distance(&a2, &b2)?);
        Ok(ineq(lhs, (1.0 - t) * ab + t * ab2, ab + ab2))
    })
}

pub fn variance_inequality(cfg: &VerifyConfig) -> PropertyResult {
    let mut set: Vec<SpdMatrix> = Vec::new();
    let mut g: Option<SpdMatrix> = None;
    let mut count = 0usize;
    run_property("variance_inequality", cfg, 4, move |s| {
        if count.is_multiple_of(25) {
            set = (0..3).map(|_| s.spd()).collect();
            g = Some(means::karcher_mean(&set, &KarcherConfig::default())?.mean);
        }
        count += 1;
        let g = g.as_ref().expect("mean computed");
        let z = s.spd();
        let slack = means::variance_check(&z, &set, g)?;
        let scale: f64 = set.iter().map(|a| d2(&z, a)).sum::<Result<f64>>()?;
        Ok(-slack / (1.0 + scale))
    })
}

pub fn inductive_lipschitz(cfg: &VerifyConfig) -> PropertyResult {
    run_property("inductive_lipschitz", cfg, 5, |s| {
        let len = s.rng.random_range(1..=8usize);
        let a: Vec<SpdMatrix> = (0..len).map(|_| s.spd()).collect();
        let b: Vec<SpdMatrix> = (0..len).map(|_| s.spd()).collect();
        let sa = inductive_prefixes(&a)?;
        let sb = inductive_prefixes(&b)?;
        let lhs = spd::distance(&sa[len - 1], &sb[len - 1])?;
        let total: f64 = a.iter().zip(&b).map(|(x, y)| spd::distance(x, y)).sum::<Result<f64>>()?;
        let rhs = total / len as f64;
        Ok(ineq(lhs, rhs, rhs))
    })
}

pub fn telescoping(cfg: &VerifyConfig) -> PropertyResult {
    run_property("telescoping", cfg, 6, |s| {
        let k = s.rng.random_range(1..=5usize);
        let m = s.rng.random_range(1..=5usize);
        let seq: Vec<SpdMatrix> = (0..k + m).map(|_| s.spd()).collect();
        let z = s.spd();
        // prefixes[i] = S_{i+1}; seq[i] = A_{i+1}
        let prefixes = inductive_prefixes(&seq)?;
        let (kf, total) = (k as f64, (k + m) as f64);
        let lhs = d2(&prefixes[k + m - 1], &z)?;
        let first = d2(&prefixes[k - 1], &z)?;
        let mut to_z = 0.0;
        let mut steps = 0.0;
        for j in 0..m {
            to_z += d2(&seq[k + j], &z)?;
            steps += d2(&prefixes[k + j - 1], &seq[k + j])?;
        }
        let rhs = kf / total * first + to_z / total - kf / (total * total) * steps;
        Ok(ineq(lhs, rhs, first + to_z + steps))
    })
}

pub fn triangle_inequality(cfg: &VerifyConfig) -> PropertyResult {
    run_property("triangle_inequality", cfg, 7, |s| {
        let (a, b, c) = (s.spd(), s.spd(), s.spd());
        let (ab, bc, ac) = (spd::distance(&a, &b)?, spd::distance(&b, &c)?, spd::distance(&a, &c)?);
        Ok(ineq(ac, ab + bc, ab + bc))
    })
}

pub fn distance_symmetry(cfg: &VerifyConfig) -> PropertyResult {
    run_property("distance_symmetry", cfg, 8, |s| {
        let (a, b) = (s.spd(), s.spd());
        let (ab, ba) = (spd::distance(&a, &b)?, spd::distance(&b, &a)?);
        Ok(ident(ab, ba, ab))
    })
}

pub fn congruence_invariance(cfg: &VerifyConfig) -> PropertyResult {
    run_property("congruence_invariance", cfg, 9, |s| {
        let (a, b) = (s.spd(), s.spd());
        let x = s.invertible();
        let before = spd::distance(&a, &b)?;
        let after = spd::distance(&a.congruence(&x)?, &b.congruence(&x)?)?;
        Ok(ident(after, before, before))
    })
}

pub fn geodesic_endpoints(cfg: &VerifyConfig) -> PropertyResult {
    run_property("geodesic_endpoints", cfg, 10, |s| {
        let (a, b) = (s.spd(), s.spd());
        let start = spd::geodesic(&a, &b, 0.0)?.frobenius_distance(&a) / a.as_matrix().norm();
        let end = spd::geodesic(&a, &b, 1.0)?.frobenius_distance(&b) / b.as_matrix().norm();
        Ok(start.max(end))
    })
}

pub fn geodesic_reversal(cfg: &VerifyConfig) -> PropertyResult {
    run_property("geodesic_reversal", cfg, 11, |s| {
        let (a, b) = (s.spd(), s.spd());
        let t = s.unit();
        let fwd = spd::geodesic(&a, &b, t)?;
        let back = spd::geodesic(&b, &a, 1.0 - t)?;
        Ok(fwd.frobenius_distance(&back) / (a.as_matrix().norm() + b.as_matrix().norm()))
    })
}

pub fn block_boundedness(cfg: &VerifyConfig) -> PropertyResult {
    run_property("block_boundedness", cfg, 12, |s| {
        let m = s.rng.random_range(2..=4usize);
        let set: Vec<SpdMatrix> = (0..m).map(|_| s.spd()).collect();
        let schedule = Schedule::new(ScheduleKind::BlockPermutation, m, s.rng.random())?;
        let mut delta = 0.0_f64;
        for (i, a) in set.iter().enumerate() {
            for b in &set[i + 1..] {
                delta = delta.max(spd::distance(a, b)?);
            }
        }
        let mut state = InductiveState::new();
        let mut worst = f64::NEG_INFINITY;
        for p in schedule.materialize(&set, 3 * m)? {
            state.push(p)?;
            let current = state.current().expect("pushed");
            for a in &set {
                worst = worst.max(ineq(spd::distance(current, a)?, delta, delta));
            }
        }
        Ok(worst)
    })
}

pub fn euclidean_semiparallelogram(cfg: &VerifyConfig) -> PropertyResult {
    run_property("euclidean_semiparallelogram", cfg, 13, |s| {
        let (x, y, z) = (s.euclidean(), s.euclidean(), s.euclidean());
        let (lhs, rhs, scale) = geometry::semiparallelogram_terms(&x, &y, &z)?;
        Ok(ident(lhs, rhs, scale))
    })
}

/// Runs every property.
pub fn run_suite(cfg: &VerifyConfig) -> VerifyReport {
    let properties = vec![
        semiparallelogram(cfg),
        geodesic_inequality(cfg),
        geodesic_convexity(cfg),
        variance_inequality(cfg),
        inductive_lipschitz(cfg),
        telescoping(cfg),
        triangle_inequality(cfg),
        distance_symmetry(cfg),
        congruence_invariance(cfg),
        geodesic_endpoints(cfg),
        geodesic_reversal(cfg),
        block_boundedness(cfg),
        euclidean_semiparallelogram(cfg),
    ];
    let passed = properties.iter().all(|p| p.passed);
    VerifyReport {
        config: *cfg,
        properties,
        passed,
    }
}
