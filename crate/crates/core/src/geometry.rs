//! Metric-space interface for the inductive-mean machinery.
//!
//! A Hadamard space only needs geodesics and a distance; midpoints must obey
//! the semiparallelogram law
//!
//! ```text
//! δ²(m, z) ≤ ½δ²(x, z) + ½δ²(y, z) − ¼δ²(x, y),    m = x #½ y
//! ```
//!
//! for every `z`. [`certify_hadamard`] checks this by sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spd::{self, SpdMatrix};

/// A point in a uniquely geodesic metric space.
pub trait HadamardPoint: Clone {
    /// Dimension used for compatibility checks.
    fn dim(&self) -> usize;

    /// The point at parameter `t ∈ [0, 1]` on the geodesic from `self` to `other`.
    fn geodesic_to(&self, other: &Self, t: f64) -> Result<Self>;

    fn distance_to(&self, other: &Self) -> Result<f64>;
}

impl HadamardPoint for SpdMatrix {
    fn dim(&self) -> usize {
        SpdMatrix::dim(self)
    }

    fn geodesic_to(&self, other: &Self, t: f64) -> Result<Self> {
        spd::geodesic(self, other, t)
    }

    fn distance_to(&self, other: &Self) -> Result<f64> {
        spd::distance(self, other)
    }
}

/// A point of flat ℝᵈ.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanPoint {
    coords: Vec<f64>,
}

impl EuclideanPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteEntry { row: i, col: 0 });
        }
        Ok(EuclideanPoint { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// `(1 − t)x + ty`.
pub fn euclidean_geodesic(x: &EuclideanPoint, y: &EuclideanPoint, t: f64) -> Result<EuclideanPoint> {
    same_dim(x.coords.len(), y.coords.len())?;
    EuclideanPoint::new(
        x.coords
            .iter()
            .zip(&y.coords)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect(),
    )
}

impl HadamardPoint for EuclideanPoint {
    fn dim(&self) -> usize {
        self.coords.len()
    }

    fn geodesic_to(&self, other: &Self, t: f64) -> Result<Self> {
        euclidean_geodesic(self, other, t)
    }

    fn distance_to(&self, other: &Self) -> Result<f64> {
        same_dim(self.coords.len(), other.coords.len())?;
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// Outcome of a sampled semiparallelogram check.
#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub samples: usize,
    /// Largest `lhs − rhs` over the samples, divided by `1 + |rhs terms|`.
    pub max_violation: f64,
    /// Raw `(lhs, rhs)` of the worst sample.
    pub worst: (f64, f64),
    pub tolerance: f64,
    /// Samples that could not be evaluated (numerical failures).
    pub errors: usize,
    pub passed: bool,
}

/// Semiparallelogram residual for one triple: `(lhs, rhs, scale)`.
pub fn semiparallelogram_terms<P: HadamardPoint>(x: &P, y: &P, z: &P) -> Result<(f64, f64, f64)> {
    let m = x.geodesic_to(y, 0.5)?;
    let lhs = m.distance_to(z)?.powi(2);
    let xz = x.distance_to(z)?.powi(2);
    let yz = y.distance_to(z)?.powi(2);
    let xy = x.distance_to(y)?.powi(2);
    let rhs = 0.5 * xz + 0.5 * yz - 0.25 * xy;
    Ok((lhs, rhs, 1.0 + xz + yz + xy))
}

/// Samples `sample_count` triples from `sampler` and records the worst
/// semiparallelogram violation. Passes iff every sample evaluates and the
/// worst scaled violation is at most `tol`.
pub fn certify_hadamard<P, F>(mut sampler: F, sample_count: usize, seed: u64, tol: f64) -> CertificationReport
where
    P: HadamardPoint,
    F: FnMut(&mut ChaCha8Rng) -> P,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = (0.0, 0.0);
    let mut errors = 0;
    for _ in 0..sample_count {
        let x = sampler(&mut rng);
        let y = sampler(&mut rng);
        let z = sampler(&mut rng);
        match semiparallelogram_terms(&x, &y, &z) {
            Ok((lhs, rhs, scale)) => {
                let v = (lhs - rhs) / scale;
                if v > max_violation {
                    max_violation = v;
                    worst = (lhs, rhs);
                }
            }
            Err(_) => errors += 1,
        }
    }
    CertificationReport {
        samples: sample_count,
        max_violation,
        worst,
        tolerance: tol,
        errors,
        passed: errors == 0 && max_violation <= tol,
    }
}

/// Sampler of random SPD matrices for [`certify_hadamard`].
pub fn spd_sampler(dim: usize, condition_cap: f64) -> impl FnMut(&mut ChaCha8Rng) -> SpdMatrix {
    move |rng| spd::random_spd(dim, rng.random(), condition_cap)
}

/// Sampler of points with coordinates uniform in `[-scale, scale]`.
pub fn euclidean_sampler(dim: usize, scale: f64) -> impl FnMut(&mut ChaCha8Rng) -> EuclideanPoint {
    move |rng| {
        EuclideanPoint::new((0..dim).map(|_| rng.random_range(-scale..=scale)).collect())
            .expect("finite coordinates")
    }
}
