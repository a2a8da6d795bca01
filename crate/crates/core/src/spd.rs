//! Symmetric positive-definite matrices and the affine-invariant geometry on them.
//!
//! All matrix functions go through a symmetric eigendecomposition: for
//! `S = V diag(λ) Vᵀ`, `f(S) = V diag(f(λ)) Vᵀ`. The geodesic between `A` and
//! `B` is
//!
//! ```text
//! A #ₜ B = A^{1/2} (A^{-1/2} B A^{-1/2})^t A^{1/2}
//! ```
//!
//! and the distance is `δ(A, B) = ‖log(A^{-1/2} B A^{-1/2})‖_F`.
//!
//! One-dimensional inputs take a scalar path (`a^{1-t} b^t`, `|ln b − ln a|`).

use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Default symmetry tolerance, relative to `max(1, max |entry|)`.
pub const SYM_TOL: f64 = 1e-10;
/// Default positive-definiteness threshold on the smallest eigenvalue.
pub const PD_TOL: f64 = 1e-12;
/// Default reconstruction tolerance for decompositions and round trips.
pub const RECON_TOL: f64 = 1e-9;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITERS: usize = 10_000;

/// A validated symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    inner: DMatrix<f64>,
}

/// Spectral decomposition `S = V diag(λ) Vᵀ` with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Columns are the eigenvectors.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// Rebuilds `V diag(f(λ)) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let fl = f(lambda);
            scaled.column_mut(j).scale_mut(fl);
        }
        symmetrize(&(scaled * v.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map(|l| l)
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>, sym_tol: f64) -> Result<()> {
    let scale = max_abs(m).max(1.0);
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > sym_tol * scale {
        return Err(Error::NotSymmetric {
            asymmetry: worst,
            tolerance: sym_tol * scale,
        });
    }
    Ok(())
}

/// Eigendecomposition of a symmetric (not necessarily definite) matrix.
pub(crate) fn symmetric_eigen(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = m.nrows();
    if n == 1 {
        return Ok(EigenDecomposition {
            eigenvalues: DVector::from_element(1, m[(0, 0)]),
            eigenvectors: DMatrix::identity(1, 1),
        });
    }
    let eig =
        SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITERS).ok_or(Error::EigenFailure)?;
    if eig.eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Validates `raw` as SPD and returns its symmetrized part `(raw + rawᵀ)/2`.
pub fn validate_spd(raw: DMatrix<f64>, sym_tol: f64, pd_tol: f64) -> Result<SpdMatrix> {
    if raw.nrows() != raw.ncols() {
        return Err(Error::NotSquare {
            rows: raw.nrows(),
            cols: raw.ncols(),
        });
    }
    if raw.nrows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    check_finite(&raw)?;
    check_symmetric(&raw, sym_tol)?;
    let sym = symmetrize(&raw);
    let eig = symmetric_eigen(&sym)?;
    let min_eigenvalue = eig.eigenvalues[0];
    if min_eigenvalue <= pd_tol {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue,
            tolerance: pd_tol,
        });
    }
    Ok(SpdMatrix { inner: sym })
}

impl SpdMatrix {
    /// Validates with the default tolerances.
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        validate_spd(raw, SYM_TOL, PD_TOL)
    }

    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyMatrix);
        }
        if entries.len() != dim * dim {
            return Err(Error::Parse(format!(
                "expected {} entries for a {dim}x{dim} matrix, found {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        SpdMatrix {
            inner: DMatrix::identity(dim, dim),
        }
    }

    /// `diag(d)`; every entry must be positive and finite.
    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Wraps the result of an internal computation that is SPD by
    /// construction. Symmetrizes and confirms definiteness with a Cholesky
    /// factorization, falling back to a full validation to report the failure.
    pub(crate) fn from_computed(m: DMatrix<f64>) -> Result<Self> {
        let sym = symmetrize(&m);
        check_finite(&sym)?;
        if sym.clone().cholesky().is_some() {
            Ok(SpdMatrix { inner: sym })
        } else {
            validate_spd(sym, SYM_TOL, PD_TOL)
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn eig(&self) -> Result<EigenDecomposition> {
        sym_eig(self)
    }

    pub fn condition_number(&self) -> Result<f64> {
        let e = self.eig()?;
        Ok(e.eigenvalues[self.dim() - 1] / e.eigenvalues[0])
    }

    /// `X S Xᵀ` for an invertible `X`.
    pub fn congruence(&self, x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != self.dim() || x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.nrows().max(x.ncols()),
            });
        }
        SpdMatrix::from_computed(x * &self.inner * x.transpose())
    }

    pub fn frobenius_distance(&self, other: &SpdMatrix) -> f64 {
        (&self.inner - &other.inner).norm()
    }

    pub fn scalar(&self) -> Option<f64> {
        (self.dim() == 1).then(|| self.inner[(0, 0)])
    }
}

fn check_same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

pub fn sym_eig(s: &SpdMatrix) -> Result<EigenDecomposition> {
    symmetric_eigen(&s.inner)
}

pub fn matrix_power(s: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("exponent {t} is not finite")));
    }
    if let Some(a) = s.scalar() {
        return SpdMatrix::from_computed(DMatrix::from_element(1, 1, a.powf(t)));
    }
    let eig = sym_eig(s)?;
    SpdMatrix::from_computed(eig.map(|l| l.powf(t)))
}

/// Principal logarithm; the result is symmetric.
pub fn matrix_log(s: &SpdMatrix) -> Result<DMatrix<f64>> {
    if let Some(a) = s.scalar() {
        return Ok(DMatrix::from_element(1, 1, a.ln()));
    }
    Ok(sym_eig(s)?.map(f64::ln))
}

/// Exponential of a symmetric matrix.
pub fn matrix_exp(h: &DMatrix<f64>) -> Result<SpdMatrix> {
    if h.nrows() != h.ncols() {
        return Err(Error::NotSquare {
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    if h.nrows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    check_finite(h)?;
    check_symmetric(h, SYM_TOL)?;
    if h.nrows() == 1 {
        return SpdMatrix::from_computed(DMatrix::from_element(1, 1, h[(0, 0)].exp()));
    }
    let eig = symmetric_eigen(&symmetrize(h))?;
    SpdMatrix::from_computed(eig.map(f64::exp))
}

/// `A^{1/2}` and `A^{-1/2}` from a single decomposition.
pub(crate) fn sqrt_and_inv_sqrt(a: &SpdMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = sym_eig(a)?;
    Ok((eig.map(f64::sqrt), eig.map(|l| 1.0 / l.sqrt())))
}

/// The point `A #ₜ B` on the geodesic from `A` (t = 0) to `B` (t = 1).
pub fn geodesic(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_same_dim(a, b)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "geodesic parameter {t} outside [0, 1]"
        )));
    }
    if let (Some(x), Some(y)) = (a.scalar(), b.scalar()) {
        return SpdMatrix::from_computed(DMatrix::from_element(1, 1, x.powf(1.0 - t) * y.powf(t)));
    }
    let (half, inv_half) = sqrt_and_inv_sqrt(a)?;
    let inner = symmetrize(&(&inv_half * &b.inner * &inv_half));
    let powered = symmetric_eigen(&inner)?.map(|l| l.powf(t));
    SpdMatrix::from_computed(&half * powered * &half)
}

/// Affine-invariant distance `‖log(A^{-1/2} B A^{-1/2})‖_F`.
pub fn distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Whitener::new(a)?.distance_to(b)
}

/// Caches `A^{-1/2}` so that many distances from a fixed `A` cost one
/// eigendecomposition each.
#[derive(Debug, Clone)]
pub struct Whitener {
    base: SpdMatrix,
    inv_sqrt: DMatrix<f64>,
}

impl Whitener {
    pub fn new(base: &SpdMatrix) -> Result<Self> {
        let inv_sqrt = if let Some(a) = base.scalar() {
            DMatrix::from_element(1, 1, 1.0 / a.sqrt())
        } else {
            sqrt_and_inv_sqrt(base)?.1
        };
        Ok(Whitener {
            base: base.clone(),
            inv_sqrt,
        })
    }

    pub fn base(&self) -> &SpdMatrix {
        &self.base
    }

    /// `A^{-1/2} B A^{-1/2}`, symmetrized.
    pub fn whiten(&self, b: &SpdMatrix) -> Result<DMatrix<f64>> {
        check_same_dim(&self.base, b)?;
        Ok(symmetrize(&(&self.inv_sqrt * &b.inner * &self.inv_sqrt)))
    }

    pub fn distance_to(&self, b: &SpdMatrix) -> Result<f64> {
        check_same_dim(&self.base, b)?;
        if let (Some(x), Some(y)) = (self.base.scalar(), b.scalar()) {
            return Ok((y.ln() - x.ln()).abs());
        }
        let eig = symmetric_eigen(&self.whiten(b)?)?;
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::EigenFailure);
        }
        Ok(eig.eigenvalues.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
    }
}

/// Seeded random SPD matrix `M Mᵀ + εI`, `M` filled with standard normals,
/// with `ε ≥ 0` the smallest shift bringing the condition number within
/// `condition_cap`.
///
/// # Panics
/// If `dim == 0` or `condition_cap < 1`.
pub fn random_spd(dim: usize, seed: u64, condition_cap: f64) -> SpdMatrix {
    assert!(dim > 0, "dimension must be positive");
    assert!(condition_cap >= 1.0, "condition cap must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(dim, dim, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let gram = symmetrize(&(&m * m.transpose()));
    let eig = symmetric_eigen(&gram).expect("eigendecomposition of a Gram matrix");
    let lo = eig.eigenvalues[0].max(0.0);
    let hi = eig.eigenvalues[dim - 1];
    if condition_cap == 1.0 {
        let scale = gram.trace() / dim as f64;
        return SpdMatrix {
            inner: DMatrix::identity(dim, dim) * scale,
        };
    }
    // aim slightly under the cap so rounding cannot push the result over it
    let target = 1.0 + (condition_cap - 1.0) * (1.0 - 1e-6);
    let shift = ((hi - target * lo) / (target - 1.0)).max(hi * 1e-12);
    let shifted = gram + DMatrix::identity(dim, dim) * shift;
    SpdMatrix::from_computed(shifted).expect("shifted Gram matrix is positive definite")
}
