//! Ordered families of SPD matrices and their JSON file format:
//!
//! ```json
//! {"dim": 2, "matrices": [[1, 0, 0, 1], [2, 1, 1, 2]]}
//! ```
//!
//! Each matrix is stored row-major as `dim * dim` reals.

use std::fs;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{self, SpdMatrix};

/// `m ≥ 1` SPD matrices of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSet {
    dim: usize,
    matrices: Vec<SpdMatrix>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixSetFile {
    dim: usize,
    matrices: Vec<Vec<f64>>,
}

impl MatrixSet {
    pub fn new(matrices: Vec<SpdMatrix>) -> Result<Self> {
        let dim = matrices.first().ok_or(Error::EmptySet)?.dim();
        if let Some((index, bad)) = matrices.iter().enumerate().find(|(_, m)| m.dim() != dim) {
            return Err(Error::InvalidSetEntry {
                index,
                source: Box::new(Error::DimensionMismatch {
                    expected: dim,
                    found: bad.dim(),
                }),
            });
        }
        Ok(MatrixSet { dim, matrices })
    }

    /// `m` seeded random matrices; matrix `i` uses seed `seed * 1_000_003 + i`.
    pub fn random(dim: usize, m: usize, seed: u64, condition_cap: f64) -> Result<Self> {
        if dim == 0 || m == 0 || condition_cap < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "random set needs dim >= 1, m >= 1, condition_cap >= 1 (got {dim}, {m}, {condition_cap})"
            )));
        }
        let base = seed.wrapping_mul(1_000_003);
        MatrixSet::new(
            (0..m as u64)
                .map(|i| spd::random_spd(dim, base.wrapping_add(i), condition_cap))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrices(&self) -> &[SpdMatrix] {
        &self.matrices
    }

    pub fn into_matrices(self) -> Vec<SpdMatrix> {
        self.matrices
    }

    /// The set listed `k` times in a row.
    pub fn repeated(&self, k: usize) -> Self {
        MatrixSet {
            dim: self.dim,
            matrices: (0..k).flat_map(|_| self.matrices.iter().cloned()).collect(),
        }
    }

    /// Reorders the set: entry `i` of the result is `self[order[i]]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        crate::sequences::check_permutation(order, self.len())?;
        Ok(MatrixSet {
            dim: self.dim,
            matrices: order.iter().map(|&i| self.matrices[i].clone()).collect(),
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MatrixSetFile = serde_json::from_str(text)?;
        let dim = file.dim;
        if dim == 0 {
            return Err(Error::Parse("dim must be positive".into()));
        }
        if file.matrices.is_empty() {
            return Err(Error::EmptySet);
        }
        let matrices = file
            .matrices
            .iter()
            .enumerate()
            .map(|(index, entries)| {
                SpdMatrix::from_row_slice(dim, entries).map_err(|e| Error::InvalidSetEntry {
                    index,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MatrixSet::new(matrices)
    }

    pub fn to_json_string(&self) -> String {
        let file = MatrixSetFile {
            dim: self.dim,
            matrices: self.matrices.iter().map(SpdMatrix::to_row_major).collect(),
        };
        serde_json::to_string(&file).expect("matrix set serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json_string();
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

impl Deref for MatrixSet {
    type Target = [SpdMatrix];

    fn deref(&self) -> &[SpdMatrix] {
        &self.matrices
    }
}
