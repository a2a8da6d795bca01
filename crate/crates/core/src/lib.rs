//! Geometric means of symmetric positive-definite matrices.
//!
//! The crate provides the affine-invariant geometry of the SPD cone
//! ([`spd`]), a generic metric-space interface ([`geometry`]), index
//! schedules for inductive means ([`sequences`]), the inductive and Karcher
//! means ([`means`]), and the convergence harness ([`experiments`]) together
//! with a sampled inequality suite ([`verify`]).

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod matrix_set;
pub mod means;
pub mod sequences;
pub mod spd;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{EuclideanPoint, HadamardPoint};
pub use matrix_set::MatrixSet;
pub use means::{KarcherConfig, KarcherDiagnostics, KarcherOutcome, MeanConstants};
pub use sequences::{Schedule, ScheduleKind};
pub use spd::SpdMatrix;
