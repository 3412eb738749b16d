//! Dense-matrix kernels: norms, the SVD oracle, exact polar factor and the
//! Newton–Schulz approximation every optimizer variant uses.

mod matrix;
mod polar;
mod svd;

use thiserror::Error;

pub use matrix::{frob_norm, rms, Matrix};
pub use polar::{
    newton_schulz, newton_schulz_with, polar_exact, NsOptions, NsPolynomial, DEFAULT_NS_ITERS,
    EPS_NS,
};
pub use svd::{
    nuclear_norm, operator_norm, singular_values, svd, SvdResult, MAX_SWEEPS, OFF_DIAGONAL_TOL,
    RANK_RTOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix shape {rows}x{cols} is empty")]
    EmptyShape { rows: usize, cols: usize },
    #[error("{len} entries supplied for a {rows}x{cols} matrix")]
    LengthMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("Jacobi SVD did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },
}
