//! Exact and Newton–Schulz polar factors.

use serde::{Deserialize, Serialize};

use super::{frob_norm, svd, Matrix, MatrixError};

/// Zero-input guard and pre-normalisation floor for Newton–Schulz.
pub const EPS_NS: f64 = 1e-12;

/// Iteration count used by the optimizers unless configured otherwise.
pub const DEFAULT_NS_ITERS: usize = 5;

/// Odd matrix polynomial `X ← a X + b X(XᵀX) + c X(XᵀX)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsPolynomial {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl NsPolynomial {
    /// Classical cubic Newton–Schulz map. Converges to the polar factor for
    /// any spectrum inside `(0, sqrt(3))`, and never leaves `[0, 1]` once the
    /// input is Frobenius-normalised.
    pub const CUBIC: Self = Self {
        a: 1.5,
        b: -0.5,
        c: 0.0,
    };

    /// Tuned quintic popularised by Muon training scripts. Converges faster
    /// but oscillates in roughly `[0.7, 1.2]` instead of reaching 1.
    pub const MUON_QUINTIC: Self = Self {
        a: 3.4445,
        b: -4.7750,
        c: 2.0315,
    };

    /// Scalar action on one singular value.
    pub fn apply_scalar(&self, x: f64) -> f64 {
        let x2 = x * x;
        x * (self.a + x2 * (self.b + self.c * x2))
    }
}

impl Default for NsPolynomial {
    fn default() -> Self {
        Self::CUBIC
    }
}

/// Options for [`newton_schulz_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsOptions {
    pub poly: NsPolynomial,
    /// Divide the input by `frob_norm + EPS_NS` before iterating.
    pub normalize: bool,
}

impl Default for NsOptions {
    fn default() -> Self {
        Self {
            poly: NsPolynomial::CUBIC,
            normalize: true,
        }
    }
}

/// Exact polar factor `U Vᵀ` over the numerical-rank thin SVD; the zero
/// matrix when the rank is zero.
pub fn polar_exact(a: &Matrix) -> Result<Matrix, MatrixError> {
    let r = svd(a)?;
    if r.rank() == 0 {
        return Ok(Matrix::zeros(a.rows(), a.cols()));
    }
    Ok(r.u.matmul(&r.v.transpose()))
}

/// `NS_k(a)` with the default cubic map and Frobenius pre-normalisation.
pub fn newton_schulz(a: &Matrix, k: usize) -> Matrix {
    newton_schulz_with(a, k, &NsOptions::default())
}

/// `k` iterations of the configured polynomial.
///
/// Wide inputs are transposed so the Gram product is always formed on the
/// short side. With normalisation enabled a near-zero input (`‖A‖_F < EPS_NS`)
/// maps to the zero matrix.
pub fn newton_schulz_with(a: &Matrix, k: usize, opts: &NsOptions) -> Matrix {
    let norm = frob_norm(a);
    if opts.normalize && norm < EPS_NS {
        return Matrix::zeros(a.rows(), a.cols());
    }
    let transposed = a.rows() < a.cols();
    let mut x = if transposed { a.transpose() } else { a.clone() };
    if opts.normalize {
        let inv = 1.0 / (norm + EPS_NS);
        x.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
    }
    let NsPolynomial {
        a: ca,
        b: cb,
        c: cc,
    } = opts.poly;
    for _ in 0..k {
        let gram = x.gram();
        // poly(G) = b G + c G²; X ← a X + X poly(G)
        let inner = if cc == 0.0 {
            gram.scale(cb)
        } else {
            gram.lincomb(cb, &gram.matmul(&gram), cc)
        };
        x = x.lincomb(ca, &x.matmul(&inner), 1.0);
    }
    if transposed {
        x.transpose()
    } else {
        x
    }
}
