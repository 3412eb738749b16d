//! Thin SVD via one-sided (Hestenes) Jacobi rotations.
//!
//! This is the exact oracle the rest of the crate checks against: nuclear
//! norms, the polar factor `U Vᵀ`, and numerical rank all come from here.

use super::{Matrix, MatrixError};

/// Sweep cap before the oracle reports non-convergence.
pub const MAX_SWEEPS: usize = 60;
/// Pairwise orthogonality threshold, relative to the two column norms.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
/// Singular values below `RANK_RTOL * sigma_1` are treated as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Thin singular value decomposition `A ≈ U diag(sigma) Vᵀ` truncated to the
/// numerical rank.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `m x k`, orthonormal columns.
    pub u: Matrix,
    /// Nonincreasing, all above the rank threshold.
    pub sigma: Vec<f64>,
    /// `n x k`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    /// Numerical rank `k`.
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Rebuilds `U diag(sigma) Vᵀ`; returns `None` for rank zero.
    pub fn reconstruct(&self) -> Option<Matrix> {
        if self.rank() == 0 {
            return None;
        }
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.sigma.iter().enumerate() {
                us.set(i, j, us.get(i, j) * s);
            }
        }
        Some(us.matmul(&self.v.transpose()))
    }
}

/// Column-major working copy used by the rotation sweeps.
struct Columns {
    len: usize,
    data: Vec<f64>,
}

impl Columns {
    fn from_matrix(a: &Matrix) -> Self {
        let (m, n) = a.shape();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = a.get(i, j);
            }
        }
        Self { len: m, data }
    }

    fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for j in 0..n {
            data[j * n + j] = 1.0;
        }
        Self { len: n, data }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.len..(j + 1) * self.len]
    }

    fn rotate(&mut self, p: usize, q: usize, c: f64, s: f64) {
        let len = self.len;
        let (lo, hi) = self.data.split_at_mut(q * len);
        let cp = &mut lo[p * len..(p + 1) * len];
        let cq = &mut hi[..len];
        for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
            let (a, b) = (*x, *y);
            *x = c * a - s * b;
            *y = s * a + c * b;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin SVD of `a`.
///
/// Wide inputs are handled by decomposing the transpose and swapping the
/// factors. The input is scaled by its largest entry first so huge or tiny
/// matrices do not overflow the Gram sums. Fails with
/// [`MatrixError::NonFinite`] on NaN or infinite entries and with
/// [`MatrixError::SvdNoConvergence`] if the sweep cap is reached.
pub fn svd(a: &Matrix) -> Result<SvdResult, MatrixError> {
    if let Some(pos) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(MatrixError::NonFinite {
            row: pos / a.cols(),
            col: pos % a.cols(),
        });
    }
    let peak = a.max_abs();
    if peak > 0.0 && !(1e-100..=1e100).contains(&peak) {
        let mut r = svd(&a.scale(1.0 / peak))?;
        r.sigma.iter_mut().for_each(|s| *s *= peak);
        return Ok(r);
    }
    if a.rows() < a.cols() {
        let t = svd_tall(&a.transpose())?;
        return Ok(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    svd_tall(a)
}

fn svd_tall(a: &Matrix) -> Result<SvdResult, MatrixError> {
    let (m, n) = a.shape();
    let mut u = Columns::from_matrix(a);
    let mut v = Columns::identity(n);

    let mut converged = n == 1;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(MatrixError::SvdNoConvergence { sweeps });
        }
        sweeps += 1;
        converged = true;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(u.col(p), u.col(p));
                let beta = dot(u.col(q), u.col(q));
                let gamma = dot(u.col(p), u.col(q));
                let scale = (alpha * beta).sqrt();
                if scale <= f64::MIN_POSITIVE || gamma.abs() <= OFF_DIAGONAL_TOL * scale {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                u.rotate(p, q, c, s);
                v.rotate(p, q, c, s);
            }
        }
    }

    let mut order: Vec<(usize, f64)> = (0..n)
        .map(|j| (j, dot(u.col(j), u.col(j)).sqrt()))
        .collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1));
    let sigma_max = order.first().map_or(0.0, |o| o.1);
    let threshold = RANK_RTOL * sigma_max;
    let kept: Vec<(usize, f64)> = order
        .into_iter()
        .filter(|&(_, s)| s > threshold && s > 0.0)
        .collect();
    let k = kept.len();

    let mut u_out = vec![0.0; m * k];
    let mut v_out = vec![0.0; n * k];
    let mut sigma = Vec::with_capacity(k);
    for (col, &(j, s)) in kept.iter().enumerate() {
        for (i, x) in u.col(j).iter().enumerate() {
            u_out[i * k + col] = x / s;
        }
        for (i, x) in v.col(j).iter().enumerate() {
            v_out[i * k + col] = *x;
        }
        sigma.push(s);
    }
    // k == 0 only for the zero matrix; keep a 1-column zero placeholder
    // so the Matrix shape invariant holds.
    let (u_mat, v_mat) = if k == 0 {
        (Matrix::zeros(m, 1), Matrix::zeros(n, 1))
    } else {
        (Matrix::from_raw(m, k, u_out), Matrix::from_raw(n, k, v_out))
    };
    Ok(SvdResult {
        u: u_mat,
        sigma,
        v: v_mat,
    })
}

/// All singular values above the rank threshold, nonincreasing.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>, MatrixError> {
    svd(a).map(|r| r.sigma)
}

/// Nuclear norm `sum sigma_i`.
pub fn nuclear_norm(a: &Matrix) -> Result<f64, MatrixError> {
    Ok(singular_values(a)?.iter().sum())
}

/// Spectral norm `sigma_1`.
pub fn operator_norm(a: &Matrix) -> Result<f64, MatrixError> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn orthonormality_error(q: &Matrix) -> f64 {
        q.gram().sub(&Matrix::identity(q.cols())).frob_norm()
    }

    #[test]
    fn diagonal_input() {
        let r = svd(&Matrix::from_diag(2, 2, &[3.0, 2.0])).unwrap();
        assert_eq!(r.sigma, vec![3.0, 2.0]);
        for j in 0..2 {
            assert!((r.u.get(j, j).abs() - 1.0).abs() < 1e-15);
            assert!((r.v.get(j, j).abs() - 1.0).abs() < 1e-15);
        }
        // ordering fixes itself when the diagonal is not sorted
        let r = svd(&Matrix::from_diag(3, 3, &[1.0, 5.0, 2.0])).unwrap();
        assert_eq!(r.sigma, vec![5.0, 2.0, 1.0]);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = Matrix::new(4, 1, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let v = Matrix::new(1, 3, vec![2.0, 1.0, -1.0]).unwrap();
        let r = svd(&u.matmul(&v)).unwrap();
        assert_eq!(r.rank(), 1);
        let expected = u.frob_norm() * v.frob_norm();
        assert!((r.sigma[0] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = stream_rng(11, Stream::Test(0));
        for &(m, n) in &[(8, 5), (5, 8), (1, 1), (1, 7), (7, 1), (30, 30)] {
            let a = Matrix::gaussian(m, n, 1.0, &mut rng);
            let r = svd(&a).unwrap();
            let resid = a.sub(&r.reconstruct().unwrap()).frob_norm();
            assert!(
                resid <= 1e-9 * (1.0 + a.frob_norm()),
                "{m}x{n} residual {resid}"
            );
            assert!(orthonormality_error(&r.u) <= 1e-10);
            assert!(orthonormality_error(&r.v) <= 1e-10);
            assert!(r.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn nuclear_norm_cases() {
        assert_eq!(
            nuclear_norm(&Matrix::from_diag(2, 2, &[2.0, 3.0])).unwrap(),
            5.0
        );
        let mut rng = stream_rng(5, Stream::Test(1));
        let a = Matrix::gaussian(6, 4, 1.0, &mut rng);
        let nuc = nuclear_norm(&a).unwrap();
        assert!(nuc >= a.frob_norm());
        let direct: f64 = svd(&a).unwrap().sigma.iter().sum();
        assert!((nuc - direct).abs() <= 1e-9);
    }

    #[test]
    fn zero_and_rank_deficient() {
        let z = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(z.rank(), 0);
        assert!(z.reconstruct().is_none());

        let mut rng = stream_rng(3, Stream::Test(2));
        let b = Matrix::gaussian(12, 3, 1.0, &mut rng);
        let c = Matrix::gaussian(3, 9, 1.0, &mut rng);
        let r = svd(&b.matmul(&c)).unwrap();
        assert_eq!(r.rank(), 3);
        assert!(orthonormality_error(&r.u) <= 1e-10);
    }
}
