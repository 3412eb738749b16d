//! Toy objectives over lists of matrix blocks with exact gradients.

mod mlp;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrixcore::{operator_norm, Matrix, MatrixError};

pub use mlp::{Mlp2Data, MLP2_CLASSES, MLP2_HIDDEN, MLP2_INPUT, MLP2_SAMPLES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("expected {expected} blocks, got {got}")]
    BlockCount { expected: usize, got: usize },
    #[error("block {block} has shape {got:?}, expected {expected:?}")]
    BlockShape {
        block: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// `Σ (L_ℓ/2) ‖W_ℓ − W*_ℓ‖²`.
    HeteroQuadratic {
        targets: Vec<Matrix>,
        smoothness: Vec<f64>,
    },
    /// `Σ ½ ‖X_ℓ W_ℓ − Y_ℓ‖²` with `Y_ℓ = X_ℓ W_true,ℓ`.
    LeastSquares {
        designs: Vec<Matrix>,
        labels: Vec<Matrix>,
        solution: Vec<Matrix>,
    },
    /// Two-layer tanh network with mean cross-entropy.
    Mlp2(Mlp2Data),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    shapes: Vec<(usize, usize)>,
    kind: ModelKind,
}

impl ToyModel {
    pub fn hetero_quadratic(
        targets: Vec<Matrix>,
        smoothness: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if targets.is_empty() {
            return Err(ModelError::Invalid("no blocks".into()));
        }
        if targets.len() != smoothness.len() {
            return Err(ModelError::BlockCount {
                expected: targets.len(),
                got: smoothness.len(),
            });
        }
        if let Some(l) = smoothness.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(ModelError::Invalid(format!(
                "smoothness {l} must be positive"
            )));
        }
        Ok(Self {
            shapes: targets.iter().map(Matrix::shape).collect(),
            kind: ModelKind::HeteroQuadratic {
                targets,
                smoothness,
            },
        })
    }

    /// Realisable least squares: labels are generated from `solution`.
    pub fn least_squares(designs: Vec<Matrix>, solution: Vec<Matrix>) -> Result<Self, ModelError> {
        if designs.is_empty() {
            return Err(ModelError::Invalid("no blocks".into()));
        }
        if designs.len() != solution.len() {
            return Err(ModelError::BlockCount {
                expected: designs.len(),
                got: solution.len(),
            });
        }
        for (i, (x, w)) in designs.iter().zip(&solution).enumerate() {
            if x.cols() != w.rows() {
                return Err(ModelError::BlockShape {
                    block: i,
                    expected: (x.cols(), w.cols()),
                    got: w.shape(),
                });
            }
        }
        let labels = designs
            .iter()
            .zip(&solution)
            .map(|(x, w)| x.matmul(w))
            .collect();
        Ok(Self {
            shapes: solution.iter().map(Matrix::shape).collect(),
            kind: ModelKind::LeastSquares {
                designs,
                labels,
                solution,
            },
        })
    }

    pub fn mlp2(data: Mlp2Data) -> Self {
        Self {
            shapes: data.shapes().to_vec(),
            kind: ModelKind::Mlp2(data),
        }
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn num_blocks(&self) -> usize {
        self.shapes.len()
    }

    /// `p_ℓ = min(m_ℓ, n_ℓ)`.
    pub fn ranks(&self) -> Vec<usize> {
        self.shapes.iter().map(|&(m, n)| m.min(n)).collect()
    }

    /// `P = Σ p_ℓ`.
    pub fn total_rank(&self) -> usize {
        self.ranks().iter().sum()
    }

    /// Per-block Frobenius smoothness constants where they are known.
    pub fn smoothness(&self) -> Option<Vec<f64>> {
        match &self.kind {
            ModelKind::HeteroQuadratic { smoothness, .. } => Some(smoothness.clone()),
            ModelKind::LeastSquares { designs, .. } => designs
                .iter()
                .map(|x| operator_norm(x).ok().map(|s| s * s))
                .collect(),
            ModelKind::Mlp2(_) => None,
        }
    }

    /// `L_∞ = max L_ℓ`.
    pub fn l_inf(&self) -> Option<f64> {
        self.smoothness()
            .map(|l| l.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    /// `L̄_p = Σ L_ℓ p_ℓ / P`.
    pub fn l_bar_p(&self) -> Option<f64> {
        let l = self.smoothness()?;
        let weighted: f64 = l.iter().zip(self.ranks()).map(|(l, p)| l * p as f64).sum();
        Some(weighted / self.total_rank() as f64)
    }

    pub fn optimum(&self) -> Option<&[Matrix]> {
        match &self.kind {
            ModelKind::HeteroQuadratic { targets, .. } => Some(targets),
            ModelKind::LeastSquares { solution, .. } => Some(solution),
            ModelKind::Mlp2(_) => None,
        }
    }

    /// Optimal value when it is known exactly.
    pub fn f_star(&self) -> Option<f64> {
        self.optimum().map(|_| 0.0)
    }

    pub fn check_blocks(&self, w: &[Matrix]) -> Result<(), ModelError> {
        if w.len() != self.shapes.len() {
            return Err(ModelError::BlockCount {
                expected: self.shapes.len(),
                got: w.len(),
            });
        }
        for (i, (b, &s)) in w.iter().zip(&self.shapes).enumerate() {
            if b.shape() != s {
                return Err(ModelError::BlockShape {
                    block: i,
                    expected: s,
                    got: b.shape(),
                });
            }
        }
        Ok(())
    }

    pub fn loss(&self, w: &[Matrix]) -> Result<f64, ModelError> {
        self.check_blocks(w)?;
        Ok(match &self.kind {
            ModelKind::HeteroQuadratic {
                targets,
                smoothness,
            } => w
                .iter()
                .zip(targets)
                .zip(smoothness)
                .map(|((wl, t), l)| {
                    let r = wl.sub(t);
                    0.5 * l * r.dot(&r)
                })
                .sum(),
            ModelKind::LeastSquares {
                designs, labels, ..
            } => w
                .iter()
                .zip(designs.iter().zip(labels))
                .map(|(wl, (x, y))| {
                    let r = x.matmul(wl).sub(y);
                    0.5 * r.dot(&r)
                })
                .sum(),
            ModelKind::Mlp2(data) => data.loss_and_gradient(w, false).0,
        })
    }

    pub fn gradient(&self, w: &[Matrix]) -> Result<Vec<Matrix>, ModelError> {
        self.check_blocks(w)?;
        Ok(match &self.kind {
            ModelKind::HeteroQuadratic {
                targets,
                smoothness,
            } => w
                .iter()
                .zip(targets)
                .zip(smoothness)
                .map(|((wl, t), &l)| wl.zip_map(t, |a, b| l * (a - b)))
                .collect(),
            ModelKind::LeastSquares {
                designs, labels, ..
            } => w
                .iter()
                .zip(designs.iter().zip(labels))
                .map(|(wl, (x, y))| x.transpose().matmul(&x.matmul(wl).sub(y)))
                .collect(),
            ModelKind::Mlp2(data) => data.loss_and_gradient(w, true).1,
        })
    }

    pub fn loss_and_gradient(&self, w: &[Matrix]) -> Result<(f64, Vec<Matrix>), ModelError> {
        match &self.kind {
            ModelKind::Mlp2(data) => {
                self.check_blocks(w)?;
                Ok(data.loss_and_gradient(w, true))
            }
            _ => Ok((self.loss(w)?, self.gradient(w)?)),
        }
    }

    /// Largest block-wise relative error `‖fd − g‖_F / max(‖g‖_F, ‖fd‖_F)`
    /// between the analytic gradient and central differences with step
    /// `rel_step · (1 + |w_i|)`.
    pub fn gradient_check(&self, w: &[Matrix], rel_step: f64) -> Result<f64, ModelError> {
        let analytic = self.gradient(w)?;
        let mut point = w.to_vec();
        let mut worst = 0.0f64;
        for (b, g) in analytic.iter().enumerate() {
            let mut fd = vec![0.0; g.len()];
            for (i, slot) in fd.iter_mut().enumerate() {
                let orig = point[b].as_slice()[i];
                let h = rel_step * (1.0 + orig.abs());
                point[b].as_mut_slice()[i] = orig + h;
                let up = self.loss(&point)?;
                point[b].as_mut_slice()[i] = orig - h;
                let down = self.loss(&point)?;
                point[b].as_mut_slice()[i] = orig;
                *slot = (up - down) / (2.0 * h);
            }
            let fd = Matrix::from_raw(g.rows(), g.cols(), fd);
            let scale = g.frob_norm().max(fd.frob_norm());
            if scale > 0.0 {
                worst = worst.max(fd.sub(g).frob_norm() / scale);
            }
        }
        Ok(worst)
    }
}

/// Build the two-block quadratic whose starting point has gradient
/// nuclear-norm ratio `alpha` and smoothness ratio `beta`.
///
/// `W* = 0`, `L = (1, β)`, `W₁ = I_p`, `W₂ = (α/β) I_p`, so
/// `∇₁f = I_p` and `∇₂f = α I_p`.
pub fn two_layer_toy(
    alpha: f64,
    beta: f64,
    p: usize,
) -> Result<(ToyModel, Vec<Matrix>), ModelError> {
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(ModelError::Invalid(format!(
            "alpha ({alpha}) and beta ({beta}) must be positive"
        )));
    }
    if p == 0 {
        return Err(ModelError::Invalid("p must be at least 1".into()));
    }
    let model = ToyModel::hetero_quadratic(vec![Matrix::zeros(p, p); 2], vec![1.0, beta])?;
    let init = vec![Matrix::identity(p), Matrix::identity(p).scale(alpha / beta)];
    Ok((model, init))
}

/// Additive Gaussian gradient noise with `E‖ξ_ℓ‖²_F = σ_ℓ² / b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma: Vec<f64>,
    pub batch: usize,
}

impl NoiseModel {
    pub fn none(blocks: usize) -> Self {
        Self::uniform(blocks, 0.0, 1)
    }

    pub fn uniform(blocks: usize, sigma: f64, batch: usize) -> Self {
        Self {
            sigma: vec![sigma; blocks],
            batch,
        }
    }

    pub fn validate(&self, blocks: usize) -> Result<(), ModelError> {
        if self.batch == 0 {
            return Err(ModelError::Invalid("batch must be at least 1".into()));
        }
        if self.sigma.len() != blocks {
            return Err(ModelError::BlockCount {
                expected: blocks,
                got: self.sigma.len(),
            });
        }
        if let Some(s) = self.sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(ModelError::Invalid(format!(
                "sigma {s} must be non-negative"
            )));
        }
        Ok(())
    }

    pub fn is_silent(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0)
    }

    /// Per-entry standard deviation for block `layer` of shape `(m, n)`.
    pub fn entry_std(&self, layer: usize, rows: usize, cols: usize) -> f64 {
        self.sigma[layer] / ((self.batch * rows * cols) as f64).sqrt()
    }

    /// Adds one noise draw to `g` in place.
    pub fn perturb<R: Rng + ?Sized>(&self, layer: usize, g: &mut Matrix, rng: &mut R) {
        let std = self.entry_std(layer, g.rows(), g.cols());
        if std == 0.0 {
            return;
        }
        for v in g.as_mut_slice() {
            let z: f64 = rng.sample(StandardNormal);
            *v += std * z;
        }
    }
}

/// Exact gradient plus one noise draw per block, drawn block by block from
/// `rng`.
pub fn sample_gradient<R: Rng + ?Sized>(
    model: &ToyModel,
    w: &[Matrix],
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<Matrix>, ModelError> {
    noise.validate(model.num_blocks())?;
    let mut g = model.gradient(w)?;
    for (layer, gl) in g.iter_mut().enumerate() {
        noise.perturb(layer, gl, rng);
    }
    Ok(g)
}
