//! Measurable quantities computed from model oracles and run traces.

mod kappa;
mod trace;

use rayon::prelude::*;
use thiserror::Error;

use crate::matrixcore::{nuclear_norm, polar_exact, Matrix, MatrixError};
use crate::models::{ModelError, NoiseModel, ToyModel};
use crate::rng::{stream_rng, Stream};

pub use kappa::{
    brute_force_phi_max, hetero_stats, kappa_bound, kappa_eff, kappa_eff_geometric, kappa_layer,
    optimal_ratios, phi, KappaStats,
};
pub use trace::{RunTrace, StepLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("{0}")]
    Invalid(String),
}

/// `Ψ(W) = Σ_ℓ ‖∇_ℓ f(W)‖_* / √P`.
pub fn psi(model: &ToyModel, w: &[Matrix]) -> Result<f64, DiagError> {
    let g = model.gradient(w)?;
    Ok(psi_from_nuclear(
        &gradient_nuclear_norms(&g)?,
        model.total_rank(),
    ))
}

pub fn gradient_nuclear_norms(g: &[Matrix]) -> Result<Vec<f64>, DiagError> {
    g.iter()
        .map(|gl| nuclear_norm(gl).map_err(DiagError::from))
        .collect()
}

pub fn psi_from_nuclear(nuclear: &[f64], total_rank: usize) -> f64 {
    nuclear.iter().sum::<f64>() / (total_rank as f64).sqrt()
}

/// Frobenius analogue `Σ_ℓ ‖∇_ℓ f(W)‖_F / √P`; never exceeds [`psi`].
pub fn psi_frobenius(model: &ToyModel, w: &[Matrix]) -> Result<f64, DiagError> {
    let g = model.gradient(w)?;
    let total: f64 = g.iter().map(Matrix::frob_norm).sum();
    Ok(total / (model.total_rank() as f64).sqrt())
}

/// Per-layer `a_ℓ = ‖∇_ℓ f‖_*` and `b_ℓ = L_ℓ p_ℓ`. Needs known smoothness.
pub fn layer_constants(model: &ToyModel, w: &[Matrix]) -> Result<(Vec<f64>, Vec<f64>), DiagError> {
    let l = model
        .smoothness()
        .ok_or_else(|| DiagError::Invalid("model has no known smoothness constants".into()))?;
    let a = gradient_nuclear_norms(&model.gradient(w)?)?;
    let b = l
        .iter()
        .zip(model.ranks())
        .map(|(l, p)| l * p as f64)
        .collect();
    Ok((a, b))
}

/// Fraction of records whose raw ratio reached `r_max`, optionally
/// restricted to `layers`.
pub fn saturation_fraction(trace: &RunTrace, layers: Option<&[usize]>) -> Result<f64, DiagError> {
    let (mut hit, mut total) = (0usize, 0usize);
    for r in &trace.records {
        if layers.is_some_and(|ls| !ls.contains(&r.layer)) {
            continue;
        }
        total += 1;
        hit += usize::from(r.saturated_high);
    }
    if total == 0 {
        return Err(DiagError::Empty);
    }
    Ok(hit as f64 / total as f64)
}

/// `max_t ‖W_ℓ,t‖_F / ‖W_ℓ,0‖_F` over the logged trajectory and the final
/// weights.
pub fn weight_growth(trace: &RunTrace, layer: usize) -> Result<f64, DiagError> {
    let w0 = *trace.initial_w_frob.get(layer).ok_or(DiagError::Empty)?;
    if w0 == 0.0 {
        return Err(DiagError::ZeroDenominator);
    }
    let peak = trace
        .layer_records(layer)
        .map(|r| r.w_frob)
        .chain(trace.final_w_frob.get(layer).copied())
        .fold(w0, f64::max);
    Ok(peak / w0)
}

/// Largest [`weight_growth`] over every layer with records.
pub fn max_weight_growth(trace: &RunTrace) -> Result<f64, DiagError> {
    trace
        .layers()
        .into_iter()
        .map(|l| weight_growth(trace, l))
        .try_fold(f64::NEG_INFINITY, |acc, g| g.map(|g| acc.max(g)))
}

/// Monte-Carlo estimate for one block of `E⟨∇f, polar(∇f + ξ)⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentEstimate {
    pub lhs: f64,
    pub std_err: f64,
    /// `‖∇f‖_* − √p σ / √b`.
    pub rhs: f64,
    pub nuclear: f64,
}

impl DescentEstimate {
    pub fn holds(&self, sigmas: f64) -> bool {
        self.lhs + sigmas * self.std_err >= self.rhs
    }
}

/// Expected descent of one polar step under gradient noise, per block.
///
/// Trial `i` draws from its own stream so the result does not depend on the
/// thread count.
pub fn descent_check(
    model: &ToyModel,
    w: &[Matrix],
    noise: &NoiseModel,
    trials: usize,
    seed: u64,
) -> Result<Vec<DescentEstimate>, DiagError> {
    if trials < 2 {
        return Err(DiagError::Invalid("need at least two trials".into()));
    }
    noise.validate(model.num_blocks())?;
    let g = model.gradient(w)?;
    let samples: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = stream_rng(seed, Stream::Trial { index });
            g.iter()
                .enumerate()
                .map(|(l, gl)| {
                    let mut noisy = gl.clone();
                    noise.perturb(l, &mut noisy, &mut rng);
                    polar_exact(&noisy).map(|q| gl.dot(&q))
                })
                .collect::<Result<Vec<f64>, MatrixError>>()
        })
        .collect::<Result<_, _>>()?;
    let n = trials as f64;
    g.iter()
        .enumerate()
        .map(|(l, gl)| {
            let mean = samples.iter().map(|s| s[l]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[l] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let nuclear = nuclear_norm(gl)?;
            let (m, c) = gl.shape();
            let p = m.min(c) as f64;
            Ok(DescentEstimate {
                lhs: mean,
                std_err: (var / n).sqrt(),
                rhs: nuclear - p.sqrt() * noise.sigma[l] / (noise.batch as f64).sqrt(),
                nuclear,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64, DiagError> {
    if x.len() != y.len() {
        return Err(DiagError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(DiagError::Empty);
    }
    if x.iter().chain(y).any(|v| v.is_nan() || *v <= 0.0) {
        return Err(DiagError::Invalid(
            "log-log fit needs positive values".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(DiagError::ZeroDenominator);
    }
    Ok(sxy / sxx)
}

/// First logged step whose Ψ is at or below `target`.
pub fn steps_to_target(trace: &RunTrace, target: f64) -> Option<u64> {
    trace.logs.iter().find(|l| l.psi <= target).map(|l| l.step)
}
