use serde::{Deserialize, Serialize};

use crate::matrixcore::{frob_norm, Matrix};

use super::{HyperParams, OptimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConstants {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub bias_correction: bool,
}

impl Default for AdamConstants {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            bias_correction: true,
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
        }
    }
}

/// Policy when `‖W‖` or the update norm is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroNormTrust {
    #[default]
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LambOptions {
    pub adam: AdamConstants,
    pub zero_norm: ZeroNormTrust,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamOutcome {
    pub w: Matrix,
    /// Frobenius norm of the applied direction before `η`.
    pub direction_frob: f64,
    /// Frobenius norm of the first moment after the update.
    pub moment_frob: f64,
    /// Layer-wise trust ratio; 1 for AdamW.
    pub trust: f64,
}

fn adam_direction(
    state: &mut AdamState,
    g: &Matrix,
    c: &AdamConstants,
    t: u64,
) -> Result<Matrix, OptimError> {
    if t == 0 {
        return Err(OptimError::InvalidStep(t));
    }
    state.m.ensure_same_shape(g)?;
    state.m = state.m.lincomb(c.beta1, g, 1.0 - c.beta1);
    state.v = state
        .v
        .zip_map(g, |vi, gi| c.beta2 * vi + (1.0 - c.beta2) * gi * gi);
    let (bc1, bc2) = if c.bias_correction {
        let t = t.min(i32::MAX as u64) as i32;
        (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t))
    } else {
        (1.0, 1.0)
    };
    Ok(state
        .m
        .zip_map(&state.v, |mi, vi| (mi / bc1) / ((vi / bc2).sqrt() + c.eps)))
}

/// Decoupled AdamW step; `t` is 1-based.
pub fn adamw_step(
    state: &mut AdamState,
    w: &Matrix,
    g: &Matrix,
    hp: &HyperParams,
    t: u64,
    c: &AdamConstants,
) -> Result<AdamOutcome, OptimError> {
    w.ensure_same_shape(g)?;
    let u = adam_direction(state, g, c, t)?;
    let decay = 1.0 - hp.eta * hp.lambda;
    let w_new = w.zip_map(&u, |wi, ui| decay * wi - hp.eta * ui);
    Ok(AdamOutcome {
        w: w_new,
        direction_frob: frob_norm(&u),
        moment_frob: frob_norm(&state.m),
        trust: 1.0,
    })
}

/// LAMB step: `W ← W − η φ (u + λW)` with `φ = ‖W‖ / (‖u + λW‖ + ε)`.
pub fn lamb_step(
    state: &mut AdamState,
    w: &Matrix,
    g: &Matrix,
    hp: &HyperParams,
    t: u64,
    opts: &LambOptions,
) -> Result<AdamOutcome, OptimError> {
    w.ensure_same_shape(g)?;
    let u = adam_direction(state, g, &opts.adam, t)?;
    let d = u.zip_map(w, |ui, wi| ui + hp.lambda * wi);
    let (w_norm, d_norm) = (frob_norm(w), frob_norm(&d));
    let trust = if w_norm == 0.0 || d_norm == 0.0 {
        match opts.zero_norm {
            ZeroNormTrust::Zero => 0.0,
            ZeroNormTrust::One => 1.0,
        }
    } else {
        w_norm / (d_norm + hp.epsilon)
    };
    let step = hp.eta * trust;
    Ok(AdamOutcome {
        w: w.zip_map(&d, |wi, di| wi - step * di),
        direction_frob: d_norm,
        moment_frob: frob_norm(&state.m),
        trust,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::new(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_is_pure_decay() {
        let hp = HyperParams {
            eta: 0.1,
            lambda: 0.5,
            ..HyperParams::orscale()
        };
        let mut st = AdamState::new(1, 1);
        let out = adamw_step(
            &mut st,
            &scalar(2.0),
            &scalar(0.0),
            &hp,
            1,
            &AdamConstants::default(),
        )
        .unwrap();
        assert!((out.w.get(0, 0) - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_eta() {
        let hp = HyperParams {
            eta: 0.01,
            lambda: 0.0,
            ..HyperParams::orscale()
        };
        for g in [1e-3, 1.0, -50.0] {
            let mut st = AdamState::new(1, 1);
            let out = adamw_step(
                &mut st,
                &scalar(1.0),
                &scalar(g),
                &hp,
                1,
                &AdamConstants::default(),
            )
            .unwrap();
            let moved = 1.0 - out.w.get(0, 0);
            assert!((moved.abs() - 0.01).abs() < 1e-7, "{moved}");
            assert_eq!(moved.signum(), g.signum());
        }
    }

    #[test]
    fn lamb_scalar_trust() {
        let hp = HyperParams {
            eta: 0.1,
            lambda: 0.0,
            epsilon: 1e-12,
            ..HyperParams::orscale()
        };
        let mut st = AdamState::new(1, 1);
        let out = lamb_step(
            &mut st,
            &scalar(2.0),
            &scalar(3.0),
            &hp,
            1,
            &LambOptions::default(),
        )
        .unwrap();
        // first bias-corrected Adam direction is ~sign(g) = 1
        assert!((out.trust - 2.0).abs() < 1e-6);
        assert!((out.w.get(0, 0) - 1.8).abs() < 1e-6);
    }

    #[test]
    fn lamb_zero_weight_policy() {
        let hp = HyperParams::orscale();
        let w = Matrix::zeros(2, 2);
        let g = Matrix::identity(2);
        let mut st = AdamState::new(2, 2);
        let out = lamb_step(&mut st, &w, &g, &hp, 1, &LambOptions::default()).unwrap();
        assert_eq!(out.trust, 0.0);
        assert!(out.w.is_zero());
        let opts = LambOptions {
            zero_norm: ZeroNormTrust::One,
            ..LambOptions::default()
        };
        let mut st = AdamState::new(2, 2);
        let out = lamb_step(&mut st, &w, &g, &hp, 1, &opts).unwrap();
        assert_eq!(out.trust, 1.0);
        assert!(!out.w.is_zero());
    }

    #[test]
    fn rejects_step_zero() {
        let mut st = AdamState::new(1, 1);
        let hp = HyperParams::orscale();
        assert!(adamw_step(
            &mut st,
            &scalar(1.0),
            &scalar(1.0),
            &hp,
            0,
            &AdamConstants::default()
        )
        .is_err());
    }
}
