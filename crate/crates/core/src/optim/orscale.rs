use crate::matrixcore::{frob_norm, newton_schulz_with, rms, Matrix, NsOptions, EPS_NS};

use super::{
    DenominatorKind, HyperParams, LayerState, OptimError, ShapeFactorKind, StepRecord,
    VariantConfig, WdCoupling,
};

/// Nesterov lookahead: returns `(M, M̃)` with `M = μ M_prev + G` and
/// `M̃ = μ M + G`.
pub fn nesterov_lookahead(
    m_prev: &Matrix,
    g: &Matrix,
    mu: f64,
) -> Result<(Matrix, Matrix), OptimError> {
    m_prev.ensure_same_shape(g)?;
    let m_new = m_prev.lincomb(mu, g, 1.0);
    let m_tilde = m_new.lincomb(mu, g, 1.0);
    Ok((m_new, m_tilde))
}

/// 1 for the unit factor, `0.2 sqrt(max(m, n))` for Moonlight.
pub fn shape_factor(kind: ShapeFactorKind, rows: usize, cols: usize) -> f64 {
    match kind {
        ShapeFactorKind::Unit => 1.0,
        ShapeFactorKind::Moonlight => 0.2 * (rows.max(cols) as f64).sqrt(),
    }
}

/// Direction subtracted from the weights before the `η r̂` scaling.
pub fn update_direction(
    w: &Matrix,
    q: &Matrix,
    s: f64,
    lambda: f64,
    coupling: WdCoupling,
) -> Result<Matrix, OptimError> {
    w.ensure_same_shape(q)?;
    Ok(match coupling {
        WdCoupling::Coupled => w.zip_map(q, |wi, qi| lambda * wi + s * qi),
        WdCoupling::Decoupled | WdCoupling::None => q.map(|qi| s * qi),
    })
}

/// `‖λW + sQ‖_F` without materialising the sum.
pub fn real_update_norm(w: &Matrix, q: &Matrix, s: f64, lambda: f64) -> f64 {
    frob_norm(&w.zip_map(q, |wi, qi| lambda * wi + s * qi))
}

/// `‖W‖_F / (‖λW + sQ‖_F + ε)`.
pub fn calibration_constant(w: &Matrix, q: &Matrix, s: f64, lambda: f64, epsilon: f64) -> f64 {
    frob_norm(w) / (real_update_norm(w, q, s, lambda) + epsilon)
}

/// Trust-ratio denominator for one design-space row.
#[allow(clippy::too_many_arguments)]
pub fn denominator(
    cfg: &VariantConfig,
    w: &Matrix,
    m_tilde: &Matrix,
    q: &Matrix,
    s: f64,
    lambda: f64,
    c_denom: Option<f64>,
    epsilon: f64,
) -> Result<f64, OptimError> {
    w.ensure_same_shape(q)?;
    w.ensure_same_shape(m_tilde)?;
    let calibration = || {
        if cfg.calibrated {
            c_denom.ok_or(OptimError::MissingCalibration)
        } else {
            Ok(1.0)
        }
    };
    Ok(match cfg.denominator {
        DenominatorKind::RealUpdate => calibration()? * real_update_norm(w, q, s, lambda) + epsilon,
        DenominatorKind::CalibratedPolar => {
            c_denom.ok_or(OptimError::MissingCalibration)? * real_update_norm(w, q, s, lambda)
                + epsilon
        }
        DenominatorKind::PolarNorm => frob_norm(q) + epsilon,
        DenominatorKind::RawMomentumNorm => frob_norm(m_tilde) + epsilon,
        DenominatorKind::RawMomentumRms => rms(m_tilde) + epsilon,
    })
}

pub fn trust_ratio(w: &Matrix, denom: f64) -> f64 {
    frob_norm(w) / denom
}

pub fn clip(r: f64, r_min: f64, r_max: f64) -> f64 {
    r.max(r_min).min(r_max)
}

/// One optimizer step for a single matrix layer.
///
/// Runs momentum, Newton–Schulz, shape factor, lazy calibration, direction,
/// ratio, clip and update in that order. `t` is 1-based. A calibrated
/// variant leaves the layer untouched until the lookahead momentum is
/// non-zero, since that is when the calibration constant gets fixed.
pub fn step_layer(
    cfg: &VariantConfig,
    hp: &HyperParams,
    state: &mut LayerState,
    w: &Matrix,
    g: &Matrix,
    t: u64,
    layer: usize,
) -> Result<(Matrix, StepRecord), OptimError> {
    if t == 0 {
        return Err(OptimError::InvalidStep(t));
    }
    w.ensure_same_shape(g)?;
    w.ensure_same_shape(&state.momentum)?;

    let (m_new, m_tilde) = nesterov_lookahead(&state.momentum, g, hp.mu)?;
    state.momentum = m_new;
    let ns_opts = NsOptions {
        poly: hp.ns_poly,
        normalize: true,
    };
    let q = newton_schulz_with(&m_tilde, hp.ns_iters, &ns_opts);
    let s = state.s;
    let mtilde_frob = frob_norm(&m_tilde);
    let w_frob = frob_norm(w);

    if cfg.calibrated && state.c_denom.is_none() {
        if mtilde_frob > EPS_NS {
            state.maybe_calibrate(w, &q, hp.lambda, hp.epsilon);
        } else {
            let record = StepRecord {
                layer,
                step: t,
                raw_ratio: 1.0,
                clipped_ratio: 1.0,
                saturated_high: false,
                w_frob,
                mtilde_frob,
                q_frob: frob_norm(&q),
                d_frob: 0.0,
                s,
                c_denom: None,
            };
            return Ok((w.clone(), record));
        }
    }

    let d = update_direction(w, &q, s, hp.lambda, cfg.coupling)?;
    let denom = denominator(
        cfg,
        w,
        &m_tilde,
        &q,
        s,
        hp.lambda,
        state.c_denom,
        hp.epsilon,
    )?;
    let raw = w_frob / denom;
    let (lo, hi) = cfg.clip_band(hp);
    let r_hat = if cfg.unit_ratio {
        1.0
    } else {
        clip(raw, lo, hi)
    };

    let step = hp.eta * r_hat;
    let w_new = match cfg.coupling {
        WdCoupling::Coupled | WdCoupling::None => w.zip_map(&d, |wi, di| wi - step * di),
        WdCoupling::Decoupled => {
            let decay = 1.0 - hp.eta * hp.lambda;
            w.zip_map(&d, |wi, di| decay * wi - step * di)
        }
    };

    let record = StepRecord {
        layer,
        step: t,
        raw_ratio: raw,
        clipped_ratio: r_hat,
        saturated_high: raw >= hi,
        w_frob,
        mtilde_frob,
        q_frob: frob_norm(&q),
        d_frob: frob_norm(&d),
        s,
        c_denom: state.c_denom,
    };
    if !w_new.is_finite() {
        return Err(OptimError::NonFinite {
            record: Box::new(record),
        });
    }
    Ok((w_new, record))
}
