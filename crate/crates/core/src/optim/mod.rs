//! Matrix-parameter optimizers built on the Muon front end.
//!
//! One update routine, [`step_layer`], covers every row of the trust-ratio
//! design space. A [`VariantConfig`] pins down the four axes that distinguish
//! the rows: what the trust-ratio denominator measures, which shape factor
//! scales the polar direction, whether a one-time calibration constant is
//! used, and how weight decay enters the step.
//!
//! | variant          | denominator                | shape     | calibrated | weight decay |
//! |------------------|----------------------------|-----------|------------|--------------|
//! | `Fm1`            | `‖Q‖_F`                    | unit      | no         | decoupled    |
//! | `MuTrust`        | `‖M̃‖_F`                    | unit      | no         | decoupled    |
//! | `MuScale`        | `RMS(M̃)`                   | Moonlight | no         | decoupled    |
//! | `Fm3`            | `c ‖λW + sQ‖_F`            | Moonlight | yes        | decoupled    |
//! | `OrScale`        | `‖λW + Q‖_F`               | unit      | no         | coupled      |
//! | `OrScaleLm`      | `c ‖λW + sQ‖_F`            | Moonlight | yes        | coupled      |
//! | `Muon`           | ratio pinned to 1          | unit      | no         | coupled      |
//! | `MuonMoonlight`  | ratio pinned to 1          | Moonlight | no         | coupled      |
//!
//! Non-matrix parameters go through [`adamw_step`]; [`lamb_step`] is the
//! Adam-direction trust-ratio baseline.

mod adam;
mod orscale;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrixcore::{Matrix, MatrixError, NsPolynomial, DEFAULT_NS_ITERS};

pub use adam::{
    adamw_step, lamb_step, AdamConstants, AdamOutcome, AdamState, LambOptions, ZeroNormTrust,
};
pub use orscale::{
    calibration_constant, clip, denominator, nesterov_lookahead, real_update_norm, shape_factor,
    step_layer, trust_ratio, update_direction,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("calibrated denominator requested before the calibration constant was set")]
    MissingCalibration,
    #[error("step index must start at 1, got {0}")]
    InvalidStep(u64),
    #[error("non-finite weights after step {} on layer {}", record.step, record.layer)]
    NonFinite { record: Box<StepRecord> },
}

/// Global optimizer hyperparameters, shared by every layer of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub eta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub ns_iters: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub ns_poly: NsPolynomial,
}

impl HyperParams {
    /// General-purpose defaults: clip band `[0.5, 1.5]`.
    pub fn orscale() -> Self {
        Self {
            eta: 0.02,
            mu: 0.95,
            lambda: 0.0,
            r_min: 0.5,
            r_max: 1.5,
            ns_iters: DEFAULT_NS_ITERS,
            epsilon: 1e-6,
            ns_poly: NsPolynomial::CUBIC,
        }
    }

    /// Language-model defaults: clip band `[0.1, 5]`, `mu = 0.95`, `lambda = 0.1`.
    pub fn orscale_lm() -> Self {
        Self {
            r_min: 0.1,
            r_max: 5.0,
            lambda: 0.1,
            ..Self::orscale()
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let fail = |msg: String| Err(OptimError::InvalidHyper(msg));
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return fail(format!("mu must lie in [0, 1), got {}", self.mu));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.r_min.is_finite() && self.r_min > 0.0) {
            return fail(format!("r_min must be positive, got {}", self.r_min));
        }
        if !(self.r_max.is_finite() && self.r_max >= self.r_min) {
            return fail(format!(
                "r_max ({}) must be at least r_min ({})",
                self.r_max, self.r_min
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        Self::orscale()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[serde(rename = "orscale")]
    OrScale,
    #[serde(rename = "orscale_lm")]
    OrScaleLm,
    Muon,
    MuonMoonlight,
    #[serde(rename = "mutrust")]
    MuTrust,
    #[serde(rename = "muscale")]
    MuScale,
    Fm1,
    Fm3,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Fm1,
        Variant::MuTrust,
        Variant::MuScale,
        Variant::Fm3,
        Variant::OrScale,
        Variant::OrScaleLm,
        Variant::Muon,
        Variant::MuonMoonlight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::OrScale => "orscale",
            Variant::OrScaleLm => "orscale_lm",
            Variant::Muon => "muon",
            Variant::MuonMoonlight => "muon_moonlight",
            Variant::MuTrust => "mutrust",
            Variant::MuScale => "muscale",
            Variant::Fm1 => "fm1",
            Variant::Fm3 => "fm3",
        }
    }

    /// Design-space row letter; `None` for the two Muon baselines.
    pub fn design_row(self) -> Option<char> {
        match self {
            Variant::Fm1 => Some('A'),
            Variant::MuTrust => Some('B'),
            Variant::MuScale => Some('C'),
            Variant::Fm3 => Some('D'),
            Variant::OrScale | Variant::OrScaleLm => Some('E'),
            Variant::Muon | Variant::MuonMoonlight => None,
        }
    }

    pub fn config(self) -> VariantConfig {
        VariantConfig::from(self)
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| format!("unknown variant '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorKind {
    /// `c ‖λW + sQ‖_F + ε`, with `c = 1` when uncalibrated.
    RealUpdate,
    /// `‖Q‖_F + ε`.
    PolarNorm,
    /// `‖M̃‖_F + ε`.
    RawMomentumNorm,
    /// `RMS(M̃) + ε`.
    RawMomentumRms,
    /// `c ‖λW + sQ‖_F + ε`, always calibrated.
    CalibratedPolar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFactorKind {
    Unit,
    Moonlight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WdCoupling {
    /// `W ← W − η r̂ (λW + sQ)`.
    Coupled,
    /// `W ← (1 − ηλ) W − η r̂ sQ`.
    Decoupled,
    /// `W ← W − η r̂ sQ`.
    None,
}

/// One point of the design space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantConfig {
    pub variant: Variant,
    pub denominator: DenominatorKind,
    pub shape: ShapeFactorKind,
    pub calibrated: bool,
    pub coupling: WdCoupling,
    /// Pins `r̂ = 1` irrespective of the clip band (Muon baselines).
    pub unit_ratio: bool,
}

impl From<Variant> for VariantConfig {
    fn from(variant: Variant) -> Self {
        use DenominatorKind as D;
        use ShapeFactorKind as S;
        use WdCoupling as W;
        let (denominator, shape, calibrated, coupling, unit_ratio) = match variant {
            Variant::Fm1 => (D::PolarNorm, S::Unit, false, W::Decoupled, false),
            Variant::MuTrust => (D::RawMomentumNorm, S::Unit, false, W::Decoupled, false),
            Variant::MuScale => (D::RawMomentumRms, S::Moonlight, false, W::Decoupled, false),
            Variant::Fm3 => (D::CalibratedPolar, S::Moonlight, true, W::Decoupled, false),
            Variant::OrScale => (D::RealUpdate, S::Unit, false, W::Coupled, false),
            Variant::OrScaleLm => (D::RealUpdate, S::Moonlight, true, W::Coupled, false),
            Variant::Muon => (D::RealUpdate, S::Unit, false, W::Coupled, true),
            Variant::MuonMoonlight => (D::RealUpdate, S::Moonlight, false, W::Coupled, true),
        };
        Self {
            variant,
            denominator,
            shape,
            calibrated,
            coupling,
            unit_ratio,
        }
    }
}

impl VariantConfig {
    pub fn with_coupling(mut self, coupling: WdCoupling) -> Self {
        self.coupling = coupling;
        self
    }

    /// Clip band actually applied: `[1, 1]` for the Muon baselines.
    pub fn clip_band(&self, hp: &HyperParams) -> (f64, f64) {
        if self.unit_ratio {
            (1.0, 1.0)
        } else {
            (hp.r_min, hp.r_max)
        }
    }
}

/// Per-layer optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub momentum: Matrix,
    /// Set once, at the first step with a non-zero lookahead momentum.
    pub c_denom: Option<f64>,
    pub shape: (usize, usize),
    pub s: f64,
}

impl LayerState {
    pub fn new(cfg: &VariantConfig, rows: usize, cols: usize) -> Self {
        Self {
            momentum: Matrix::zeros(rows, cols),
            c_denom: None,
            shape: (rows, cols),
            s: shape_factor(cfg.shape, rows, cols),
        }
    }

    /// Stores the calibration constant if it is not set yet. Returns whether
    /// this call set it.
    pub fn maybe_calibrate(&mut self, w: &Matrix, q: &Matrix, lambda: f64, epsilon: f64) -> bool {
        if self.c_denom.is_some() {
            return false;
        }
        self.c_denom = Some(calibration_constant(w, q, self.s, lambda, epsilon));
        true
    }
}

/// Diagnostics emitted for one layer at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub layer: usize,
    pub step: u64,
    pub raw_ratio: f64,
    pub clipped_ratio: f64,
    /// `raw_ratio >= r_max` before clipping.
    pub saturated_high: bool,
    pub w_frob: f64,
    pub mtilde_frob: f64,
    pub q_frob: f64,
    pub d_frob: f64,
    pub s: f64,
    pub c_denom: Option<f64>,
}
