use crate::models::NoiseModel;
use crate::optim::{HyperParams, Variant};

use super::{HarnessError, ModelSpec, Rescale, RunConfig};

pub const PRESET_NAMES: [&str; 12] = [
    "anchor",
    "ceiling",
    "saturate",
    "runaway",
    "kappa_toy",
    "slope",
    "width",
    "ablation",
    "lars",
    "gain",
    "limits",
    "descent",
];

/// A named group of runs. Some checks (`descent`, `kappa_toy`) are mostly
/// analytic and carry few or no runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetBundle {
    pub name: &'static str,
    pub description: &'static str,
    pub runs: Vec<RunConfig>,
}

/// Accepts `anchor`, `ANCHOR` or `P_ANCHOR`.
pub fn preset(name: &str) -> Result<PresetBundle, HarnessError> {
    let lower = name.to_ascii_lowercase().replace('-', "_");
    let key = lower.strip_prefix("p_").unwrap_or(&lower);
    let (name, description, runs) = match key {
        "anchor" => (
            "anchor",
            "first-step ratio of the calibrated variant",
            anchor(),
        ),
        "ceiling" => (
            "ceiling",
            "ratio limit after a large weight rescale",
            ceiling(),
        ),
        "saturate" => (
            "saturate",
            "clip saturation and its collapse to Muon",
            saturate(),
        ),
        "runaway" => (
            "runaway",
            "weight-norm growth with decoupled decay",
            runaway(),
        ),
        "kappa_toy" => ("kappa_toy", "two-layer optimal-gain cells", kappa_toy()),
        "slope" => ("slope", "Psi decay against horizon length", slope()),
        "width" => ("width", "first-step ratio under width doubling", width()),
        "ablation" => (
            "ablation",
            "every design-space row on one fixture",
            ablation(),
        ),
        "lars" => (
            "lars",
            "ratio tracks weight norm while decay is small",
            lars(),
        ),
        "gain" => (
            "gain",
            "steps to a Psi target over a shared step-size grid",
            gain(),
        ),
        "limits" => (
            "limits",
            "unit clip band reproduces the Muon baselines",
            limits(),
        ),
        "descent" => (
            "descent",
            "expected descent under gradient noise",
            Vec::new(),
        ),
        _ => return Err(HarnessError::UnknownPreset(name.to_string())),
    };
    Ok(PresetBundle {
        name,
        description,
        runs,
    })
}

/// Two-layer tanh classifier used by the saturation, runaway and ablation
/// presets.
pub fn mlp2_fixture() -> ModelSpec {
    ModelSpec::Mlp2 {
        samples: 256,
        separation: 0.5,
        init_scale: 1.0,
    }
}

pub(crate) fn quadratic(
    shapes: &[(usize, usize)],
    smoothness: &[f64],
    target_std: f64,
    init_std: &[f64],
) -> ModelSpec {
    ModelSpec::HeteroQuadratic {
        shapes: shapes.to_vec(),
        smoothness: smoothness.to_vec(),
        target_std,
        init_std: init_std.to_vec(),
    }
}

pub(crate) const ANCHOR_SHAPES: [(usize, usize); 6] =
    [(2, 2), (3, 7), (16, 16), (40, 9), (5, 33), (64, 48)];

fn anchor() -> Vec<RunConfig> {
    (0..3)
        .map(|seed| {
            let model = quadratic(&ANCHOR_SHAPES, &[1.0; 6], 1.0, &[1.0; 6]);
            RunConfig::new(format!("anchor_s{seed}"), Variant::OrScaleLm, model)
                .with_steps(3)
                .with_seed(seed)
        })
        .collect()
}

fn width() -> Vec<RunConfig> {
    [8usize, 16]
        .iter()
        .map(|&d| {
            let shapes = [(d, d), (d, 2 * d), (4 * d, d)];
            let model = quadratic(&shapes, &[1.0, 2.0, 0.5], 1.0, &[1.0; 3]);
            RunConfig::new(format!("width_d{d}"), Variant::OrScaleLm, model)
                .with_steps(3)
                .with_seed(4)
        })
        .collect()
}

pub(crate) const CEILING_FACTOR: f64 = 1e6;

fn ceiling() -> Vec<RunConfig> {
    let model = quadratic(&[(8, 8), (16, 4), (3, 12)], &[1.0; 3], 0.0, &[1.0; 3]);
    let mut cfg = RunConfig::new("ceiling", Variant::OrScaleLm, model)
        .with_steps(2)
        .with_seed(5);
    cfg.rescale = Some(Rescale {
        after_step: 1,
        factor: CEILING_FACTOR,
    });
    vec![cfg]
}

/// Step size and momentum of the saturation runs on the classifier.
pub(crate) const SATURATE_ETA: f64 = 0.2;
pub(crate) const SATURATE_MU: f64 = 0.9;
pub(crate) const SATURATE_STEPS: u64 = 300;

fn saturation_hyper() -> HyperParams {
    HyperParams {
        eta: SATURATE_ETA,
        mu: SATURATE_MU,
        lambda: 0.0,
        ..HyperParams::orscale()
    }
}

/// Quadratic where the raw-momentum ratio stays above `r_max` throughout.
pub(crate) fn collapse_pair() -> (RunConfig, RunConfig) {
    let model = quadratic(
        &[(6, 6), (10, 4), (4, 9)],
        &[0.05, 0.03, 0.08],
        1.0,
        &[1.0; 3],
    );
    let hp = HyperParams {
        eta: 0.02,
        mu: 0.5,
        lambda: 0.0,
        ..HyperParams::orscale()
    };
    let trust = RunConfig::new("collapse_mutrust", Variant::MuTrust, model.clone())
        .with_steps(200)
        .with_seed(6)
        .with_hyper(hp.clone());
    let muon = RunConfig::new("collapse_muon", Variant::Muon, model)
        .with_steps(200)
        .with_seed(6)
        .with_hyper(hp.clone().with_eta(hp.eta * hp.r_max));
    (trust, muon)
}

fn saturate() -> Vec<RunConfig> {
    let mut runs: Vec<RunConfig> = [Variant::MuTrust, Variant::MuScale]
        .into_iter()
        .map(|v| {
            RunConfig::new(format!("saturate_{}", v.name()), v, mlp2_fixture())
                .with_steps(SATURATE_STEPS)
                .with_seed(7)
                .with_hyper(saturation_hyper())
        })
        .collect();
    let (trust, muon) = collapse_pair();
    runs.push(trust);
    runs.push(muon);
    runs
}

pub(crate) const RUNAWAY_ETA: f64 = 0.05;
pub(crate) const RUNAWAY_LAMBDA: f64 = 0.55;
pub(crate) const RUNAWAY_STEPS: u64 = 500;
pub(crate) const RUNAWAY_SEED: u64 = 3;

fn runaway() -> Vec<RunConfig> {
    [Variant::Fm3, Variant::OrScaleLm]
        .into_iter()
        .map(|v| {
            let hp = HyperParams {
                eta: RUNAWAY_ETA,
                lambda: RUNAWAY_LAMBDA,
                ..HyperParams::orscale_lm()
            };
            RunConfig::new(format!("runaway_{}", v.name()), v, mlp2_fixture())
                .with_steps(RUNAWAY_STEPS)
                .with_seed(RUNAWAY_SEED)
                .with_hyper(hp)
        })
        .collect()
}

pub(crate) const KAPPA_CELLS: [(f64, f64); 3] = [(0.1, 1.0), (1.0, 10.0), (0.1, 10.0)];

fn kappa_toy() -> Vec<RunConfig> {
    KAPPA_CELLS
        .iter()
        .enumerate()
        .map(|(i, &(alpha, beta))| {
            let model = ModelSpec::TwoLayerToy { alpha, beta, p: 4 };
            let hp = HyperParams {
                eta: 0.01,
                lambda: 0.0,
                ..HyperParams::orscale()
            };
            RunConfig::new(format!("kappa_toy_{i}"), Variant::OrScale, model)
                .with_steps(50)
                .with_hyper(hp)
        })
        .collect()
}

pub(crate) const SLOPE_SHAPES: [(usize, usize); 3] = [(8, 8), (16, 8), (4, 12)];
pub(crate) const SLOPE_SMOOTHNESS: [f64; 3] = [1.0, 4.0, 0.25];
pub(crate) const SLOPE_SIGMA: f64 = 0.5;
pub(crate) const SLOPE_HORIZONS: [u64; 3] = [100, 1_000, 10_000];

pub(crate) fn slope_model() -> ModelSpec {
    quadratic(&SLOPE_SHAPES, &SLOPE_SMOOTHNESS, 1.0, &[1.0; 3])
}

/// `η(T) = sqrt(2 Δ₀ / (r_max² T Σ_ℓ L_ℓ p_ℓ))`.
pub(crate) fn slope_eta(f0_gap: f64, r_max: f64, horizon: u64) -> f64 {
    let lp: f64 = SLOPE_SHAPES
        .iter()
        .zip(SLOPE_SMOOTHNESS)
        .map(|(&(m, n), l)| l * m.min(n) as f64)
        .sum();
    (2.0 * f0_gap / (r_max * r_max * horizon as f64 * lp)).sqrt()
}

pub(crate) fn slope_config(horizon: u64, seed: u64) -> Result<RunConfig, HarnessError> {
    let model = slope_model();
    let (toy, w0) = model.build(seed)?;
    let f0 = toy.loss(&w0)?;
    let base = HyperParams {
        mu: 0.0,
        lambda: 0.0,
        ..HyperParams::orscale()
    };
    let eta = slope_eta(f0, base.r_max, horizon);
    let blocks = SLOPE_SHAPES.len();
    Ok(
        RunConfig::new(format!("slope_t{horizon}_s{seed}"), Variant::OrScale, model)
            .with_steps(horizon)
            .with_seed(seed)
            .with_hyper(base.with_eta(eta))
            .with_noise(NoiseModel::uniform(blocks, SLOPE_SIGMA, 1)),
    )
}

fn slope() -> Vec<RunConfig> {
    SLOPE_HORIZONS
        .iter()
        .map(|&t| slope_config(t, 10).expect("slope fixture builds"))
        .collect()
}

fn ablation() -> Vec<RunConfig> {
    let hp = HyperParams {
        eta: 0.02,
        ..HyperParams::orscale_lm()
    };
    let base = RunConfig::new("ablation", Variant::OrScaleLm, mlp2_fixture())
        .with_steps(200)
        .with_seed(11)
        .with_hyper(hp);
    ablation_runs(&base)
}

/// One run per design-space variant, sharing everything else with `base`.
/// Ids are `<base id>_<variant>`.
pub fn ablation_runs(base: &RunConfig) -> Vec<RunConfig> {
    Variant::ALL
        .into_iter()
        .map(|v| {
            let mut c = base.clone();
            c.id = format!("{}_{}", base.id, v.name());
            c.method = v.into();
            c
        })
        .collect()
}

/// Fixture names accepted by [`fixture`].
pub const FIXTURE_NAMES: [&str; 4] = ["mlp2", "quadratic", "two_layer", "least_squares"];

/// Model of a named fixture.
pub fn fixture(name: &str) -> Result<ModelSpec, HarnessError> {
    Ok(match name.to_ascii_lowercase().replace('-', "_").as_str() {
        "mlp2" => mlp2_fixture(),
        "quadratic" => slope_model(),
        "two_layer" => ModelSpec::TwoLayerToy {
            alpha: 0.1,
            beta: 10.0,
            p: 4,
        },
        "least_squares" => ModelSpec::LeastSquares {
            shapes: vec![(6, 3), (4, 5)],
            samples: 30,
            init_std: 1.0,
        },
        _ => return Err(HarnessError::Config(format!("unknown fixture '{name}'"))),
    })
}

pub(crate) fn lars_config() -> RunConfig {
    let model = quadratic(
        &[(16, 4), (24, 8), (32, 8)],
        &[1.0, 1.0, 1.0],
        0.0,
        &[1.0; 3],
    );
    let hp = HyperParams {
        eta: 0.005,
        lambda: 0.001,
        ns_iters: 30,
        ..HyperParams::orscale_lm()
    };
    RunConfig::new("lars", Variant::OrScaleLm, model)
        .with_steps(100)
        .with_seed(12)
        .with_hyper(hp)
}

fn lars() -> Vec<RunConfig> {
    vec![lars_config()]
}

pub(crate) const GAIN_ETAS: [f64; 5] = [0.003, 0.01, 0.03, 0.1, 0.3];
pub(crate) const GAIN_STEPS: u64 = 3000;
pub(crate) const GAIN_SHAPES: [(usize, usize); 4] = [(16, 16), (8, 8), (16, 4), (4, 4)];
pub(crate) const GAIN_SMOOTHNESS: [f64; 4] = [0.5, 2.0, 8.0, 1.0];

pub(crate) fn gain_config(variant: Variant, eta: f64) -> RunConfig {
    let model = quadratic(&GAIN_SHAPES, &GAIN_SMOOTHNESS, 0.0, &[2.0, 0.5, 0.2, 1.0]);
    let hp = HyperParams {
        eta,
        mu: 0.0,
        lambda: 0.0,
        ..HyperParams::orscale()
    };
    RunConfig::new(format!("gain_{}_{eta}", variant.name()), variant, model)
        .with_steps(GAIN_STEPS)
        .with_seed(13)
        .with_hyper(hp)
}

fn gain() -> Vec<RunConfig> {
    [Variant::Muon, Variant::OrScale]
        .into_iter()
        .flat_map(|v| GAIN_ETAS.iter().map(move |&eta| gain_config(v, eta)))
        .collect()
}

pub(crate) const LIMIT_STEPS: u64 = 50;

/// `(unit-band OrScale, Muon, unit-band OrScale-LM, Muon-Moonlight)`.
pub(crate) fn limit_configs() -> [RunConfig; 4] {
    let unit = |hp: HyperParams| HyperParams {
        r_min: 1.0,
        r_max: 1.0,
        ..hp
    };
    let plain = HyperParams {
        lambda: 0.0,
        ..HyperParams::orscale()
    };
    let lm = HyperParams::orscale_lm();
    let mk = |id: &str, v: Variant, hp: HyperParams| {
        RunConfig::new(id, v, mlp2_fixture())
            .with_steps(LIMIT_STEPS)
            .with_seed(14)
            .with_hyper(hp)
    };
    [
        mk("limit_orscale", Variant::OrScale, unit(plain.clone())),
        mk("limit_muon", Variant::Muon, plain),
        mk("limit_orscale_lm", Variant::OrScaleLm, unit(lm.clone())),
        mk("limit_muon_moonlight", Variant::MuonMoonlight, lm),
    ]
}

fn limits() -> Vec<RunConfig> {
    limit_configs().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_resolves_and_validates() {
        for name in PRESET_NAMES {
            let b = preset(name).unwrap();
            assert_eq!(b.name, name);
            for cfg in &b.runs {
                cfg.validate().unwrap();
                let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
                assert_eq!(&back, cfg);
            }
        }
        assert_eq!(preset("P_KAPPA_TOY").unwrap().runs.len(), 3);
        assert!(matches!(
            preset("nope"),
            Err(HarnessError::UnknownPreset(_))
        ));
    }

    #[test]
    fn ablation_reaches_every_design_row() {
        let b = preset("ablation").unwrap();
        for v in Variant::ALL {
            assert!(b.runs.iter().any(|c| c.method.variant() == Some(v)));
        }
    }

    #[test]
    fn slope_grid_and_width_pairs() {
        let b = preset("slope").unwrap();
        let steps: Vec<u64> = b.runs.iter().map(|c| c.steps).collect();
        assert_eq!(steps, SLOPE_HORIZONS);
        assert!(b.runs[0].hyper.eta > b.runs[2].hyper.eta);
        let w = preset("width").unwrap();
        assert_eq!(w.runs.len(), 2);
    }
}
