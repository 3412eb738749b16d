use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::matrixcore::Matrix;
use crate::models::{two_layer_toy, Mlp2Data, NoiseModel, ToyModel, MLP2_SAMPLES};
use crate::optim::{HyperParams, Variant, WdCoupling};
use crate::rng::{stream_rng, Stream};

use super::HarnessError;

/// Optimizer applied to the matrix blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Variant(Variant),
    AdamW,
    Lamb,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Variant(v) => v.name(),
            Method::AdamW => "adamw",
            Method::Lamb => "lamb",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::Variant(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adamw" => Ok(Method::AdamW),
            "lamb" => Ok(Method::Lamb),
            _ => s.parse().map(Method::Variant),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.name().to_string()
    }
}

impl From<Variant> for Method {
    fn from(v: Variant) -> Self {
        Method::Variant(v)
    }
}

/// Learning-rate multiplier over the run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    #[default]
    Constant,
    /// Linear warmup to 1, then cosine decay to `min_factor` at the last step.
    Cosine { warmup: u64, min_factor: f64 },
}

impl Schedule {
    pub fn factor(&self, t: u64, total: u64) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::Cosine { warmup, min_factor } => {
                if t <= warmup {
                    return t as f64 / warmup as f64;
                }
                let span = total.saturating_sub(warmup).max(1) as f64;
                let progress = ((t - warmup) as f64 / span).min(1.0);
                min_factor
                    + (1.0 - min_factor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

fn default_samples() -> usize {
    MLP2_SAMPLES
}

fn default_one() -> f64 {
    1.0
}

/// Objective plus initial point. Every random draw comes from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Targets `W*_ℓ ~ target_std · N(0, 1)`, start `W_ℓ ~ init_std_ℓ · N(0, 1)`.
    HeteroQuadratic {
        shapes: Vec<(usize, usize)>,
        smoothness: Vec<f64>,
        #[serde(default)]
        target_std: f64,
        init_std: Vec<f64>,
    },
    TwoLayerToy {
        alpha: f64,
        beta: f64,
        p: usize,
    },
    /// Designs with `N(0, 1/samples)` entries, planted solution `N(0, 1)`.
    LeastSquares {
        shapes: Vec<(usize, usize)>,
        samples: usize,
        init_std: f64,
    },
    Mlp2 {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_one")]
        separation: f64,
        #[serde(default = "default_one")]
        init_scale: f64,
    },
}

impl ModelSpec {
    pub fn num_blocks(&self) -> usize {
        match self {
            ModelSpec::HeteroQuadratic { shapes, .. } | ModelSpec::LeastSquares { shapes, .. } => {
                shapes.len()
            }
            ModelSpec::TwoLayerToy { .. } | ModelSpec::Mlp2 { .. } => 2,
        }
    }

    pub fn build(&self, seed: u64) -> Result<(ToyModel, Vec<Matrix>), HarnessError> {
        let mut data = stream_rng(seed, Stream::Data);
        let mut init = stream_rng(seed, Stream::Init);
        Ok(match self {
            ModelSpec::HeteroQuadratic {
                shapes,
                smoothness,
                target_std,
                init_std,
            } => {
                if init_std.len() != shapes.len() {
                    return Err(HarnessError::Config(format!(
                        "{} init_std values for {} blocks",
                        init_std.len(),
                        shapes.len()
                    )));
                }
                check_shapes(shapes)?;
                let targets = shapes
                    .iter()
                    .map(|&(m, n)| {
                        if *target_std == 0.0 {
                            Matrix::zeros(m, n)
                        } else {
                            Matrix::gaussian(m, n, *target_std, &mut data)
                        }
                    })
                    .collect();
                let w0 = shapes
                    .iter()
                    .zip(init_std)
                    .map(|(&(m, n), &std)| Matrix::gaussian(m, n, std, &mut init))
                    .collect();
                (ToyModel::hetero_quadratic(targets, smoothness.clone())?, w0)
            }
            ModelSpec::TwoLayerToy { alpha, beta, p } => two_layer_toy(*alpha, *beta, *p)?,
            ModelSpec::LeastSquares {
                shapes,
                samples,
                init_std,
            } => {
                check_shapes(shapes)?;
                if *samples == 0 {
                    return Err(HarnessError::Config("samples must be positive".into()));
                }
                let scale = 1.0 / (*samples as f64).sqrt();
                let mut designs = Vec::new();
                let mut solution = Vec::new();
                for &(m, n) in shapes {
                    designs.push(Matrix::gaussian(*samples, m, scale, &mut data));
                    solution.push(Matrix::gaussian(m, n, 1.0, &mut data));
                }
                let w0 = shapes
                    .iter()
                    .map(|&(m, n)| Matrix::gaussian(m, n, *init_std, &mut init))
                    .collect();
                (ToyModel::least_squares(designs, solution)?, w0)
            }
            ModelSpec::Mlp2 {
                samples,
                separation,
                init_scale,
            } => {
                if *samples == 0 {
                    return Err(HarnessError::Config("samples must be positive".into()));
                }
                let d = Mlp2Data::fixture(seed, *samples, *separation);
                let w0 = d.init(*init_scale, &mut init);
                (ToyModel::mlp2(d), w0)
            }
        })
    }
}

fn check_shapes(shapes: &[(usize, usize)]) -> Result<(), HarnessError> {
    if shapes.is_empty() {
        return Err(HarnessError::Config(
            "model needs at least one block".into(),
        ));
    }
    if shapes.iter().any(|&(m, n)| m == 0 || n == 0) {
        return Err(HarnessError::Config(
            "block dimensions must be positive".into(),
        ));
    }
    Ok(())
}

/// Multiplies every matrix block by `factor` right after step `after_step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rescale {
    pub after_step: u64,
    pub factor: f64,
}

fn default_log_every() -> u64 {
    1
}

/// One run, as stored in a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub id: String,
    pub method: Method,
    pub steps: u64,
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub parallel_layers: bool,
    /// Overrides the variant's weight-decay coupling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<WdCoupling>,
    /// Blocks optimised with AdamW instead of `method`.
    #[serde(default)]
    pub non_matrix: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescale: Option<Rescale>,
    pub hyper: HyperParams,
    #[serde(default)]
    pub schedule: Schedule,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
}

impl RunConfig {
    pub fn new(id: impl Into<String>, method: impl Into<Method>, model: ModelSpec) -> Self {
        let method = method.into();
        let hyper = match method {
            Method::Variant(Variant::OrScaleLm | Variant::Fm3) => HyperParams::orscale_lm(),
            _ => HyperParams::orscale(),
        };
        Self {
            id: id.into(),
            method,
            steps: 100,
            seed: 0,
            log_every: 1,
            output: None,
            parallel_layers: false,
            coupling: None,
            non_matrix: Vec::new(),
            rescale: None,
            hyper,
            schedule: Schedule::Constant,
            model,
            noise: None,
        }
    }

    pub fn with_steps(mut self, steps: u64) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_hyper(mut self, hyper: HyperParams) -> Self {
        self.hyper = hyper;
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(HarnessError::Config(format!(
                "invalid run id '{}'",
                self.id
            )));
        }
        if self.steps == 0 {
            return Err(HarnessError::Config("steps must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(HarnessError::Config("log_every must be at least 1".into()));
        }
        self.hyper
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let blocks = self.model.num_blocks();
        if let Some(&i) = self.non_matrix.iter().find(|&&i| i >= blocks) {
            return Err(HarnessError::Config(format!(
                "non_matrix index {i} out of range for {blocks} blocks"
            )));
        }
        if let Some(noise) = &self.noise {
            noise
                .validate(blocks)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if let Some(r) = &self.rescale {
            if !(r.factor.is_finite() && r.factor > 0.0) {
                return Err(HarnessError::Config(
                    "rescale factor must be positive".into(),
                ));
            }
        }
        if let Schedule::Cosine { warmup, min_factor } = self.schedule {
            if warmup >= self.steps || !(0.0..=1.0).contains(&min_factor) {
                return Err(HarnessError::Config("invalid cosine schedule".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_toml()?).map_err(|e| HarnessError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        let mut cfg = RunConfig::new(
            "demo",
            Variant::OrScaleLm,
            ModelSpec::HeteroQuadratic {
                shapes: vec![(4, 3), (2, 5)],
                smoothness: vec![1.0, 4.0],
                target_std: 0.5,
                init_std: vec![1.0, 0.25],
            },
        );
        cfg.noise = Some(NoiseModel::uniform(2, 0.1, 8));
        cfg.schedule = Schedule::Cosine {
            warmup: 10,
            min_factor: 0.1,
        };
        cfg
    }

    #[test]
    fn toml_round_trip() {
        let cfg = sample();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn parses_hand_written_file() {
        let text = r#"
id = "mlp"
method = "OrScale-LM"
steps = 20
seed = 3

[hyper]
eta = 0.05
mu = 0.9
lambda = 0.1
r_min = 0.1
r_max = 5.0
ns_iters = 5
epsilon = 1e-6

[model]
kind = "mlp2"
samples = 64
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.method, Method::Variant(Variant::OrScaleLm));
        assert_eq!(cfg.log_every, 1);
        assert_eq!(cfg.schedule, Schedule::Constant);
        let (model, w0) = cfg.model.build(cfg.seed).unwrap();
        assert_eq!(model.shapes(), &[(32, 16), (4, 32)]);
        assert_eq!(w0.len(), 2);
    }

    #[test]
    fn rejects_bad_configs() {
        let text = sample().to_toml().unwrap();
        assert!(RunConfig::from_toml(&text.replace("steps = 100", "steps = 0")).is_err());
        assert!(RunConfig::from_toml(&format!("bogus = 1\n{text}")).is_err());
        assert!(RunConfig::from_toml(&text.replace("orscale_lm", "sgd")).is_err());
        let mut cfg = sample();
        cfg.non_matrix = vec![5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn methods_parse() {
        assert_eq!("AdamW".parse::<Method>().unwrap(), Method::AdamW);
        assert_eq!("lamb".parse::<Method>().unwrap(), Method::Lamb);
        assert_eq!(
            "fm3".parse::<Method>().unwrap(),
            Method::Variant(Variant::Fm3)
        );
    }

    #[test]
    fn cosine_schedule_shape() {
        let s = Schedule::Cosine {
            warmup: 10,
            min_factor: 0.1,
        };
        assert_eq!(s.factor(5, 110), 0.5);
        assert_eq!(s.factor(10, 110), 1.0);
        assert!((s.factor(110, 110) - 0.1).abs() < 1e-15);
        assert_eq!(Schedule::Constant.factor(7, 10), 1.0);
    }

    #[test]
    fn builds_are_seeded() {
        let cfg = sample();
        let a = cfg.model.build(1).unwrap();
        assert_eq!(a, cfg.model.build(1).unwrap());
        assert_ne!(a.1, cfg.model.build(2).unwrap().1);
    }
}
