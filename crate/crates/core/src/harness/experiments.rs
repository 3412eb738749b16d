//! Measurements behind each preset. Every function returns raw metrics;
//! thresholds live with the caller.

use std::fmt;

use rand::Rng;

use crate::diagnostics::{
    brute_force_phi_max, descent_check, hetero_stats, kappa_layer, layer_constants,
    max_weight_growth, optimal_ratios, phi, saturation_fraction, steps_to_target, weight_growth,
    RunTrace,
};
use crate::matrixcore::{
    newton_schulz, nuclear_norm, operator_norm, polar_exact, singular_values, svd, Matrix,
};
use crate::models::{two_layer_toy, Mlp2Data, NoiseModel, ToyModel};
use crate::optim::{step_layer, HyperParams, LayerState, Variant};
use crate::rng::{stream_rng, Stream};

use super::presets::{
    collapse_pair, gain_config, lars_config, limit_configs, mlp2_fixture, slope_config,
    slope_model, ANCHOR_SHAPES, GAIN_ETAS, GAIN_SHAPES, GAIN_SMOOTHNESS, KAPPA_CELLS,
    SLOPE_HORIZONS,
};
use super::{csv_bytes, parse_csv, preset, run, HarnessError, ModelSpec, RunConfig, PRESET_NAMES};

/// Named metrics from one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub name: &'static str,
    pub metrics: Vec<(String, f64)>,
}

impl Report {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            metrics: Vec::new(),
        }
    }

    fn push(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.push((key.into(), value));
    }

    fn flag(&mut self, key: impl Into<String>, value: bool) {
        self.push(key, if value { 1.0 } else { 0.0 });
    }

    /// Panics on a missing key, which is a programming error.
    pub fn get(&self, key: &str) -> f64 {
        self.metrics
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("{} has no metric '{key}'", self.name))
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.name)?;
        for (k, v) in &self.metrics {
            write!(f, " {k}={v:.6e}")?;
        }
        Ok(())
    }
}

fn same_bits(a: &[Matrix], b: &[Matrix]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.shape() == y.shape()
                && x.as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

fn same_trajectory(a: &RunTrace, b: &RunTrace) -> bool {
    same_bits(&a.final_weights, &b.final_weights)
        && a.logs.len() == b.logs.len()
        && a.logs
            .iter()
            .zip(&b.logs)
            .all(|(x, y)| x.loss.to_bits() == y.loss.to_bits())
}

/// Polar-factor identities over random shapes up to `64×48`, a quarter of
/// them rank-deficient.
pub fn polar_algebra(count: usize, seed: u64) -> Result<Report, HarnessError> {
    let mut rng = stream_rng(seed, Stream::Trial { index: 0 });
    let (mut inner, mut dual, mut rank_err, mut op_err) =
        (0.0f64, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for i in 0..count {
        let (m, n) = match i {
            0 => (1, 1),
            1 => (64, 48),
            _ => (rng.random_range(1..=64), rng.random_range(1..=48)),
        };
        let a = if i % 4 == 3 && m.min(n) > 1 {
            let k = rng.random_range(1..m.min(n));
            Matrix::gaussian(m, k, 1.0, &mut rng).matmul(&Matrix::gaussian(k, n, 1.0, &mut rng))
        } else {
            Matrix::gaussian(m, n, 1.0, &mut rng)
        };
        let b = Matrix::gaussian(m, n, 1.0, &mut rng);
        let dec = svd(&a)?;
        let q = polar_exact(&a)?;
        let nuc = nuclear_norm(&a)?;
        inner = inner.max((a.dot(&q) - nuc).abs() / nuc);
        dual = dual.max(b.dot(&q).abs() - nuclear_norm(&b)?);
        rank_err = rank_err.max((q.dot(&q) - dec.rank() as f64).abs());
        op_err = op_err.max((operator_norm(&q)? - 1.0).abs());
    }
    let mut r = Report::new("polar_algebra");
    r.push("count", count as f64);
    r.push("inner_rel_err", inner);
    r.push("dual_excess", dual);
    r.push("rank_err", rank_err);
    r.push("op_norm_err", op_err);
    Ok(r)
}

/// Random `U diag(σ) Vᵀ` with `σ ∈ [1, 4]` and shorter side at most 12.
fn well_conditioned<R: Rng>(rng: &mut R) -> Result<Matrix, HarnessError> {
    let m = rng.random_range(2..=24);
    let n = rng.random_range(2..=12);
    let p = m.min(n);
    let u = polar_exact(&Matrix::gaussian(m, p, 1.0, rng))?;
    let v = polar_exact(&Matrix::gaussian(n, p, 1.0, rng))?;
    let sigma: Vec<f64> = (0..p).map(|_| rng.random_range(1.0..=4.0)).collect();
    Ok(u.matmul(&Matrix::from_diag(p, p, &sigma))
        .matmul(&v.transpose()))
}

pub fn ns_agreement(count: usize, seed: u64) -> Result<Report, HarnessError> {
    let mut rng = stream_rng(seed, Stream::Trial { index: 1 });
    let (mut err, mut lo, mut hi) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..count {
        let a = well_conditioned(&mut rng)?;
        err = err.max(newton_schulz(&a, 25).sub(&polar_exact(&a)?).frob_norm());
        for s in singular_values(&newton_schulz(&a, 5))? {
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    let mut r = Report::new("ns_agreement");
    r.push("max_err_k25", err);
    r.push("min_sv_k5", lo);
    r.push("max_sv_k5", hi);
    Ok(r)
}

fn first_step_ratio(m: usize, n: usize, rng: &mut impl Rng) -> Result<f64, HarnessError> {
    let cfg = Variant::OrScaleLm.config();
    let hp = HyperParams::orscale_lm();
    let w = Matrix::gaussian(m, n, 1.0, rng);
    let g = Matrix::gaussian(m, n, 1.0, rng);
    let mut st = LayerState::new(&cfg, m, n);
    let (_, rec) = step_layer(&cfg, &hp, &mut st, &w, &g, 1, 0)?;
    Ok(rec.raw_ratio)
}

/// First-step ratio of the calibrated variant, in units of `ε`.
pub fn anchor(shapes_per_seed: usize, seeds: &[u64]) -> Result<Report, HarnessError> {
    let eps = HyperParams::orscale_lm().epsilon;
    let (mut dev, mut wide_dev) = (0.0f64, 0.0f64);
    for &seed in seeds {
        let mut rng = stream_rng(seed, Stream::Trial { index: 2 });
        for _ in 0..shapes_per_seed {
            let (m, n) = (rng.random_range(1..=64), rng.random_range(1..=64));
            dev = dev.max((first_step_ratio(m, n, &mut rng)? - 1.0).abs() / eps);
            wide_dev = wide_dev.max((first_step_ratio(2 * m, 2 * n, &mut rng)? - 1.0).abs() / eps);
        }
    }
    let mut run_dev = 0.0f64;
    for name in ["anchor", "width"] {
        for cfg in preset(name)?.runs {
            let t = run(&cfg)?;
            for r in t.first_step_records() {
                run_dev = run_dev.max((r.raw_ratio - 1.0).abs() / eps);
            }
        }
    }
    let mut r = Report::new("anchor");
    r.push("max_dev_eps", dev);
    r.push("width_doubled_max_dev_eps", wide_dev);
    r.push("preset_runs_max_dev_eps", run_dev);
    r.push("preset_shapes", ANCHOR_SHAPES.len() as f64);
    Ok(r)
}

/// Raw ratio right after multiplying the weights by a large factor, against
/// `1/(c λ)`.
pub fn ceiling() -> Result<Report, HarnessError> {
    let cfg = preset("ceiling")?.runs.remove(0);
    let rescale = cfg.rescale.expect("ceiling preset rescales");
    let t = run(&cfg)?;
    let lambda = cfg.hyper.lambda;
    let (mut err, mut margin) = (0.0f64, f64::INFINITY);
    for rec in t.records.iter().filter(|r| r.step == 2) {
        let c = rec.c_denom.expect("calibrated after step 1");
        let ceiling = 1.0 / (c * lambda);
        err = err.max((rec.raw_ratio / ceiling - 1.0).abs());
        let (m, n) = cfg_shape(&cfg, rec.layer);
        let p = m.min(n) as f64;
        let w_before = rec.w_frob / rescale.factor;
        let needed = 1e4 * rec.s * p.sqrt() / (lambda * w_before);
        margin = margin.min(rescale.factor / needed);
    }
    let mut r = Report::new("ceiling");
    r.push("max_rel_err", err);
    r.push("scale_over_required", margin);
    Ok(r)
}

fn cfg_shape(cfg: &RunConfig, layer: usize) -> (usize, usize) {
    match &cfg.model {
        ModelSpec::HeteroQuadratic { shapes, .. } | ModelSpec::LeastSquares { shapes, .. } => {
            shapes[layer]
        }
        ModelSpec::TwoLayerToy { p, .. } => (*p, *p),
        ModelSpec::Mlp2 { .. } => Mlp2Data::fixture(0, 1, 1.0).shapes()[layer],
    }
}

/// Deviation of the raw ratio from `‖W_t‖/‖W_0‖` while weight decay is
/// negligible against the polar step.
pub fn early_lars() -> Result<Report, HarnessError> {
    let cfg = lars_config();
    let t = run(&cfg)?;
    let mut dev = 0.0f64;
    let mut regime = 0.0f64;
    for rec in &t.records {
        let growth = rec.w_frob / t.initial_w_frob[rec.layer];
        dev = dev.max((rec.raw_ratio / growth - 1.0).abs());
        let (m, n) = cfg_shape(&cfg, rec.layer);
        regime = regime.max(cfg.hyper.lambda * rec.w_frob / (rec.s * (m.min(n) as f64).sqrt()));
    }
    let mut r = Report::new("early_lars");
    r.push("max_rel_dev", dev);
    r.push("max_decay_over_step", regime);
    r.push("steps", cfg.steps as f64);
    Ok(r)
}

/// Unit clip band against the two Muon baselines.
pub fn baseline_limits() -> Result<Report, HarnessError> {
    let [a, b, c, d] = limit_configs();
    let mut r = Report::new("baseline_limits");
    r.flag("orscale_equals_muon", same_trajectory(&run(&a)?, &run(&b)?));
    r.flag(
        "orscale_lm_equals_muon_moonlight",
        same_trajectory(&run(&c)?, &run(&d)?),
    );
    r.push("steps", a.steps as f64);
    Ok(r)
}

/// Closed-form gains on the two-layer cells and the grid-search optimum.
pub fn kappa_toy(resolution: usize) -> Result<Report, HarnessError> {
    let mut r = Report::new("kappa_toy");
    let cell = (1000f64).ln() / (resolution - 1) as f64;
    for (i, &(alpha, beta)) in KAPPA_CELLS.iter().enumerate() {
        let (model, w0) = two_layer_toy(alpha, beta, 4)?;
        let (a, b) = layer_constants(&model, &w0)?;
        let muon = phi(&[1.0, 1.0], &a, &b)?;
        let (rstar, best) = brute_force_phi_max(&a, &b, resolution)?;
        let opt = optimal_ratios(&a, &b);
        let loc = ((rstar[1] / rstar[0]).ln() - (opt[1] / opt[0]).ln()).abs() / cell;
        r.push(format!("kappa_layer_{i}"), kappa_layer(alpha, beta));
        r.push(format!("grid_gain_{i}"), best / muon);
        r.push(format!("location_cells_{i}"), loc);
    }
    Ok(r)
}

/// Collapse of a fully saturated trust ratio to Muon at `η r_max`, `Φ`
/// scale invariance, and saturation on the classifier.
pub fn collapse(scale_trials: usize, seed: u64) -> Result<Report, HarnessError> {
    let mut r = Report::new("collapse");
    let (trust, muon) = collapse_pair();
    let tt = run(&trust)?;
    r.push("fixture_saturation", saturation_fraction(&tt, None)?);
    r.flag("trace_equals_muon", same_trajectory(&tt, &run(&muon)?));

    let mut rng = stream_rng(seed, Stream::Trial { index: 3 });
    let mut worst = 0.0f64;
    for _ in 0..scale_trials {
        let h = rng.random_range(2..=6);
        let draw = |rng: &mut crate::rng::StreamRng| -> Vec<f64> {
            (0..h).map(|_| rng.random_range(0.01..10.0)).collect()
        };
        let (rhat, a, b) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let c = (rng.random_range(-3.0..3.0f64)).exp();
        let scaled: Vec<f64> = rhat.iter().map(|x| c * x).collect();
        let p = phi(&rhat, &a, &b)?;
        worst = worst.max((phi(&scaled, &a, &b)? - p).abs() / p);
    }
    r.push("phi_scale_max_rel", worst);

    for cfg in preset("saturate")?
        .runs
        .iter()
        .filter(|c| c.id.starts_with("saturate_"))
    {
        let t = run(cfg)?;
        r.push(
            format!("{}_saturation", cfg.method),
            saturation_fraction(&t, None)?,
        );
    }
    Ok(r)
}

/// Largest weight-norm growth of the decoupled and coupled calibrated
/// variants on the classifier.
pub fn runaway() -> Result<Report, HarnessError> {
    let mut r = Report::new("runaway");
    for cfg in preset("runaway")?.runs {
        let t = run(&cfg)?;
        r.push(format!("{}_max_growth", cfg.method), max_weight_growth(&t)?);
        for l in t.layers() {
            r.push(format!("{}_growth_l{l}", cfg.method), weight_growth(&t, l)?);
        }
        r.push(format!("{}_final_loss", cfg.method), t.final_loss);
    }
    Ok(r)
}

/// Monte-Carlo descent against its lower bound at three noise levels per
/// fixture. Levels are fractions of the per-layer noise at which the bound
/// reaches zero.
pub fn descent(trials: usize, seed: u64) -> Result<Report, HarnessError> {
    let batch = 4;
    let (toy, toy_w) = two_layer_toy(0.5, 2.0, 4)?;
    let (quad, quad_w) = slope_model().build(0)?;
    let mut r = Report::new("descent");
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    for (fi, (model, w)) in [(&toy, &toy_w), (&quad, &quad_w)].into_iter().enumerate() {
        let g = model.gradient(w)?;
        for (ni, frac) in [0.25, 0.5, 0.9].into_iter().enumerate() {
            let sigma = g
                .iter()
                .zip(model.ranks())
                .map(|(gl, p)| {
                    Ok(frac * nuclear_norm(gl)? * (batch as f64).sqrt() / (p as f64).sqrt())
                })
                .collect::<Result<Vec<f64>, HarnessError>>()?;
            let noise = NoiseModel { sigma, batch };
            let est = descent_check(model, w, &noise, trials, seed + (fi * 3 + ni) as u64)?;
            for e in est {
                cases += 1;
                worst = worst.min((e.lhs - e.rhs) / e.std_err.max(f64::MIN_POSITIVE));
            }
        }
    }
    r.push("cases", cases as f64);
    r.push("min_margin_std_err", worst);
    Ok(r)
}

/// Mean Ψ over the trajectory for each horizon, averaged over seeds, and the
/// fitted log-log slope.
pub fn convergence_slope(seeds: &[u64]) -> Result<Report, HarnessError> {
    let mut r = Report::new("convergence_slope");
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &t in &SLOPE_HORIZONS {
        let mut acc = 0.0;
        for &seed in seeds {
            let trace = run(&slope_config(t, seed)?)?;
            acc += trace.logs.iter().map(|l| l.psi).sum::<f64>() / trace.logs.len() as f64;
        }
        let mean = acc / seeds.len() as f64;
        r.push(format!("mean_psi_t{t}"), mean);
        xs.push(t as f64);
        ys.push(mean);
    }
    r.push("slope", crate::diagnostics::loglog_slope(&xs, &ys)?);
    Ok(r)
}

/// Steps to target, step size and trace of the fastest run.
type Champion = (u64, f64, RunTrace);

/// Steps to a Ψ target at each method's best step size, plus the
/// heterogeneity statistics of the best trust-ratio run.
pub fn layer_gain(target_fraction: f64) -> Result<Report, HarnessError> {
    let mut r = Report::new("layer_gain");
    let mut best: Vec<(Variant, Option<Champion>)> = Vec::new();
    for v in [Variant::Muon, Variant::OrScale] {
        let mut champion: Option<Champion> = None;
        for &eta in &GAIN_ETAS {
            let t = match run(&gain_config(v, eta)) {
                Ok(t) => t,
                Err(HarnessError::NonFinite { .. }) => continue,
                Err(e) => return Err(e),
            };
            let target = target_fraction * t.logs[0].psi;
            if let Some(steps) = steps_to_target(&t, target) {
                if champion.as_ref().is_none_or(|c| steps < c.0) {
                    champion = Some((steps, eta, t));
                }
            }
        }
        best.push((v, champion));
    }
    for (v, c) in &best {
        let (steps, eta) = c
            .as_ref()
            .map_or((f64::INFINITY, f64::NAN), |c| (c.0 as f64, c.1));
        r.push(format!("{}_best_steps", v.name()), steps);
        r.push(format!("{}_best_eta", v.name()), eta);
    }
    let lp: Vec<f64> = GAIN_SHAPES
        .iter()
        .zip(GAIN_SMOOTHNESS)
        .map(|(&(m, n), l)| l * m.min(n) as f64)
        .collect();
    let (mut nu, mut rho, mut both, mut n) = (0.0, 0.0, 0usize, 0usize);
    if let Some((steps, _, t)) = &best[1].1 {
        for log in t.logs.iter().filter(|l| l.step < *steps) {
            let rhat: Vec<f64> = t
                .records
                .iter()
                .filter(|rec| rec.step == log.step)
                .map(|rec| rec.clipped_ratio)
                .collect();
            let s = hetero_stats(&rhat, &log.grad_nuclear, &lp)?;
            nu += s.nu_r;
            rho += s.rho;
            both += usize::from(s.heterogeneous() && s.aligned());
            n += 1;
        }
    }
    let n_f = n.max(1) as f64;
    r.push("orscale_mean_nu_r", nu / n_f);
    r.push("orscale_mean_rho", rho / n_f);
    r.push("orscale_s1_s2_fraction", both as f64 / n_f);
    Ok(r)
}

fn random_point<R: Rng>(model: &ToyModel, rng: &mut R) -> Vec<Matrix> {
    model
        .shapes()
        .iter()
        .map(|&(m, n)| Matrix::gaussian(m, n, 1.0 / (n as f64).sqrt(), rng))
        .collect()
}

/// Worst block-wise central-difference error per model over `points`
/// random points.
pub fn gradient_oracle(points: u64, seed: u64) -> Result<Report, HarnessError> {
    let (quad, _) = slope_model().build(seed)?;
    let (ls, _) = ModelSpec::LeastSquares {
        shapes: vec![(6, 3), (4, 5)],
        samples: 30,
        init_std: 1.0,
    }
    .build(seed)?;
    let (mlp, _) = mlp2_fixture().build(seed)?;
    let mut r = Report::new("gradient_oracle");
    for (name, model) in [
        ("hetero_quadratic", &quad),
        ("least_squares", &ls),
        ("mlp2", &mlp),
    ] {
        let worst = (0..points)
            .map(|i| {
                let mut rng = stream_rng(seed, Stream::Trial { index: 100 + i });
                model.gradient_check(&random_point(model, &mut rng), 1e-5)
            })
            .try_fold(0.0f64, |acc, e| e.map(|e| acc.max(e)))?;
        r.push(format!("{name}_max_rel_err"), worst);
    }
    Ok(r)
}

/// Byte-identical reruns, layer-parallel equivalence and round trips.
pub fn determinism() -> Result<Report, HarnessError> {
    let mut r = Report::new("determinism");
    let mut cfg = slope_config(100, 1)?;
    let a = csv_bytes(&run(&cfg)?)?;
    r.flag("rerun_identical", a == csv_bytes(&run(&cfg)?)?);
    cfg.parallel_layers = true;
    r.flag("parallel_identical", a == csv_bytes(&run(&cfg)?)?);

    let mut mlp = RunConfig::new("det_mlp", Variant::OrScaleLm, mlp2_fixture()).with_steps(20);
    mlp.noise = Some(NoiseModel::uniform(2, 0.1, 8));
    let trace = run(&mlp)?;
    let bytes = csv_bytes(&trace)?;
    let rows = parse_csv(bytes.as_slice())?;
    let exact = rows.len() == trace.records.len()
        && rows.iter().zip(&trace.records).all(|(row, rec)| {
            let log = trace
                .logs
                .iter()
                .find(|l| l.step == rec.step)
                .expect("logged");
            row.step == rec.step
                && row.layer == rec.layer
                && row.raw_ratio.to_bits() == rec.raw_ratio.to_bits()
                && row.clipped_ratio.to_bits() == rec.clipped_ratio.to_bits()
                && row.saturated_high == rec.saturated_high
                && row.w_frob.to_bits() == rec.w_frob.to_bits()
                && row.mtilde_frob.to_bits() == rec.mtilde_frob.to_bits()
                && row.q_frob.to_bits() == rec.q_frob.to_bits()
                && row.d_frob.to_bits() == rec.d_frob.to_bits()
                && row.s.to_bits() == rec.s.to_bits()
                && row.c_denom.map(f64::to_bits) == rec.c_denom.map(f64::to_bits)
                && row.loss.to_bits() == log.loss.to_bits()
                && row.psi.to_bits() == log.psi.to_bits()
        });
    r.flag("csv_round_trip", exact);

    let mut configs_ok = true;
    for name in PRESET_NAMES {
        for c in preset(name)?.runs {
            let text = c.to_toml()?;
            let back = RunConfig::from_toml(&text)?;
            configs_ok &= back == c && back.to_toml()? == text;
        }
    }
    r.flag("config_round_trip", configs_ok);
    Ok(r)
}

/// Metrics for a preset name, for the CLI.
pub fn evaluate(name: &str) -> Result<Vec<Report>, HarnessError> {
    let b = preset(name)?;
    Ok(match b.name {
        "anchor" | "width" => vec![anchor(20, &[0, 1, 2])?],
        "ceiling" => vec![ceiling()?],
        "saturate" => vec![collapse(100, 0)?],
        "runaway" => vec![runaway()?],
        "kappa_toy" => vec![kappa_toy(601)?],
        "slope" => vec![convergence_slope(&[0, 1, 2])?],
        "lars" => vec![early_lars()?],
        "gain" => vec![layer_gain(0.01)?],
        "limits" => vec![baseline_limits()?],
        "descent" => vec![descent(10_000, 0)?],
        _ => Vec::new(),
    })
}
