use rayon::prelude::*;

use crate::diagnostics::{gradient_nuclear_norms, psi_from_nuclear, RunTrace, StepLog};
use crate::matrixcore::{frob_norm, Matrix};
use crate::models::NoiseModel;
use crate::optim::{
    adamw_step, lamb_step, step_layer, AdamConstants, AdamState, HyperParams, LambOptions,
    LayerState, OptimError, StepRecord, VariantConfig,
};
use crate::rng::{stream_rng, Stream, StreamRng};

use super::{HarnessError, Method, RunConfig};

enum LayerOpt {
    Matrix(VariantConfig, LayerState),
    AdamW(AdamState),
    Lamb(AdamState),
}

fn step_one(
    opt: &mut LayerOpt,
    hp: &HyperParams,
    w: &Matrix,
    g: &Matrix,
    t: u64,
    layer: usize,
) -> Result<(Matrix, Option<StepRecord>), OptimError> {
    match opt {
        LayerOpt::Matrix(cfg, state) => {
            step_layer(cfg, hp, state, w, g, t, layer).map(|(w, r)| (w, Some(r)))
        }
        LayerOpt::AdamW(state) => {
            adamw_step(state, w, g, hp, t, &AdamConstants::default()).map(|o| (o.w, None))
        }
        LayerOpt::Lamb(state) => {
            let w_frob = frob_norm(w);
            let out = lamb_step(state, w, g, hp, t, &LambOptions::default())?;
            let record = StepRecord {
                layer,
                step: t,
                raw_ratio: out.trust,
                clipped_ratio: out.trust,
                saturated_high: false,
                w_frob,
                mtilde_frob: out.moment_frob,
                q_frob: out.direction_frob,
                d_frob: out.direction_frob,
                s: 1.0,
                c_denom: None,
            };
            if !out.w.is_finite() {
                return Err(OptimError::NonFinite {
                    record: Box::new(record),
                });
            }
            Ok((out.w, Some(record)))
        }
    }
}

fn is_logged(t: u64, cfg: &RunConfig) -> bool {
    t == 1 || t.is_multiple_of(cfg.log_every) || t == cfg.steps
}

/// Executes `config.steps` optimizer steps.
///
/// On a non-finite update the trace gathered so far, including the record of
/// the failing layer, comes back inside [`HarnessError::NonFinite`].
pub fn run(config: &RunConfig) -> Result<RunTrace, HarnessError> {
    config.validate()?;
    let (model, mut w) = config.model.build(config.seed)?;
    let blocks = model.num_blocks();
    let noise = config
        .noise
        .clone()
        .unwrap_or_else(|| NoiseModel::none(blocks));

    let mut opts: Vec<LayerOpt> = w
        .iter()
        .enumerate()
        .map(|(l, wl)| {
            let (m, n) = wl.shape();
            if config.non_matrix.contains(&l) {
                return LayerOpt::AdamW(AdamState::new(m, n));
            }
            match config.method {
                Method::Variant(v) => {
                    let mut vc = v.config();
                    if let Some(c) = config.coupling {
                        vc = vc.with_coupling(c);
                    }
                    LayerOpt::Matrix(vc, LayerState::new(&vc, m, n))
                }
                Method::AdamW => LayerOpt::AdamW(AdamState::new(m, n)),
                Method::Lamb => LayerOpt::Lamb(AdamState::new(m, n)),
            }
        })
        .collect();
    let mut noise_rngs: Vec<StreamRng> = (0..blocks)
        .map(|layer| stream_rng(config.seed, Stream::Noise { layer }))
        .collect();

    let mut trace = RunTrace {
        initial_w_frob: w.iter().map(frob_norm).collect(),
        seed: config.seed,
        config: Some(config.clone()),
        ..RunTrace::default()
    };
    let total_rank = model.total_rank();

    for t in 1..=config.steps {
        let (loss, mut grads) = model.loss_and_gradient(&w)?;
        let logged = is_logged(t, config);
        if logged {
            let nuclear = gradient_nuclear_norms(&grads)?;
            trace.logs.push(StepLog {
                step: t,
                loss,
                psi: psi_from_nuclear(&nuclear, total_rank),
                grad_nuclear: nuclear,
            });
        }
        if !noise.is_silent() {
            for (l, (g, rng)) in grads.iter_mut().zip(&mut noise_rngs).enumerate() {
                noise.perturb(l, g, rng);
            }
        }
        let hp = config
            .hyper
            .clone()
            .with_eta(config.hyper.eta * config.schedule.factor(t, config.steps));

        let results: Vec<_> = if config.parallel_layers {
            opts.par_iter_mut()
                .zip(w.par_iter())
                .zip(grads.par_iter())
                .enumerate()
                .map(|(l, ((opt, wl), gl))| step_one(opt, &hp, wl, gl, t, l))
                .collect()
        } else {
            opts.iter_mut()
                .zip(&w)
                .zip(&grads)
                .enumerate()
                .map(|(l, ((opt, wl), gl))| step_one(opt, &hp, wl, gl, t, l))
                .collect()
        };

        let mut failure = None;
        let mut records = Vec::new();
        for (l, res) in results.into_iter().enumerate() {
            match res {
                Ok((wl, rec)) => {
                    w[l] = wl;
                    records.extend(rec);
                }
                Err(OptimError::NonFinite { record }) => {
                    records.push(*record);
                    failure.get_or_insert(l);
                }
                Err(e) => return Err(e.into()),
            }
        }
        if logged || failure.is_some() {
            trace.records.extend(records);
        }
        if failure.is_some() {
            trace.aborted_at = Some(t);
            trace.final_w_frob = w.iter().map(frob_norm).collect();
            trace.final_weights = w;
            trace.final_loss = f64::NAN;
            trace.final_psi = f64::NAN;
            return Err(HarnessError::NonFinite {
                step: t,
                trace: Box::new(trace),
            });
        }
        if let Some(r) = config.rescale {
            if r.after_step == t {
                for (l, wl) in w.iter_mut().enumerate() {
                    if matches!(opts[l], LayerOpt::Matrix(..) | LayerOpt::Lamb(_)) {
                        *wl = wl.scale(r.factor);
                    }
                }
            }
        }
    }

    let (loss, grads) = model.loss_and_gradient(&w)?;
    trace.final_loss = loss;
    trace.final_psi = psi_from_nuclear(&gradient_nuclear_norms(&grads)?, total_rank);
    trace.final_w_frob = w.iter().map(frob_norm).collect();
    trace.final_weights = w;
    Ok(trace)
}
