use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;

use super::{CovariancePredictor, GaussianBelief, ParticleEnsemble, StepContext, StepRecord};
use crate::error::Result;
use crate::eval::perturb_covariance;
use crate::filters::ensemble::systematic_resample;
use crate::flow::{prepare_flow_covariance, run_edh_flow, run_ledh_flow, FlowAuxiliary};
use crate::linalg::psd_factor;
use crate::ssm::{normal_matrix, StateSpaceModel};

/// `n` draws from `N(mean, cov)` as columns; `cov` may be singular.
pub fn sample_gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>, n: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
    let u = normal_matrix(mean.len(), n, rng);
    let mut x = psd_factor(cov) * u;
    for mut c in x.column_iter_mut() {
        c += mean;
    }
    x
}

fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

/// Propagates every particle through the dynamics: `(g(x, v), g(x, 0))`.
fn propagate(model: &StateSpaceModel, states: &DMatrix<f64>, rng: &mut dyn RngCore) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = states.ncols();
    let noise = model.dynamic.sample_noise_batch(n, rng);
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = states.column(i).into_owned();
            let v = noise.column(i).into_owned();
            (model.dynamic.propagate(&x, &v), model.dynamic.deterministic_map(&x))
        })
        .collect();
    let d = states.nrows();
    let mut moved = DMatrix::zeros(d, n);
    let mut means = DMatrix::zeros(d, n);
    for (i, (a, b)) in pairs.into_iter().enumerate() {
        moved.set_column(i, &a);
        means.set_column(i, &b);
    }
    (moved, means)
}

/// Flow covariance: floored, then perturbed when `sigma_p > 0`.
fn flow_covariance(ctx: &StepContext<'_>, p: &DMatrix<f64>, rng: &mut dyn RngCore) -> Result<DMatrix<f64>> {
    let p = prepare_flow_covariance(p);
    if ctx.config.sigma_p > 0.0 {
        perturb_covariance(&p, ctx.config.sigma_p, rng)
    } else {
        Ok(p)
    }
}

/// `log p(η₁|x) + log p(z|η₁) + log θ - log p(η₀|x)` per particle.
fn flow_increments(
    model: &StateSpaceModel,
    prev: &DMatrix<f64>,
    eta0: &DMatrix<f64>,
    eta1: &DMatrix<f64>,
    z: &DVector<f64>,
    log_dets: Option<&[f64]>,
) -> Result<Vec<f64>> {
    (0..prev.ncols())
        .into_par_iter()
        .map(|i| {
            let x = prev.column(i).into_owned();
            let e0 = eta0.column(i).into_owned();
            let e1 = eta1.column(i).into_owned();
            let lt1 = model.dynamic.log_transition_density(&e1, &x);
            let lt0 = model.dynamic.log_transition_density(&e0, &x);
            let ll = model.measurement.log_likelihood(z, &e1)?;
            let theta = log_dets.map_or(0.0, |t| t[i]);
            Ok(lt1 + ll + theta - lt0)
        })
        .collect()
}

fn add_increments(ens: &mut ParticleEnsemble, inc: &[f64]) {
    for (w, d) in ens.log_weights.iter_mut().zip(inc) {
        *w += d;
    }
}

struct Weighted {
    ess: f64,
    estimate: DVector<f64>,
    ancestors: Option<Vec<usize>>,
}

/// Normalize, estimate, and resample when the ESS drops below the threshold.
fn finish_weighted(ctx: &StepContext<'_>, ens: &mut ParticleEnsemble, rng: &mut dyn RngCore) -> Result<Weighted> {
    ens.normalize()?;
    let ess = ens.ess();
    let estimate = ens.weighted_mean();
    let ancestors = if ess < ctx.config.resample_threshold * ens.len() as f64 {
        Some(systematic_resample(ens, rng))
    } else {
        None
    };
    Ok(Weighted {
        ess,
        estimate,
        ancestors,
    })
}

/// Bootstrap filter: propagate through the dynamics and weight by the likelihood.
pub fn bpf_step(
    ctx: &StepContext<'_>,
    ens: &mut ParticleEnsemble,
    z: &DVector<f64>,
    rng: &mut dyn RngCore,
) -> Result<StepRecord> {
    let model = ctx.model;
    let (moved, _) = propagate(model, &ens.states, rng);
    let inc: Vec<f64> = (0..moved.ncols())
        .into_par_iter()
        .map(|i| model.measurement.log_likelihood(z, &moved.column(i).into_owned()))
        .collect::<Result<_>>()?;
    ens.states = moved;
    add_increments(ens, &inc);
    let w = finish_weighted(ctx, ens, rng)?;
    Ok(StepRecord {
        estimate: w.estimate,
        ess: Some(w.ess),
        resampled: w.ancestors.is_some(),
        flow: None,
    })
}

/// PF-PF with the shared flow.
///
/// `belief` holds the previous estimate and its covariance; the prediction, the
/// flow linearization and the covariance update are shared by all particles, and
/// the flow determinant cancels in the normalized weights.
pub fn pfpf_edh_step(
    ctx: &StepContext<'_>,
    ens: &mut ParticleEnsemble,
    belief: &mut GaussianBelief,
    z: &DVector<f64>,
    rng: &mut dyn RngCore,
) -> Result<StepRecord> {
    let model = ctx.model;
    let predictor = ctx.config.covariance_predictor;
    let pred = belief.predict(predictor, model.dynamic.as_ref())?;
    let (eta0, _) = propagate(model, &ens.states, rng);
    let p_flow = flow_covariance(ctx, &pred.cov, rng)?;
    let eta_bar_0 = model.dynamic.deterministic_map(&belief.mean);
    let aux = FlowAuxiliary {
        eta_bar: eta_bar_0.clone(),
        eta_bar_0,
        cov: &p_flow,
    };
    let out = run_edh_flow(
        &eta0,
        &aux,
        model.measurement.as_ref(),
        z,
        ctx.schedule,
        &ctx.config.flow_guard,
    )?;
    let inc = flow_increments(model, &ens.states, &eta0, &out.states, z, None)?;
    ens.states = out.states;
    add_increments(ens, &inc);
    let updated = pred.update(predictor, model.measurement.as_ref(), z)?;
    let w = finish_weighted(ctx, ens, rng)?;
    *belief = GaussianBelief {
        mean: w.estimate.clone(),
        cov: updated.cov,
    };
    Ok(StepRecord {
        estimate: w.estimate,
        ess: Some(w.ess),
        resampled: w.ancestors.is_some(),
        flow: Some(out.diagnostics),
    })
}

/// PF-PF with per-particle flows; `covs[i]` is particle `i`'s covariance `P_{k-1}^i`.
pub fn pfpf_ledh_step(
    ctx: &StepContext<'_>,
    ens: &mut ParticleEnsemble,
    covs: &mut Vec<DMatrix<f64>>,
    z: &DVector<f64>,
    rng: &mut dyn RngCore,
) -> Result<StepRecord> {
    let model = ctx.model;
    let predictor = ctx.config.covariance_predictor;
    let n = ens.len();
    let preds: Vec<GaussianBelief> = (0..n)
        .into_par_iter()
        .map(|i| {
            GaussianBelief {
                mean: ens.states.column(i).into_owned(),
                cov: covs[i].clone(),
            }
            .predict(predictor, model.dynamic.as_ref())
        })
        .collect::<Result<_>>()?;
    let (eta0, eta_bar) = propagate(model, &ens.states, rng);
    let p_flow: Vec<DMatrix<f64>> = if ctx.config.sigma_p > 0.0 {
        preds
            .iter()
            .map(|p| flow_covariance(ctx, &p.cov, rng))
            .collect::<Result<_>>()?
    } else {
        preds.par_iter().map(|p| prepare_flow_covariance(&p.cov)).collect()
    };
    let aux: Vec<FlowAuxiliary<'_>> = columns(&eta_bar)
        .into_iter()
        .zip(&p_flow)
        .map(|(e, p)| FlowAuxiliary {
            eta_bar: e.clone(),
            eta_bar_0: e,
            cov: p,
        })
        .collect();
    let out = run_ledh_flow(
        &eta0,
        &aux,
        model.measurement.as_ref(),
        z,
        ctx.schedule,
        &ctx.config.flow_guard,
    )?;
    let inc = flow_increments(model, &ens.states, &eta0, &out.states, z, Some(&out.log_abs_dets))?;
    ens.states = out.states;
    add_increments(ens, &inc);
    let updated: Vec<DMatrix<f64>> = preds
        .par_iter()
        .map(|p| p.update(predictor, model.measurement.as_ref(), z).map(|b| b.cov))
        .collect::<Result<_>>()?;
    let w = finish_weighted(ctx, ens, rng)?;
    *covs = match &w.ancestors {
        Some(idx) => idx.iter().map(|&i| updated[i].clone()).collect(),
        None => updated,
    };
    Ok(StepRecord {
        estimate: w.estimate,
        ess: Some(w.ess),
        resampled: w.ancestors.is_some(),
        flow: Some(out.diagnostics),
    })
}

struct Redraw {
    pred: GaussianBelief,
    p_flow: DMatrix<f64>,
    particles: DMatrix<f64>,
}

fn redraw(ctx: &StepContext<'_>, belief: &GaussianBelief, rng: &mut dyn RngCore) -> Result<Redraw> {
    let pred = belief.predict(ctx.config.covariance_predictor, ctx.model.dynamic.as_ref())?;
    let p_flow = flow_covariance(ctx, &pred.cov, rng)?;
    let particles = sample_gaussian(&pred.mean, &p_flow, ctx.config.n_particles, rng);
    Ok(Redraw {
        pred,
        p_flow,
        particles,
    })
}

fn finish_flow_only(
    ctx: &StepContext<'_>,
    belief: &mut GaussianBelief,
    pred: &GaussianBelief,
    states: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    let estimate = states.column_mean();
    let updated = pred.update(ctx.config.covariance_predictor, ctx.model.measurement.as_ref(), z)?;
    *belief = GaussianBelief {
        mean: estimate.clone(),
        cov: updated.cov,
    };
    Ok(estimate)
}

/// Flow-only filter with the shared flow and the redraw strategy.
pub fn edh_filter_step(
    ctx: &StepContext<'_>,
    belief: &mut GaussianBelief,
    z: &DVector<f64>,
    rng: &mut dyn RngCore,
) -> Result<StepRecord> {
    let r = redraw(ctx, belief, rng)?;
    let aux = FlowAuxiliary {
        eta_bar: r.pred.mean.clone(),
        eta_bar_0: r.pred.mean.clone(),
        cov: &r.p_flow,
    };
    let out = run_edh_flow(
        &r.particles,
        &aux,
        ctx.model.measurement.as_ref(),
        z,
        ctx.schedule,
        &ctx.config.flow_guard,
    )?;
    let estimate = finish_flow_only(ctx, belief, &r.pred, &out.states, z)?;
    Ok(StepRecord {
        estimate,
        ess: None,
        resampled: false,
        flow: Some(out.diagnostics),
    })
}

/// Flow-only filter with per-particle flows, each linearized at its own particle.
pub fn ledh_filter_step(
    ctx: &StepContext<'_>,
    belief: &mut GaussianBelief,
    z: &DVector<f64>,
    rng: &mut dyn RngCore,
) -> Result<StepRecord> {
    let r = redraw(ctx, belief, rng)?;
    let aux: Vec<FlowAuxiliary<'_>> = columns(&r.particles)
        .into_iter()
        .map(|e| FlowAuxiliary {
            eta_bar: e,
            eta_bar_0: r.pred.mean.clone(),
            cov: &r.p_flow,
        })
        .collect();
    let out = run_ledh_flow(
        &r.particles,
        &aux,
        ctx.model.measurement.as_ref(),
        z,
        ctx.schedule,
        &ctx.config.flow_guard,
    )?;
    let estimate = finish_flow_only(ctx, belief, &r.pred, &out.states, z)?;
    Ok(StepRecord {
        estimate,
        ess: None,
        resampled: false,
        flow: Some(out.diagnostics),
    })
}

/// One EKF or UKF predict/update cycle.
pub fn kalman_step(
    ctx: &StepContext<'_>,
    belief: &mut GaussianBelief,
    predictor: CovariancePredictor,
    z: &DVector<f64>,
) -> Result<StepRecord> {
    let pred = belief.predict(predictor, ctx.model.dynamic.as_ref())?;
    *belief = pred.update(predictor, ctx.model.measurement.as_ref(), z)?;
    Ok(StepRecord {
        estimate: belief.mean.clone(),
        ess: None,
        resampled: false,
        flow: None,
    })
}
