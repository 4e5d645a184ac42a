//! Exact Daum-Huang particle flows discretized on a pseudo-time grid.
//!
//! Each pseudo-time step applies the affine map `η ← η + ε(Aη + b)` where
//! `(A, b)` come from a linearization of the measurement model. The shared
//! (EDH) flow linearizes once at a global auxiliary trajectory and moves every
//! particle with the same map; the localized (LEDH) flow linearizes separately
//! for each particle and also tracks `log |det(I + εA)|` so that the proposal
//! density of the resulting map can be evaluated.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    floor_covariance, log_abs_det, power_iteration, similar_symmetric_spectral_radius, spectral_radius,
};
use crate::ssm::MeasurementModel;

mod schedule;

pub use schedule::{make_exponential_schedule, StepSchedule};

/// Relative eigenvalue floor applied to the predictive covariance before it enters a flow.
pub const COVARIANCE_FLOOR: f64 = 1e-9;

/// `(A, b)` of the affine drift at one pseudo-time node, plus `log |det(I + εA)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub log_abs_det_step: f64,
}

/// Linearization state carried along a flow.
#[derive(Debug, Clone)]
pub struct FlowAuxiliary<'a> {
    /// Current linearization point `η̄`.
    pub eta_bar: DVector<f64>,
    /// Deterministic flow start `η̄₀`.
    pub eta_bar_0: DVector<f64>,
    /// Predictive covariance `P` (symmetric positive definite).
    pub cov: &'a DMatrix<f64>,
}

/// Where the per-particle flow is linearized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linearization {
    /// Along the auxiliary trajectory started at `g(x, 0)`.
    #[default]
    Auxiliary,
    /// At the migrating particle itself. Not implemented.
    Particle,
}

/// Knobs of the invertibility guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSettings {
    /// Maximum recursion depth when a step has to be split.
    pub max_halvings: u32,
    pub power_iterations: usize,
    pub power_tolerance: f64,
    /// Matrices up to this size get an exact eigensolve; larger ones start with power iteration.
    pub full_eigen_max_dim: usize,
    /// A step passes when `ε ρ(A) < 1 - margin`.
    pub margin: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self {
            max_halvings: 6,
            power_iterations: 50,
            power_tolerance: 1e-8,
            full_eigen_max_dim: 64,
            margin: 1e-6,
        }
    }
}

/// Outcome of the invertibility check for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertibilityCheck {
    pub rho: f64,
    pub eps_rho: f64,
    pub passed: bool,
}

/// Per-flow record of the invertibility guard.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    /// Largest `ε ρ(A)` over the steps that were applied.
    pub max_eps_rho: f64,
    /// Number of steps that had to be split.
    pub halvings: usize,
    /// Number of affine maps applied.
    pub steps: usize,
}

impl FlowDiagnostics {
    pub fn merge(&mut self, other: &FlowDiagnostics) {
        self.max_eps_rho = self.max_eps_rho.max(other.max_eps_rho);
        self.halvings += other.halvings;
        self.steps += other.steps;
    }
}

/// Symmetrizes `p` and floors its eigenvalues at `1e-9 trace(p) / d`.
pub fn prepare_flow_covariance(p: &DMatrix<f64>) -> DMatrix<f64> {
    floor_covariance(p, COVARIANCE_FLOOR)
}

/// Computes the EDH/LEDH drift parameters at pseudo-time `lambda`.
///
/// `A = -½ P Hᵀ (λ H P Hᵀ + R)⁻¹ H`, `e = h(η̄) - H η̄` and
/// `b = (I + 2λA)[(I + λA) P Hᵀ R⁻¹ (z - e) + A η̄₀]`.
#[allow(clippy::too_many_arguments)]
pub fn compute_flow_params(
    lambda: f64,
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
    h_at_point: &DVector<f64>,
    eta_bar: &DVector<f64>,
    eta_bar_0: &DVector<f64>,
    epsilon: f64,
) -> Result<FlowParams> {
    let d = p.nrows();
    let s = h.nrows();
    if h.ncols() != d || r.nrows() != s || z.len() != s || h_at_point.len() != s {
        return Err(Error::DimensionMismatch {
            context: "flow parameters",
            expected: s,
            actual: r.nrows(),
        });
    }
    let hp = h * p;
    let mut innov = &hp * h.transpose() * lambda + r;
    innov = (&innov + innov.transpose()) * 0.5;
    let innov = Cholesky::new(innov).ok_or(Error::NotPositiveDefinite("lambda H P H^T + R"))?;
    let a = -0.5 * hp.transpose() * innov.solve(h);

    let r_chol = Cholesky::new(r.clone()).ok_or(Error::NotPositiveDefinite("measurement covariance"))?;
    let e = h_at_point - h * eta_bar;
    let v = hp.transpose() * r_chol.solve(&(z - e));
    let w = &v + (&a * &v) * lambda + &a * eta_bar_0;
    let b = &w + (&a * &w) * (2.0 * lambda);

    let mut step = &a * epsilon;
    for i in 0..d {
        step[(i, i)] += 1.0;
    }
    let log_abs_det_step = log_abs_det(&step);
    Ok(FlowParams { a, b, log_abs_det_step })
}

/// `η + ε(Aη + b)`.
pub fn flow_step(eta: &DVector<f64>, params: &FlowParams, epsilon: f64) -> DVector<f64> {
    eta + (&params.a * eta + &params.b) * epsilon
}

/// Checks `ε ρ(A) < 1 - 1e-6`, the condition under which `I + εA` is invertible.
pub fn check_invertibility(a: &DMatrix<f64>, epsilon: f64) -> InvertibilityCheck {
    check_with(a, epsilon, &FlowSettings::default(), None)
}

/// `ρ(A)`. With the Cholesky factor of `P` the drift matrix `A = P (-½ Hᵀ S⁻¹ H)`
/// is similar to a symmetric matrix, which gives the exact value cheaply.
fn guard_rho(a: &DMatrix<f64>, settings: &FlowSettings, cov_lower: Option<&DMatrix<f64>>) -> f64 {
    if let Some(l) = cov_lower {
        if a.nrows() > settings.full_eigen_max_dim {
            let est = power_iteration(a, settings.power_iterations, settings.power_tolerance);
            if est.converged {
                return est.rho;
            }
        }
        if let Some(rho) = similar_symmetric_spectral_radius(a, l) {
            return rho;
        }
    }
    spectral_radius(
        a,
        settings.power_iterations,
        settings.power_tolerance,
        settings.full_eigen_max_dim,
    )
    .rho
}

fn check_with(
    a: &DMatrix<f64>,
    epsilon: f64,
    settings: &FlowSettings,
    cov_lower: Option<&DMatrix<f64>>,
) -> InvertibilityCheck {
    let rho = guard_rho(a, settings, cov_lower);
    let eps_rho = epsilon * rho;
    InvertibilityCheck {
        rho,
        eps_rho,
        passed: eps_rho < 1.0 - settings.margin,
    }
}

struct Tracer<'a> {
    model: &'a dyn MeasurementModel,
    z: &'a DVector<f64>,
    cov: &'a DMatrix<f64>,
    cov_lower: Option<DMatrix<f64>>,
    eta_bar_0: &'a DVector<f64>,
    settings: &'a FlowSettings,
    diagnostics: FlowDiagnostics,
    log_det: f64,
}

impl<'a> Tracer<'a> {
    fn new(
        model: &'a dyn MeasurementModel,
        z: &'a DVector<f64>,
        aux: &'a FlowAuxiliary<'_>,
        settings: &'a FlowSettings,
    ) -> Self {
        Self {
            model,
            z,
            cov: aux.cov,
            cov_lower: Cholesky::new(aux.cov.clone()).map(|c| c.l()),
            eta_bar_0: &aux.eta_bar_0,
            settings,
            diagnostics: FlowDiagnostics::default(),
            log_det: 0.0,
        }
    }

    /// Advances `eta_bar` over `[lambda_start, lambda_start + eps]`, handing every
    /// applied `(params, ε)` to `sink`. Splits the step when the guard fails.
    fn advance(
        &mut self,
        eta_bar: &mut DVector<f64>,
        lambda_start: f64,
        eps: f64,
        depth: u32,
        sink: &mut dyn FnMut(&FlowParams, f64),
    ) -> Result<()> {
        let lambda = lambda_start + eps;
        let h = self.model.jacobian(eta_bar);
        let r = self.model.noise_covariance(eta_bar);
        let hx = self.model.map(eta_bar);
        let params = compute_flow_params(lambda, self.cov, &h, &r, self.z, &hx, eta_bar, self.eta_bar_0, eps)?;
        let check = check_with(&params.a, eps, self.settings, self.cov_lower.as_ref());
        if !check.passed || !params.log_abs_det_step.is_finite() {
            if depth >= self.settings.max_halvings {
                return Err(Error::NotInvertible {
                    lambda,
                    eps_rho: check.eps_rho,
                    particle: None,
                });
            }
            self.diagnostics.halvings += 1;
            let half = 0.5 * eps;
            self.advance(eta_bar, lambda_start, half, depth + 1, sink)?;
            return self.advance(eta_bar, lambda_start + half, half, depth + 1, sink);
        }
        self.diagnostics.max_eps_rho = self.diagnostics.max_eps_rho.max(check.eps_rho);
        self.diagnostics.steps += 1;
        self.log_det += params.log_abs_det_step;
        *eta_bar = flow_step(eta_bar, &params, eps);
        sink(&params, eps);
        Ok(())
    }

    fn run(
        &mut self,
        eta_bar: &mut DVector<f64>,
        schedule: &StepSchedule,
        sink: &mut dyn FnMut(&FlowParams, f64),
    ) -> Result<()> {
        for (j, &eps) in schedule.epsilons().iter().enumerate() {
            self.advance(eta_bar, schedule.lambdas()[j], eps, 0, sink)?;
        }
        Ok(())
    }
}

/// Output of a shared flow.
#[derive(Debug, Clone)]
pub struct EdhFlowOutput {
    /// Migrated particles, one per column.
    pub states: DMatrix<f64>,
    pub eta_bar: DVector<f64>,
    /// `Σ_j log |det(I + ε_j A_j)|`, common to every particle.
    pub log_abs_det: f64,
    pub diagnostics: FlowDiagnostics,
}

/// Runs the shared flow on the columns of `states`.
///
/// The per-step maps are composed into one affine map `x ↦ Mx + c` which is
/// applied to the whole ensemble at the end.
pub fn run_edh_flow(
    states: &DMatrix<f64>,
    aux: &FlowAuxiliary<'_>,
    model: &dyn MeasurementModel,
    z: &DVector<f64>,
    schedule: &StepSchedule,
    settings: &FlowSettings,
) -> Result<EdhFlowOutput> {
    let d = states.nrows();
    check_dims(d, aux, model, z)?;
    let mut m = DMatrix::<f64>::identity(d, d);
    let mut c = DVector::<f64>::zeros(d);
    let mut tracer = Tracer::new(model, z, aux, settings);
    let mut eta_bar = aux.eta_bar.clone();
    tracer.run(&mut eta_bar, schedule, &mut |params, eps| {
        // (I + εA)(Mx + c) + εb
        let am = &params.a * &m;
        m += am * eps;
        let ac = &params.a * &c;
        c += (ac + &params.b) * eps;
    })?;
    let mut out = &m * states;
    for mut col in out.column_iter_mut() {
        col += &c;
    }
    Ok(EdhFlowOutput {
        states: out,
        eta_bar,
        log_abs_det: tracer.log_det,
        diagnostics: tracer.diagnostics,
    })
}

/// Output of a per-particle flow.
#[derive(Debug, Clone)]
pub struct LedhFlowOutput {
    pub states: DMatrix<f64>,
    pub eta_bars: Vec<DVector<f64>>,
    /// `log θ^i = Σ_j log |det(I + ε_j A_j^i)|` per particle.
    pub log_abs_dets: Vec<f64>,
    pub diagnostics: FlowDiagnostics,
}

/// Runs one localized flow per column of `states`, each along its own auxiliary trajectory.
pub fn run_ledh_flow(
    states: &DMatrix<f64>,
    aux: &[FlowAuxiliary<'_>],
    model: &dyn MeasurementModel,
    z: &DVector<f64>,
    schedule: &StepSchedule,
    settings: &FlowSettings,
) -> Result<LedhFlowOutput> {
    let d = states.nrows();
    let n = states.ncols();
    if aux.len() != n {
        return Err(Error::DimensionMismatch {
            context: "per-particle flow auxiliaries",
            expected: n,
            actual: aux.len(),
        });
    }
    for a in aux {
        check_dims(d, a, model, z)?;
    }
    type ParticleFlow = (DVector<f64>, DVector<f64>, f64, FlowDiagnostics);
    let results: Vec<Result<ParticleFlow>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut eta = states.column(i).into_owned();
            let mut tracer = Tracer::new(model, z, &aux[i], settings);
            let mut eta_bar = aux[i].eta_bar.clone();
            tracer
                .run(&mut eta_bar, schedule, &mut |params, eps| {
                    eta = flow_step(&eta, params, eps);
                })
                .map_err(|e| match e {
                    Error::NotInvertible { lambda, eps_rho, .. } => Error::NotInvertible {
                        lambda,
                        eps_rho,
                        particle: Some(i),
                    },
                    other => other,
                })?;
            Ok((eta, eta_bar, tracer.log_det, tracer.diagnostics))
        })
        .collect();

    let mut out = DMatrix::zeros(d, n);
    let mut eta_bars = Vec::with_capacity(n);
    let mut log_abs_dets = Vec::with_capacity(n);
    let mut diagnostics = FlowDiagnostics::default();
    for (i, r) in results.into_iter().enumerate() {
        let (eta, eta_bar, ld, diag) = r?;
        out.set_column(i, &eta);
        eta_bars.push(eta_bar);
        log_abs_dets.push(ld);
        diagnostics.merge(&diag);
    }
    Ok(LedhFlowOutput {
        states: out,
        eta_bars,
        log_abs_dets,
        diagnostics,
    })
}

fn check_dims(d: usize, aux: &FlowAuxiliary<'_>, model: &dyn MeasurementModel, z: &DVector<f64>) -> Result<()> {
    for (context, actual) in [
        ("flow eta_bar", aux.eta_bar.len()),
        ("flow eta_bar_0", aux.eta_bar_0.len()),
        ("flow covariance", aux.cov.nrows()),
        ("flow measurement model", model.state_dim()),
    ] {
        if actual != d {
            return Err(Error::DimensionMismatch {
                context,
                expected: d,
                actual,
            });
        }
    }
    if z.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "flow measurement",
            expected: model.dim(),
            actual: z.len(),
        });
    }
    Ok(())
}
