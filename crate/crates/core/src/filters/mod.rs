//! Particle flow particle filters, flow-only filters, the bootstrap filter and
//! Kalman-type baselines.
//!
//! Every filter exposes the same [`Filter`] interface: it is built from a model,
//! an initial Gaussian belief and a [`FilterConfig`], and is then advanced one
//! measurement at a time with an explicit rng.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{make_exponential_schedule, FlowDiagnostics, FlowSettings, Linearization, StepSchedule};
use crate::ssm::StateSpaceModel;

mod belief;
mod ensemble;
mod steps;

pub use belief::{ekf_predict, ekf_update, ukf_predict, ukf_update, CovariancePredictor, GaussianBelief, SigmaPoints};
pub use ensemble::{effective_sample_size, systematic_resample, systematic_resample_indices, ParticleEnsemble};
pub use steps::{
    bpf_step, edh_filter_step, kalman_step, ledh_filter_step, pfpf_edh_step, pfpf_ledh_step, sample_gaussian,
};

/// Filter families selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    #[serde(rename = "pfpf-ledh")]
    PfpfLedh,
    #[serde(rename = "pfpf-edh")]
    PfpfEdh,
    #[serde(rename = "edh")]
    Edh,
    #[serde(rename = "ledh")]
    Ledh,
    #[serde(rename = "bpf")]
    Bpf,
    #[serde(rename = "ekf")]
    Ekf,
    #[serde(rename = "ukf")]
    Ukf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 7] = [
        FilterKind::PfpfLedh,
        FilterKind::PfpfEdh,
        FilterKind::Edh,
        FilterKind::Ledh,
        FilterKind::Bpf,
        FilterKind::Ekf,
        FilterKind::Ukf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::PfpfLedh => "pfpf-ledh",
            FilterKind::PfpfEdh => "pfpf-edh",
            FilterKind::Edh => "edh",
            FilterKind::Ledh => "ledh",
            FilterKind::Bpf => "bpf",
            FilterKind::Ekf => "ekf",
            FilterKind::Ukf => "ukf",
        }
    }

    /// Whether the filter carries importance weights (and hence an ESS).
    pub fn is_weighted(&self) -> bool {
        matches!(self, FilterKind::PfpfLedh | FilterKind::PfpfEdh | FilterKind::Bpf)
    }

    pub fn uses_particles(&self) -> bool {
        !matches!(self, FilterKind::Ekf | FilterKind::Ukf)
    }

    pub fn uses_flow(&self) -> bool {
        matches!(
            self,
            FilterKind::PfpfLedh | FilterKind::PfpfEdh | FilterKind::Edh | FilterKind::Ledh
        )
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "kind",
                reason: format!(
                    "unknown filter `{s}`; expected one of {}",
                    FilterKind::ALL.map(|k| k.name()).join(", ")
                ),
            })
    }
}

/// Per-filter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub kind: FilterKind,
    /// Name used in reports and for the filter's rng stream; defaults to the kind name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    /// Resample when `ESS < fraction · N`.
    #[serde(default = "default_threshold")]
    pub resample_threshold: f64,
    #[serde(default = "default_flow_steps")]
    pub flow_steps: usize,
    #[serde(default = "default_flow_ratio")]
    pub flow_ratio: f64,
    #[serde(default)]
    pub covariance_predictor: CovariancePredictor,
    #[serde(default)]
    pub linearization: Linearization,
    /// Log-normal spread of the eigenvalue perturbation applied to the flow covariance.
    #[serde(default)]
    pub sigma_p: f64,
    /// Fixed seed for this filter's stream in place of the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub flow_guard: FlowSettings,
}

fn default_particles() -> usize {
    500
}

fn default_threshold() -> f64 {
    0.5
}

fn default_flow_steps() -> usize {
    29
}

fn default_flow_ratio() -> f64 {
    1.2
}

impl FilterConfig {
    pub fn new(kind: FilterKind, n_particles: usize) -> Self {
        Self {
            kind,
            label: None,
            n_particles,
            resample_threshold: default_threshold(),
            flow_steps: default_flow_steps(),
            flow_ratio: default_flow_ratio(),
            covariance_predictor: CovariancePredictor::default(),
            linearization: Linearization::default(),
            sigma_p: 0.0,
            seed: None,
            flow_guard: FlowSettings::default(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_sigma_p(mut self, sigma_p: f64) -> Self {
        self.sigma_p = sigma_p;
        self
    }

    pub fn with_predictor(mut self, p: CovariancePredictor) -> Self {
        self.covariance_predictor = p;
        self
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_particles() && self.n_particles == 0 {
            return Err(Error::InvalidParameter {
                name: "n_particles",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "resample_threshold",
                reason: format!("must lie in (0, 1], got {}", self.resample_threshold),
            });
        }
        if !(self.sigma_p >= 0.0) || !self.sigma_p.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma_p",
                reason: format!("must be finite and >= 0, got {}", self.sigma_p),
            });
        }
        if self.linearization == Linearization::Particle {
            return Err(Error::Unsupported(
                "linearization = \"particle\" is not implemented; use \"auxiliary\"".into(),
            ));
        }
        self.schedule()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        make_exponential_schedule(self.flow_steps, self.flow_ratio)
    }
}

/// What one filter step reports.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub estimate: DVector<f64>,
    /// Effective sample size after the weight update; `None` for unweighted filters.
    pub ess: Option<f64>,
    pub resampled: bool,
    pub flow: Option<FlowDiagnostics>,
}

/// Everything a step function needs besides the filter state.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub model: &'a StateSpaceModel,
    pub config: &'a FilterConfig,
    pub schedule: &'a StepSchedule,
}

/// A filter advanced one measurement at a time.
pub trait Filter: Send {
    fn kind(&self) -> FilterKind;

    fn step(&mut self, z: &DVector<f64>, rng: &mut dyn RngCore) -> Result<StepRecord>;
}

enum State {
    Bootstrap(ParticleEnsemble),
    PfpfEdh(ParticleEnsemble, GaussianBelief),
    PfpfLedh(ParticleEnsemble, Vec<DMatrix<f64>>),
    FlowOnly(GaussianBelief),
    Kalman(GaussianBelief),
}

/// The filter selected by a [`FilterConfig`] together with its state.
pub struct ConfiguredFilter {
    model: StateSpaceModel,
    config: FilterConfig,
    schedule: StepSchedule,
    state: State,
}

impl ConfiguredFilter {
    /// Initializes the filter at `init`; particle filters draw their particles from it.
    pub fn new(
        config: &FilterConfig,
        model: &StateSpaceModel,
        init: &GaussianBelief,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        config.validate()?;
        if init.dim() != model.dim_state() {
            return Err(Error::DimensionMismatch {
                context: "initial belief",
                expected: model.dim_state(),
                actual: init.dim(),
            });
        }
        let particles = |rng: &mut dyn RngCore| {
            ParticleEnsemble::uniform(sample_gaussian(&init.mean, &init.cov, config.n_particles, rng))
        };
        let state = match config.kind {
            FilterKind::Bpf => State::Bootstrap(particles(rng)?),
            FilterKind::PfpfEdh => State::PfpfEdh(particles(rng)?, init.clone()),
            FilterKind::PfpfLedh => State::PfpfLedh(particles(rng)?, vec![init.cov.clone(); config.n_particles]),
            FilterKind::Edh | FilterKind::Ledh => State::FlowOnly(init.clone()),
            FilterKind::Ekf | FilterKind::Ukf => State::Kalman(init.clone()),
        };
        Ok(Self {
            model: model.clone(),
            config: config.clone(),
            schedule: config.schedule()?,
            state,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }
}

impl Filter for ConfiguredFilter {
    fn kind(&self) -> FilterKind {
        self.config.kind
    }

    fn step(&mut self, z: &DVector<f64>, rng: &mut dyn RngCore) -> Result<StepRecord> {
        self.model.measurement.validate(z)?;
        let ctx = StepContext {
            model: &self.model,
            config: &self.config,
            schedule: &self.schedule,
        };
        match &mut self.state {
            State::Bootstrap(ens) => bpf_step(&ctx, ens, z, rng),
            State::PfpfEdh(ens, belief) => pfpf_edh_step(&ctx, ens, belief, z, rng),
            State::PfpfLedh(ens, covs) => pfpf_ledh_step(&ctx, ens, covs, z, rng),
            State::FlowOnly(belief) => match self.config.kind {
                FilterKind::Edh => edh_filter_step(&ctx, belief, z, rng),
                _ => ledh_filter_step(&ctx, belief, z, rng),
            },
            State::Kalman(belief) => {
                let predictor = match self.config.kind {
                    FilterKind::Ukf => CovariancePredictor::Ukf,
                    _ => CovariancePredictor::Ekf,
                };
                kalman_step(&ctx, belief, predictor, z)
            }
        }
    }
}
