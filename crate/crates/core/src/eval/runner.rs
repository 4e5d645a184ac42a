use std::collections::HashSet;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{omat, target_positions};
use super::scenario::{MetricKind, Scenario, ScenarioConfig, Trajectory};
use crate::error::{Error, Result};
use crate::filters::{ConfiguredFilter, Filter, FilterConfig, FilterKind};

/// A complete multi-trial experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub filters: Vec<FilterConfig>,
    pub n_trials: usize,
    pub n_steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Filter runs per simulated trajectory.
    #[serde(default = "one")]
    pub repeats: usize,
    /// Exclude runs whose average MSE exceeds `√d` (MSE scenarios only).
    #[serde(default = "yes")]
    pub lost_track: bool,
    /// Record wall-clock step durations. Off by default so outputs are reproducible.
    #[serde(default)]
    pub timing: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig, filters: Vec<FilterConfig>, n_trials: usize, n_steps: usize) -> Self {
        Self {
            scenario,
            filters,
            n_trials,
            n_steps,
            seed: 0,
            repeats: 1,
            lost_track: true,
            timing: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_trials", self.n_trials),
            ("n_steps", self.n_steps),
            ("repeats", self.repeats),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be >= 1".into(),
                });
            }
        }
        if self.filters.is_empty() {
            return Err(Error::InvalidParameter {
                name: "filters",
                reason: "at least one filter is required".into(),
            });
        }
        let mut seen = HashSet::new();
        for f in &self.filters {
            f.validate()?;
            let label = f.label();
            if !seen.insert(label.clone()) {
                return Err(Error::InvalidParameter {
                    name: "filters",
                    reason: format!("duplicate filter label `{label}`"),
                });
            }
        }
        Ok(())
    }
}

/// One filter step of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRow {
    pub filter: String,
    pub trial: usize,
    pub step: usize,
    pub metric: f64,
    pub ess: Option<f64>,
    pub duration_s: Option<f64>,
    pub resampled: bool,
    pub repeat: usize,
    pub max_eps_rho: Option<f64>,
    pub halvings: Option<usize>,
}

/// Outcome of one (filter, trial, repeat) run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub filter: String,
    pub trial: usize,
    pub repeat: usize,
    pub steps_completed: usize,
    /// Mean of the per-step metric over completed steps.
    pub metric: f64,
    pub mean_ess: Option<f64>,
    pub mean_step_time_s: Option<f64>,
    pub lost: bool,
    pub aborted: Option<String>,
}

impl RunRecord {
    pub fn included(&self) -> bool {
        !self.lost && self.aborted.is_none()
    }
}

/// Aggregates for one filter over all included runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterSummary {
    pub filter: String,
    pub kind: FilterKind,
    pub n_particles: Option<usize>,
    pub sigma_p: f64,
    pub runs: usize,
    pub included: usize,
    pub lost: usize,
    pub aborted: usize,
    pub avg_metric: Option<f64>,
    pub avg_ess: Option<f64>,
    pub avg_step_time_s: Option<f64>,
    /// Largest `ε_j ρ(A)` over every applied flow step, included runs or not.
    pub max_eps_rho: Option<f64>,
    pub halvings: usize,
}

/// Raw records and aggregates of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub scenario: String,
    pub metric: MetricKind,
    pub dim: usize,
    pub n_trials: usize,
    pub n_steps: usize,
    pub repeats: usize,
    pub seed: u64,
    pub summaries: Vec<FilterSummary>,
    pub runs: Vec<RunRecord>,
    #[serde(skip)]
    pub rows: Vec<StepRow>,
}

impl ExperimentResult {
    pub fn summary(&self, label: &str) -> Option<&FilterSummary> {
        self.summaries.iter().find(|s| s.filter == label)
    }

    pub fn any_aborted(&self) -> bool {
        self.runs.iter().any(|r| r.aborted.is_some())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed of the stream named `label` for `(trial, repeat)`.
pub fn stream_seed(base: u64, trial: u64, repeat: u64, label: &str) -> u64 {
    let mut h = splitmix64(base);
    h = splitmix64(h ^ trial);
    h = splitmix64(h ^ repeat.rotate_left(32));
    splitmix64(h ^ fnv1a(label))
}

pub fn stream(base: u64, trial: u64, repeat: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(base, trial, repeat, label))
}

/// Ground truth for a trial: the state and measurement streams are independent,
/// so changing measurement parameters leaves the state path untouched.
pub fn simulate_trial(scenario: &Scenario, seed: u64, trial: usize, n_steps: usize) -> Result<Trajectory> {
    let mut state_rng = stream(seed, trial as u64, 0, "truth-state");
    let mut meas_rng = stream(seed, trial as u64, 0, "truth-measurement");
    scenario.simulate(n_steps, &mut state_rng, &mut meas_rng)
}

fn step_metric(kind: MetricKind, truth: &DVector<f64>, est: &DVector<f64>) -> Result<f64> {
    match kind {
        MetricKind::Omat => omat(&target_positions(truth), &target_positions(est), 1.0),
        MetricKind::Mse => Ok((truth - est).norm_squared() / truth.len() as f64),
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

struct RunOutput {
    filter_index: usize,
    record: RunRecord,
    rows: Vec<StepRow>,
}

#[allow(clippy::too_many_arguments)]
fn run_filter(
    spec: &ExperimentSpec,
    scenario: &Scenario,
    truth: &Trajectory,
    init: &crate::filters::GaussianBelief,
    config: &FilterConfig,
    trial: usize,
    repeat: usize,
) -> (RunRecord, Vec<StepRow>) {
    let label = config.label();
    let seed = config.seed.unwrap_or(spec.seed);
    // keyed by kind, so identically configured filters see identical draws
    let mut rng = stream(seed, trial as u64, repeat as u64, &format!("filter:{}", config.kind));
    let metric_kind = scenario.metric();
    let mut rows = Vec::with_capacity(truth.states.len());
    let mut aborted = None;
    match ConfiguredFilter::new(config, scenario.filter_model(), init, &mut rng) {
        Err(e) => aborted = Some(e.to_string()),
        Ok(mut filter) => {
            for (k, (x, z)) in truth.states.iter().zip(&truth.measurements).enumerate() {
                let start = spec.timing.then(Instant::now);
                let rec = match filter.step(z, &mut rng) {
                    Ok(r) => r,
                    Err(e) => {
                        aborted = Some(format!("step {}: {e}", k + 1));
                        break;
                    }
                };
                let duration_s = start.map(|t| t.elapsed().as_secs_f64());
                let metric = match step_metric(metric_kind, x, &rec.estimate) {
                    Ok(m) => m,
                    Err(e) => {
                        aborted = Some(format!("step {}: {e}", k + 1));
                        break;
                    }
                };
                rows.push(StepRow {
                    filter: label.clone(),
                    trial,
                    step: k + 1,
                    metric,
                    ess: rec.ess,
                    duration_s,
                    resampled: rec.resampled,
                    repeat,
                    max_eps_rho: rec.flow.map(|f| f.max_eps_rho),
                    halvings: rec.flow.map(|f| f.halvings),
                });
            }
        }
    }
    let metric = mean(rows.iter().map(|r| r.metric)).unwrap_or(f64::NAN);
    let lost = spec.lost_track && metric_kind == MetricKind::Mse && !(metric <= (scenario.dim() as f64).sqrt());
    let record = RunRecord {
        filter: label,
        trial,
        repeat,
        steps_completed: rows.len(),
        metric,
        mean_ess: if config.kind.is_weighted() {
            mean(rows.iter().filter_map(|r| r.ess))
        } else {
            None
        },
        mean_step_time_s: mean(rows.iter().filter_map(|r| r.duration_s)),
        lost: lost && aborted.is_none(),
        aborted,
    };
    (record, rows)
}

fn run_trial(spec: &ExperimentSpec, scenario: &Scenario, trial: usize) -> Result<Vec<RunOutput>> {
    let truth = simulate_trial(scenario, spec.seed, trial, spec.n_steps)?;
    let mut out = Vec::with_capacity(spec.repeats * spec.filters.len());
    for repeat in 0..spec.repeats {
        let mut init_rng = stream(spec.seed, trial as u64, repeat as u64, "initial-belief");
        let init = scenario.initial_belief(&mut init_rng)?;
        for (filter_index, config) in spec.filters.iter().enumerate() {
            let (record, rows) = run_filter(spec, scenario, &truth, &init, config, trial, repeat);
            out.push(RunOutput {
                filter_index,
                record,
                rows,
            });
        }
    }
    Ok(out)
}

/// Reduces run records to per-filter aggregates.
///
/// Averages are over included runs (neither lost nor aborted), each run
/// contributing its own mean over steps.
pub fn aggregate(filters: &[FilterConfig], runs: &[RunRecord], rows: &[StepRow]) -> Vec<FilterSummary> {
    filters
        .iter()
        .map(|config| {
            let label = config.label();
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.filter == label).collect();
            let kept: Vec<&RunRecord> = mine.iter().copied().filter(|r| r.included()).collect();
            let flow: Vec<&StepRow> = rows.iter().filter(|r| r.filter == label).collect();
            FilterSummary {
                filter: label.clone(),
                kind: config.kind,
                n_particles: config.kind.uses_particles().then_some(config.n_particles),
                sigma_p: config.sigma_p,
                runs: mine.len(),
                included: kept.len(),
                lost: mine.iter().filter(|r| r.lost).count(),
                aborted: mine.iter().filter(|r| r.aborted.is_some()).count(),
                avg_metric: mean(kept.iter().map(|r| r.metric)),
                avg_ess: mean(kept.iter().filter_map(|r| r.mean_ess)),
                avg_step_time_s: mean(kept.iter().filter_map(|r| r.mean_step_time_s)),
                max_eps_rho: flow.iter().filter_map(|r| r.max_eps_rho).reduce(f64::max),
                halvings: flow.iter().filter_map(|r| r.halvings).sum(),
            }
        })
        .collect()
}

/// Runs every filter on every trial; per-run filter failures are recorded, not raised.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let scenario = Scenario::new(spec.scenario.clone())?;
    let per_trial: Vec<Result<Vec<RunOutput>>> = (0..spec.n_trials)
        .into_par_iter()
        .map(|t| run_trial(spec, &scenario, t))
        .collect();
    let mut outputs = Vec::new();
    for t in per_trial {
        outputs.extend(t?);
    }
    outputs.sort_by_key(|o| (o.filter_index, o.record.trial, o.record.repeat));
    let mut runs = Vec::with_capacity(outputs.len());
    let mut rows = Vec::new();
    for o in outputs {
        runs.push(o.record);
        rows.extend(o.rows);
    }
    let summaries = aggregate(&spec.filters, &runs, &rows);
    Ok(ExperimentResult {
        scenario: spec.scenario.name().to_string(),
        metric: scenario.metric(),
        dim: scenario.dim(),
        n_trials: spec.n_trials,
        n_steps: spec.n_steps,
        repeats: spec.repeats,
        seed: spec.seed,
        summaries,
        runs,
        rows,
    })
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Measurement noise of the linear-Gaussian scenario.
    SigmaZ,
    /// Covariance perturbation of every flow-based filter.
    SigmaP,
    /// Particle count of every particle-based filter.
    NParticles,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::SigmaZ => "sigma_z",
            SweepParameter::SigmaP => "sigma_p",
            SweepParameter::NParticles => "n_particles",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Returns `spec` with the swept parameter set to `value`.
pub fn apply_sweep_value(spec: &ExperimentSpec, parameter: SweepParameter, value: f64) -> Result<ExperimentSpec> {
    let mut s = spec.clone();
    match parameter {
        SweepParameter::SigmaZ => match &mut s.scenario {
            ScenarioConfig::LinearGaussian(p) => p.sigma_z = value,
            other => {
                return Err(Error::InvalidParameter {
                    name: "sweep.parameter",
                    reason: format!("sigma_z is not a parameter of the {} scenario", other.name()),
                })
            }
        },
        SweepParameter::SigmaP => {
            for f in s.filters.iter_mut().filter(|f| f.kind.uses_flow()) {
                f.sigma_p = value;
            }
        }
        SweepParameter::NParticles => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::InvalidParameter {
                    name: "sweep.values",
                    reason: format!("particle counts must be positive integers, got {value}"),
                });
            }
            for f in s.filters.iter_mut().filter(|f| f.kind.uses_particles()) {
                f.n_particles = value as usize;
            }
        }
    }
    Ok(s)
}

/// One experiment per sweep value. Truth streams depend only on the seed and
/// trial index, so every point sees the same state trajectories.
pub fn run_sweep(spec: &ExperimentSpec, sweep: &Sweep) -> Result<Vec<(f64, ExperimentResult)>> {
    if sweep.values.is_empty() {
        return Err(Error::InvalidParameter {
            name: "sweep.values",
            reason: "at least one value is required".into(),
        });
    }
    sweep
        .values
        .iter()
        .map(|&v| {
            let s = apply_sweep_value(spec, sweep.parameter, v)?;
            Ok((v, run_experiment(&s)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::scenario::LinearGaussianParams;

    fn small_spec() -> ExperimentSpec {
        let scenario = ScenarioConfig::LinearGaussian(LinearGaussianParams {
            d: 4,
            ..Default::default()
        });
        ExperimentSpec::new(
            scenario,
            vec![
                FilterConfig::new(FilterKind::Ekf, 1),
                FilterConfig::new(FilterKind::Bpf, 50),
            ],
            3,
            4,
        )
        .with_seed(9)
    }

    #[test]
    fn stream_seeds_differ_by_label_and_index() {
        let a = stream_seed(1, 0, 0, "x");
        assert_ne!(a, stream_seed(1, 1, 0, "x"));
        assert_ne!(a, stream_seed(1, 0, 1, "x"));
        assert_ne!(a, stream_seed(1, 0, 0, "y"));
        assert_ne!(a, stream_seed(2, 0, 0, "x"));
        assert_eq!(a, stream_seed(1, 0, 0, "x"));
    }

    #[test]
    fn records_are_ordered_and_complete() {
        let r = run_experiment(&small_spec()).unwrap();
        assert_eq!(r.runs.len(), 6);
        assert_eq!(r.rows.len(), 24);
        let keys: Vec<(String, usize)> = r.runs.iter().map(|x| (x.filter.clone(), x.trial)).collect();
        assert_eq!(keys[0], ("ekf".into(), 0));
        assert_eq!(keys[3], ("bpf".into(), 0));
        assert!(r.rows.iter().filter(|x| x.filter == "ekf").all(|x| x.ess.is_none()));
        assert!(r.rows.iter().filter(|x| x.filter == "bpf").all(|x| x.ess.is_some()));
        assert!(!r.any_aborted());
    }

    #[test]
    fn adding_a_filter_leaves_others_unchanged() {
        let base = run_experiment(&small_spec()).unwrap();
        let mut spec = small_spec();
        spec.filters.insert(0, FilterConfig::new(FilterKind::Ukf, 1));
        let more = run_experiment(&spec).unwrap();
        assert_eq!(base.summary("bpf"), more.summary("bpf"));
        assert_eq!(base.summary("ekf"), more.summary("ekf"));
    }

    #[test]
    fn identical_configs_give_identical_rows() {
        let mut spec = small_spec();
        spec.n_trials = 1;
        spec.filters = vec![
            FilterConfig::new(FilterKind::Bpf, 30).with_label("a"),
            FilterConfig::new(FilterKind::Bpf, 30).with_label("b"),
        ];
        let r = run_experiment(&spec).unwrap();
        let (a, b): (Vec<_>, Vec<_>) = r.rows.iter().partition(|x| x.filter == "a");
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.metric, x.ess, x.resampled), (y.metric, y.ess, y.resampled));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small_spec();
        s.n_trials = 0;
        assert!(run_experiment(&s).is_err());
        let mut s = small_spec();
        s.filters.push(FilterConfig::new(FilterKind::Ekf, 1));
        assert!(s.validate().is_err());
        let s = small_spec();
        let acoustic = ExperimentSpec {
            scenario: ScenarioConfig::preset("acoustic").unwrap(),
            ..s
        };
        assert!(apply_sweep_value(&acoustic, SweepParameter::SigmaZ, 1.0).is_err());
        assert!(apply_sweep_value(&small_spec(), SweepParameter::NParticles, 2.5).is_err());
    }

    #[test]
    fn sweep_points_share_state_trajectories() {
        let spec = small_spec();
        let a = Scenario::new(apply_sweep_value(&spec, SweepParameter::SigmaZ, 2.0).unwrap().scenario).unwrap();
        let b = Scenario::new(apply_sweep_value(&spec, SweepParameter::SigmaZ, 0.5).unwrap().scenario).unwrap();
        let ta = simulate_trial(&a, 3, 1, 5).unwrap();
        let tb = simulate_trial(&b, 3, 1, 5).unwrap();
        assert_eq!(ta.states, tb.states);
        // same standard-normal draws, scaled by the noise level
        for (za, (zb, x)) in ta.measurements.iter().zip(tb.measurements.iter().zip(&ta.states)) {
            let ra = za - x;
            let rb = zb - x;
            assert!((ra - rb * 4.0).norm() < 1e-12);
        }
    }
}
