use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::GaussianBelief;
use crate::ssm::{
    build_dispersion_matrix, make_acoustic_model, make_linear_gaussian_model, make_skewt_poisson_model, normal_vector,
    AcousticParams, GhSkewedTParams, SensorGrid, StateSpaceModel,
};

/// Cap on rejection-sampling attempts for initial states and truth trajectories.
pub const MAX_REJECTIONS: usize = 10_000;

/// Linear-Gaussian sensor grid: `x_k = alpha x_{k-1} + v`, `z_k = x_k + w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearGaussianParams {
    /// Number of sensors (a perfect square).
    pub d: usize,
    pub alpha: f64,
    pub sigma_z: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta: f64,
}

impl Default for LinearGaussianParams {
    fn default() -> Self {
        Self {
            d: 64,
            alpha: 0.9,
            sigma_z: 1.0,
            alpha0: 3.0,
            alpha1: 0.01,
            beta: 20.0,
        }
    }
}

/// Skewed-t dynamics on a sensor grid observed through Poisson counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkewtPoissonParams {
    pub d: usize,
    pub alpha: f64,
    pub nu: f64,
    /// Every component of the skewness vector.
    pub gamma: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta: f64,
    pub m1: f64,
    pub m2: f64,
}

impl Default for SkewtPoissonParams {
    fn default() -> Self {
        Self {
            d: 144,
            alpha: 0.9,
            nu: 7.0,
            gamma: 0.3,
            alpha0: 3.0,
            alpha1: 0.01,
            beta: 20.0,
            m1: 1.0,
            m2: 1.0 / 3.0,
        }
    }
}

/// Named scenario presets with their parameter tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum ScenarioConfig {
    Acoustic(AcousticParams),
    LinearGaussian(LinearGaussianParams),
    SkewtPoisson(SkewtPoissonParams),
}

impl ScenarioConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioConfig::Acoustic(_) => "acoustic",
            ScenarioConfig::LinearGaussian(_) => "linear-gaussian",
            ScenarioConfig::SkewtPoisson(_) => "skewt-poisson",
        }
    }

    /// Default parameters of a preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "acoustic" => Ok(ScenarioConfig::Acoustic(AcousticParams::default())),
            "linear-gaussian" => Ok(ScenarioConfig::LinearGaussian(LinearGaussianParams::default())),
            "skewt-poisson" => Ok(ScenarioConfig::SkewtPoisson(SkewtPoissonParams::default())),
            other => Err(Error::InvalidParameter {
                name: "preset",
                reason: format!("unknown scenario `{other}`; expected acoustic, linear-gaussian or skewt-poisson"),
            }),
        }
    }
}

/// How per-step errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Position OMAT with `p = 1`, metres.
    Omat,
    /// Mean squared error over coordinates.
    Mse,
}

/// Simulated ground truth: states and measurements for steps `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

/// A scenario with its truth-generating and filtering models built.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    truth: StateSpaceModel,
    filter: StateSpaceModel,
}

fn grid_dispersion(d: usize, alpha0: f64, alpha1: f64, beta: f64) -> Result<DMatrix<f64>> {
    let grid = SensorGrid::new(d)?;
    build_dispersion_matrix(&grid, alpha0, alpha1, beta)
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let (truth, filter) = match &config {
            ScenarioConfig::Acoustic(p) => {
                if p.initial_states.len() != p.num_targets {
                    return Err(Error::DimensionMismatch {
                        context: "acoustic initial states",
                        expected: p.num_targets,
                        actual: p.initial_states.len(),
                    });
                }
                let sensors = p.sensor_positions();
                let truth = make_acoustic_model(p.num_targets, &sensors, p.psi, p.d0, p.sigma_w, &p.truth_cov())?;
                let filter = make_acoustic_model(p.num_targets, &sensors, p.psi, p.d0, p.sigma_w, &p.filter_cov())?;
                (truth, filter)
            }
            ScenarioConfig::LinearGaussian(p) => {
                let grid = SensorGrid::new(p.d)?;
                let sigma = build_dispersion_matrix(&grid, p.alpha0, p.alpha1, p.beta)?;
                let m = make_linear_gaussian_model(&grid, p.alpha, p.sigma_z, &sigma)?;
                (m.clone(), m)
            }
            ScenarioConfig::SkewtPoisson(p) => {
                let sigma = grid_dispersion(p.d, p.alpha0, p.alpha1, p.beta)?;
                let params = GhSkewedTParams {
                    nu: p.nu,
                    gamma: DVector::from_element(p.d, p.gamma),
                    sigma,
                    alpha: p.alpha,
                };
                let m = make_skewt_poisson_model(params, p.m1, p.m2)?;
                (m.clone(), m)
            }
        };
        Ok(Self { config, truth, filter })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// Model used to simulate ground truth.
    pub fn truth_model(&self) -> &StateSpaceModel {
        &self.truth
    }

    /// Model handed to the filters.
    pub fn filter_model(&self) -> &StateSpaceModel {
        &self.filter
    }

    pub fn dim(&self) -> usize {
        self.filter.dim_state()
    }

    pub fn metric(&self) -> MetricKind {
        match self.config {
            ScenarioConfig::Acoustic(_) => MetricKind::Omat,
            _ => MetricKind::Mse,
        }
    }

    pub fn truth_initial_state(&self) -> DVector<f64> {
        match &self.config {
            ScenarioConfig::Acoustic(p) => p.initial_state(),
            _ => DVector::zeros(self.dim()),
        }
    }

    fn in_arena(&self, x: &DVector<f64>) -> bool {
        match &self.config {
            ScenarioConfig::Acoustic(p) => x
                .as_slice()
                .chunks_exact(4)
                .all(|c| (0.0..=p.arena).contains(&c[0]) && (0.0..=p.arena).contains(&c[1])),
            _ => true,
        }
    }

    /// Simulates `n_steps` states from `state_rng` and their measurements from `meas_rng`.
    ///
    /// Acoustic trajectories that leave the arena are redrawn when the preset asks for it.
    pub fn simulate(
        &self,
        n_steps: usize,
        state_rng: &mut dyn RngCore,
        meas_rng: &mut dyn RngCore,
    ) -> Result<Trajectory> {
        let confine = matches!(&self.config, ScenarioConfig::Acoustic(p) if p.keep_truth_in_arena);
        let dynamic = &self.truth.dynamic;
        let mut attempts = 0;
        let states = 'outer: loop {
            attempts += 1;
            if attempts > MAX_REJECTIONS {
                return Err(Error::RejectionExhausted(MAX_REJECTIONS));
            }
            let mut x = self.truth_initial_state();
            let mut states = Vec::with_capacity(n_steps);
            for _ in 0..n_steps {
                let v = dynamic.sample_noise(state_rng);
                x = dynamic.propagate(&x, &v);
                if confine && !self.in_arena(&x) {
                    continue 'outer;
                }
                states.push(x.clone());
            }
            break states;
        };
        let measurements = states
            .iter()
            .map(|x| self.truth.measurement.sample(x, meas_rng))
            .collect();
        Ok(Trajectory { states, measurements })
    }

    /// Initial filter belief; the acoustic mean is drawn around the true start.
    pub fn initial_belief(&self, rng: &mut dyn RngCore) -> Result<GaussianBelief> {
        match &self.config {
            ScenarioConfig::Acoustic(p) => {
                let truth = p.initial_state();
                let std = [
                    p.init_std_position,
                    p.init_std_position,
                    p.init_std_velocity,
                    p.init_std_velocity,
                ];
                let mut mean = truth.clone();
                for c in 0..p.num_targets {
                    let mut accepted = false;
                    for _ in 0..MAX_REJECTIONS {
                        let u = normal_vector(4, rng);
                        let cand: Vec<f64> = (0..4).map(|i| truth[4 * c + i] + std[i] * u[i]).collect();
                        if (0.0..=p.arena).contains(&cand[0]) && (0.0..=p.arena).contains(&cand[1]) {
                            for i in 0..4 {
                                mean[4 * c + i] = cand[i];
                            }
                            accepted = true;
                            break;
                        }
                    }
                    if !accepted {
                        return Err(Error::RejectionExhausted(MAX_REJECTIONS));
                    }
                }
                let diag = DVector::from_fn(4 * p.num_targets, |i, _| std[i % 4] * std[i % 4]);
                GaussianBelief::new(mean, DMatrix::from_diagonal(&diag))
            }
            _ => {
                let d = self.dim();
                GaussianBelief::new(DVector::zeros(d), DMatrix::zeros(d, d))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_initial_belief_is_zero() {
        let s = Scenario::new(ScenarioConfig::preset("linear-gaussian").unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = s.initial_belief(&mut rng).unwrap();
        assert_eq!(b.mean, DVector::zeros(64));
        assert_eq!(s.truth_initial_state(), DVector::zeros(64));
        assert_eq!(s.metric(), MetricKind::Mse);
    }

    #[test]
    fn acoustic_initial_means_stay_in_arena() {
        let s = Scenario::new(ScenarioConfig::preset("acoustic").unwrap()).unwrap();
        assert_eq!(s.truth_initial_state().as_slice()[..4], [12.0, 6.0, 0.001, 0.001]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let b = s.initial_belief(&mut rng).unwrap();
            assert!(s.in_arena(&b.mean));
            assert_eq!(b.cov[(0, 0)], 100.0);
            assert_eq!(b.cov[(2, 2)], 1.0);
        }
    }

    #[test]
    fn acoustic_truth_uses_generator_covariance() {
        let s = Scenario::new(ScenarioConfig::preset("acoustic").unwrap()).unwrap();
        let q = s.truth_model().dynamic.process_covariance();
        assert!((q[(0, 0)] - 1.0 / 60.0).abs() < 1e-15);
        assert!((q[(0, 2)] - 0.025).abs() < 1e-15);
        let qf = s.filter_model().dynamic.process_covariance();
        assert_eq!(qf[(0, 0)], 3.0);
        assert_eq!(qf[(2, 2)], 0.03);
    }

    #[test]
    fn simulated_acoustic_tracks_stay_in_arena() {
        let s = Scenario::new(ScenarioConfig::preset("acoustic").unwrap()).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(2);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let t = s.simulate(40, &mut a, &mut b).unwrap();
        assert_eq!(t.states.len(), 40);
        assert_eq!(t.measurements[0].len(), 25);
        assert!(t.states.iter().all(|x| s.in_arena(x)));
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(ScenarioConfig::preset("bogus").is_err());
    }

    #[test]
    fn preset_config_round_trips() {
        for name in ["acoustic", "linear-gaussian", "skewt-poisson"] {
            let c = ScenarioConfig::preset(name).unwrap();
            let json = serde_json::to_string(&c).unwrap();
            assert!(json.contains(name));
            let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, c);
        }
        let bad = r#"{"preset": "linear-gaussian", "d": 16, "sigmaz": 1.0}"#;
        assert!(serde_json::from_str::<ScenarioConfig>(bad).is_err());
    }
}
