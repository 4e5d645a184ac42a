use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::linear_gaussian::{normal_matrix, normal_vector};
use super::{DynamicModel, MeasurementModel};
use crate::error::{Error, Result};
use crate::linalg::GaussianFactor;

/// Parameter table of the acoustic multi-target scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcousticParams {
    pub num_targets: usize,
    /// Side length of the square tracking area, metres.
    pub arena: f64,
    /// Sensors per side of the lattice spanning the area (corners included).
    pub sensors_per_side: usize,
    pub psi: f64,
    pub d0: f64,
    /// Measurement noise standard deviation (variance 0.01).
    pub sigma_w: f64,
    /// Per-target process covariance used to simulate ground truth.
    pub truth_process_cov: [[f64; 4]; 4],
    /// Per-target process covariance assumed by the filters.
    pub filter_process_cov: [[f64; 4]; 4],
    pub initial_states: Vec<[f64; 4]>,
    /// Spread of the filters' initial mean around the true initial state.
    pub init_std_position: f64,
    pub init_std_velocity: f64,
    /// Redraw simulated trajectories whose targets leave the area.
    pub keep_truth_in_arena: bool,
}

impl Default for AcousticParams {
    fn default() -> Self {
        let s = 1.0 / 20.0;
        Self {
            num_targets: 4,
            arena: 40.0,
            sensors_per_side: 5,
            psi: 10.0,
            d0: 0.1,
            sigma_w: 0.1,
            truth_process_cov: [
                [s / 3.0, 0.0, s * 0.5, 0.0],
                [0.0, s / 3.0, 0.0, s * 0.5],
                [s * 0.5, 0.0, s, 0.0],
                [0.0, s * 0.5, 0.0, s],
            ],
            filter_process_cov: [
                [3.0, 0.0, 0.1, 0.0],
                [0.0, 3.0, 0.0, 0.1],
                [0.1, 0.0, 0.03, 0.0],
                [0.0, 0.1, 0.0, 0.03],
            ],
            initial_states: vec![
                [12.0, 6.0, 0.001, 0.001],
                [32.0, 32.0, -0.001, -0.005],
                [20.0, 13.0, -0.1, 0.01],
                [15.0, 35.0, 0.002, 0.002],
            ],
            init_std_position: 10.0,
            init_std_velocity: 1.0,
            keep_truth_in_arena: true,
        }
    }
}

impl AcousticParams {
    pub fn sensor_positions(&self) -> Vec<[f64; 2]> {
        let n = self.sensors_per_side;
        let spacing = if n > 1 { self.arena / (n - 1) as f64 } else { 0.0 };
        super::SensorGrid::lattice(n, 0.0, spacing).positions().to_vec()
    }

    pub fn truth_cov(&self) -> DMatrix<f64> {
        to_matrix(&self.truth_process_cov)
    }

    pub fn filter_cov(&self) -> DMatrix<f64> {
        to_matrix(&self.filter_process_cov)
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_iterator(
            4 * self.initial_states.len(),
            self.initial_states.iter().flatten().copied(),
        )
    }
}

fn to_matrix(m: &[[f64; 4]; 4]) -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |i, j| m[i][j])
}

/// Per-target single-target transition `F` for `[x, y, vx, vy]` with unit time step.
pub fn cv_transition() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, 1.0, 0.0, //
            0.0, 1.0, 0.0, 1.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    )
}

fn block_diag(block: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let b = block.nrows();
    let mut out = DMatrix::zeros(b * n, b * n);
    for c in 0..n {
        out.view_mut((c * b, c * b), (b, b)).copy_from(block);
    }
    out
}

/// Independent constant-velocity targets with Gaussian process noise.
#[derive(Debug, Clone)]
pub struct ConstantVelocity {
    num_targets: usize,
    cov: DMatrix<f64>,
    noise: GaussianFactor,
    noise_l: DMatrix<f64>,
    transition: DMatrix<f64>,
}

impl ConstantVelocity {
    pub fn new(num_targets: usize, per_target_cov: &DMatrix<f64>) -> Result<Self> {
        if num_targets == 0 {
            return Err(Error::InvalidParameter {
                name: "num_targets",
                reason: "need at least one target".into(),
            });
        }
        if per_target_cov.shape() != (4, 4) {
            return Err(Error::DimensionMismatch {
                context: "per-target process covariance",
                expected: 4,
                actual: per_target_cov.nrows(),
            });
        }
        let cov = block_diag(per_target_cov, num_targets);
        let noise = GaussianFactor::new(&cov)?;
        let noise_l = noise.lower();
        Ok(Self {
            num_targets,
            cov,
            noise,
            noise_l,
            transition: block_diag(&cv_transition(), num_targets),
        })
    }

    pub fn num_targets(&self) -> usize {
        self.num_targets
    }
}

impl DynamicModel for ConstantVelocity {
    fn dim(&self) -> usize {
        4 * self.num_targets
    }

    fn deterministic_map(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        for c in 0..self.num_targets {
            let o = 4 * c;
            y[o] += x[o + 2];
            y[o + 1] += x[o + 3];
        }
        y
    }

    fn sample_noise(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        &self.noise_l * normal_vector(self.dim(), rng)
    }

    fn sample_noise_batch(&self, n: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
        &self.noise_l * normal_matrix(self.dim(), n, rng)
    }

    fn log_transition_density(&self, next: &DVector<f64>, prev: &DVector<f64>) -> f64 {
        self.noise.log_density(&(next - self.deterministic_map(prev)))
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.transition.clone()
    }

    fn process_covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// Each sensor records the summed amplitude `Σ_c psi / (|p_c - R_s| + d0)` plus Gaussian noise.
#[derive(Debug, Clone)]
pub struct AcousticMeasurement {
    num_targets: usize,
    sensors: Vec<[f64; 2]>,
    psi: f64,
    d0: f64,
    sigma_w: f64,
}

impl AcousticMeasurement {
    pub fn new(num_targets: usize, sensors: Vec<[f64; 2]>, psi: f64, d0: f64, sigma_w: f64) -> Result<Self> {
        if num_targets == 0 {
            return Err(Error::InvalidParameter {
                name: "num_targets",
                reason: "need at least one target".into(),
            });
        }
        if !(d0 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "d0",
                reason: format!("must be > 0, got {d0}"),
            });
        }
        if !(sigma_w > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma_w",
                reason: format!("must be > 0, got {sigma_w}"),
            });
        }
        if sensors.is_empty() {
            return Err(Error::InvalidParameter {
                name: "sensor_positions",
                reason: "need at least one sensor".into(),
            });
        }
        Ok(Self {
            num_targets,
            sensors,
            psi,
            d0,
            sigma_w,
        })
    }

    pub fn sensors(&self) -> &[[f64; 2]] {
        &self.sensors
    }
}

impl MeasurementModel for AcousticMeasurement {
    fn dim(&self) -> usize {
        self.sensors.len()
    }

    fn state_dim(&self) -> usize {
        4 * self.num_targets
    }

    fn map(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.sensors.len(),
            self.sensors.iter().map(|s| {
                (0..self.num_targets)
                    .map(|c| {
                        let dx = x[4 * c] - s[0];
                        let dy = x[4 * c + 1] - s[1];
                        self.psi / ((dx * dx + dy * dy).sqrt() + self.d0)
                    })
                    .sum::<f64>()
            }),
        )
    }

    fn log_likelihood(&self, z: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        let var = self.sigma_w * self.sigma_w;
        let r = z - self.map(x);
        let s = self.dim() as f64;
        Ok(-0.5 * r.norm_squared() / var - 0.5 * s * (2.0 * std::f64::consts::PI * var).ln())
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.dim(), self.state_dim());
        for (si, s) in self.sensors.iter().enumerate() {
            for c in 0..self.num_targets {
                let dx = x[4 * c] - s[0];
                let dy = x[4 * c + 1] - s[1];
                let r = (dx * dx + dy * dy).sqrt();
                if r == 0.0 {
                    // non-differentiable point; zero subgradient
                    continue;
                }
                let k = -self.psi / (r * (r + self.d0).powi(2));
                jac[(si, 4 * c)] = k * dx;
                jac[(si, 4 * c + 1)] = k * dy;
            }
        }
        jac
    }

    fn noise_covariance(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::identity(d, d) * (self.sigma_w * self.sigma_w)
    }

    fn sample(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
        self.map(x) + normal_vector(self.dim(), rng) * self.sigma_w
    }
}
