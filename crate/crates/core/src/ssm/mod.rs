//! State-space model abstraction and the three benchmark scenario families.
//!
//! A model pairs a [`DynamicModel`] (`x_k = g(x_{k-1}, v_k)`) with a
//! [`MeasurementModel`] (`z_k = h(x_k, w_k)`). Model objects are immutable once
//! built; every sampler takes an explicit rng so the same model can be shared
//! read-only across worker threads.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::fd_jacobian;

mod acoustic;
mod gh;
mod grid;
mod linear_gaussian;
mod skewt_poisson;

pub use acoustic::{AcousticMeasurement, AcousticParams, ConstantVelocity};
pub use gh::{log_gh_skewed_t_pdf, sample_gh_skewed_t, GhSkewedT, GhSkewedTParams};
pub use grid::{build_dispersion_matrix, SensorGrid};
pub(crate) use linear_gaussian::{normal_matrix, normal_vector};
pub use linear_gaussian::{GaussianMeasurement, LinearGaussianDynamics};
pub use skewt_poisson::{PoissonCountMeasurement, SkewedTDynamics};

/// The state-transition half of a state-space model.
pub trait DynamicModel: Send + Sync {
    fn dim(&self) -> usize;

    /// `g(x, 0)`.
    fn deterministic_map(&self, x: &DVector<f64>) -> DVector<f64>;

    fn sample_noise(&self, rng: &mut dyn RngCore) -> DVector<f64>;

    /// Noise for `n` particles as the columns of a `d x n` matrix.
    fn sample_noise_batch(&self, n: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), n);
        for j in 0..n {
            out.set_column(j, &self.sample_noise(rng));
        }
        out
    }

    /// `g(x, v)`; additive by default.
    fn propagate(&self, x: &DVector<f64>, noise: &DVector<f64>) -> DVector<f64> {
        self.deterministic_map(x) + noise
    }

    /// `log p(next | prev)`.
    fn log_transition_density(&self, next: &DVector<f64>, prev: &DVector<f64>) -> f64;

    /// Jacobian of `g(·, 0)`; central finite differences unless overridden.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        fd_jacobian(|y| self.deterministic_map(y), x, 1e-6)
    }

    /// Covariance the Kalman recursions add at each prediction.
    fn process_covariance(&self) -> &DMatrix<f64>;
}

/// The observation half of a state-space model.
pub trait MeasurementModel: Send + Sync {
    fn dim(&self) -> usize;

    fn state_dim(&self) -> usize;

    /// `h(x, 0)`.
    fn map(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `log p(z | x)`.
    fn log_likelihood(&self, z: &DVector<f64>, x: &DVector<f64>) -> Result<f64>;

    /// `S x d` Jacobian of `h(·, 0)` at `x`.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Measurement covariance used by the flows and Kalman updates, evaluated at `x`.
    fn noise_covariance(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Draws `z ~ p(z | x)`.
    fn sample(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64>;

    /// Checks that `z` lies in the support of the measurement distribution.
    fn validate(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "measurement",
                expected: self.dim(),
                actual: z.len(),
            });
        }
        Ok(())
    }
}

/// A dynamic model paired with a measurement model.
#[derive(Clone)]
pub struct StateSpaceModel {
    pub dynamic: Arc<dyn DynamicModel>,
    pub measurement: Arc<dyn MeasurementModel>,
}

impl std::fmt::Debug for StateSpaceModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StateSpaceModel")
            .field("dim_state", &self.dim_state())
            .field("dim_meas", &self.dim_meas())
            .finish()
    }
}

impl StateSpaceModel {
    pub fn new(dynamic: Arc<dyn DynamicModel>, measurement: Arc<dyn MeasurementModel>) -> Result<Self> {
        if dynamic.dim() != measurement.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "state-space model",
                expected: dynamic.dim(),
                actual: measurement.state_dim(),
            });
        }
        Ok(Self { dynamic, measurement })
    }

    pub fn dim_state(&self) -> usize {
        self.dynamic.dim()
    }

    pub fn dim_meas(&self) -> usize {
        self.measurement.dim()
    }
}

/// Builds the acoustic multi-target model.
///
/// State is `[x, y, vx, vy]` per target; see [`AcousticParams`] for defaults.
pub fn make_acoustic_model(
    num_targets: usize,
    sensor_positions: &[[f64; 2]],
    psi: f64,
    d0: f64,
    sigma_w: f64,
    process_cov: &DMatrix<f64>,
) -> Result<StateSpaceModel> {
    let dynamic = ConstantVelocity::new(num_targets, process_cov)?;
    let measurement = AcousticMeasurement::new(num_targets, sensor_positions.to_vec(), psi, d0, sigma_w)?;
    StateSpaceModel::new(Arc::new(dynamic), Arc::new(measurement))
}

/// Builds the linear-Gaussian sensor-grid model `x_k = alpha x_{k-1} + v`, `z = x + w`.
pub fn make_linear_gaussian_model(
    grid: &SensorGrid,
    alpha: f64,
    sigma_z: f64,
    dispersion: &DMatrix<f64>,
) -> Result<StateSpaceModel> {
    let d = grid.len();
    let dynamic = LinearGaussianDynamics::new(DMatrix::identity(d, d) * alpha, dispersion.clone())?;
    let measurement = GaussianMeasurement::identity(d, sigma_z)?;
    StateSpaceModel::new(Arc::new(dynamic), Arc::new(measurement))
}

/// Builds the GH skewed-t dynamics with Poisson count observations.
pub fn make_skewt_poisson_model(params: GhSkewedTParams, m1: f64, m2: f64) -> Result<StateSpaceModel> {
    let d = params.gamma.len();
    let dynamic = SkewedTDynamics::new(params)?;
    let measurement = PoissonCountMeasurement::new(d, m1, m2)?;
    StateSpaceModel::new(Arc::new(dynamic), Arc::new(measurement))
}
