use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{DynamicModel, MeasurementModel};
use crate::error::{Error, Result};
use crate::linalg::GaussianFactor;

pub(crate) fn normal_vector(n: usize, rng: &mut dyn RngCore) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub(crate) fn normal_matrix(r: usize, c: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
    // column-major fill keeps the draw order identical to per-column sampling
    let mut m = DMatrix::zeros(r, c);
    for j in 0..c {
        for i in 0..r {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// `x_k = F x_{k-1} + v_k`, `v_k ~ N(0, Q)`.
#[derive(Debug, Clone)]
pub struct LinearGaussianDynamics {
    transition: DMatrix<f64>,
    cov: DMatrix<f64>,
    noise: GaussianFactor,
    noise_l: DMatrix<f64>,
}

impl LinearGaussianDynamics {
    pub fn new(transition: DMatrix<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = transition.nrows();
        if transition.ncols() != d || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "linear dynamics",
                expected: d,
                actual: cov.nrows(),
            });
        }
        let noise = GaussianFactor::new(&cov)?;
        let noise_l = noise.lower();
        Ok(Self {
            transition,
            cov,
            noise,
            noise_l,
        })
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }
}

impl DynamicModel for LinearGaussianDynamics {
    fn dim(&self) -> usize {
        self.transition.nrows()
    }

    fn deterministic_map(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.transition * x
    }

    fn sample_noise(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        &self.noise_l * normal_vector(self.dim(), rng)
    }

    fn sample_noise_batch(&self, n: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
        &self.noise_l * normal_matrix(self.dim(), n, rng)
    }

    fn log_transition_density(&self, next: &DVector<f64>, prev: &DVector<f64>) -> f64 {
        self.noise.log_density(&(next - &self.transition * prev))
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.transition.clone()
    }

    fn process_covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// `z = H x + w`, `w ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct GaussianMeasurement {
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    noise: GaussianFactor,
    noise_l: DMatrix<f64>,
}

impl GaussianMeasurement {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if r.nrows() != h.nrows() || r.ncols() != h.nrows() {
            return Err(Error::DimensionMismatch {
                context: "gaussian measurement",
                expected: h.nrows(),
                actual: r.nrows(),
            });
        }
        let noise = GaussianFactor::new(&r)?;
        let noise_l = noise.lower();
        Ok(Self { h, r, noise, noise_l })
    }

    /// `z = x + w` with `w ~ N(0, sigma² I)`.
    pub fn identity(d: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma_z",
                reason: format!("must be > 0, got {sigma}"),
            });
        }
        Self::new(DMatrix::identity(d, d), DMatrix::identity(d, d) * (sigma * sigma))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

impl MeasurementModel for GaussianMeasurement {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    fn map(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x
    }

    fn log_likelihood(&self, z: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        Ok(self.noise.log_density(&(z - &self.h * x)))
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.h.clone()
    }

    fn noise_covariance(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.r.clone()
    }

    fn sample(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
        &self.h * x + &self.noise_l * normal_vector(self.dim(), rng)
    }
}
