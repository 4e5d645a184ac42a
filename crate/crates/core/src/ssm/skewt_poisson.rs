use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Poisson};

use super::gh::{GhSkewedT, GhSkewedTParams};
use super::{DynamicModel, MeasurementModel};
use crate::error::{Error, Result};
use crate::special::ln_factorial;

// Keeps R(x) = diag(rate) positive definite where the rate underflows.
const MIN_RATE: f64 = 1e-10;
// Largest rate the Poisson sampler accepts.
const MAX_RATE: f64 = 1e15;

/// `x_k = alpha x_{k-1} + v_k` with `v_k` GH skewed-t noise.
///
/// The noise is not centred: its mean is `nu/(nu-2) γ`. The deterministic map
/// stays `alpha x` and the Kalman recursions use the skewed-t covariance in
/// place of a Gaussian process covariance.
#[derive(Debug, Clone)]
pub struct SkewedTDynamics {
    dist: GhSkewedT,
    cov: DMatrix<f64>,
    zero: DVector<f64>,
}

impl SkewedTDynamics {
    pub fn new(params: GhSkewedTParams) -> Result<Self> {
        let d = params.gamma.len();
        let cov = params.covariance();
        let dist = GhSkewedT::new(params)?;
        Ok(Self {
            dist,
            cov,
            zero: DVector::zeros(d),
        })
    }

    pub fn distribution(&self) -> &GhSkewedT {
        &self.dist
    }
}

impl DynamicModel for SkewedTDynamics {
    fn dim(&self) -> usize {
        self.dist.dim()
    }

    fn deterministic_map(&self, x: &DVector<f64>) -> DVector<f64> {
        x * self.dist.params().alpha
    }

    fn sample_noise(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        self.dist.sample(&self.zero, rng)
    }

    fn log_transition_density(&self, next: &DVector<f64>, prev: &DVector<f64>) -> f64 {
        self.dist.log_pdf(next, &self.deterministic_map(prev))
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::identity(d, d) * self.dist.params().alpha
    }

    fn process_covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// Independent Poisson counts `z^c ~ Poisson(m1 exp(m2 x^c))`.
#[derive(Debug, Clone)]
pub struct PoissonCountMeasurement {
    d: usize,
    m1: f64,
    m2: f64,
}

impl PoissonCountMeasurement {
    pub fn new(d: usize, m1: f64, m2: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: "dimension must be positive".into(),
            });
        }
        if !(m1 > 0.0) || !m1.is_finite() {
            return Err(Error::InvalidParameter {
                name: "m1",
                reason: format!("must be finite and > 0, got {m1}"),
            });
        }
        if !m2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "m2",
                reason: "must be finite".into(),
            });
        }
        Ok(Self { d, m1, m2 })
    }

    fn rate(&self, x: f64) -> f64 {
        self.m1 * (self.m2 * x).exp()
    }
}

impl MeasurementModel for PoissonCountMeasurement {
    fn dim(&self) -> usize {
        self.d
    }

    fn state_dim(&self) -> usize {
        self.d
    }

    fn map(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.rate(v))
    }

    fn log_likelihood(&self, z: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        self.validate(z)?;
        let ln_m1 = self.m1.ln();
        Ok(z.iter()
            .zip(x.iter())
            .map(|(&zc, &xc)| {
                let rate = self.rate(xc);
                if zc == 0.0 {
                    -rate
                } else {
                    zc * (ln_m1 + self.m2 * xc) - rate - ln_factorial(zc)
                }
            })
            .sum())
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(|v| self.m2 * self.rate(v)))
    }

    fn noise_covariance(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(|v| self.rate(v).max(MIN_RATE)))
    }

    fn sample(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
        x.map(|v| {
            let rate = self.rate(v).min(MAX_RATE);
            match Poisson::new(rate) {
                Ok(p) => p.sample(rng),
                Err(_) => 0.0,
            }
        })
    }

    fn validate(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.d {
            return Err(Error::DimensionMismatch {
                context: "count measurement",
                expected: self.d,
                actual: z.len(),
            });
        }
        if let Some((c, v)) = z
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0 && v.fract() == 0.0))
        {
            return Err(Error::InvalidMeasurement(format!(
                "count {c} must be a non-negative integer, got {v}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fd_jacobian;

    fn counts() -> PoissonCountMeasurement {
        PoissonCountMeasurement::new(3, 1.0, 1.0 / 3.0).unwrap()
    }

    #[test]
    fn zero_count_at_origin() {
        let m = counts();
        let z = DVector::zeros(3);
        let x = DVector::zeros(3);
        assert!((m.log_likelihood(&z, &x).unwrap() + 3.0).abs() < 1e-15);
    }

    #[test]
    fn unit_count_at_origin() {
        let m = PoissonCountMeasurement::new(1, 1.0, 1.0 / 3.0).unwrap();
        let z = DVector::from_element(1, 1.0);
        let x = DVector::zeros(1);
        assert!((m.log_likelihood(&z, &x).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_poisson_pmf() {
        let m = PoissonCountMeasurement::new(1, 2.0, 0.5).unwrap();
        let x = DVector::from_element(1, 1.2);
        let rate: f64 = 2.0 * (0.6f64).exp();
        // rate^4 e^{-rate} / 4!
        let expected = (rate.powi(4) * (-rate).exp() / 24.0).ln();
        let got = m.log_likelihood(&DVector::from_element(1, 4.0), &x).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn jacobian_at_origin_and_finite_differences() {
        let m = counts();
        let j = m.jacobian(&DVector::zeros(3));
        assert_eq!(j, DMatrix::identity(3, 3) / 3.0);
        let x = DVector::from_vec(vec![-1.5, 0.3, 4.0]);
        let fd = fd_jacobian(|y| m.map(y), &x, 1e-6);
        assert!((&m.jacobian(&x) - &fd).norm() < 1e-5 * fd.norm());
    }

    #[test]
    fn rejects_invalid_counts() {
        let m = counts();
        let x = DVector::zeros(3);
        assert!(m.log_likelihood(&DVector::from_vec(vec![1.0, -1.0, 0.0]), &x).is_err());
        assert!(m.log_likelihood(&DVector::from_vec(vec![1.5, 0.0, 0.0]), &x).is_err());
        assert!(m
            .log_likelihood(&DVector::from_vec(vec![f64::NAN, 0.0, 0.0]), &x)
            .is_err());
        assert!(m.log_likelihood(&DVector::zeros(2), &x).is_err());
    }

    #[test]
    fn noise_covariance_stays_positive() {
        let m = counts();
        let r = m.noise_covariance(&DVector::from_vec(vec![-5000.0, 0.0, 3.0]));
        assert!(r.diagonal().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn skewt_dynamics_map_and_density() {
        let p = GhSkewedTParams {
            nu: 7.0,
            gamma: DVector::from_element(2, 0.3),
            sigma: DMatrix::identity(2, 2),
            alpha: 0.9,
        };
        let dynm = SkewedTDynamics::new(p.clone()).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(dynm.deterministic_map(&x), &x * 0.9);
        let next = DVector::from_vec(vec![0.5, 0.1]);
        let direct = GhSkewedT::new(p).unwrap().log_pdf(&next, &(&x * 0.9));
        assert_eq!(dynm.log_transition_density(&next, &x), direct);
        assert_eq!(dynm.propagate(&x, &DVector::zeros(2)), dynm.deterministic_map(&x));
    }
}
