use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Gamma};

use super::linear_gaussian::normal_vector;
use crate::error::{Error, Result};
use crate::linalg::GaussianFactor;
use crate::special::{ln_gamma, log_bessel_k};

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Parameters of the GH skewed-t transition `x_k ~ GH(mu = alpha x_{k-1}, gamma, sigma, nu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GhSkewedTParams {
    pub nu: f64,
    pub gamma: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub alpha: f64,
}

impl GhSkewedTParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 4.0) || !self.nu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: format!("must be a finite value > 4, got {}", self.nu),
            });
        }
        let d = self.gamma.len();
        if d == 0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "dimension must be positive".into(),
            });
        }
        if self.sigma.nrows() != d || self.sigma.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "skewed-t dispersion",
                expected: d,
                actual: self.sigma.nrows(),
            });
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    /// `nu/(nu-2) Σ + nu²/((2nu-8)(nu/2-1)²) γγᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let nu = self.nu;
        let w_var = nu * nu / ((2.0 * nu - 8.0) * (0.5 * nu - 1.0).powi(2));
        &self.sigma * (nu / (nu - 2.0)) + &self.gamma * self.gamma.transpose() * w_var
    }

    /// `mu + nu/(nu-2) γ`.
    pub fn mean_offset(&self) -> DVector<f64> {
        &self.gamma * (self.nu / (self.nu - 2.0))
    }
}

/// A validated GH skewed-t distribution with the dispersion factorization cached.
#[derive(Debug, Clone)]
pub struct GhSkewedT {
    params: GhSkewedTParams,
    factor: GaussianFactor,
    lower: DMatrix<f64>,
    // L⁻¹γ and γᵀΣ⁻¹γ
    white_gamma: DVector<f64>,
    gamma_quad: f64,
    log_const: f64,
    mixing: Gamma<f64>,
}

impl GhSkewedT {
    pub fn new(params: GhSkewedTParams) -> Result<Self> {
        params.validate()?;
        let factor =
            GaussianFactor::new(&params.sigma).map_err(|_| Error::NotPositiveDefinite("skewed-t dispersion"))?;
        let lower = factor.lower();
        let white_gamma = lower
            .solve_lower_triangular(&params.gamma)
            .ok_or(Error::NotPositiveDefinite("skewed-t dispersion"))?;
        let gamma_quad = white_gamma.norm_squared();
        let d = params.gamma.len() as f64;
        let nu = params.nu;
        let a = 0.5 * (nu + d);
        let half_log_det = lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let base = -ln_gamma(0.5 * nu) - 0.5 * d * (LN_PI + nu.ln()) - half_log_det;
        let log_const = if gamma_quad > 0.0 {
            (1.0 - a) * std::f64::consts::LN_2 + base
        } else {
            ln_gamma(a) + base
        };
        let mixing = Gamma::new(0.5 * nu, 2.0 / nu).map_err(|e| Error::InvalidParameter {
            name: "nu",
            reason: e.to_string(),
        })?;
        Ok(Self {
            params,
            factor,
            lower,
            white_gamma,
            gamma_quad,
            log_const,
            mixing,
        })
    }

    pub fn params(&self) -> &GhSkewedTParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.gamma.len()
    }

    /// Log density at `x` for location `mu`.
    pub fn log_pdf(&self, x: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        let nu = self.params.nu;
        let a = 0.5 * (nu + self.dim() as f64);
        let white = self.factor.whiten(&(x - mu));
        let q = white.norm_squared();
        let tail = -a * (q / nu).ln_1p();
        if self.gamma_quad == 0.0 {
            return self.log_const + tail;
        }
        let s = ((nu + q) * self.gamma_quad).sqrt();
        if !(s > 0.0) || !s.is_finite() {
            return f64::NEG_INFINITY;
        }
        let cross = white.dot(&self.white_gamma);
        match log_bessel_k(a, s) {
            Ok(lk) => self.log_const + lk + cross + a * s.ln() + tail,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Draws `mu + γW + √W L u` with `W ~ InvGamma(nu/2, nu/2)`.
    pub fn sample(&self, mu: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
        let g: f64 = self.mixing.sample(rng);
        let w = 1.0 / g;
        let u = normal_vector(self.dim(), rng);
        mu + &self.params.gamma * w + (&self.lower * u) * w.sqrt()
    }
}

/// Log of the GH skewed-t density, normalizing constant included.
pub fn log_gh_skewed_t_pdf(params: &GhSkewedTParams, x: &DVector<f64>, mu: &DVector<f64>) -> Result<f64> {
    Ok(GhSkewedT::new(params.clone())?.log_pdf(x, mu))
}

pub fn sample_gh_skewed_t(params: &GhSkewedTParams, mu: &DVector<f64>, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
    Ok(GhSkewedT::new(params.clone())?.sample(mu, rng))
}
