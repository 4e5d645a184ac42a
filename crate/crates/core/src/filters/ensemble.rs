use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;

/// Weighted particles stored column-wise (`d x N`) with log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub states: DMatrix<f64>,
    pub log_weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Equally weighted ensemble.
    pub fn uniform(states: DMatrix<f64>) -> Result<Self> {
        let n = states.ncols();
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n_particles",
                reason: "need at least one particle".into(),
            });
        }
        let lw = -(n as f64).ln();
        Ok(Self {
            states,
            log_weights: vec![lw; n],
        })
    }

    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.states.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.nrows()
    }

    /// Shifts the log-weights so that they log-sum-exp to zero.
    pub fn normalize(&mut self) -> Result<()> {
        for w in &mut self.log_weights {
            if w.is_nan() {
                *w = f64::NEG_INFINITY;
            }
        }
        let total = log_sum_exp(&self.log_weights);
        if !total.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        for w in &mut self.log_weights {
            *w -= total;
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.log_weights)
    }

    /// `Σ w_i x_i`.
    pub fn weighted_mean(&self) -> DVector<f64> {
        &self.states * DVector::from_vec(self.weights())
    }

    /// Unweighted column mean.
    pub fn mean(&self) -> DVector<f64> {
        self.states.column_mean()
    }

    /// Replaces the ensemble by the particles at `indices` with uniform weights.
    pub fn select(&mut self, indices: &[usize]) {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            out.set_column(j, &self.states.column(i));
        }
        self.states = out;
        let lw = -(indices.len() as f64).ln();
        self.log_weights = vec![lw; indices.len()];
    }
}

/// `1 / Σ w_i²` of normalized log-weights, clamped to `[1, N]`.
pub fn effective_sample_size(log_weights: &[f64]) -> f64 {
    let n = log_weights.len() as f64;
    let doubled: Vec<f64> = log_weights.iter().map(|w| 2.0 * w).collect();
    let ess = (-log_sum_exp(&doubled)).exp();
    if ess.is_nan() {
        return 1.0;
    }
    ess.clamp(1.0, n.max(1.0))
}

/// Ancestor indices from systematic resampling of normalized log-weights.
///
/// One uniform `u ~ U[0, 1/N)` is drawn and particle `i` is selected once per
/// point `u + j/N` falling in its cumulative-weight interval.
pub fn systematic_resample_indices(log_weights: &[f64], rng: &mut dyn RngCore) -> Vec<usize> {
    let n = log_weights.len();
    if n == 0 {
        return Vec::new();
    }
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0;
    for j in 0..n {
        let point = u0 + j as f64 / n as f64;
        while i < n - 1 && cum + log_weights[i].exp() <= point {
            cum += log_weights[i].exp();
            i += 1;
        }
        out.push(i);
    }
    out
}

/// Systematic resampling; returns the chosen ancestor indices.
pub fn systematic_resample(ensemble: &mut ParticleEnsemble, rng: &mut dyn RngCore) -> Vec<usize> {
    let idx = systematic_resample_indices(&ensemble.log_weights, rng);
    ensemble.select(&idx);
    idx
}
