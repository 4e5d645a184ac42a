use serde::Serialize;

use crate::error::{Error, Result};

/// Pseudo-time step sizes `ε_1..ε_N` on `[0, 1]` and the running sums `λ_0..λ_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSchedule {
    epsilons: Vec<f64>,
    lambdas: Vec<f64>,
}

impl StepSchedule {
    /// Builds a schedule from arbitrary positive steps, rescaled to sum to one.
    pub fn from_steps(steps: Vec<f64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                reason: "need at least one pseudo-time step".into(),
            });
        }
        if steps.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "epsilons",
                reason: "step sizes must be finite and positive".into(),
            });
        }
        let total: f64 = steps.iter().sum();
        let epsilons: Vec<f64> = steps.iter().map(|e| e / total).collect();
        let mut lambdas = Vec::with_capacity(epsilons.len() + 1);
        lambdas.push(0.0);
        let mut acc = 0.0;
        for e in &epsilons {
            acc += e;
            lambdas.push(acc);
        }
        *lambdas.last_mut().unwrap() = 1.0;
        Ok(Self { epsilons, lambdas })
    }

    /// `n` equal steps of `1/n`.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_steps(vec![1.0; n])
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    /// `λ_0 = 0, λ_j = Σ_{i<=j} ε_i, λ_N = 1`.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.epsilons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilons.is_empty()
    }
}

/// Geometric steps `ε_j = q ε_{j-1}` with `ε_1 = (1 - q)/(1 - q^n)`.
pub fn make_exponential_schedule(n_steps: usize, ratio: f64) -> Result<StepSchedule> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidParameter {
            name: "ratio",
            reason: format!("must be finite and > 0, got {ratio}"),
        });
    }
    if n_steps == 0 || ratio == 1.0 {
        return StepSchedule::uniform(n_steps);
    }
    let first = (1.0 - ratio) / (1.0 - ratio.powi(n_steps as i32));
    let steps = (0..n_steps).map(|j| first * ratio.powi(j as i32)).collect();
    StepSchedule::from_steps(steps)
}
