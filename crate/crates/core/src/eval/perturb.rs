use nalgebra::{DMatrix, SymmetricEigen};
use rand::RngCore;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Scales the eigenvalues of `p` by iid `LogNormal(0, sigma_p²)` factors.
///
/// `P = V diag(D) Vᵀ` becomes `V diag(ξ ∘ D) Vᵀ`. With `sigma_p = 0` the input is
/// returned unchanged and no random numbers are drawn.
pub fn perturb_covariance(p: &DMatrix<f64>, sigma_p: f64, rng: &mut dyn RngCore) -> Result<DMatrix<f64>> {
    if !(sigma_p >= 0.0) || !sigma_p.is_finite() {
        return Err(Error::InvalidParameter {
            name: "sigma_p",
            reason: format!("must be finite and >= 0, got {sigma_p}"),
        });
    }
    if sigma_p == 0.0 {
        return Ok(p.clone());
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("perturbed covariance"));
    }
    let eig = SymmetricEigen::new(symmetrize(p));
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(top > 0.0) {
        return Err(Error::NotPositiveDefinite("perturbed covariance"));
    }
    let dist = LogNormal::new(0.0, sigma_p).map_err(|e| Error::InvalidParameter {
        name: "sigma_p",
        reason: e.to_string(),
    })?;
    // eigenvalues at round-off level are lifted to a tiny positive value
    let tiny = top * 1e-15;
    let scaled = eig.eigenvalues.map(|d| d.max(tiny) * dist.sample(rng));
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&scaled) * v.transpose())))
}
