//! Dense linear-algebra helpers shared by the models, flows and Kalman recursions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrizes `p` and lifts every eigenvalue to at least `rel * trace(p) / d`.
///
/// The eigendecomposition is only paid for when a Cholesky probe of
/// `p - floor * I` fails, i.e. when some eigenvalue actually sits below the floor.
pub fn floor_covariance(p: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let sym = symmetrize(p);
    let d = sym.nrows();
    if d == 0 {
        return sym;
    }
    let floor = (rel * sym.trace() / d as f64).max(0.0);
    let mut probe = sym.clone();
    for i in 0..d {
        probe[(i, i)] -= floor;
    }
    if floor > 0.0 && Cholesky::new(probe).is_some() {
        return sym;
    }
    let eig = SymmetricEigen::new(sym.clone());
    if floor == 0.0 && eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return sym;
    }
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&vals) * v.transpose()))
}

/// A factor `L` with `L Lᵀ = p` for a symmetric positive semi-definite `p`.
///
/// Cholesky when it succeeds, otherwise `V sqrt(max(D, 0))` from the eigendecomposition.
pub fn psd_factor(p: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = Cholesky::new(p.clone()) {
        return ch.l();
    }
    let eig = SymmetricEigen::new(symmetrize(p));
    let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sq)
}

/// `log |det(m)|` from the pivots of an LU factorization; `-inf` for singular input.
pub fn log_abs_det(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    lu.u().diagonal().iter().map(|u| u.abs().ln()).sum()
}

/// Result of a power-iteration spectral-radius estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub rho: f64,
    pub converged: bool,
}

/// Power iteration for `ρ(a)` with relative tolerance `tol`.
///
/// Each iteration applies `a` twice so that a dominant pair `±ρ` still converges.
pub fn power_iteration(a: &DMatrix<f64>, max_iter: usize, tol: f64) -> SpectralEstimate {
    let d = a.nrows();
    if d == 0 {
        return SpectralEstimate {
            rho: 0.0,
            converged: true,
        };
    }
    // deterministic, non-degenerate start vector
    let mut v = DVector::from_fn(d, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = a * &v;
        let n1 = w.norm();
        if n1 == 0.0 {
            return SpectralEstimate {
                rho: 0.0,
                converged: true,
            };
        }
        let w = w / n1;
        let w2 = a * &w;
        let n2 = w2.norm();
        let next = (n1 * n2).sqrt();
        v = w2 / n2.max(f64::MIN_POSITIVE);
        let done = (next - est).abs() <= tol * next.max(f64::MIN_POSITIVE);
        est = next;
        if done {
            return SpectralEstimate {
                rho: est,
                converged: true,
            };
        }
    }
    SpectralEstimate {
        rho: est,
        converged: false,
    }
}

/// Estimates the spectral radius of `a`.
///
/// Starts with [`power_iteration`]. When that does not converge and
/// `d <= full_eigen_max_dim`, the full (complex) eigenvalue set is computed
/// instead; larger matrices iterate again with ten times the budget.
pub fn spectral_radius(a: &DMatrix<f64>, max_iter: usize, tol: f64, full_eigen_max_dim: usize) -> SpectralEstimate {
    let first = power_iteration(a, max_iter, tol);
    if first.converged {
        return first;
    }
    if a.nrows() <= full_eigen_max_dim {
        let rho = a.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max);
        return SpectralEstimate { rho, converged: true };
    }
    power_iteration(a, max_iter * 10, tol)
}

/// `ρ(a)` for `a = P M` with `P = L Lᵀ` and `M` symmetric.
///
/// `L⁻¹ a L = Lᵀ M L` is symmetric, so its real eigenvalues give `ρ` exactly.
/// Returns `None` when `l` is singular.
pub fn similar_symmetric_spectral_radius(a: &DMatrix<f64>, l: &DMatrix<f64>) -> Option<f64> {
    let b = l.solve_lower_triangular(&(a * l))?;
    let b = (&b + b.transpose()) * 0.5;
    let ev = b.symmetric_eigenvalues();
    ev.iter().all(|x| x.is_finite()).then(|| ev.amax())
}

/// Central finite-difference Jacobian of `f` at `x`.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), n);
    for j in 0..n {
        let h = rel_step * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// `log Σ exp(v_i)`, `-inf` when every entry is `-inf`.
pub fn log_sum_exp<'a, I>(values: I) -> f64
where
    I: IntoIterator<Item = &'a f64>,
    I::IntoIter: Clone,
{
    let it = values.into_iter();
    let max = it.clone().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + it.map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// A multivariate normal density with a cached Cholesky factor of its covariance.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl GaussianFactor {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite("gaussian covariance"))?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let d = cov.nrows() as f64;
        Ok(Self {
            chol,
            log_norm: -0.5 * (d * LN_2PI + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Lower-triangular factor `L` with `L Lᵀ = cov`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `log N(diff; 0, cov)`.
    pub fn log_density(&self, diff: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(diff)
    }

    /// `L⁻¹ diff`.
    pub fn whiten(&self, diff: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(diff)
            .expect("cholesky factor has a nonzero diagonal")
    }

    /// `diffᵀ cov⁻¹ diff` via a single triangular solve.
    pub fn mahalanobis_sq(&self, diff: &DVector<f64>) -> f64 {
        self.whiten(diff).norm_squared()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }
}
