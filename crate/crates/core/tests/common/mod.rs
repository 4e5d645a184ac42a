#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use flowpf::error::Result;
use flowpf::ssm::MeasurementModel;

/// `h(x)_i = Σ_j W_ij tanh(x_j) + c x_i²` with diagonal Gaussian noise.
#[derive(Debug, Clone)]
pub struct TanhQuadratic {
    pub w: DMatrix<f64>,
    pub c: f64,
    pub r: DMatrix<f64>,
}

impl TanhQuadratic {
    pub fn random(d: usize, rng: &mut impl Rng) -> Self {
        let w = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.5..1.5));
        let r = DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(0.05..0.5)));
        Self {
            w,
            c: rng.random_range(0.05..0.3),
            r,
        }
    }
}

impl MeasurementModel for TanhQuadratic {
    fn dim(&self) -> usize {
        self.w.nrows()
    }

    fn state_dim(&self) -> usize {
        self.w.ncols()
    }

    fn map(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w * x.map(f64::tanh) + x.map(|v| self.c * v * v)
    }

    fn log_likelihood(&self, z: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        Ok(gaussian_log_pdf(z, &self.map(x), &self.r))
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = x.len();
        let mut j = DMatrix::from_fn(d, d, |i, k| self.w[(i, k)] * (1.0 - x[k].tanh().powi(2)));
        for i in 0..d {
            j[(i, i)] += 2.0 * self.c * x[i];
        }
        j
    }

    fn noise_covariance(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.r.clone()
    }

    fn sample(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
        let e = DVector::from_fn(x.len(), |i, _| {
            let u: f64 = rng.sample(StandardNormal);
            u * self.r[(i, i)].sqrt()
        });
        self.map(x) + e
    }
}

/// `log N(x; m, S)` from the explicit inverse and determinant.
pub fn gaussian_log_pdf(x: &DVector<f64>, m: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let inv = s.clone().try_inverse().expect("invertible covariance");
    let diff = x - m;
    let q = (diff.transpose() * inv * &diff)[(0, 0)];
    -0.5 * (q + s.determinant().ln() + d * (2.0 * std::f64::consts::PI).ln())
}

/// Random symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(d: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let ev = DVector::from_fn(d, |_, _| rng.random_range(lo..hi));
    &q * DMatrix::from_diagonal(&ev) * q.transpose()
}

pub fn random_vector(d: usize, scale: f64, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Central-difference Jacobian.
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, n);
    for k in 0..n {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[k] += h;
        dn[k] -= h;
        j.set_column(k, &((f(&up) - f(&dn)) / (2.0 * h)));
    }
    j
}

/// Plain Kalman filter step, written out from the textbook equations.
pub fn kalman_step(
    m: &DVector<f64>,
    p: &DMatrix<f64>,
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let mp = f * m;
    let pp = f * p * f.transpose() + q;
    let s = h * &pp * h.transpose() + r;
    let k = &pp * h.transpose() * s.try_inverse().expect("invertible innovation");
    let mean = &mp + &k * (z - h * &mp);
    let n = m.len();
    let cov = (DMatrix::identity(n, n) - &k * h) * &pp;
    (mean, cov)
}

pub mod oracles;
