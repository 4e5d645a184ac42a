use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{floor_covariance, psd_factor, symmetrize};
use crate::ssm::{DynamicModel, MeasurementModel};

/// Relative eigenvalue floor applied to belief covariances after UKF steps.
const BELIEF_FLOOR: f64 = 1e-9;

/// Which recursion supplies the predictive covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariancePredictor {
    #[default]
    Ekf,
    Ukf,
}

/// Gaussian mean/covariance pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                context: "gaussian belief",
                expected: mean.len(),
                actual: cov.nrows(),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn predict(&self, predictor: CovariancePredictor, dynamic: &dyn DynamicModel) -> Result<GaussianBelief> {
        match predictor {
            CovariancePredictor::Ekf => Ok(ekf_predict(self, dynamic, dynamic.process_covariance())),
            CovariancePredictor::Ukf => ukf_predict(self, dynamic, dynamic.process_covariance()),
        }
    }

    pub fn update(
        &self,
        predictor: CovariancePredictor,
        measurement: &dyn MeasurementModel,
        z: &DVector<f64>,
    ) -> Result<GaussianBelief> {
        match predictor {
            CovariancePredictor::Ekf => ekf_update(self, measurement, z),
            CovariancePredictor::Ukf => ukf_update(self, measurement, z),
        }
    }
}

/// `m ← g(m, 0)`, `P ← G P Gᵀ + Q` with `G` the dynamic Jacobian at `m`.
pub fn ekf_predict(belief: &GaussianBelief, dynamic: &dyn DynamicModel, process_cov: &DMatrix<f64>) -> GaussianBelief {
    let g = dynamic.jacobian(&belief.mean);
    let cov = symmetrize(&(&g * &belief.cov * g.transpose() + process_cov));
    GaussianBelief {
        mean: dynamic.deterministic_map(&belief.mean),
        cov,
    }
}

/// EKF update linearized at the prior mean, Joseph-form covariance.
pub fn ekf_update(
    belief: &GaussianBelief,
    measurement: &dyn MeasurementModel,
    z: &DVector<f64>,
) -> Result<GaussianBelief> {
    let d = belief.dim();
    let h = measurement.jacobian(&belief.mean);
    let r = measurement.noise_covariance(&belief.mean);
    let ph_t = &belief.cov * h.transpose();
    let s = symmetrize(&(&h * &ph_t + &r));
    let s = Cholesky::new(s).ok_or(Error::NotPositiveDefinite("innovation covariance"))?;
    // K = P Hᵀ S⁻¹
    let k = s.solve(&ph_t.transpose()).transpose();
    let innovation = z - measurement.map(&belief.mean);
    let mean = &belief.mean + &k * innovation;
    let i_kh = DMatrix::identity(d, d) - &k * &h;
    let cov = &i_kh * &belief.cov * i_kh.transpose() + &k * &r * k.transpose();
    Ok(GaussianBelief {
        mean,
        cov: symmetrize(&cov),
    })
}

/// Scaled unscented transform with `α = 1`, `β = 2`, `κ = 3 - d`.
///
/// The central mean weight is clamped into `[-1, 1]`; the spread is then chosen so the
/// remaining weights still reproduce the first two moments exactly.
#[derive(Debug, Clone)]
pub struct SigmaPoints {
    pub points: DMatrix<f64>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

impl SigmaPoints {
    pub fn new(belief: &GaussianBelief) -> Self {
        let (alpha, beta) = (1.0, 2.0);
        let d = belief.dim();
        let df = d as f64;
        let kappa = 3.0 - df;
        let lambda = alpha * alpha * (df + kappa) - df;
        let w0 = (lambda / (df + lambda)).clamp(-1.0, 1.0);
        let spread = if w0 < 1.0 { df / (1.0 - w0) } else { df + lambda };
        let root = psd_factor(&belief.cov) * spread.sqrt();
        let mut points = DMatrix::zeros(d, 2 * d + 1);
        points.set_column(0, &belief.mean);
        for i in 0..d {
            let c = root.column(i);
            points.set_column(1 + i, &(&belief.mean + c));
            points.set_column(1 + d + i, &(&belief.mean - c));
        }
        let wi = 0.5 / spread;
        let mut wm = vec![wi; 2 * d + 1];
        let mut wc = wm.clone();
        wm[0] = w0;
        wc[0] = w0 + (1.0 - alpha * alpha + beta);
        Self { points, wm, wc }
    }

    fn map(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.points.column_iter().map(|c| f(&c.into_owned())).collect();
        DMatrix::from_columns(&cols)
    }

    fn mean_of(&self, ys: &DMatrix<f64>) -> DVector<f64> {
        ys * DVector::from_row_slice(&self.wm)
    }

    fn cross_cov(&self, a: &DMatrix<f64>, ma: &DVector<f64>, b: &DMatrix<f64>, mb: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(a.nrows(), b.nrows());
        for j in 0..a.ncols() {
            let da = a.column(j) - ma;
            let db = b.column(j) - mb;
            out += (da * db.transpose()) * self.wc[j];
        }
        out
    }
}

pub fn ukf_predict(
    belief: &GaussianBelief,
    dynamic: &dyn DynamicModel,
    process_cov: &DMatrix<f64>,
) -> Result<GaussianBelief> {
    let sp = SigmaPoints::new(belief);
    let ys = sp.map(|x| dynamic.deterministic_map(x));
    let mean = sp.mean_of(&ys);
    let cov = sp.cross_cov(&ys, &mean, &ys, &mean) + process_cov;
    Ok(GaussianBelief {
        mean,
        cov: floor_covariance(&cov, BELIEF_FLOOR),
    })
}

pub fn ukf_update(
    belief: &GaussianBelief,
    measurement: &dyn MeasurementModel,
    z: &DVector<f64>,
) -> Result<GaussianBelief> {
    let sp = SigmaPoints::new(belief);
    let zs = sp.map(|x| measurement.map(x));
    let z_hat = sp.mean_of(&zs);
    let s = sp.cross_cov(&zs, &z_hat, &zs, &z_hat) + measurement.noise_covariance(&belief.mean);
    let c = sp.cross_cov(&sp.points, &belief.mean, &zs, &z_hat);
    let s_chol = Cholesky::new(symmetrize(&s)).ok_or(Error::NotPositiveDefinite("unscented innovation covariance"))?;
    let k = s_chol.solve(&c.transpose()).transpose();
    let mean = &belief.mean + &k * (z - z_hat);
    let cov = &belief.cov - &k * s * k.transpose();
    Ok(GaussianBelief {
        mean,
        cov: floor_covariance(&cov, BELIEF_FLOOR),
    })
}
