mod common;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::kalman_step;
use flowpf::eval::{simulate_trial, LinearGaussianParams, Scenario, ScenarioConfig};
use flowpf::filters::{ConfiguredFilter, CovariancePredictor, Filter, FilterConfig, FilterKind, GaussianBelief};
use flowpf::ssm::{build_dispersion_matrix, SensorGrid};

#[test]
fn ekf_and_ukf_reproduce_the_kalman_filter_in_64_dimensions() {
    let params = LinearGaussianParams::default();
    let scenario = Scenario::new(ScenarioConfig::LinearGaussian(params.clone())).unwrap();
    let truth = simulate_trial(&scenario, 11, 0, 10).unwrap();
    let d = params.d;
    let f = DMatrix::identity(d, d) * params.alpha;
    let q = build_dispersion_matrix(&SensorGrid::new(d).unwrap(), 3.0, 0.01, 20.0).unwrap();
    let h = DMatrix::identity(d, d);
    let r = DMatrix::identity(d, d) * params.sigma_z.powi(2);
    let init = GaussianBelief::new(DVector::zeros(d), DMatrix::zeros(d, d)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ekf = ConfiguredFilter::new(
        &FilterConfig::new(FilterKind::Ekf, 1),
        scenario.filter_model(),
        &init,
        &mut rng,
    )
    .unwrap();
    let mut ukf = ConfiguredFilter::new(
        &FilterConfig::new(FilterKind::Ukf, 1),
        scenario.filter_model(),
        &init,
        &mut rng,
    )
    .unwrap();
    let (mut m, mut p) = (DVector::zeros(d), DMatrix::zeros(d, d));
    for z in &truth.measurements {
        (m, p) = kalman_step(&m, &p, &f, &q, &h, &r, z);
        let e = ekf.step(z, &mut rng).unwrap().estimate;
        let u = ukf.step(z, &mut rng).unwrap().estimate;
        assert!((&e - &m).amax() < 1e-9, "{}", (&e - &m).amax());
        assert!((&u - &m).amax() < 1e-8, "{}", (&u - &m).amax());
    }
    assert!(p.iter().all(|v| v.is_finite()));
}

#[test]
fn belief_recursion_matches_kalman_covariance() {
    let d = 16;
    let grid = SensorGrid::new(d).unwrap();
    let q = build_dispersion_matrix(&grid, 3.0, 0.01, 20.0).unwrap();
    let model = flowpf::ssm::make_linear_gaussian_model(&grid, 0.9, 0.7, &q).unwrap();
    let f = DMatrix::identity(d, d) * 0.9;
    let h = DMatrix::identity(d, d);
    let r = DMatrix::identity(d, d) * 0.49;
    let belief = GaussianBelief::new(DVector::from_element(d, 0.5), DMatrix::identity(d, d)).unwrap();
    let (m, p) = (belief.mean.clone(), belief.cov.clone());
    let z = DVector::from_fn(d, |i, _| (i as f64).sin());
    for predictor in [CovariancePredictor::Ekf, CovariancePredictor::Ukf] {
        let mut b = belief.clone();
        let (mut mm, mut pp) = (m.clone(), p.clone());
        for _ in 0..5 {
            b = b
                .predict(predictor, model.dynamic.as_ref())
                .unwrap()
                .update(predictor, model.measurement.as_ref(), &z)
                .unwrap();
            (mm, pp) = kalman_step(&mm, &pp, &f, &q, &h, &r, &z);
        }
        assert!((&b.mean - &mm).amax() < 1e-9);
        assert!((&b.cov - &pp).amax() < 1e-9);
    }
}
