use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fd_jacobian, random_spd, random_vector, TanhQuadratic};
use flowpf::flow::{make_exponential_schedule, run_edh_flow, run_ledh_flow, FlowAuxiliary, FlowSettings, StepSchedule};
use flowpf::ssm::{GaussianMeasurement, MeasurementModel};

/// Errors of the default and the fine flow against the Kalman posterior mean.
#[derive(Debug, Clone, Copy)]
pub struct FlowKalmanErrors {
    pub coarse: f64,
    pub reference: f64,
    /// `reference / |Kalman mean|`.
    pub reference_rel: f64,
}

pub fn flow_vs_kalman(d: usize, seed: u64) -> FlowKalmanErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rng.random_range(-0.3..0.3) });
    let r = DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(0.3..1.5)));
    let p = random_spd(d, 0.5, 2.0, &mut rng);
    let m0 = random_vector(d, 1.0, &mut rng);
    let z = &h * random_vector(d, 1.5, &mut rng) + random_vector(d, 0.5, &mut rng);
    let model = GaussianMeasurement::new(h.clone(), r.clone()).unwrap();

    let s = &h * &p * h.transpose() + &r;
    let k = &p * h.transpose() * s.try_inverse().unwrap();
    let kalman = &m0 + &k * (&z - &h * &m0);

    let aux = FlowAuxiliary {
        eta_bar: m0.clone(),
        eta_bar_0: m0.clone(),
        cov: &p,
    };
    let start = DMatrix::from_column_slice(d, 1, m0.as_slice());
    let settings = FlowSettings::default();
    let run = |sched: &StepSchedule| {
        run_edh_flow(&start, &aux, &model, &z, sched, &settings)
            .unwrap()
            .eta_bar
    };
    let coarse = (run(&make_exponential_schedule(29, 1.2).unwrap()) - &kalman).norm();
    let reference = (run(&StepSchedule::uniform(10_000).unwrap()) - &kalman).norm();
    FlowKalmanErrors {
        coarse,
        reference,
        reference_rel: reference / kalman.norm().max(1e-300),
    }
}

/// Largest relative gap between accumulated `log θ` and the finite-difference
/// log-determinant of the end-to-end map, over a few particles of one random model.
pub fn determinant_gap(d: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meas = TanhQuadratic::random(d, &mut rng);
    let n = 4;
    let covs: Vec<DMatrix<f64>> = (0..n).map(|_| random_spd(d, 0.1, 1.0, &mut rng)).collect();
    let bars: Vec<DVector<f64>> = (0..n).map(|_| random_vector(d, 0.5, &mut rng)).collect();
    let starts = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
    let z = meas.sample(&random_vector(d, 0.5, &mut rng), &mut rng);
    let schedule = make_exponential_schedule(29, 1.2).unwrap();
    let settings = FlowSettings::default();
    let aux: Vec<FlowAuxiliary<'_>> = (0..n)
        .map(|i| FlowAuxiliary {
            eta_bar: bars[i].clone(),
            eta_bar_0: bars[i].clone(),
            cov: &covs[i],
        })
        .collect();
    let out = run_ledh_flow(&starts, &aux, &meas, &z, &schedule, &settings).unwrap();
    let mut worst = 0.0f64;
    for i in 0..n {
        let map = |x: &DVector<f64>| {
            let m = DMatrix::from_column_slice(d, 1, x.as_slice());
            run_ledh_flow(&m, &aux[i..=i], &meas, &z, &schedule, &settings)
                .unwrap()
                .states
                .column(0)
                .into_owned()
        };
        let jac = fd_jacobian(map, &starts.column(i).into_owned(), 1e-3);
        let fd = jac.determinant().abs().ln();
        let got = out.log_abs_dets[i];
        worst = worst.max((got - fd).abs() / fd.abs().max(1e-12));
    }
    worst
}

fn gh_params(d: usize) -> flowpf::ssm::GhSkewedTParams {
    let sigma = DMatrix::from_fn(d, d, |i, j| 0.3f64.powi((i as i32 - j as i32).abs()));
    flowpf::ssm::GhSkewedTParams {
        nu: 9.0,
        gamma: DVector::from_fn(d, |i, _| 0.3 - 0.2 * i as f64),
        sigma,
        alpha: 0.9,
    }
}

/// Simpson quadrature of the scalar density: `(mass, first moment, expected mean)`.
pub fn gh_scalar_quadrature() -> (f64, f64, f64) {
    let p = gh_params(1);
    let dist = flowpf::ssm::GhSkewedT::new(p.clone()).unwrap();
    let mu = DVector::from_element(1, 0.4);
    let (a, b, n) = (-200.0, 200.0, 400_000);
    let h = (b - a) / n as f64;
    let (mut mass, mut first) = (0.0, 0.0);
    for k in 0..=n {
        let x = a + k as f64 * h;
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let f = dist.log_pdf(&DVector::from_element(1, x), &mu).exp();
        mass += w * f;
        first += w * f * x;
    }
    (mass * h / 3.0, first * h / 3.0, 0.4 + p.mean_offset()[0])
}

/// Largest `|sample - formula| / standard error` over the mean and covariance entries
/// of `n` draws in three dimensions.
pub fn gh_moment_zscore(n: usize, seed: u64) -> f64 {
    let d = 3;
    let p = gh_params(d);
    let dist = flowpf::ssm::GhSkewedT::new(p.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = DVector::zeros(d);
    let samples: Vec<DVector<f64>> = (0..n).map(|_| dist.sample(&mu, &mut rng)).collect();
    let nf = n as f64;
    let mean = samples.iter().fold(DVector::zeros(d), |acc, x| acc + x) / nf;
    let expected_mean = p.mean_offset();
    let expected = p.covariance();
    let mut worst = 0.0f64;
    for i in 0..d {
        let var_i = samples.iter().map(|x| (x[i] - mean[i]).powi(2)).sum::<f64>() / nf;
        worst = worst.max((mean[i] - expected_mean[i]).abs() / (var_i / nf).sqrt());
        for j in 0..d {
            let prods: Vec<f64> = samples.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).collect();
            let c = prods.iter().sum::<f64>() / nf;
            let v = prods.iter().map(|q| (q - c).powi(2)).sum::<f64>() / (nf - 1.0);
            worst = worst.max((c - expected[(i, j)]).abs() / (v / nf).sqrt());
        }
    }
    worst
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// OMAT by enumerating all `C!` assignments, summed in row order.
pub fn omat_brute_force(truth: &[[f64; 2]], est: &[[f64; 2]], p: f64) -> f64 {
    let c = truth.len();
    let best = permutations(c)
        .iter()
        .map(|perm| {
            (0..c)
                .map(|i| {
                    let dx = truth[i][0] - est[perm[i]][0];
                    let dy = truth[i][1] - est[perm[i]][1];
                    (dx * dx + dy * dy).sqrt().powf(p)
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    (best / c as f64).powf(1.0 / p)
}

/// Number of random instances (C <= 6) where the solver and enumeration disagree.
pub fn omat_mismatches(instances: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for k in 0..instances {
        let c = 1 + k % 6;
        let p = [1.0, 2.0, 3.0][k % 3];
        let mut pts = || -> Vec<[f64; 2]> {
            (0..c)
                .map(|_| [rng.random_range(0.0..40.0), rng.random_range(0.0..40.0)])
                .collect()
        };
        let (a, b) = (pts(), pts());
        if flowpf::eval::omat(&a, &b, p).unwrap() != omat_brute_force(&a, &b, p) {
            bad += 1;
        }
    }
    bad
}
