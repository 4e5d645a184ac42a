//! Desk-scale experiment suites with published reference values and pass/fail checks.

use std::fmt::Write as _;

use serde::Serialize;

use super::runner::{
    run_experiment, run_sweep, ExperimentResult, ExperimentSpec, FilterSummary, Sweep, SweepParameter,
};
use super::scenario::{LinearGaussianParams, ScenarioConfig};
use crate::error::{Error, Result};
use crate::filters::{FilterConfig, FilterKind};

/// Named experiment suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Acoustic,
    LinearGaussian,
    Skewt,
    Sensitivity,
}

impl SuiteName {
    pub const ALL: [SuiteName; 4] = [
        SuiteName::Acoustic,
        SuiteName::LinearGaussian,
        SuiteName::Skewt,
        SuiteName::Sensitivity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SuiteName::Acoustic => "acoustic",
            SuiteName::LinearGaussian => "linear-gaussian",
            SuiteName::Skewt => "skewt",
            SuiteName::Sensitivity => "sensitivity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        SuiteName::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "suite",
                reason: format!(
                    "unknown suite `{s}`; expected one of {}",
                    SuiteName::ALL.map(|n| n.name()).join(", ")
                ),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Metric,
    Ess,
}

/// A published value for one filter, optionally at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reference {
    pub filter: &'static str,
    pub at: Option<f64>,
    pub quantity: Quantity,
    pub value: f64,
}

const fn reference(filter: &'static str, at: Option<f64>, quantity: Quantity, value: f64) -> Reference {
    Reference {
        filter,
        at,
        quantity,
        value,
    }
}

/// A suite: one experiment, possibly swept, plus its reference values.
#[derive(Debug, Clone)]
pub struct Suite {
    pub name: SuiteName,
    pub spec: ExperimentSpec,
    pub sweep: Option<Sweep>,
    pub references: Vec<Reference>,
}

fn labeled(kind: FilterKind, n: usize, label: &str) -> FilterConfig {
    FilterConfig::new(kind, n).with_label(label)
}

fn lg_scenario(sigma_z: f64) -> ScenarioConfig {
    ScenarioConfig::LinearGaussian(LinearGaussianParams {
        sigma_z,
        ..Default::default()
    })
}

impl Suite {
    pub fn new(name: SuiteName) -> Self {
        use FilterKind::*;
        use Quantity::*;
        match name {
            SuiteName::Acoustic => Suite {
                name,
                spec: ExperimentSpec::new(
                    ScenarioConfig::preset("acoustic").expect("preset exists"),
                    vec![
                        labeled(PfpfLedh, 500, "pfpf-ledh"),
                        labeled(PfpfEdh, 500, "pfpf-edh"),
                        labeled(Ledh, 500, "ledh"),
                        labeled(Edh, 500, "edh"),
                        labeled(Ekf, 1, "ekf"),
                        labeled(Ukf, 1, "ukf"),
                        labeled(Bpf, 100_000, "bpf-1e5"),
                    ],
                    10,
                    40,
                ),
                sweep: None,
                references: vec![
                    reference("pfpf-ledh", None, Metric, 0.79),
                    reference("pfpf-ledh", None, Ess, 45.0),
                    reference("pfpf-edh", None, Metric, 2.71),
                    reference("pfpf-edh", None, Ess, 34.0),
                    reference("ledh", None, Metric, 2.19),
                    reference("edh", None, Metric, 2.81),
                    reference("ekf", None, Metric, 5.74),
                    reference("ukf", None, Metric, 4.91),
                    reference("bpf-1e5", None, Metric, 2.18),
                    reference("bpf-1e5", None, Ess, 2.1),
                ],
            },
            SuiteName::LinearGaussian => {
                let mut refs = Vec::new();
                let table: [(&str, Quantity, [f64; 3]); 9] = [
                    ("pfpf-edh", Metric, [0.62, 0.26, 0.11]),
                    ("pfpf-edh", Ess, [28.0, 23.0, 19.0]),
                    ("pfpf-edh-1e4", Metric, [0.53, 0.22, 0.09]),
                    ("pfpf-edh-1e4", Ess, [1118.0, 973.0, 830.0]),
                    ("edh", Metric, [0.49, 0.19, 0.07]),
                    ("kf", Metric, [0.49, 0.18, 0.07]),
                    ("ukf", Metric, [0.49, 0.18, 0.07]),
                    ("bpf", Metric, [1.20, 1.1, 1.1]),
                    ("bpf", Ess, [1.9, 1.2, 1.0]),
                ];
                for (filter, q, values) in table {
                    for (at, v) in [2.0, 1.0, 0.5].into_iter().zip(values) {
                        refs.push(reference(filter, Some(at), q, v));
                    }
                }
                Suite {
                    name,
                    spec: ExperimentSpec::new(
                        lg_scenario(1.0),
                        vec![
                            labeled(Ekf, 1, "kf"),
                            labeled(Ukf, 1, "ukf"),
                            labeled(Edh, 200, "edh"),
                            labeled(PfpfEdh, 200, "pfpf-edh"),
                            labeled(PfpfEdh, 10_000, "pfpf-edh-1e4"),
                            labeled(Bpf, 200, "bpf"),
                        ],
                        20,
                        10,
                    ),
                    sweep: Some(Sweep {
                        parameter: SweepParameter::SigmaZ,
                        values: vec![2.0, 1.0, 0.5],
                    }),
                    references: refs,
                }
            }
            SuiteName::Skewt => Suite {
                name,
                spec: ExperimentSpec::new(
                    ScenarioConfig::preset("skewt-poisson").expect("preset exists"),
                    vec![
                        labeled(Edh, 200, "edh"),
                        labeled(PfpfEdh, 200, "pfpf-edh"),
                        labeled(PfpfEdh, 10_000, "pfpf-edh-1e4"),
                        labeled(Bpf, 10_000, "bpf-1e4"),
                        labeled(Ekf, 1, "ekf"),
                    ],
                    10,
                    10,
                ),
                sweep: None,
                references: vec![
                    reference("edh", None, Metric, 0.69),
                    reference("pfpf-edh", None, Metric, 0.96),
                    reference("pfpf-edh", None, Ess, 6.6),
                    reference("pfpf-edh-1e4", None, Metric, 0.82),
                    reference("pfpf-edh-1e4", None, Ess, 81.0),
                    reference("ekf", None, Metric, 2.5),
                ],
            },
            SuiteName::Sensitivity => {
                let mut refs = Vec::new();
                for (at, m2, e2, m4, e4) in [
                    (0.0, 0.26, 23.0, 0.22, 973.0),
                    (0.2, 0.40, 23.0, 0.35, 894.0),
                    (1.0, 0.54, 3.6, 0.51, 32.0),
                ] {
                    refs.push(reference("pfpf-edh", Some(at), Metric, m2));
                    refs.push(reference("pfpf-edh", Some(at), Ess, e2));
                    refs.push(reference("pfpf-edh-1e4", Some(at), Metric, m4));
                    refs.push(reference("pfpf-edh-1e4", Some(at), Ess, e4));
                }
                Suite {
                    name,
                    spec: ExperimentSpec::new(
                        lg_scenario(1.0),
                        vec![
                            labeled(PfpfEdh, 200, "pfpf-edh"),
                            labeled(PfpfEdh, 10_000, "pfpf-edh-1e4"),
                        ],
                        10,
                        10,
                    ),
                    sweep: Some(Sweep {
                        parameter: SweepParameter::SigmaP,
                        values: vec![0.0, 0.2, 1.0],
                    }),
                    references: refs,
                }
            }
        }
    }

    /// Keeps only the filters named in `labels`, in suite order.
    pub fn with_filters(mut self, labels: &[&str]) -> Self {
        self.spec.filters.retain(|f| labels.contains(&f.label().as_str()));
        self
    }

    pub fn run(&self) -> Result<SuiteOutcome> {
        let points = match &self.sweep {
            Some(sweep) => run_sweep(&self.spec, sweep)?
                .into_iter()
                .map(|(v, r)| (Some(v), r))
                .collect(),
            None => vec![(None, run_experiment(&self.spec)?)],
        };
        Ok(SuiteOutcome { points })
    }
}

/// Results of a suite, one entry per sweep point.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub points: Vec<(Option<f64>, ExperimentResult)>,
}

impl SuiteOutcome {
    pub fn summary(&self, filter: &str, at: Option<f64>) -> Option<&FilterSummary> {
        self.points
            .iter()
            .find(|(v, _)| *v == at)
            .and_then(|(_, r)| r.summary(filter))
    }

    pub fn value(&self, filter: &str, at: Option<f64>, q: Quantity) -> Option<f64> {
        let s = self.summary(filter, at)?;
        match q {
            Quantity::Metric => s.avg_metric,
            Quantity::Ess => s.avg_ess,
        }
    }

    /// Largest `ε ρ(A)` and total halvings over every flow step of every point.
    pub fn flow_guard(&self) -> (Option<f64>, usize) {
        let mut max = None::<f64>;
        let mut halvings = 0;
        for (_, r) in &self.points {
            for s in &r.summaries {
                if let Some(m) = s.max_eps_rho {
                    max = Some(max.map_or(m, |x| x.max(m)));
                }
                halvings += s.halvings;
            }
        }
        (max, halvings)
    }
}

/// Outcome of one pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub expected: String,
    pub measured: String,
    pub passed: bool,
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn check(name: &str, expected: String, measured: String, passed: Option<bool>) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        expected,
        measured,
        passed: passed.unwrap_or(false),
    }
}

/// The suite's acceptance checks. Filters missing from the outcome fail their checks.
pub fn evaluate(name: SuiteName, out: &SuiteOutcome) -> Vec<CheckResult> {
    use Quantity::*;
    let v = |f: &str, at: Option<f64>, q| out.value(f, at, q);
    let mut checks = Vec::new();
    match name {
        SuiteName::Acoustic => {
            let pfpf = v("pfpf-ledh", None, Metric);
            let ledh = v("ledh", None, Metric);
            let ess = v("pfpf-ledh", None, Ess);
            checks.push(check(
                "PF-PF (LEDH) OMAT < LEDH OMAT < 3.0",
                "ordering".into(),
                format!("{} < {}", fmt(pfpf), fmt(ledh)),
                pfpf.zip(ledh).map(|(a, b)| a < b && b < 3.0),
            ));
            checks.push(check(
                "PF-PF (LEDH) OMAT <= 1.3",
                "<= 1.3 (published 0.79)".into(),
                fmt(pfpf),
                pfpf.map(|a| a <= 1.3),
            ));
            checks.push(check(
                "PF-PF (LEDH) ESS >= 20",
                ">= 20 (published 45)".into(),
                fmt(ess),
                ess.map(|e| e >= 20.0),
            ));
        }
        SuiteName::LinearGaussian => {
            let at = Some(1.0);
            let kf = v("kf", at, Metric);
            let edh = v("edh", at, Metric);
            let pfpf = v("pfpf-edh-1e4", at, Metric);
            checks.push(check(
                "KF MSE = 0.18 +/- 0.03 at sigma_z = 1",
                "0.18 +/- 0.03".into(),
                fmt(kf),
                kf.map(|k| (k - 0.18).abs() <= 0.03),
            ));
            checks.push(check(
                "EDH (200) MSE within 0.03 of KF",
                format!("{} +/- 0.03", fmt(kf)),
                fmt(edh),
                kf.zip(edh).map(|(k, e)| (e - k).abs() <= 0.03),
            ));
            checks.push(check(
                "PF-PF (EDH, 1e4) MSE <= KF + 0.08",
                format!("<= {}", fmt(kf.map(|k| k + 0.08))),
                fmt(pfpf),
                kf.zip(pfpf).map(|(k, p)| p <= k + 0.08),
            ));
            let e_pf = v("pfpf-edh", Some(0.5), Ess);
            let e_bpf = v("bpf", Some(0.5), Ess);
            checks.push(check(
                "ESS PF-PF (EDH, 200) >= 10 x ESS BPF (200) at sigma_z = 0.5",
                format!(">= {}", fmt(e_bpf.map(|b| 10.0 * b))),
                fmt(e_pf),
                e_pf.zip(e_bpf).map(|(a, b)| a >= 10.0 * b),
            ));
        }
        SuiteName::Skewt => {
            let edh = v("edh", None, Metric);
            let pfpf = v("pfpf-edh-1e4", None, Metric);
            let bpf = v("bpf-1e4", None, Metric);
            checks.push(check(
                "EDH <= PF-PF (EDH, 1e4) < BPF (1e4)",
                "ordering".into(),
                format!("{} <= {} < {}", fmt(edh), fmt(pfpf), fmt(bpf)),
                edh.zip(pfpf).zip(bpf).map(|((e, p), b)| e <= p && p < b),
            ));
            checks.push(check(
                "EDH (200) MSE within 0.2 of 0.69",
                "0.69 +/- 0.2".into(),
                fmt(edh),
                edh.map(|e| (e - 0.69).abs() <= 0.2),
            ));
            checks.push(check(
                "PF-PF (EDH, 1e4) MSE within 0.25 of 0.82",
                "0.82 +/- 0.25".into(),
                fmt(pfpf),
                pfpf.map(|p| (p - 0.82).abs() <= 0.25),
            ));
        }
        SuiteName::Sensitivity => {
            let f = "pfpf-edh-1e4";
            let e0 = v(f, Some(0.0), Ess);
            let e1 = v(f, Some(1.0), Ess);
            checks.push(check(
                "ESS at sigma_p = 1 < 10% of ESS at sigma_p = 0",
                format!("< {}", fmt(e0.map(|e| 0.1 * e))),
                fmt(e1),
                e0.zip(e1).map(|(a, b)| b < 0.1 * a),
            ));
            let m: Vec<Option<f64>> = [0.0, 0.2, 1.0].iter().map(|&s| v(f, Some(s), Metric)).collect();
            let all: Option<Vec<f64>> = m.iter().copied().collect();
            checks.push(check(
                "MSE non-decreasing over sigma_p = 0, 0.2, 1",
                "non-decreasing".into(),
                m.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(", "),
                all.map(|xs| xs.windows(2).all(|w| w[0] <= w[1])),
            ));
        }
    }
    checks
}

/// Table of published against measured values, followed by the checks.
pub fn comparison_table(suite: &Suite, out: &SuiteOutcome, checks: &[CheckResult]) -> String {
    let mut s = String::new();
    let axis = suite.sweep.as_ref().map(|w| w.parameter.name()).unwrap_or("");
    let _ = writeln!(
        s,
        "{:<14} {:>8} {:>8} {:>10} {:>10}",
        "filter", axis, "value", "published", "measured"
    );
    for r in &suite.references {
        let q = match r.quantity {
            Quantity::Metric => "metric",
            Quantity::Ess => "ess",
        };
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>8} {:>10} {:>10}",
            r.filter,
            r.at.map_or_else(String::new, |a| a.to_string()),
            q,
            r.value,
            fmt(out.value(r.filter, r.at, r.quantity))
        );
    }
    s.push('\n');
    for c in checks {
        let _ = writeln!(
            s,
            "{} {}: measured {} (expected {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.expected
        );
    }
    s
}
