use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::runner::{ExperimentResult, FilterSummary, StepRow};
use crate::error::Result;

pub const STEPS_FILE: &str = "steps.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TXT: &str = "summary.txt";

/// Writes per-step rows as CSV. Missing values are empty fields.
pub fn write_steps_csv<W: std::io::Write>(rows: &[StepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "filter",
            "trial",
            "step",
            "metric",
            "ess",
            "duration_s",
            "resampled",
            "repeat",
            "max_eps_rho",
            "halvings",
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

/// Fixed-width table of filter aggregates.
pub fn format_summary_table(metric_name: &str, summaries: &[FilterSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>8} {:>10} {:>10} {:>12} {:>6} {:>7} {:>10}",
        "filter", "N", metric_name, "ESS", "step time s", "lost", "aborted", "max eps*rho"
    );
    for r in summaries {
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:>10} {:>10} {:>12} {:>6} {:>7} {:>10}",
            r.filter,
            r.n_particles.map_or_else(|| "-".to_string(), |n| n.to_string()),
            opt(r.avg_metric, 4),
            opt(r.avg_ess, 1),
            opt(r.avg_step_time_s, 4),
            r.lost,
            r.aborted,
            opt(r.max_eps_rho, 3),
        );
    }
    s
}

pub fn metric_label(result: &ExperimentResult) -> &'static str {
    match result.metric {
        super::MetricKind::Omat => "OMAT",
        super::MetricKind::Mse => "MSE",
    }
}

#[derive(Serialize)]
struct SummaryDoc<'a, C: Serialize> {
    schema_version: u32,
    config: &'a C,
    result: &'a ExperimentResult,
}

/// Writes `steps.csv`, `summary.json` and `summary.txt` into `dir`, creating it if needed.
///
/// `config` is embedded in the JSON so a summary records what produced it.
pub fn write_artifacts<C: Serialize>(
    dir: &Path,
    schema_version: u32,
    config: &C,
    result: &ExperimentResult,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let steps = dir.join(STEPS_FILE);
    write_steps_csv(&result.rows, fs::File::create(&steps)?)?;
    let json = dir.join(SUMMARY_JSON);
    let doc = SummaryDoc {
        schema_version,
        config,
        result,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(&json, text)?;
    let txt = dir.join(SUMMARY_TXT);
    let header = format!(
        "{} | trials {} x repeats {} | steps {} | seed {}\n",
        result.scenario, result.n_trials, result.repeats, result.n_steps, result.seed
    );
    fs::write(
        &txt,
        header + &format_summary_table(metric_label(result), &result.summaries),
    )?;
    Ok(vec![steps, json, txt])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::FilterKind;

    fn row(ess: Option<f64>) -> StepRow {
        StepRow {
            filter: "bpf".into(),
            trial: 0,
            step: 1,
            metric: 0.25,
            ess,
            duration_s: None,
            resampled: true,
            repeat: 0,
            max_eps_rho: None,
            halvings: None,
        }
    }

    #[test]
    fn csv_columns_and_empty_fields() {
        let mut buf = Vec::new();
        write_steps_csv(&[row(Some(12.5)), row(None)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "filter,trial,step,metric,ess,duration_s,resampled,repeat,max_eps_rho,halvings"
        );
        assert_eq!(lines[1], "bpf,0,1,0.25,12.5,,true,0,,");
        assert_eq!(lines[2], "bpf,0,1,0.25,,,true,0,,");
    }

    #[test]
    fn empty_csv_still_has_header() {
        let mut buf = Vec::new();
        write_steps_csv(&[], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("filter,trial,step"));
    }

    #[test]
    fn table_lists_each_filter() {
        let s = FilterSummary {
            filter: "ekf".into(),
            kind: FilterKind::Ekf,
            n_particles: None,
            sigma_p: 0.0,
            runs: 2,
            included: 2,
            lost: 0,
            aborted: 0,
            avg_metric: Some(0.18),
            avg_ess: None,
            avg_step_time_s: None,
            max_eps_rho: None,
            halvings: 0,
        };
        let t = format_summary_table("MSE", &[s]);
        assert!(t.contains("ekf"));
        assert!(t.contains("0.1800"));
    }
}
