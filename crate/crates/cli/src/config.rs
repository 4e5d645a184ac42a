use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use flowpf::eval::{ExperimentSpec, ScenarioConfig, Sweep};
use flowpf::filters::FilterConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "FLOWPF_SEED";
const DEFAULT_OUT: &str = "flowpf-out";

/// On-disk run description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: ScenarioConfig,
    pub filters: Vec<FilterConfig>,
    pub trials: usize,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default = "yes")]
    pub lost_track: bool,
    #[serde(default)]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Parses a config, reporting the key path of the first schema violation.
pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            anyhow::anyhow!("config: {}", e.into_inner())
        } else {
            anyhow::anyhow!("config key `{path}`: {}", e.into_inner())
        }
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        bail!(
            "config key `schema_version`: unsupported version {}, expected {SCHEMA_VERSION}",
            cfg.schema_version
        );
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("in {}", path.display()))
}

fn env_seed() -> anyhow::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            Ok(Some(v.trim().parse().with_context(|| {
                format!("{SEED_ENV}={v} is not an unsigned integer")
            })?))
        }
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    /// Applies overrides and fills the seed, so the result re-runs identically.
    ///
    /// Seed precedence: `--seed`, then the file, then `FLOWPF_SEED`, then 0.
    pub fn resolve(mut self, o: &Overrides) -> anyhow::Result<Self> {
        self.seed = Some(match (o.seed, self.seed) {
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => env_seed()?.unwrap_or(0),
        });
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(s) = o.steps {
            self.steps = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        Ok(self)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// The config as embedded in `summary.json`: the output location is left out so
    /// the same run written to two places produces identical files.
    pub fn recorded(&self) -> Self {
        Self {
            out: None,
            ..self.clone()
        }
    }

    pub fn spec(&self) -> anyhow::Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::new(self.scenario.clone(), self.filters.clone(), self.trials, self.steps)
            .with_seed(self.seed.unwrap_or(0));
        spec.repeats = self.repeats;
        spec.lost_track = self.lost_track;
        spec.timing = self.timing;
        spec.validate().context("invalid experiment")?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "scenario": {"preset": "linear-gaussian", "d": 4},
        "filters": [{"kind": "ekf", "label": "kf"}],
        "trials": 1,
        "steps": 2
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.repeats, 1);
        assert!(c.lost_track);
        assert!(!c.timing);
        assert_eq!(c.seed, None);
        assert!(c.spec().is_ok());
    }

    #[test]
    fn errors_name_the_key_path() {
        let bad = MINIMAL.replace("\"ekf\"", "\"kalman\"");
        let msg = parse(&bad).unwrap_err().to_string();
        assert!(msg.contains("filters[0].kind"), "{msg}");
        let bad = MINIMAL.replace("\"steps\": 2", "\"steps\": 2, \"stepz\": 3");
        let msg = parse(&bad).unwrap_err().to_string();
        assert!(msg.contains("stepz"), "{msg}");
        let bad = MINIMAL.replace("\"d\": 4", "\"d\": 4, \"sigma\": 2");
        assert!(parse(&bad).unwrap_err().to_string().contains("scenario"));
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let bad = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(parse(&bad).unwrap_err().to_string().contains("schema_version"));
    }

    #[test]
    fn command_line_wins_over_file() {
        let c = parse(&MINIMAL.replace("\"steps\": 2", "\"steps\": 2, \"seed\": 5")).unwrap();
        let r = c
            .clone()
            .resolve(&Overrides {
                seed: Some(9),
                trials: Some(3),
                ..Default::default()
            })
            .unwrap();
        assert_eq!(r.seed, Some(9));
        assert_eq!(r.trials, 3);
        assert_eq!(c.resolve(&Overrides::default()).unwrap().seed, Some(5));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = parse(MINIMAL)
            .unwrap()
            .resolve(&Overrides {
                seed: Some(1),
                ..Default::default()
            })
            .unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(parse(&text).unwrap(), c);
    }
}
