mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Overrides, RunConfig, SCHEMA_VERSION};
use flowpf::eval::report::{format_summary_table, metric_label, write_artifacts};
use flowpf::eval::suites::comparison_table;
use flowpf::eval::{evaluate, run_experiment, run_sweep, ExperimentResult, Suite, SuiteName};

#[derive(Parser)]
#[command(name = "flowpf", version, about = "Particle-flow particle filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Run one experiment per value of the config's sweep axis.
    Sweep(RunArgs),
    /// Run a benchmark suite and compare against published values.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Write the effective config (overrides applied, seed filled in) to this path.
    #[arg(long)]
    dump_config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Acoustic,
    LinearGaussian,
    Skewt,
    Sensitivity,
}

impl From<SuiteArg> for SuiteName {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Acoustic => SuiteName::Acoustic,
            SuiteArg::LinearGaussian => SuiteName::LinearGaussian,
            SuiteArg::Skewt => SuiteName::Skewt,
            SuiteArg::Sensitivity => SuiteName::Sensitivity,
        }
    }
}

#[derive(Args)]
struct ReproduceArgs {
    suite: SuiteArg,
    #[command(flatten)]
    common: Common,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            steps: self.steps,
            out: self.out.clone(),
        }
    }
}

fn init_workers(n: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("starting worker pool")?;
    }
    Ok(())
}

fn point_dir(out: &Path, parameter: &str, value: f64) -> PathBuf {
    out.join(format!("{parameter}={value}"))
}

fn print_result(result: &ExperimentResult) {
    print!("{}", format_summary_table(metric_label(result), &result.summaries));
}

fn prepare(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let cfg = config::load(&args.config)?.resolve(&args.common.overrides())?;
    if let Some(path) = &args.dump_config {
        let mut text = serde_json::to_string_pretty(&cfg)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<bool> {
    let cfg = prepare(args)?;
    let spec = cfg.spec()?;
    let result = run_experiment(&spec)?;
    write_artifacts(&cfg.out_dir(), SCHEMA_VERSION, &cfg.recorded(), &result)?;
    print_result(&result);
    Ok(result.any_aborted())
}

fn cmd_sweep(args: &RunArgs) -> anyhow::Result<bool> {
    let cfg = prepare(args)?;
    let sweep = cfg
        .sweep
        .clone()
        .context("config key `sweep`: required by the sweep command")?;
    let spec = cfg.spec()?;
    let points = run_sweep(&spec, &sweep)?;
    let out = cfg.out_dir();
    let name = sweep.parameter.name();
    let mut merged = String::new();
    let mut aborted = false;
    for (value, result) in &points {
        // the point's own config, as if it had been run on its own
        let applied = flowpf::eval::apply_sweep_value(&spec, sweep.parameter, *value)?;
        let mut point_cfg = cfg.clone();
        point_cfg.sweep = None;
        point_cfg.scenario = applied.scenario;
        point_cfg.filters = applied.filters;
        point_cfg.out = None;
        write_artifacts(&point_dir(&out, name, *value), SCHEMA_VERSION, &point_cfg, result)?;
        let _ = writeln!(merged, "{name} = {value}");
        merged.push_str(&format_summary_table(metric_label(result), &result.summaries));
        merged.push('\n');
        aborted |= result.any_aborted();
    }
    std::fs::create_dir_all(&out)?;
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config": cfg.recorded(),
        "points": points.iter().map(|(v, r)| serde_json::json!({ "value": v, "result": r })).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(out.join(flowpf::eval::report::SUMMARY_JSON), text)?;
    std::fs::write(out.join(flowpf::eval::report::SUMMARY_TXT), &merged)?;
    print!("{merged}");
    Ok(aborted)
}

fn cmd_reproduce(args: &ReproduceArgs) -> anyhow::Result<bool> {
    let name = SuiteName::from(args.suite);
    let mut suite = Suite::new(name);
    let c = &args.common;
    if let Some(seed) = c.seed {
        suite.spec.seed = seed;
    }
    if let Some(t) = c.trials {
        suite.spec.n_trials = t;
    }
    if let Some(s) = c.steps {
        suite.spec.n_steps = s;
    }
    suite.spec.validate()?;
    let outcome = suite.run()?;
    let out = c
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("reproduce-{}", name.name())));
    let mut aborted = false;
    for (at, result) in &outcome.points {
        let dir = match (at, &suite.sweep) {
            (Some(v), Some(sw)) => point_dir(&out, sw.parameter.name(), *v),
            _ => out.clone(),
        };
        write_artifacts(&dir, SCHEMA_VERSION, &suite.spec, result)?;
        aborted |= result.any_aborted();
    }
    let checks = evaluate(name, &outcome);
    let table = comparison_table(&suite, &outcome, &checks);
    std::fs::write(out.join("comparison.txt"), &table)?;
    print!("{table}");
    Ok(aborted)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = match &cli.command {
        Command::Run(a) | Command::Sweep(a) => a.common.workers,
        Command::Reproduce(a) => a.common.workers,
    };
    let result = init_workers(workers).and_then(|_| match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    });
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("error: at least one trial aborted; see steps.csv and summary.json");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
