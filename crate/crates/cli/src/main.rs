//! `mixlab`: runs numerical experiments on time-changes of Heisenberg
//! nilflows and writes plot-ready CSV and JSON.
//!
//! Every experiment writes `<experiment>.csv` and `<experiment>.json` into the
//! output directory, plus `run_record.json` with timing. The first two depend
//! only on the resolved config, never on the worker count.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 numerical failure.

mod config;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mixlab_core::{MixlabError, Precision};
use serde::Serialize;

use config::{invalid, Experiment, ExperimentConfig, Invalid, Params, Resolved, RoofSource};

#[derive(Parser)]
#[command(name = "mixlab", version, about = "Experiments on time-changes of Heisenberg nilflows")]
struct Cli {
    /// Worker threads for parallel sweeps; 0 uses one per core.
    #[arg(long, global = true, env = "MIXLAB_WORKERS")]
    workers: Option<usize>,
    /// Directory receiving the output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run { config: PathBuf },
    /// Classify a roof as mixing or trivial from its invariant distributions.
    Classify(ParamArgs),
    /// Solve the cohomological equation and emit the transfer function.
    Solve(ParamArgs),
    /// Sublevel measure of Birkhoff sums against n.
    Stretch(ParamArgs),
    /// Power-law fit of sublevel sets of random trigonometric polynomials.
    Sublevel(ParamArgs),
    /// Fraction of times an orbit's Birkhoff sum stays below C.
    Visits(ParamArgs),
    /// Monte-Carlo correlation of a cube with its flowed image.
    Correlate(ParamArgs),
    /// Share of a flowed fiber arc inside a cube.
    FiberProfile(ParamArgs),
    /// Measure of base points whose Birkhoff sums stay below C at the hitting time.
    Hitting(ParamArgs),
    /// max|phi_N|/sqrt(N) at the convergent denominators of alpha.
    Weyl(ParamArgs),
    /// Exact L2 norms of ergodic sums per orbit component.
    L2(ParamArgs),
    /// Numeric first returns of the nilflow against the closed form.
    ReturnCheck(ParamArgs),
    /// Conjugacy of a trivial roof to a constant-roof suspension.
    Conjugacy(ParamArgs),
}

#[derive(Args)]
struct ParamArgs {
    /// Roof file (JSON).
    #[arg(long)]
    roof: Option<PathBuf>,
    /// Override the rotation number of the roof file.
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the shift of the roof file.
    #[arg(long)]
    beta: Option<f64>,
    /// Threshold on Birkhoff sums.
    #[arg(long = "C")]
    c: Option<f64>,
    /// Flow times, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    t: Option<Vec<f64>>,
    /// Iteration counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// double or double-double.
    #[arg(long, value_parser = parse_precision)]
    precision: Option<Precision>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    y: Option<f64>,
    /// Fiber arc as a,b.
    #[arg(long, value_delimiter = ',')]
    arc: Option<Vec<f64>>,
    /// Cube as x1,x2,y1,y2,height.
    #[arg(long, value_delimiter = ',')]
    cube: Option<Vec<f64>>,
    #[arg(long)]
    points: Option<u64>,
    /// Sublevel thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    polys: Option<u64>,
    /// Continued-fraction terms.
    #[arg(long)]
    terms: Option<usize>,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown precision {s:?}; expected double or double-double"))
}

impl ParamArgs {
    fn into_config(self, experiment: Experiment) -> anyhow::Result<ExperimentConfig> {
        let arc = self.arc.map(<[f64; 2]>::try_from).transpose();
        let arc = arc.map_err(|_| invalid("--arc takes two values a,b"))?;
        let cube = self.cube.map(<[f64; 5]>::try_from).transpose();
        let cube = cube.map_err(|_| invalid("--cube takes five values x1,x2,y1,y2,height"))?;
        Ok(ExperimentConfig {
            experiment,
            roof: self.roof.map(RoofSource::Path),
            alpha: self.alpha,
            beta: self.beta,
            params: Params {
                c: self.c,
                t: self.t,
                n: self.n,
                grid: self.grid,
                samples: self.samples,
                seed: self.seed,
                workers: None,
                precision: self.precision,
                x: self.x,
                y: self.y,
                arc,
                cube,
                points: self.points,
                deltas: self.deltas,
                degree: self.degree,
                polys: self.polys,
                terms: self.terms,
            },
        })
    }
}

impl Command {
    fn into_config(self) -> anyhow::Result<ExperimentConfig> {
        let (experiment, args) = match self {
            Command::Run { config } => return ExperimentConfig::from_file(&config),
            Command::Classify(a) => (Experiment::Classify, a),
            Command::Solve(a) => (Experiment::Solve, a),
            Command::Stretch(a) => (Experiment::Stretch, a),
            Command::Sublevel(a) => (Experiment::Sublevel, a),
            Command::Visits(a) => (Experiment::Visits, a),
            Command::Correlate(a) => (Experiment::Correlate, a),
            Command::FiberProfile(a) => (Experiment::FiberProfile, a),
            Command::Hitting(a) => (Experiment::Hitting, a),
            Command::Weyl(a) => (Experiment::Weyl, a),
            Command::L2(a) => (Experiment::L2, a),
            Command::ReturnCheck(a) => (Experiment::ReturnCheck, a),
            Command::Conjugacy(a) => (Experiment::Conjugacy, a),
        };
        args.into_config(experiment)
    }
}

/// `<experiment>.json`: the resolved config and the results.
#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    results: &'a serde_json::Value,
}

/// `run_record.json`: what ran, with which resources, and how long it took.
#[derive(Serialize)]
struct RunRecord<'a> {
    config: &'a ExperimentConfig,
    version: &'static str,
    outputs: Vec<String>,
    workers: usize,
    wall_time_seconds: f64,
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn execute(config: ExperimentConfig, workers: Option<usize>, out: &Path) -> anyhow::Result<String> {
    let started = Instant::now();
    let Resolved { mut config, roof } = config.resolve()?;
    // The worker count never reaches the outputs, which stay byte-identical.
    let workers = workers.or(config.params.workers.take()).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("starting worker threads")?;
    let resolved = Resolved { config, roof };
    let outcome = pool.install(|| experiments::run(&resolved))?;

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let name = resolved.config.experiment.name();
    let csv = format!("{name}.csv");
    let json = format!("{name}.json");
    write(&out.join(&csv), &outcome.table.to_csv())?;
    let summary = Summary {
        experiment: name,
        version: env!("CARGO_PKG_VERSION"),
        config: &resolved.config,
        results: &outcome.results,
    };
    write(&out.join(&json), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    let record = RunRecord {
        config: &ExperimentConfig {
            params: Params {
                workers: Some(workers),
                ..resolved.config.params.clone()
            },
            ..resolved.config.clone()
        },
        version: env!("CARGO_PKG_VERSION"),
        outputs: vec![csv, json],
        workers: pool.current_num_threads(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    write(&out.join("run_record.json"), &(serde_json::to_string_pretty(&record)? + "\n"))?;
    Ok(outcome.headline)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<MixlabError>() {
        return if e.is_numeric() { 3 } else { 2 };
    }
    if err.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli
        .command
        .into_config()
        .and_then(|config| execute(config, cli.workers, &cli.out));
    match result {
        Ok(headline) => {
            println!("{headline}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("mixlab: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
