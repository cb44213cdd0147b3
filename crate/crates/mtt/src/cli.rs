//! Subcommands behind the `mtt` binary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mtt_core::sim::{
    evaluate_metrics, generate_truth, run_experiment, FilterChoice, MetricReport, SensorChoice, TrackingLog,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{load_config, parse_config, write_config, ConfigError, RunConfig};
use crate::output::{
    format_sig, read_particle_log, write_json, write_metrics_csv, write_truth_csv, OutputError, ParticleLog,
    RunManifest,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("run failed: {0}")]
    Run(#[from] mtt_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Output(_) | CliError::Run(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mtt", version, about = "Multi-target tracking experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate ground truth only (truth.csv).
    Simulate(RunArgs),
    /// Run a full experiment (metrics.csv, particles.json).
    Track(RunArgs),
    /// Recompute metrics from the particles.json in --out (eval.csv).
    Eval(RunArgs),
    /// Run `track` over a seed range and parameter grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FilterArg {
    Gpf,
    Pf,
    Kf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SensorArg {
    Mean,
    Grid,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides scenario.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides filter.kind.
    #[arg(long, value_enum)]
    pub filter: Option<FilterArg>,
    /// Overrides sensor.kind.
    #[arg(long, value_enum)]
    pub sensor: Option<SensorArg>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Inclusive range `a..b` (also `a..=b`), a single seed, or a comma list.
    #[arg(long)]
    pub seeds: SeedList,
    /// `key=v1|v2|...`; repeat for a grid over several keys.
    #[arg(long = "param")]
    pub params: Vec<String>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("`{s}` is not a seed range such as 1..20");
        let s = s.trim();
        if let Some((a, b)) = s.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            return Ok(SeedList((a..=b).collect()));
        }
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()
            .map(SeedList)
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => {
            let config = resolve(args)?;
            simulate(&config, &args.out)
        }
        Command::Track(args) => {
            let config = resolve(args)?;
            let summary = track(&config, &args.out, "track")?;
            println!("{}", summary.line());
            Ok(())
        }
        Command::Eval(args) => {
            let config = resolve(args)?;
            let report = eval(&config, &args.out)?;
            println!(
                "steps {}  mean rmse {}  mean card_err {}",
                report.steps.len(),
                format_sig(report.mean_rmse()),
                format_sig(report.mean_cardinality_error())
            );
            Ok(())
        }
        Command::Sweep(args) => {
            let config = resolve(&args.run)?;
            sweep(&config, &args.run.out, &args.seeds.0, &args.params, args.jobs)
        }
    }
}

/// Loads the config file and applies the command-line overrides.
pub fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.experiment.scenario.seed = seed;
    }
    if let Some(f) = args.filter {
        config.filter = match f {
            FilterArg::Gpf => FilterChoice::Gpf,
            FilterArg::Pf => FilterChoice::ClassicalPf,
            FilterArg::Kf => FilterChoice::Kalman,
        };
    }
    if let Some(s) = args.sensor {
        config.sensor = match s {
            SensorArg::Mean => SensorChoice::Mean,
            SensorArg::Grid => SensorChoice::Grid,
        };
    }
    Ok(config)
}

fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| {
        CliError::Output(OutputError::Io {
            path: dir.display().to_string(),
            source,
        })
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| {
        CliError::Output(OutputError::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

fn finish(
    config: &RunConfig,
    out: &Path,
    command: &str,
    started_at: String,
    mut outputs: Vec<String>,
) -> Result<(), CliError> {
    let snapshot = write_config(config);
    write_text(&out.join("config.cfg"), &snapshot)?;
    outputs.push("config.cfg".into());
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: config.experiment.scenario.seed,
        filter: config.filter.name().into(),
        sensor: config.sensor.name().into(),
        started_at,
        finished_at: timestamp(),
        config: snapshot,
        outputs,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(())
}

pub fn simulate(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    config.experiment.scenario.validate().map_err(ConfigError::from)?;
    let started_at = timestamp();
    let mut rng = ChaCha8Rng::seed_from_u64(config.experiment.scenario.seed);
    let truth = generate_truth(&config.experiment.scenario, &mut rng)?;
    create_dir(out)?;
    write_truth_csv(&out.join("truth.csv"), config.experiment.scenario.n_targets, &truth)?;
    finish(config, out, "simulate", started_at, vec!["truth.csv".into()])
}

/// Headline numbers of one tracking run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSummary {
    pub seed: u64,
    pub steps: usize,
    pub mean_rmse: f64,
    pub mean_card_err: f64,
    /// `(rmse, card_err)` means over the first and last ten steps.
    pub first10: (f64, f64),
    pub last10: (f64, f64),
}

impl TrackSummary {
    fn from_report(seed: u64, report: &MetricReport) -> Self {
        let n = report.steps.len();
        let window = |a: usize, b: usize| report.window_means(a, b).unwrap_or((0.0, 0.0));
        Self {
            seed,
            steps: n,
            mean_rmse: report.mean_rmse(),
            mean_card_err: report.mean_cardinality_error(),
            first10: window(1, 10),
            last10: window(n.saturating_sub(9).max(1), n),
        }
    }

    fn line(&self) -> String {
        format!(
            "seed {}  steps {}  mean rmse {}  mean card_err {}",
            self.seed,
            self.steps,
            format_sig(self.mean_rmse),
            format_sig(self.mean_card_err)
        )
    }
}

pub fn track(config: &RunConfig, out: &Path, command: &str) -> Result<TrackSummary, CliError> {
    config.validate()?;
    let started_at = timestamp();
    let seed = config.experiment.scenario.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log = run_experiment(&config.experiment, config.filter, config.sensor, &mut rng)?;
    log::info!("{command}: seed {seed} finished {} steps", log.records.len());

    create_dir(out)?;
    let n_targets = config.experiment.scenario.n_targets;
    write_metrics_csv(&out.join("metrics.csv"), n_targets, &log.truth(), &log.metrics)?;
    write_json(&out.join("particles.json"), &ParticleLog::from_tracking(&log, seed, n_targets))?;
    finish(
        config,
        out,
        command,
        started_at,
        vec!["metrics.csv".into(), "particles.json".into()],
    )?;
    Ok(TrackSummary::from_report(seed, &log.metrics))
}

/// Recomputes the metrics of a `track` output directory and writes them to
/// `eval.csv` in the same layout as `metrics.csv`.
pub fn eval(config: &RunConfig, dir: &Path) -> Result<MetricReport, CliError> {
    let path = dir.join("particles.json");
    let particle_log = read_particle_log(&path)?;
    let malformed = |reason: String| {
        CliError::Output(OutputError::Malformed {
            path: path.display().to_string(),
            reason,
        })
    };
    let sensor = particle_log
        .sensor_choice()
        .ok_or_else(|| malformed(format!("unknown sensor `{}`", particle_log.sensor)))?;
    let records = particle_log.records().map_err(malformed)?;
    let log = TrackingLog {
        filter: config.filter,
        sensor,
        records,
        metrics: MetricReport::default(),
    };
    let truth = log.truth();
    let report = evaluate_metrics(&truth, &log, &config.experiment.effective_metrics(sensor))?;
    write_metrics_csv(&dir.join("eval.csv"), particle_log.n_targets, &truth, &report)?;
    Ok(report)
}

/// One point of the parameter grid: `(key, value)` overrides.
type GridPoint = Vec<(String, String)>;

fn parameter_grid(params: &[String]) -> Result<Vec<GridPoint>, CliError> {
    let mut grid: Vec<GridPoint> = vec![Vec::new()];
    for p in params {
        let (key, values) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param `{p}` is not key=v1|v2|...")))?;
        let values: Vec<&str> = values.split('|').map(str::trim).collect();
        grid = grid
            .into_iter()
            .flat_map(|point| {
                values.iter().map(move |v| {
                    let mut next = point.clone();
                    next.push((key.trim().to_string(), v.to_string()));
                    next
                })
            })
            .collect();
    }
    Ok(grid)
}

/// `base` with the given keys replaced, re-parsed so the usual validation
/// applies to the overrides.
fn with_overrides(base: &RunConfig, point: &GridPoint) -> Result<RunConfig, ConfigError> {
    let mut text: String = write_config(base)
        .lines()
        .filter(|line| {
            let key = line.split('=').next().unwrap_or("").trim();
            !point.iter().any(|(k, _)| k == key)
        })
        .map(|line| format!("{line}\n"))
        .collect();
    for (k, v) in point {
        text.push_str(&format!("{k} = {v}\n"));
    }
    parse_config(&text)
}

pub fn sweep(
    base: &RunConfig,
    out: &Path,
    seeds: &[u64],
    params: &[String],
    jobs: Option<usize>,
) -> Result<(), CliError> {
    let grid = parameter_grid(params)?;
    let mut runs = Vec::new();
    for (gi, point) in grid.iter().enumerate() {
        let config = with_overrides(base, point)?;
        for &seed in seeds {
            let mut c = config.clone();
            c.experiment.scenario.seed = seed;
            c.validate()?;
            let name = if params.is_empty() {
                format!("seed_{seed}")
            } else {
                format!("grid_{gi}_seed_{seed}")
            };
            runs.push((gi, c, out.join(name)));
        }
    }
    create_dir(out)?;

    let workers = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, runs.len().max(1));
    let mut results: Vec<Option<Result<TrackSummary, CliError>>> = (0..runs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let runs = &runs;
                scope.spawn(move || {
                    (w..runs.len())
                        .step_by(workers)
                        .map(|i| (i, track(&runs[i].1, &runs[i].2, "sweep")))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                results[i] = Some(r);
            }
        }
    });

    let keys: Vec<&str> = grid[0].iter().map(|(k, _)| k.as_str()).collect();
    let mut header: Vec<String> = vec!["run".into(), "seed".into()];
    header.extend(keys.iter().map(|k| k.to_string()));
    header.extend(
        [
            "mean_rmse",
            "mean_card_err",
            "first10_rmse",
            "last10_rmse",
            "first10_card_err",
            "last10_card_err",
        ]
        .map(String::from),
    );
    let mut rows = Vec::with_capacity(runs.len());
    for ((gi, _, dir), result) in runs.iter().zip(results) {
        let s = result.expect("every run reports")?;
        let mut row = vec![
            dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            s.seed.to_string(),
        ];
        row.extend(grid[*gi].iter().map(|(_, v)| v.clone()));
        row.extend(
            [s.mean_rmse, s.mean_card_err, s.first10.0, s.last10.0, s.first10.1, s.last10.1].map(format_sig),
        );
        rows.push(row);
    }
    let path = out.join("sweep.csv");
    let csv_error = |source| {
        CliError::Output(OutputError::Csv {
            path: path.display().to_string(),
            source,
        })
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(csv_error)?;
    w.write_record(&header).map_err(csv_error)?;
    for row in &rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush().map_err(|source| {
        CliError::Output(OutputError::Io {
            path: path.display().to_string(),
            source,
        })
    })?;
    println!("{} runs written to {}", rows.len(), out.display());
    Ok(())
}
