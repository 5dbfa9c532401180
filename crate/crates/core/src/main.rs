use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use evbench::event::{self, SensorGeometry, TextOptions};
use evbench::fixture;
use evbench::harness::{self, sweep, EvalConfig, LoadedSequence, RunSettings};
use evbench::report;
use evbench::Error;

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "evbench", version, about = "Benchmark harness for event-based video reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert between text and EVT1 event files (direction from the output extension).
    Convert(ConvertArgs),
    /// Run the standard evaluation.
    Eval(RunArgs),
    /// Run a robustness sweep.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated axis values (counts, milliseconds, or ratios).
        #[arg(long, value_delimiter = ',', env = "EVB_VALUES")]
        values: Option<Vec<String>>,
        /// Metric binned by the rate sweep.
        #[arg(long, env = "EVB_METRIC")]
        metric: Option<String>,
    },
    /// Re-render summary and timelines from a stored results.json.
    Report {
        /// results.json or a directory containing it.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, env = "EVB_OUT_DIR")]
        out_dir: PathBuf,
    },
    /// Write the bundled synthetic dataset and its eval config.
    Fixture {
        #[arg(long, env = "EVB_OUT_DIR")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Rate,
    Count,
    Duration,
    Discard,
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long)]
    width: Option<u16>,
    #[arg(long)]
    height: Option<u16>,
    /// Sort unsorted text input instead of rejecting it.
    #[arg(long)]
    sort: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "EVB_CONFIG")]
    config: PathBuf,
    #[arg(long, env = "EVB_OUT_DIR")]
    out_dir: PathBuf,
    #[arg(long, env = "EVB_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "EVB_PARALLEL")]
    parallel: Option<usize>,
    #[arg(long, env = "EVB_MONTAGE_STRIDE")]
    montage_stride: Option<usize>,
    #[arg(long, env = "EVB_NOISE_RATE")]
    noise_rate: Option<f64>,
    #[arg(long, env = "EVB_DROP_RATIO")]
    drop_ratio: Option<f64>,
}

impl RunArgs {
    fn load(&self) -> evbench::Result<EvalConfig> {
        let mut config = EvalConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(p) = self.parallel {
            config.parallelism = p;
        }
        if let Some(s) = self.montage_stride {
            config.montage_stride = s;
        }
        if let Some(r) = self.noise_rate {
            config.preprocess.noise_rate = r;
        }
        if let Some(r) = self.drop_ratio {
            config.preprocess.drop_ratio = r;
        }
        config.validate()?;
        Ok(config)
    }
}

enum Failure {
    Config(Error),
    Partial(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e)
    }
}

fn parse_values<T: std::str::FromStr>(values: &[String]) -> evbench::Result<Vec<T>> {
    values
        .iter()
        .map(|v| v.trim().parse().map_err(|_| Error::Config(format!("bad sweep value `{v}`"))))
        .collect()
}

fn convert(args: &ConvertArgs) -> Result<(), Failure> {
    let geometry = match (args.width, args.height) {
        (Some(w), Some(h)) => Some(SensorGeometry::new(w, h)?),
        (None, None) => None,
        _ => return Err(Error::Config("give both --width and --height".into()).into()),
    };
    let stream = event::load_events(&args.input, geometry, TextOptions { sort: args.sort })?;
    if event::is_binary_path(&args.output) {
        event::write_binary_events(&stream, &args.output)?;
    } else {
        event::write_text_events(&stream, &args.output)?;
    }
    log::info!("wrote {} events to {}", stream.len(), args.output.display());
    Ok(())
}

fn partial(failed: usize) -> Result<(), Failure> {
    if failed > 0 {
        Err(Failure::Partial(failed))
    } else {
        Ok(())
    }
}

fn eval(args: &RunArgs) -> Result<(), Failure> {
    let config = args.load()?;
    let run = harness::run_standard_eval(&config)?;
    report::emit_bundle(&run, &args.out_dir, true)?;
    partial(run.failed_count())
}

fn run_sweep(kind: SweepKind, args: &RunArgs, values: Option<&[String]>, metric: Option<&str>) -> Result<(), Failure> {
    let config = args.load()?;
    let sequences: Vec<LoadedSequence> = harness::load_sequences(&config)?;
    let base = RunSettings::from_config(&config)?;
    let axis = match kind {
        SweepKind::Rate => {
            let mut settings = base;
            settings.grouping = evbench::grouping::GroupingSpec::BetweenFrames;
            let run = harness::run_loaded(&sequences, &settings, serde_json::to_value(&config).ok())?;
            let rates = harness::bin_by_event_rate(&run, metric)?;
            report::emit_bundle(&run, &args.out_dir, true)?;
            report::emit_rate_report(&rates, &args.out_dir)?;
            return partial(run.failed_count());
        }
        SweepKind::Count => sweep::SweepAxis::EventCount {
            values: values.map(parse_values).transpose()?.unwrap_or_else(|| sweep::DEFAULT_EVENT_COUNTS.to_vec()),
        },
        SweepKind::Duration => sweep::SweepAxis::Duration {
            values_ms: values.map(parse_values).transpose()?.unwrap_or_else(|| sweep::DEFAULT_DURATIONS_MS.to_vec()),
        },
        SweepKind::Discard => sweep::SweepAxis::DiscardRatio {
            values: values.map(parse_values).transpose()?.unwrap_or_else(|| sweep::DEFAULT_DISCARD_RATIOS.to_vec()),
        },
    };
    let report = sweep::run_sweep(&sequences, &base, &axis)?;
    report::emit_sweep(&report, &args.out_dir)?;
    partial(report.failed_count())
}

fn rerender(results: &Path, out_dir: &Path) -> Result<(), Failure> {
    let path = if results.is_dir() { results.join(report::RESULTS_FILE) } else { results.to_path_buf() };
    let run = report::load_results(&path).map_err(|e| Error::Config(e.to_string()))?;
    report::emit_bundle(&run, out_dir, false)?;
    partial(run.failed_count())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Convert(args) => convert(args),
        Command::Eval(args) => eval(args),
        Command::Sweep { kind, run, values, metric } => run_sweep(*kind, run, values.as_deref(), metric.as_deref()),
        Command::Report { results, out_dir } => rerender(results, out_dir),
        Command::Fixture { out_dir } => fixture::write_fixture_dataset(out_dir, &fixture::bundled_specs())
            .map(|p| println!("{}", p.display()))
            .map_err(Failure::from),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Partial(n)) => {
            eprintln!("evbench: {n} sequence run(s) failed; see summary.json");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(Failure::Config(e)) => {
            eprintln!("evbench: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
