//! `pograph`: run graph-structured oracle optimization experiments from JSON
//! configs.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pograph_core::executor::measure_progress;
use pograph_core::harness::{self, ExperimentConfig, RegimeConfig, REGIME_CSV_HEADER};
use pograph_core::Error;

mod verify;

#[derive(Parser)]
#[command(
    name = "pograph",
    version,
    about = "Graph-based oracle model simulator for parallel stochastic optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a config once per seed and emit CSV rows.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Output CSV path; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sweep one parameter axis and fit the log-log rate slope.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        /// Axis name; overrides the config's sweep block.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the library invariant suites.
    Verify,
    /// Export a one-record-per-node JSONL trace of a single run.
    Progress {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare single-chain SGD, A-MB-SGD and SVRG on intermittent cells.
    Regime {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Json(_)
        | Error::InvalidParameter(_)
        | Error::InvalidArgument(_)
        | Error::Scheduling(_)
        | Error::UnsupportedOracle(_)
        | Error::UnsupportedInstance(_) => 2,
        Error::ConvergenceFailure { .. } | Error::Budget(_) => 3,
        _ => 1,
    }
}

fn write_lines(
    path: &Option<PathBuf>,
    emit: impl FnOnce(&mut dyn Write) -> Result<(), Error>,
) -> Result<(), Error> {
    match path {
        Some(p) => {
            let mut file = fs::File::create(p)?;
            emit(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            emit(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn load_experiment(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let text = fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}

fn run_command(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config, output } => {
            let config = load_experiment(&config)?;
            let rows = harness::run(&config)?;
            write_lines(&output, |out| harness::write_csv(out, &rows))?;
        }
        Command::Sweep {
            config,
            axis,
            values,
            output,
        } => {
            let mut config = load_experiment(&config)?;
            if let (Some(axis), Some(values)) = (&axis, &values) {
                config.sweep = Some(harness::SweepSpec {
                    parameter: axis.clone(),
                    values: values.clone(),
                });
            } else if axis.is_some() || values.is_some() {
                return Err(Error::Config(
                    "sweep: --axis and --values must be given together".to_string(),
                ));
            }
            let (rows, series) = harness::sweep(&config)?;
            let summary = serde_json::json!({
                "axis": config.sweep.as_ref().map(|s| s.parameter.clone()),
                "slope": series.slope,
                "slope_ci": [series.slope_ci.0, series.slope_ci.1],
                "points": series.points.iter().map(|p| {
                    serde_json::json!({
                        "scale": p.scale,
                        "suboptimality": p.suboptimality,
                        "stderr": p.stderr,
                        "clamped": p.clamped,
                    })
                }).collect::<Vec<_>>(),
            });
            if output.is_some() {
                write_lines(&output, |out| harness::write_csv(out, &rows))?;
                println!("{summary}");
            } else {
                write_lines(&None, |out| harness::write_csv(out, &rows))?;
                eprintln!("{summary}");
            }
        }
        Command::Verify => {
            let failures = verify::run_verify();
            if failures > 0 {
                eprintln!("verify: {failures} suite(s) failed");
                std::process::exit(4);
            }
        }
        Command::Progress { config, output } => {
            let config = load_experiment(&config)?;
            let (trace, instance) = harness::trace_run(&config)?;
            // Progress diagnostics go to the log when the instance has a frame.
            if let (Some(frame), Some(threshold)) =
                (instance.frame(), instance.progress_threshold())
            {
                let progress = measure_progress(&trace, &frame.rows(), threshold)?;
                log::info!(
                    "progress: {} flagged cells at threshold {threshold}",
                    progress.violation_count()
                );
            }
            write_lines(&output, |out| trace.write_jsonl(out))?;
        }
        Command::Regime { config, output } => {
            let text = fs::read_to_string(&config)?;
            let config = RegimeConfig::from_json(&text)?;
            let rows = harness::regime_table(&config)?;
            write_lines(&output, |out| {
                writeln!(out, "{REGIME_CSV_HEADER}")?;
                for row in &rows {
                    writeln!(out, "{}", row.to_csv_line())?;
                }
                Ok(())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    harness::init_threads();
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("pograph: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
