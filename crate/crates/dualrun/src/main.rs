use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dualrun::batch::{default_parallelism, load_suite, run_batch, BatchSpec};
use dualrun::fixtures::write_suite;
use dualrun::reporting::{compare_traces, read_runlogs, write_report, ReportError};
use dualrun_core::metrics::{MetricsConfig, PriceTable};
use dualrun_core::model::Mode;

#[derive(Parser)]
#[command(name = "dualrun", version, about = "Deterministic vs agentic COBOL-to-Python translation runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Deterministic,
    Agentic,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Deterministic => vec![Mode::Deterministic],
            ModeArg::Agentic => vec![Mode::Agentic],
            ModeArg::Both => vec![Mode::Deterministic, Mode::Agentic],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every program of a suite under the selected modes.
    Translate {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        repeats: u32,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads; defaults to the core count capped at 8.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Metric summaries and per-category harness counts from runlogs.
    Report {
        #[arg(required = true)]
        runlogs: Vec<PathBuf>,
        /// Metrics settings (alpha, percentile) as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-model token prices; enables COST_PER_SUCCESS.
        #[arg(long)]
        prices: Option<PathBuf>,
        /// Manifest supplying deleted/inspect annotations.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Distinct trace hashes and divergence points per (program, mode).
    CompareTraces {
        #[arg(required = true)]
        runlogs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the bundled fixture suite.
    InitFixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("dualrun: {message}");
    ExitCode::from(code)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn report_exit(e: ReportError) -> ExitCode {
    fail(e.exit_code() as u8, e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Translate { suite, config, mode, repeats, seed_base, out, parallel } => {
            let spec = BatchSpec {
                suite,
                config,
                modes: mode.modes(),
                repeats,
                seed_base,
                parallelism: parallel.unwrap_or_else(default_parallelism),
                out,
            };
            match run_batch(&spec) {
                Ok(result) => {
                    for (mode, records) in &result.records {
                        let ok = records.iter().filter(|r| r.successful).count();
                        println!("{mode}: {} runs, {ok} successful", records.len());
                    }
                    for path in &result.runlogs {
                        println!("wrote {}", path.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.exit_code() as u8, e),
            }
        }
        Command::Report { runlogs, config, prices, suite, out } => {
            let metrics: MetricsConfig = match config.as_ref().map(read_json).transpose() {
                Ok(c) => c.unwrap_or_default(),
                Err(e) => return fail(2, e),
            };
            let prices: Option<PriceTable> = match prices.as_ref().map(read_json).transpose() {
                Ok(p) => p,
                Err(e) => return fail(2, e),
            };
            let programs = match suite.as_deref().map(load_suite).transpose() {
                Ok(s) => s.map(|s| s.programs),
                Err(e) => return fail(2, e),
            };
            let records = match read_runlogs(&runlogs) {
                Ok(r) => r,
                Err(e) => return report_exit(e),
            };
            match write_report(&records, &metrics, prices.as_ref(), programs.as_deref(), &out) {
                Ok(files) => {
                    for path in files.written {
                        println!("wrote {}", path.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => report_exit(e),
            }
        }
        Command::CompareTraces { runlogs, out } => {
            let records = match read_runlogs(&runlogs) {
                Ok(r) => r,
                Err(e) => return report_exit(e),
            };
            let groups = compare_traces(&records);
            let json = serde_json::to_string_pretty(&groups).expect("groups serialize");
            match out {
                Some(path) => {
                    if let Err(e) = fs::write(&path, json + "\n") {
                        return fail(1, format!("{}: {e}", path.display()));
                    }
                    println!("wrote {}", path.display());
                }
                None => println!("{json}"),
            }
            ExitCode::SUCCESS
        }
        Command::InitFixtures { out } => match write_suite(&out) {
            Ok(manifest) => {
                println!("wrote {}", manifest.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(1, format!("{}: {e}", out.display())),
        },
    }
}
