use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use riskfl::harness::{
    compare_cases, parse_config, validate_channel, write_merged_csv, write_run_log, ChannelGrid,
};
use riskfl::orchestrator::run_experiment;
use riskfl::{ExperimentCase, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "riskfl",
    version,
    about = "Risk-aware federated learning over a simulated cellular uplink"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case and write <out>/case_<X>.csv and .jsonl.
    Run {
        #[arg(long, value_parser = parse_case)]
        case: ExperimentCase,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run cases A, B and C with one seed and write a merged CSV.
    CompareCases {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the analytic decoding probability with Monte Carlo on a grid.
    ValidateChannel {
        /// Channel settings; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Linear SINR thresholds.
        #[arg(long, value_delimiter = ',', default_values_t = ChannelGrid::default().zetas)]
        zetas: Vec<f64>,
        /// Distances to the serving BS in meters.
        #[arg(long, value_delimiter = ',', default_values_t = ChannelGrid::default().distances)]
        distances: Vec<f64>,
        #[arg(long, default_value_t = ChannelGrid::default().samples)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ChannelGrid::default().tolerance)]
        tolerance: f64,
        #[arg(long, hide = true, default_value_t = 1.0)]
        fault_scale: f64,
    },
    /// Print the default config as JSON.
    PrintDefaults,
}

fn parse_case(s: &str) -> Result<ExperimentCase, String> {
    s.parse()
}

fn load(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg =
        parse_config(config).with_context(|| format!("reading config {}", config.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            case,
            config,
            seed,
            out,
        } => {
            let cfg = load(&config, seed, out)?;
            let output = run_experiment(&cfg, case)?;
            let paths = write_run_log(&output, &cfg.output_dir, &format!("case_{case}"))?;
            eprintln!(
                "wrote {} and {}",
                paths.csv.display(),
                paths.jsonl.display()
            );
        }
        Command::CompareCases { config, seed, out } => {
            let cfg = load(&config, seed, out)?;
            let runs = compare_cases(&cfg)?;
            for r in &runs {
                write_run_log(r, &cfg.output_dir, &format!("case_{}", r.header.case))?;
            }
            let merged = cfg.output_dir.join("compare.csv");
            write_merged_csv(&runs, &merged)?;
            eprintln!("wrote {}", merged.display());
        }
        Command::ValidateChannel {
            config,
            out,
            zetas,
            distances,
            samples,
            seed,
            tolerance,
            fault_scale,
        } => {
            let cfg = match config {
                Some(path) => parse_config(&path)
                    .with_context(|| format!("reading config {}", path.display()))?,
                None => ExperimentConfig::default(),
            };
            let grid = ChannelGrid {
                zetas,
                distances,
                samples,
                seed,
                field_radius: cfg.field_radius_m,
                tolerance,
            };
            let report = validate_channel(&cfg.channel()?, &grid, fault_scale)?;
            match out {
                Some(path) => report.write_csv(&path)?,
                None => print!("{}", report.to_csv()),
            }
            eprintln!(
                "max abs error {:.5} (tolerance {}): {}",
                report.max_abs_err(),
                report.tolerance,
                if report.passed() { "ok" } else { "FAILED" }
            );
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::PrintDefaults => println!("{}", ExperimentConfig::default().to_json_pretty()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
