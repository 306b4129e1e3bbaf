//! Command-line front end: dataset generation, grid execution, report
//! rebuilding, and the gradient audit.
//!
//! Exit codes: 0 on success, 1 when runs failed (or the gradient audit did
//! not pass), 2 on invalid configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dipa_core::gradcheck::{self, GradCheckConfig};
use dipa_lab::experiment::DataSource;
use dipa_lab::{config, dataset_io, experiment, report, Error};

#[derive(Parser)]
#[command(
    name = "dipa",
    version,
    about = "Few-shot time-series classification lab with Dirichlet pseudo-prior augmentation"
)]
struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Override the generator seed (generate) or the audit seed (gradcheck).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the benchmark dataset and write split files.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full experiment grid described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Parallel run workers (runs stay bit-reproducible regardless).
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Rebuild aggregate CSV and plots from a run directory's raw.csv.
    Report {
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Audit model gradients against central finite differences.
    Gradcheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Off
        } else {
            log::LevelFilter::Info
        })
        .format_timestamp(None)
        .format_target(false)
        .init();

    match run(cli) {
        Ok(code) => code,
        Err(e) if e.is_config_error() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> dipa_lab::Result<ExitCode> {
    match cli.command {
        Command::Generate { config, out } => {
            let mut spec = config::load_spec(&config)?;
            match &mut spec.data {
                DataSource::Generator(g) => {
                    if let Some(seed) = cli.seed {
                        g.seed = seed;
                    }
                }
                DataSource::Paths { .. } => {
                    return Err(Error::config(
                        "generate needs a [data.generator] config, not [data.paths]",
                    ))
                }
            }
            let split = experiment::prepare_data(&spec)?;
            dataset_io::save_split_dataset(&split, &out)?;
            log::info!(
                "wrote {} (train {}, validation {}, test {}; test-only classes {:?})",
                out.display(),
                split.train.len(),
                split.validation.len(),
                split.test.len(),
                split.test_only_classes
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            out,
            workers,
        } => {
            let spec = config::load_spec(&config)?;
            let table = experiment::run_grid(&spec, &out, workers)?;
            log::info!(
                "grid finished: {} runs ok, {} failed; outputs in {}",
                table.rows.len(),
                table.failures.len(),
                out.display()
            );
            if table.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for f in &table.failures {
                    log::warn!("failed: {} ({})", f.key.slug(), f.error);
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Report { in_dir, out } => {
            let table = report::report_from_dir(&in_dir, &out)?;
            log::info!(
                "rebuilt reports for {} rows into {}",
                table.rows.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck => {
            let cfg = GradCheckConfig {
                seed: cli.seed.unwrap_or(0),
                ..GradCheckConfig::default()
            };
            let report = gradcheck::run(&cfg)?;
            for variant in &report.variants {
                println!("{}: max rel err {:.3e}", variant.label, variant.max_rel_err);
                for t in &variant.tensors {
                    println!(
                        "  {:<22} checked {:>3}  max rel err {:.3e}",
                        t.tensor, t.checked, t.max_rel_err
                    );
                }
            }
            println!(
                "overall max rel err {:.3e} (tolerance {:.1e}): {}",
                report.max_rel_err,
                report.tolerance,
                if report.passed() { "PASS" } else { "FAIL" }
            );
            if report.passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}
