use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use fpf_app::sweep::{workers_from_env, WORKERS_ENV};
use fpf_app::{cmd_export, cmd_run, cmd_sweep, cmd_verify, Axis, Check, ExportFormat, ImageField, RunConfig, SweepValue};

/// Topology optimization of 2D linear-elastic structures with a blended
/// density filter and phase-field perimeter penalty.
#[derive(Parser)]
#[command(name = "fpf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one design and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Optimize once per value of one parameter.
    #[command(after_help = format!("Concurrent points are limited by {WORKERS_ENV} (default: all cores)."))]
    Sweep {
        config: PathBuf,
        /// alpha, gamma, r_f or mesh.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; mesh values are written NXxNY.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run numerical self-checks; exits with 1 if any fails.
    Verify {
        config: PathBuf,
        /// gradient, filter, patch, lagrangian, modica or all.
        #[arg(long, default_value = "all")]
        check: String,
    },
    /// Re-export the final state of a run directory.
    Export {
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
        /// Field for PGM output.
        #[arg(long, value_enum, default_value_t = FieldArg::M)]
        field: FieldArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Pgm,
    Vtk,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Phi,
    M,
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(dir) = out {
        config.output.dir = dir;
    }
    Ok(config)
}

/// `Ok(false)` signals a failed verification.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out, quiet } => {
            let config = load(&config, out)?;
            let report = cmd_run(&config, !quiet)?;
            let o = &report.outcome;
            println!(
                "{} iterations ({}), J {:.6e} -> {:.6e}, gray fraction {:.4}, artifacts in {}",
                o.history.len(),
                if o.converged { "converged" } else { "iteration cap" },
                o.initial.objective,
                o.last.objective,
                report.gray_fraction,
                report.dir.display()
            );
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let config = load(&config, out)?;
            let axis: Axis = axis.parse()?;
            let values = SweepValue::parse_list(axis, &values)?;
            let report = cmd_sweep(&config, axis, &values, workers_from_env()?)?;
            for p in &report.points {
                match &p.result {
                    Ok(r) => println!(
                        "{axis} = {}: J {:.6e}, gray fraction {:.4}",
                        p.value, r.outcome.last.objective, r.gray_fraction
                    ),
                    Err(e) => println!("{axis} = {}: failed: {e}", p.value),
                }
            }
            println!("summary in {}", report.dir.join(fpf_app::sweep::SUMMARY_FILE).display());
        }
        Command::Verify { config, check } => {
            let config = RunConfig::load(&config)?;
            let checks = if check == "all" {
                Check::ALL.to_vec()
            } else {
                vec![check.parse()?]
            };
            let reports = cmd_verify(&config, &checks)?;
            for r in &reports {
                println!("{r}");
            }
            return Ok(reports.iter().all(|r| r.passed));
        }
        Command::Export {
            run_dir,
            format,
            field,
            out,
        } => {
            let format = match format {
                FormatArg::Pgm => ExportFormat::Pgm,
                FormatArg::Vtk => ExportFormat::Vtk,
                FormatArg::Csv => ExportFormat::Csv,
            };
            let field = match field {
                FieldArg::Phi => ImageField::Phi,
                FieldArg::M => ImageField::Blended,
            };
            let path = cmd_export(&run_dir, format, field, out.as_deref())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(true)
}
