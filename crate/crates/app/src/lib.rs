//! Configuration, artifact export and the `run`, `sweep`, `verify` and
//! `export` commands of the `fpf` binary.

pub mod config;
pub mod export;
pub mod run;
pub mod sweep;
pub mod verify;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Result};
use fpf_core::DensityField;

pub use config::RunConfig;
pub use run::{cmd_run, RunReport};
pub use sweep::{cmd_sweep, Axis, SweepReport, SweepValue};
pub use verify::{cmd_verify, Check, CheckReport};

use export::{write_history_csv, write_pgm, write_vtk, FieldDump};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Pgm,
    Vtk,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pgm" => Self::Pgm,
            "vtk" => Self::Vtk,
            "csv" => Self::Csv,
            other => bail!("unknown export format {other:?}; expected pgm, vtk or csv"),
        })
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pgm => "pgm",
            Self::Vtk => "vtk",
            Self::Csv => "csv",
        })
    }
}

/// Field written by a PGM export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageField {
    Phi,
    Blended,
}

/// Re-exports the final state of the run in `run_dir`.
///
/// PGM writes one image of `field`, VTK writes `phi`, `m` and the strain
/// energy density (one state solve), CSV writes the iteration history.
/// Returns the written path, `out` or a default inside `run_dir`.
pub fn cmd_export(run_dir: &Path, format: ExportFormat, field: ImageField, out: Option<&Path>) -> Result<PathBuf> {
    let config = RunConfig::load(&run_dir.join(run::CONFIG_FILE))?;
    let dump = FieldDump::read(&run_dir.join(run::DUMP_FILE))?;
    let grid = config.grid()?;
    if (dump.nx, dump.ny) != (grid.nx(), grid.ny()) {
        bail!("field dump is {}x{} but the configuration is {}x{}", dump.nx, dump.ny, grid.nx(), grid.ny());
    }
    let default_name = match (format, field) {
        (ExportFormat::Pgm, ImageField::Phi) => run::PHI_IMAGE,
        (ExportFormat::Pgm, ImageField::Blended) => run::M_IMAGE,
        (ExportFormat::Vtk, _) => "fields.vtk",
        (ExportFormat::Csv, _) => run::HISTORY_FILE,
    };
    let path = out.map_or_else(|| run_dir.join(default_name), Path::to_path_buf);
    match format {
        ExportFormat::Pgm => {
            let values = match field {
                ImageField::Phi => &dump.phi,
                ImageField::Blended => &dump.m,
            };
            write_pgm(&grid, values, &path)?;
        }
        ExportFormat::Csv => write_history_csv(&dump.history, &path)?,
        ExportFormat::Vtk => {
            let problem = config.problem()?;
            let eval = problem.objective(&DensityField::new(dump.phi.clone())?, None)?;
            let sed = problem.elastic().strain_energy_density(&eval.state);
            write_vtk(
                &grid,
                &[("phi", &dump.phi), ("m", &dump.m), ("strain_energy_density", &sed)],
                &path,
            )?;
        }
    }
    Ok(path)
}
