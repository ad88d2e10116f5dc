use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fpf_core::filter::{KERNEL_NAME, NORMALIZATION};
use fpf_core::optimizer::{gray_fraction, run_observed, volume_fraction};
use fpf_core::RunOutcome;

use crate::config::RunConfig;
use crate::export::{write_history_csv, write_pgm, FieldDump};

/// Bounds of the open interval counted as gray material.
pub const GRAY_LOWER: f64 = 0.05;
pub const GRAY_UPPER: f64 = 0.95;

pub const CONFIG_FILE: &str = "config.toml";
pub const METADATA_FILE: &str = "metadata.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const PHI_IMAGE: &str = "phi.pgm";
pub const M_IMAGE: &str = "m.pgm";
pub const DUMP_FILE: &str = "field.bin";

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub outcome: RunOutcome,
    /// Fraction of elements with blended density in the gray interval.
    pub gray_fraction: f64,
}

impl RunReport {
    pub fn blended(&self) -> &[f64] {
        self.outcome.last.blended.values()
    }

    pub fn non_descent_steps(&self) -> usize {
        self.outcome.history.iter().filter(|r| !r.descent).count()
    }
}

/// Runs the optimization described by `config` and writes its artifacts to
/// `config.output.dir`.
pub fn cmd_run(config: &RunConfig, progress: bool) -> Result<RunReport> {
    config.validate()?;
    let problem = config.problem()?;
    let dir = config.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let outcome = run_observed(&problem, None, &config.optimizer_config(), |r, _| {
        if progress && (r.iter == 1 || r.iter % 10 == 0) {
            eprintln!(
                "iter {:>4}  J {:.6e}  compliance {:.6e}  alphaP {:.4e}  tau {:.3e}  max dphi {:.3e}",
                r.iter, r.objective, r.compliance, r.penalty, r.tau, r.max_change
            );
        }
    })?;
    let m = outcome.last.blended.values();
    let report = RunReport {
        gray_fraction: gray_fraction(m, GRAY_LOWER, GRAY_UPPER),
        dir,
        outcome,
    };
    write_artifacts(config, &report)?;
    Ok(report)
}

fn write_artifacts(config: &RunConfig, report: &RunReport) -> Result<()> {
    let grid = config.grid()?;
    let dir = &report.dir;
    let out = &report.outcome;
    let phi = out.phi.values();
    let m = report.blended();

    write_pgm(&grid, phi, &dir.join(PHI_IMAGE))?;
    write_pgm(&grid, m, &dir.join(M_IMAGE))?;
    write_history_csv(&out.history, &dir.join(HISTORY_FILE))?;
    FieldDump {
        nx: grid.nx(),
        ny: grid.ny(),
        phi: phi.to_vec(),
        m: m.to_vec(),
        history: out.history.clone(),
    }
    .write(&dir.join(DUMP_FILE))?;
    write_text(&dir.join(CONFIG_FILE), &config.to_text())?;
    write_text(&dir.join(METADATA_FILE), &metadata(config, report))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parameters, result summary and method choices as `key = value` lines.
pub fn metadata(config: &RunConfig, report: &RunReport) -> String {
    let out = &report.outcome;
    let mut text = String::from("# run parameters\n");
    text.push_str(&config.to_text());
    let _ = writeln!(text, "method.beta_effective = {}", config.beta());
    text.push_str("\n# method choices\n");
    let _ = writeln!(text, "filter.kernel = \"{KERNEL_NAME}\"");
    let _ = writeln!(text, "filter.normalization = \"{NORMALIZATION}\"");
    let _ = writeln!(text, "gray.lower = {GRAY_LOWER}");
    let _ = writeln!(text, "gray.upper = {GRAY_UPPER}");
    text.push_str("design.volume_constraint = \"euclidean projection, multiplier by bisection\"\n");
    text.push_str("design.step_normalization = \"max-norm of the gradient\"\n");
    text.push_str("design.phase_gradient = \"two-point centroid differences, zero flux at the boundary\"\n");
    text.push_str("design.sharp_perimeter = \"interior element edges between phases; axis-aligned, hence anisotropic\"\n");
    text.push_str("design.postprocessing = \"none\"\n");
    text.push_str("units = \"lengths m, moduli and tractions Pa, eta N/m\"\n");
    text.push_str("\n# result\n");
    let _ = writeln!(text, "result.iterations = {}", out.history.len());
    let _ = writeln!(text, "result.converged = {}", out.converged);
    let _ = writeln!(text, "result.non_descent_steps = {}", report.non_descent_steps());
    let _ = writeln!(text, "result.initial_objective = {}", out.initial.objective);
    let _ = writeln!(text, "result.objective = {}", out.last.objective);
    let _ = writeln!(text, "result.compliance = {}", out.last.compliance);
    let _ = writeln!(text, "result.alpha_penalty = {}", out.last.penalty);
    let _ = writeln!(text, "result.volume_fraction = {}", volume_fraction(&out.phi));
    let _ = writeln!(text, "result.gray_fraction = {}", report.gray_fraction);
    text
}
