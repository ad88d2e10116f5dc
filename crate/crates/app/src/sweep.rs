//! Parameter sweeps over one axis.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, ensure, Context, Result};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::run::{cmd_run, RunReport};

/// Environment variable holding the number of concurrent sweep points.
pub const WORKERS_ENV: &str = "FPF_WORKERS";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_HEADER: &str = "axis,value,status,J,compliance,alphaP,gray_fraction,iterations,converged,message";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Alpha,
    Gamma,
    FilterRadius,
    Mesh,
}

impl FromStr for Axis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Self::Alpha),
            "gamma" => Ok(Self::Gamma),
            "r_f" => Ok(Self::FilterRadius),
            "mesh" => Ok(Self::Mesh),
            other => bail!("unknown sweep axis {other:?}; expected alpha, gamma, r_f or mesh"),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Alpha => "alpha",
            Self::Gamma => "gamma",
            Self::FilterRadius => "r_f",
            Self::Mesh => "mesh",
        })
    }
}

/// One point of a sweep: a number, or `NXxNY` for the mesh axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepValue {
    Scalar(f64),
    Mesh(usize, usize),
}

impl SweepValue {
    pub fn parse(axis: Axis, s: &str) -> Result<Self> {
        let s = s.trim();
        if axis == Axis::Mesh {
            let (nx, ny) = s
                .split_once(['x', 'X'])
                .ok_or_else(|| anyhow!("mesh values are written NXxNY, got {s:?}"))?;
            return Ok(Self::Mesh(nx.trim().parse()?, ny.trim().parse()?));
        }
        let v: f64 = s.parse().with_context(|| format!("bad sweep value {s:?}"))?;
        ensure!(v.is_finite(), "sweep value must be finite");
        Ok(Self::Scalar(v))
    }

    pub fn parse_list(axis: Axis, list: &str) -> Result<Vec<Self>> {
        let values = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| Self::parse(axis, s))
            .collect::<Result<Vec<_>>>()?;
        ensure!(!values.is_empty(), "sweep needs at least one value");
        Ok(values)
    }
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Scalar(v) => write!(f, "{v}"),
            Self::Mesh(nx, ny) => write!(f, "{nx}x{ny}"),
        }
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub value: SweepValue,
    pub config: RunConfig,
    pub result: Result<RunReport, String>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub axis: Axis,
    pub dir: PathBuf,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.result.is_err()).count()
    }
}

/// Configuration of a single sweep point, writing below the base output
/// directory.
pub fn point_config(base: &RunConfig, axis: Axis, value: SweepValue) -> Result<RunConfig> {
    let mut c = base.clone();
    match (axis, value) {
        (Axis::Alpha, SweepValue::Scalar(v)) => c.method.alpha = v,
        (Axis::Gamma, SweepValue::Scalar(v)) => c.method.gamma = v,
        (Axis::FilterRadius, SweepValue::Scalar(v)) => c.method.filter_radius = v,
        (Axis::Mesh, SweepValue::Mesh(nx, ny)) => {
            c.grid.nx = nx;
            c.grid.ny = ny;
        }
        _ => bail!("value {value} does not fit axis {axis}"),
    }
    c.output.dir = base.output.dir.join(format!("{axis}_{value}"));
    Ok(c)
}

pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => {
            let n: usize = s.trim().parse().with_context(|| format!("{WORKERS_ENV}={s:?}"))?;
            ensure!(n > 0, "{WORKERS_ENV} must be at least 1");
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs every point, at most `workers` at a time, and writes the summary.
/// Failing points are recorded and do not stop the sweep.
pub fn cmd_sweep(base: &RunConfig, axis: Axis, values: &[SweepValue], workers: usize) -> Result<SweepReport> {
    ensure!(!values.is_empty(), "sweep needs at least one value");
    let configs = values
        .iter()
        .map(|&v| point_config(base, axis, v))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&base.output.dir).with_context(|| format!("creating {}", base.output.dir.display()))?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let results: Vec<Result<RunReport, String>> = pool.install(|| {
        configs
            .par_iter()
            .map(|c| cmd_run(c, false).map_err(|e| format!("{e:#}")))
            .collect()
    });
    let points: Vec<SweepPoint> = values
        .iter()
        .zip(configs)
        .zip(results)
        .map(|((&value, config), result)| SweepPoint { value, config, result })
        .collect();
    let report = SweepReport {
        axis,
        dir: base.output.dir.clone(),
        points,
    };
    let path = report.dir.join(SUMMARY_FILE);
    fs::write(&path, summary_csv(&report)).with_context(|| format!("writing {}", path.display()))?;
    Ok(report)
}

pub fn summary_csv(report: &SweepReport) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for p in &report.points {
        match &p.result {
            Ok(r) => {
                let o = &r.outcome;
                let _ = writeln!(
                    out,
                    "{},{},ok,{},{},{},{},{},{},",
                    report.axis,
                    p.value,
                    o.last.objective,
                    o.last.compliance,
                    o.last.penalty,
                    r.gray_fraction,
                    o.history.len(),
                    o.converged
                );
            }
            Err(msg) => {
                let msg = msg.replace(['"', '\n'], " ");
                let _ = writeln!(out, "{},{},failed,,,,,,,\"{msg}\"", report.axis, p.value);
            }
        }
    }
    out
}

/// Area-weighted L1 distance between two element fields on the same grid.
pub fn l1_distance(a: &[f64], b: &[f64], element_area: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * element_area
}
