//! Image, VTK, CSV and binary writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use fpf_core::{Grid, IterationRecord};

pub const CSV_HEADER: &str = "iter,J,compliance,alphaP,volfrac,tau,max_dphi,cg_iters";

fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        bail!("{name} has a non-finite value at index {i}");
    }
    Ok(())
}

/// Binary greymap (P5) with one pixel per element and the top grid row
/// first.
pub fn pgm_bytes(grid: &Grid, values: &[f64]) -> Result<Vec<u8>> {
    ensure!(values.len() == grid.num_elements(), "field length does not match the grid");
    ensure_finite("image field", values)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    out.reserve(nx * ny);
    for row in (0..ny).rev() {
        for i in 0..nx {
            let v = values[grid.element_id(i, row)].clamp(0.0, 1.0);
            out.push((255.0 * v).round() as u8);
        }
    }
    Ok(out)
}

pub fn write_pgm(grid: &Grid, values: &[f64], path: &Path) -> Result<()> {
    let bytes = pgm_bytes(grid, values)?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Legacy ASCII structured-points file with one cell-data scalar per field.
pub fn vtk_text(grid: &Grid, fields: &[(&str, &[f64])]) -> Result<String> {
    let n = grid.num_elements();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\ntopology optimization fields\nASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", grid.nx() + 1, grid.ny() + 1);
    out.push_str("ORIGIN 0 0 0\n");
    let _ = writeln!(out, "SPACING {} {} 1", grid.hx(), grid.hy());
    let _ = writeln!(out, "CELL_DATA {n}");
    for (name, values) in fields {
        ensure!(values.len() == n, "field {name} does not match the grid");
        ensure_finite(name, values)?;
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values.iter() {
            let _ = writeln!(out, "{v}");
        }
    }
    Ok(out)
}

pub fn write_vtk(grid: &Grid, fields: &[(&str, &[f64])], path: &Path) -> Result<()> {
    let text = vtk_text(grid, fields)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn history_csv(history: &[IterationRecord]) -> Result<String> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in history {
        let row = [r.objective, r.compliance, r.penalty, r.volume_fraction, r.tau, r.max_change];
        ensure_finite("iteration record", &row)?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iter, row[0], row[1], row[2], row[3], row[4], row[5], r.cg_iterations
        );
    }
    Ok(out)
}

pub fn write_history_csv(history: &[IterationRecord], path: &Path) -> Result<()> {
    let text = history_csv(history)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

const DUMP_MAGIC: &[u8; 8] = b"FPFDUMP1";

/// Final fields and history of a run.
///
/// Layout, all little-endian: magic `FPFDUMP1`, `nx` and `ny` as u64, the
/// record count as u64, `phi` and `m` as `nx * ny` f64 each, then per record
/// `iter` (u64), J, compliance, alpha P, volume fraction, tau, max change
/// (f64), CG iterations (u64) and the descent flag (u64, 0 or 1).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub nx: usize,
    pub ny: usize,
    pub phi: Vec<f64>,
    pub m: Vec<f64>,
    pub history: Vec<IterationRecord>,
}

impl FieldDump {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.nx * self.ny;
        ensure!(self.phi.len() == n && self.m.len() == n, "field length does not match the grid");
        ensure_finite("phi", &self.phi)?;
        ensure_finite("m", &self.m)?;
        let mut out = Vec::with_capacity(32 + 16 * n + 72 * self.history.len());
        out.extend_from_slice(DUMP_MAGIC);
        for v in [self.nx, self.ny, self.history.len()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in self.phi.iter().chain(&self.m) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in &self.history {
            out.extend_from_slice(&(r.iter as u64).to_le_bytes());
            for v in [r.objective, r.compliance, r.penalty, r.volume_fraction, r.tau, r.max_change] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&(r.cg_iterations as u64).to_le_bytes());
            out.extend_from_slice(&u64::from(r.descent).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader { bytes, pos: 0 };
        ensure!(reader.take(8)? == DUMP_MAGIC, "not a field dump");
        let nx = reader.u64()? as usize;
        let ny = reader.u64()? as usize;
        let records = reader.u64()? as usize;
        let n = nx.checked_mul(ny).context("corrupt dump header")?;
        let phi = (0..n).map(|_| reader.f64()).collect::<Result<Vec<_>>>()?;
        let m = (0..n).map(|_| reader.f64()).collect::<Result<Vec<_>>>()?;
        let mut history = Vec::with_capacity(records.min(1 << 20));
        for _ in 0..records {
            history.push(IterationRecord {
                iter: reader.u64()? as usize,
                objective: reader.f64()?,
                compliance: reader.f64()?,
                penalty: reader.f64()?,
                volume_fraction: reader.f64()?,
                tau: reader.f64()?,
                max_change: reader.f64()?,
                cg_iterations: reader.u64()? as usize,
                descent: reader.u64()? != 0,
            });
        }
        ensure!(reader.pos == bytes.len(), "trailing bytes in field dump");
        Ok(Self { nx, ny, phi, m, history })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("in {}", path.display()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        ensure!(end <= self.bytes.len(), "truncated field dump");
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(bytes: &[u8]) -> &[u8] {
        let header_end = bytes
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == b'\n')
            .nth(2)
            .unwrap()
            .0;
        &bytes[header_end + 1..]
    }

    #[test]
    fn solid_and_void_images() {
        let g = Grid::new(4, 3, 2.0, 1.0).unwrap();
        let ones = pgm_bytes(&g, &[1.0; 12]).unwrap();
        assert!(ones.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(body(&ones), &[255u8; 12]);
        assert_eq!(body(&pgm_bytes(&g, &[0.0; 12]).unwrap()), &[0u8; 12]);
    }

    #[test]
    fn image_orientation() {
        let g = Grid::new(2, 1, 2.0, 1.0).unwrap();
        assert_eq!(body(&pgm_bytes(&g, &[0.0, 1.0]).unwrap()), &[0, 255]);
        // bottom grid row is the last image row
        let g = Grid::new(1, 2, 1.0, 2.0).unwrap();
        assert_eq!(body(&pgm_bytes(&g, &[1.0, 0.0]).unwrap()), &[0, 255]);
    }

    #[test]
    fn pixels_round_and_clamp() {
        let g = Grid::new(4, 1, 4.0, 1.0).unwrap();
        let px = pgm_bytes(&g, &[0.5, 0.002, 1.3, -0.1]).unwrap();
        assert_eq!(body(&px), &[128, 1, 255, 0]);
    }

    #[test]
    fn non_finite_values_are_refused() {
        let g = Grid::new(2, 1, 2.0, 1.0).unwrap();
        assert!(pgm_bytes(&g, &[f64::NAN, 0.0]).is_err());
        assert!(vtk_text(&g, &[("phi", &[0.0, f64::INFINITY])]).is_err());
    }

    #[test]
    fn vtk_layout() {
        let g = Grid::new(2, 1, 2.0, 1.0).unwrap();
        let text = vtk_text(&g, &[("phi", &[0.25, 1.0]), ("m", &[0.5, 0.5])]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
        assert_eq!(lines[4], "DIMENSIONS 3 2 1");
        assert_eq!(lines[7], "CELL_DATA 2");
        assert_eq!(&lines[8..12], &["SCALARS phi double 1", "LOOKUP_TABLE default", "0.25", "1"]);
        assert_eq!(lines.len(), 16);
    }

    fn record(iter: usize) -> IterationRecord {
        IterationRecord {
            iter,
            objective: 1.5,
            compliance: 1.25,
            penalty: 0.25,
            volume_fraction: 0.4,
            tau: 0.5,
            max_change: 1e-3,
            cg_iterations: 17,
            descent: iter.is_multiple_of(2),
        }
    }

    #[test]
    fn csv_rows() {
        let text = history_csv(&[record(1), record(2)]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "1,1.5,1.25,0.25,0.4,0.5,0.001,17");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn dump_round_trip() {
        let dump = FieldDump {
            nx: 3,
            ny: 2,
            phi: vec![0.0, 0.1, 0.2, 0.3, 0.4, 1.0],
            m: vec![0.5; 6],
            history: vec![record(1), record(2)],
        };
        let bytes = dump.to_bytes().unwrap();
        assert_eq!(FieldDump::from_bytes(&bytes).unwrap(), dump);
        assert!(FieldDump::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(FieldDump::from_bytes(b"garbage!").is_err());
    }
}
