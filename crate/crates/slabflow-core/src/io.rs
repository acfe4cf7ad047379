//! On-disk artifacts: the `SLF1` binary field dump (bit-exact round trip),
//! the stable diagnostics CSV, the versioned JSON run summary, and the
//! per-output-directory lock file.
//!
//! `SLF1` layout (all little-endian): magic bytes `SLF1`; `u32` `N1`, `N2`,
//! `Nz`; `u32` component count; `f64` `L1`, `L2`, `b0`, `t`; then the
//! values as `f64`, row-major, ordered `(component, x1, x2, x3)`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::Serialize;

use crate::diagnostics::DiagnosticsReport;
use crate::error::{Result, SlabflowError};
use crate::iteration::PicardReport;
use crate::spectral::{Grid, SlabField};

const MAGIC: &[u8; 4] = b"SLF1";

/// Grid metadata carried by a field dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpMeta {
    pub n1: u32,
    pub n2: u32,
    pub nz: u32,
    pub ncomp: u32,
    pub l1: f64,
    pub l2: f64,
    pub b0: f64,
    pub t: f64,
}

/// Writes fields to an `SLF1` dump.
pub fn write_field_dump(path: &Path, grid: &Grid, t: f64, fields: &[&SlabField]) -> Result<()> {
    let spec = grid.spec();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [spec.n1 as u32, spec.n2 as u32, spec.nz as u32, fields.len() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [spec.l1, spec.l2, spec.b0, t] {
        w.write_all(&v.to_le_bytes())?;
    }
    for f in fields {
        f.grid().check_same(grid, "field dump");
        for i in 0..spec.n1 {
            for j in 0..spec.n2 {
                for k in 0..spec.nz {
                    w.write_all(&f.values()[[i, j, k]].to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn malformed(path: &Path, what: impl Into<String>) -> SlabflowError {
    SlabflowError::MalformedFile { path: path.display().to_string(), what: what.into() }
}

/// Reads an `SLF1` dump back; the values arrays round-trip bit-exactly.
pub fn read_field_dump(path: &Path) -> Result<(DumpMeta, Vec<Array3<f64>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| malformed(path, "truncated header"))?;
    if &magic != MAGIC {
        return Err(malformed(path, format!("bad magic {magic:?}, expected \"SLF1\"")));
    }
    let mut u32s = [0u32; 4];
    for v in &mut u32s {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|_| malformed(path, "truncated header"))?;
        *v = u32::from_le_bytes(b);
    }
    let mut f64s = [0f64; 4];
    for v in &mut f64s {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|_| malformed(path, "truncated header"))?;
        *v = f64::from_le_bytes(b);
    }
    let meta = DumpMeta {
        n1: u32s[0],
        n2: u32s[1],
        nz: u32s[2],
        ncomp: u32s[3],
        l1: f64s[0],
        l2: f64s[1],
        b0: f64s[2],
        t: f64s[3],
    };
    if meta.n1 == 0 || meta.n2 == 0 || meta.nz == 0 {
        return Err(malformed(path, "zero grid dimension"));
    }
    let shape = (meta.n1 as usize, meta.n2 as usize, meta.nz as usize);
    let per_field = shape.0 * shape.1 * shape.2;
    let mut fields = Vec::with_capacity(meta.ncomp as usize);
    for _ in 0..meta.ncomp {
        let mut flat = vec![0f64; per_field];
        for v in &mut flat {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| malformed(path, "truncated payload"))?;
            *v = f64::from_le_bytes(b);
        }
        fields.push(
            Array3::from_shape_vec(shape, flat)
                .map_err(|e| malformed(path, format!("shape error: {e}")))?,
        );
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(malformed(path, "trailing bytes after payload"));
    }
    Ok((meta, fields))
}

/// One diagnostics CSV row.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub min_j: f64,
    pub energy: f64,
    pub div_residual: f64,
    pub eta_amplitude: f64,
    pub sweeps: usize,
}

/// Stable column set of the diagnostics CSV.
pub const CSV_HEADER: &str = "t,min_J,energy,div_residual,eta_amplitude,sweeps";

/// Renders the diagnostics CSV. Floats are printed with full round-trip
/// precision so identical runs produce bitwise-identical files.
pub fn render_diagnostics_csv(rows: &[DiagnosticsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{}\n",
            r.t, r.min_j, r.energy, r.div_residual, r.eta_amplitude, r.sweeps
        ));
    }
    out
}

pub fn write_diagnostics_csv(path: &Path, rows: &[DiagnosticsRow]) -> Result<()> {
    fs::write(path, render_diagnostics_csv(rows))?;
    Ok(())
}

/// Versioned JSON run summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    /// Schema version of this document; bump on layout changes.
    pub schema_version: u32,
    pub picard: &'a PicardReport,
    pub diagnostics: &'a DiagnosticsReport,
}

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

pub fn write_summary(
    path: &Path,
    picard: &PicardReport,
    diagnostics: &DiagnosticsReport,
) -> Result<()> {
    let doc = RunSummary { schema_version: SUMMARY_SCHEMA_VERSION, picard, diagnostics };
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

/// Exclusive lock on an output directory: creates `slabflow.lock` inside it
/// (failing if one exists) and removes it on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

pub fn lock_output_dir(dir: &Path) -> Result<DirLock> {
    fs::create_dir_all(dir)?;
    let path = dir.join("slabflow.lock");
    match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
        Ok(mut f) => {
            let _ = writeln!(f, "{}", std::process::id());
            Ok(DirLock { path })
        }
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(malformed(
            &path,
            "output directory is locked by another run (remove the lock file if stale)",
        )),
        Err(e) => Err(e.into()),
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
