//! Text outputs: diagnostics series CSV, per-entity field CSV dumps,
//! checkpoint JSON and Matrix Market dumps of the assembled operators.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! configs produce byte-identical files.

use crate::{io_err, Result};
use mfd_wave::dynamics::DiagnosticsRecord;
use mfd_wave::integrator::SimState;
use mfd_wave::sparse::CsrMatrix;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Streams diagnostics records into `series.csv` as a run progresses.
pub struct SeriesWriter {
    path: std::path::PathBuf,
    writer: std::io::BufWriter<std::fs::File>,
}

impl SeriesWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        use std::io::Write as _;
        let path = path.as_ref().to_path_buf();
        let file = std::fs::File::create(&path).map_err(io_err(&path))?;
        let mut writer = std::io::BufWriter::new(file);
        writer
            .write_all(b"t,H_h,delta,energy_residual,newton_iters\n")
            .map_err(io_err(&path))?;
        Ok(SeriesWriter { path, writer })
    }

    pub fn append(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        use std::io::Write as _;
        let residual = r
            .energy_residual
            .map(|v| format!("{v:e}"))
            .unwrap_or_default();
        writeln!(
            self.writer,
            "{:e},{:e},{:e},{},{}",
            r.time, r.hamiltonian, r.drift, residual, r.newton_iters
        )
        .map_err(io_err(&self.path))
    }

    pub fn finish(mut self) -> Result<()> {
        use std::io::Write as _;
        self.writer.flush().map_err(io_err(&self.path))
    }
}

/// `series.csv`: one row per diagnostics record.
pub fn write_series_csv(path: impl AsRef<Path>, records: &[DiagnosticsRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("t,H_h,delta,energy_residual,newton_iters\n");
    for r in records {
        let residual = r
            .energy_residual
            .map(|v| format!("{v:e}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{},{}",
            r.time, r.hamiltonian, r.drift, residual, r.newton_iters
        );
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Debug dump of per-cell or per-face values as `index,value` rows.
pub fn write_field_csv(path: impl AsRef<Path>, header: &str, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{header},value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v:e}");
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Matrix Market coordinate text format (1-based indices).
pub fn write_matrix_market(
    path: impl AsRef<Path>,
    matrix: &CsrMatrix,
    symmetric: bool,
) -> Result<()> {
    let path = path.as_ref();
    let kind = if symmetric { "symmetric" } else { "general" };
    let mut body = String::new();
    let mut count = 0usize;
    for (r, c, v) in matrix.triplets() {
        if symmetric && c > r {
            continue;
        }
        let _ = writeln!(body, "{} {} {v:e}", r + 1, c + 1);
        count += 1;
    }
    let header = format!(
        "%%MatrixMarket matrix coordinate real {kind}\n{} {} {count}\n",
        matrix.n_rows(),
        matrix.n_cols()
    );
    fs::write(path, header + &body).map_err(io_err(path))
}

#[derive(Serialize)]
struct Checkpoint<'a> {
    step: usize,
    time: f64,
    u: &'a [f64],
    v: &'a [f64],
}

/// State checkpoint as JSON (`{"step": n, "time": t, "u": [...], "v": [...]}`).
pub fn write_checkpoint(path: impl AsRef<Path>, state: &SimState) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string(&Checkpoint {
        step: state.step,
        time: state.time,
        u: state.u.values(),
        v: state.v.values(),
    })
    .expect("checkpoint serialization cannot fail");
    fs::write(path, body).map_err(io_err(path))
}
