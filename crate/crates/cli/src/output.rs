//! Output plumbing shared by the subcommands: atomic file writes,
//! six-significant-digit human formatting, and the probability CSV
//! produced by `apply`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use smartcal_core::metrics::{BinRow, ProbSet, BIN_ROW_CSV_HEADER};
use smartcal_core::{load_logits, Error, FileFormat, LogitSet, Result};

/// Write `bytes` to `path` via a temp file and rename, so an
/// interrupted run never leaves a partial artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Save a logit file atomically, format chosen by the target extension.
pub fn save_logits_atomic(set: &LogitSet, path: &Path) -> Result<()> {
    let format = FileFormat::from_path(path)?;
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    smartcal_core::save_logits(set, tmp.path(), format)?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Load a logit file, format chosen by its extension.
pub fn load(path: &Path) -> Result<LogitSet> {
    load_logits(path, FileFormat::from_path(path)?)
}

/// Six significant digits for human summaries. Files always keep full
/// precision; this is only for stdout.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        format!("{x:.*}", (5 - magnitude).max(0) as usize)
    } else {
        format!("{x:.5e}")
    }
}

/// Probabilities as CSV: `# p0, p1, ..., label` then one row per
/// sample, full f64 precision.
pub fn encode_probs_csv(probs: &ProbSet) -> String {
    let mut out = String::new();
    out.push('#');
    for j in 0..probs.k() {
        let _ = write!(out, " p{j},");
    }
    out.push_str(" label\n");
    for i in 0..probs.n() {
        for v in probs.row(i) {
            let _ = write!(out, "{v:.16e},");
        }
        let _ = writeln!(out, "{}", probs.label(i));
    }
    out
}

/// Read a probability CSV back (same grammar as the logit CSV).
pub fn load_probs(path: &Path) -> Result<ProbSet> {
    let set = load_logits(path, FileFormat::Csv)?;
    ProbSet::new(set.values().to_vec(), set.labels().to_vec(), set.k())
}

/// Reliability table as CSV, full precision.
pub fn encode_bin_rows(rows: &[BinRow]) -> String {
    let mut out = String::from(BIN_ROW_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.bin, r.lo, r.hi, r.count, r.conf, r.acc
        );
    }
    out
}
