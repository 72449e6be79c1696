//! Logit datasets: in-memory container, CSV and binary file formats,
//! and seeded validation/test splitting.
//!
//! A dataset is an `N x K` matrix of real-valued logits plus one integer
//! label per row. Two on-disk layouts are supported:
//!
//! * **CSV** — `K` float columns followed by one integer label column,
//!   with an optional single header line starting with `#`.
//! * **Binary** — magic `SMLG`, format version (`u32` LE), `N` (`u64`
//!   LE), `K` (`u32` LE), then `N*K` `f32` LE logits row-major, then
//!   `N` `u32` LE labels. Compact and bit-stable: floats round-trip
//!   exactly at `f32` precision.
//!
//! Loading validates everything (finite values, labels in range,
//! consistent row width) and reports the first offending data row by
//! index.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Magic bytes opening the binary logit format.
pub const BIN_MAGIC: [u8; 4] = *b"SMLG";
/// Current binary format version.
pub const BIN_VERSION: u32 = 1;

/// On-disk layout of a logit file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Bin,
}

impl FileFormat {
    /// Infer the format from a file extension (`.csv` or `.bin`).
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(FileFormat::Csv),
            Some("bin") => Ok(FileFormat::Bin),
            _ => Err(Error::Config(format!(
                "{}: cannot infer file format; use a .csv or .bin extension",
                path.display()
            ))),
        }
    }
}

/// An `N x K` logit (or probability) matrix with one label per row.
///
/// Invariants, enforced at construction: `N >= 1`, `K >= 2`, every
/// value finite, every label in `[0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSet {
    values: Vec<f64>, // row-major, n * k entries
    labels: Vec<usize>,
    n: usize,
    k: usize,
}

impl LogitSet {
    pub fn new(values: Vec<f64>, labels: Vec<usize>, k: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Data("empty dataset".into()));
        }
        if k < 2 {
            return Err(Error::Data(format!("need at least 2 classes, got {k}")));
        }
        if values.len() != n * k {
            return Err(Error::Data(format!(
                "value buffer holds {} entries, expected {} ({} rows x {} classes)",
                values.len(),
                n * k,
                n,
                k
            )));
        }
        for (i, row) in values.chunks_exact(k).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite value at row {i}")));
            }
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::Data(format!("label out of range at row {i}")));
            }
        }
        Ok(LogitSet {
            values,
            labels,
            n,
            k,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterate `(logit_row, label)` pairs in row order.
    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.values
            .chunks_exact(self.k)
            .zip(self.labels.iter().copied())
    }

    /// New set holding the given rows (used by splitting). Indices must
    /// be in range and non-empty.
    fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.k);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LogitSet::new(values, labels, self.k)
    }
}

/// How large the validation side of a split should be.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValSize {
    /// Absolute number of validation rows.
    Count(usize),
    /// Fraction of the dataset, rounded to the nearest row.
    Fraction(f64),
}

/// A seeded validation/test split request.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub val: ValSize,
    pub seed: u64,
    /// When set, the validation set preserves per-class proportions
    /// (largest-remainder allocation). Default is a uniform shuffle.
    pub stratified: bool,
}

impl SplitSpec {
    fn resolve_count(&self, n: usize) -> Result<usize> {
        let count = match self.val {
            ValSize::Count(c) => c,
            ValSize::Fraction(f) => {
                if !(f.is_finite() && f > 0.0 && f < 1.0) {
                    return Err(Error::Config(format!(
                        "validation fraction must lie in (0, 1), got {f}"
                    )));
                }
                (f * n as f64).round() as usize
            }
        };
        if count == 0 || count >= n {
            return Err(Error::Config(format!(
                "validation size {count} must lie in [1, {}] for {n} rows",
                n - 1
            )));
        }
        Ok(count)
    }
}

/// Split a dataset into `(validation, test)` with a seeded shuffle.
///
/// Row order within each side is ascending by original index, so the
/// same `(seed, spec)` always reproduces byte-identical splits and the
/// two sides partition the input exactly.
pub fn split(set: &LogitSet, spec: &SplitSpec) -> Result<(LogitSet, LogitSet)> {
    let n = set.n();
    let count = spec.resolve_count(n)?;
    let mut rng = Rng::new(spec.seed);

    let mut val_idx: Vec<usize>;
    if spec.stratified {
        // Per-class pools, shuffled in class order on one shared
        // stream; validation quota by largest remainder.
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); set.k()];
        for (i, &y) in set.labels().iter().enumerate() {
            pools[y].push(i);
        }
        for pool in pools.iter_mut() {
            rng.shuffle(pool);
        }
        let mut quota: Vec<usize> = pools
            .iter()
            .map(|p| (p.len() as u128 * count as u128 / n as u128) as usize)
            .collect();
        let assigned: usize = quota.iter().sum();
        let mut order: Vec<usize> = (0..set.k()).collect();
        // Stable order: descending remainder, then ascending class id.
        order.sort_by_key(|&c| {
            let rem = (pools[c].len() as u128 * count as u128) % (n as u128);
            (std::cmp::Reverse(rem), c)
        });
        for &c in order.iter().take(count - assigned) {
            quota[c] += 1;
        }
        val_idx = Vec::with_capacity(count);
        for (c, pool) in pools.iter().enumerate() {
            val_idx.extend_from_slice(&pool[..quota[c]]);
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        val_idx = idx[..count].to_vec();
    }

    val_idx.sort_unstable();
    let mut in_val = vec![false; n];
    for &i in &val_idx {
        in_val[i] = true;
    }
    let test_idx: Vec<usize> = (0..n).filter(|&i| !in_val[i]).collect();

    Ok((set.subset(&val_idx)?, set.subset(&test_idx)?))
}

/// Load a logit file, validating contents.
pub fn load_logits(path: &Path, format: FileFormat) -> Result<LogitSet> {
    let bad = |msg: String| Error::Data(format!("{}: {msg}", path.display()));
    match format {
        FileFormat::Csv => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_csv(&text).map_err(&bad)
        }
        FileFormat::Bin => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_bin(&bytes).map_err(bad)
        }
    }
}

/// Save a logit file. Binary stores values at `f32` precision and
/// rejects magnitudes outside `f32` range; CSV keeps 9 significant
/// digits.
pub fn save_logits(set: &LogitSet, path: &Path, format: FileFormat) -> Result<()> {
    let bytes = match format {
        FileFormat::Csv => encode_csv(set).into_bytes(),
        FileFormat::Bin => encode_bin(set)?,
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_csv(text: &str) -> std::result::Result<LogitSet, String> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut k: Option<usize> = None;
    let mut row = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with('#')) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let width = match k {
            None => {
                if fields.len() < 3 {
                    return Err(format!(
                        "expected at least 3 columns (2 logits + label) at row {row}"
                    ));
                }
                k = Some(fields.len() - 1);
                fields.len()
            }
            Some(k) => {
                if fields.len() != k + 1 {
                    return Err(format!("malformed row width at row {row}"));
                }
                k + 1
            }
        };
        for field in &fields[..width - 1] {
            let v: f64 = field
                .parse()
                .map_err(|_| format!("malformed number {field:?} at row {row}"))?;
            if !v.is_finite() {
                return Err(format!("non-finite value at row {row}"));
            }
            values.push(v);
        }
        let label: usize = fields[width - 1]
            .parse()
            .map_err(|_| format!("malformed label {:?} at row {row}", fields[width - 1]))?;
        if label >= k.unwrap() {
            return Err(format!("label out of range at row {row}"));
        }
        labels.push(label);
        row += 1;
    }
    match k {
        None => Err("empty dataset".into()),
        Some(k) => LogitSet::new(values, labels, k).map_err(|e| e.to_string()),
    }
}

fn encode_csv(set: &LogitSet) -> String {
    let mut out = String::new();
    out.push('#');
    for j in 0..set.k() {
        let _ = write!(out, " z{j},");
    }
    out.push_str(" label\n");
    for (row, label) in set.rows() {
        for v in row {
            let _ = write!(out, "{:.8e},", v);
        }
        let _ = writeln!(out, "{label}");
    }
    out
}

fn parse_bin(bytes: &[u8]) -> std::result::Result<LogitSet, String> {
    const HEADER: usize = 4 + 4 + 8 + 4;
    if bytes.len() < HEADER {
        return Err("truncated header".into());
    }
    if bytes[0..4] != BIN_MAGIC {
        return Err("bad magic (not a logit file)".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BIN_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let k = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    if n == 0 {
        return Err("empty dataset".into());
    }
    if k < 2 {
        return Err(format!("need at least 2 classes, got {k}"));
    }
    let value_bytes = n
        .checked_mul(k)
        .and_then(|c| c.checked_mul(4))
        .ok_or("header dimensions overflow")?;
    let expected = HEADER + value_bytes + n * 4;
    if bytes.len() != expected {
        return Err(format!(
            "file size mismatch: {} bytes, expected {expected} for {n} x {k}",
            bytes.len()
        ));
    }
    let mut values = Vec::with_capacity(n * k);
    let mut off = HEADER;
    for idx in 0..n * k {
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(format!("non-finite value at row {}", idx / k));
        }
        values.push(v as f64);
        off += 4;
    }
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        if y >= k {
            return Err(format!("label out of range at row {i}"));
        }
        labels.push(y);
        off += 4;
    }
    LogitSet::new(values, labels, k).map_err(|e| e.to_string())
}

fn encode_bin(set: &LogitSet) -> Result<Vec<u8>> {
    let k: u32 = set
        .k()
        .try_into()
        .map_err(|_| Error::Data(format!("{} classes exceed the binary format", set.k())))?;
    let mut out = Vec::with_capacity(20 + set.n() * set.k() * 4 + set.n() * 4);
    out.extend_from_slice(&BIN_MAGIC);
    out.extend_from_slice(&BIN_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.n() as u64).to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    for (i, &v) in set.values().iter().enumerate() {
        if v.abs() > f32::MAX as f64 {
            return Err(Error::Data(format!(
                "value exceeds f32 range at row {}",
                i / set.k()
            )));
        }
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &y in set.labels() {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LogitSet {
        LogitSet::new(vec![1.0, -0.5, 0.25, 0.0, 2.0, -1.0], vec![0, 1], 3).unwrap()
    }

    #[test]
    fn constructor_enforces_invariants() {
        assert!(matches!(
            LogitSet::new(vec![], vec![], 3),
            Err(Error::Data(msg)) if msg.contains("empty")
        ));
        assert!(LogitSet::new(vec![1.0, 2.0], vec![0], 1).is_err());
        let err = LogitSet::new(vec![1.0, f64::NAN], vec![0], 2).unwrap_err();
        assert!(err.to_string().contains("non-finite value at row 0"));
        let err = LogitSet::new(vec![1.0, 2.0, 3.0, 4.0], vec![0, 2], 2).unwrap_err();
        assert!(err.to_string().contains("label out of range at row 1"));
    }

    #[test]
    fn csv_label_out_of_range_names_the_row() {
        let err = parse_csv("0.1, 0.2, 0.3, 7\n").unwrap_err();
        assert!(err.contains("label out of range at row 0"), "{err}");
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let err = parse_csv("1.0,2.0,0\n1.0,2.0,3.0,1\n").unwrap_err();
        assert!(err.contains("malformed row width at row 1"), "{err}");
    }

    #[test]
    fn csv_skips_single_hash_header() {
        let set = parse_csv("# z0, z1, label\n1.0,2.0,1\n").unwrap();
        assert_eq!(set.n(), 1);
        assert_eq!(set.k(), 2);
        assert_eq!(set.label(0), 1);
    }

    #[test]
    fn csv_round_trip_is_close() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let set = tiny();
        save_logits(&set, &path, FileFormat::Csv).unwrap();
        let back = load_logits(&path, FileFormat::Csv).unwrap();
        assert_eq!(back.n(), set.n());
        assert_eq!(back.k(), set.k());
        assert_eq!(back.labels(), set.labels());
        for (a, b) in back.values().iter().zip(set.values().iter()) {
            assert!((a - b).abs() <= 1e-7 * b.abs().max(1.0));
        }
    }

    #[test]
    fn bin_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let set = tiny();
        save_logits(&set, &path, FileFormat::Bin).unwrap();
        let bytes_a = std::fs::read(&path).unwrap();
        let back = load_logits(&path, FileFormat::Bin).unwrap();
        save_logits(&back, &path, FileFormat::Bin).unwrap();
        let bytes_b = std::fs::read(&path).unwrap();
        assert_eq!(bytes_a, bytes_b);
        // Values in this fixture are exactly representable in f32.
        assert_eq!(back.values(), set.values());
    }

    #[test]
    fn bin_rejects_corruption() {
        let set = tiny();
        let good = encode_bin(&set).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(parse_bin(&bad_magic).unwrap_err().contains("magic"));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(parse_bin(&bad_version).unwrap_err().contains("version"));

        let truncated = &good[..good.len() - 1];
        assert!(parse_bin(truncated).unwrap_err().contains("size mismatch"));

        let mut bad_label = good.clone();
        let off = good.len() - 4;
        bad_label[off..].copy_from_slice(&7u32.to_le_bytes());
        assert!(parse_bin(&bad_label)
            .unwrap_err()
            .contains("label out of range at row 1"));
    }

    #[test]
    fn split_partitions_and_reproduces() {
        let n = 100;
        let mut rng = Rng::new(1);
        let values: Vec<f64> = (0..n * 4).map(|_| rng.normal()).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(4) as usize).collect();
        let set = LogitSet::new(values, labels, 4).unwrap();

        let spec = SplitSpec {
            val: ValSize::Fraction(0.1),
            seed: 42,
            stratified: false,
        };
        let (val_a, test_a) = split(&set, &spec).unwrap();
        let (val_b, test_b) = split(&set, &spec).unwrap();
        assert_eq!(val_a, val_b);
        assert_eq!(test_a, test_b);
        assert_eq!(val_a.n(), 10);
        assert_eq!(test_a.n(), 90);

        // Partition: multiset of rows is preserved. Rows are unique
        // with probability 1, so compare sorted row signatures.
        let sig = |s: &LogitSet| {
            let mut rows: Vec<Vec<u64>> = s
                .rows()
                .map(|(r, y)| {
                    let mut v: Vec<u64> = r.iter().map(|x| x.to_bits()).collect();
                    v.push(y as u64);
                    v
                })
                .collect();
            rows.sort();
            rows
        };
        let mut combined = sig(&val_a);
        combined.extend(sig(&test_a));
        combined.sort();
        assert_eq!(combined, sig(&set));
    }

    #[test]
    fn split_rejects_degenerate_sizes() {
        let set = tiny();
        for val in [ValSize::Count(0), ValSize::Count(2), ValSize::Count(5)] {
            let spec = SplitSpec {
                val,
                seed: 0,
                stratified: false,
            };
            assert!(matches!(split(&set, &spec), Err(Error::Config(_))));
        }
    }

    #[test]
    fn stratified_split_preserves_class_counts() {
        // 60/30/10 class mix, 100 rows, 20-row validation set: expect
        // exactly 12/6/2 validation rows per class.
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut rng = Rng::new(5);
        for (class, reps) in [(0usize, 60), (1, 30), (2, 10)] {
            for _ in 0..reps {
                values.extend((0..3).map(|_| rng.normal()));
                labels.push(class);
            }
        }
        let set = LogitSet::new(values, labels, 3).unwrap();
        let (val, test) = split(
            &set,
            &SplitSpec {
                val: ValSize::Count(20),
                seed: 9,
                stratified: true,
            },
        )
        .unwrap();
        let count = |s: &LogitSet, c: usize| s.labels().iter().filter(|&&y| y == c).count();
        assert_eq!([count(&val, 0), count(&val, 1), count(&val, 2)], [12, 6, 2]);
        assert_eq!(val.n() + test.n(), set.n());
    }
}
