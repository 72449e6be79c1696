//! Calibration metrics over predicted probability matrices.
//!
//! All metrics consume a [`ProbSet`]: an `N x K` row-stochastic matrix
//! plus labels. The headline quantities are
//!
//! * **ECE** — expected calibration error over `B` equal-width
//!   confidence bins, `sum_b (|bin_b|/N) * |acc_b - conf_b|`. Bin `b`
//!   covers `((b-1)/B, b/B]`; a confidence of exactly 0 (impossible
//!   for a softmax maximum, but accepted in inputs) falls into bin 1.
//! * **AdaECE** — the same contrast over `B` adaptive bins holding
//!   equal sample counts (confidence-sorted; when `N mod B != 0` the
//!   first remainder bins take one extra sample).
//! * **Classwise ECE** — one-vs-rest ECE per class, averaged over
//!   classes, using `p(class j)` against the indicator `y == j`.
//! * **NLL** — mean negative log-likelihood with probabilities floored
//!   at `1e-12` before the log.
//! * **Brier** — mean squared distance between the probability row and
//!   the one-hot label.
//!
//! Empty equal-width bins contribute zero and still appear in the
//! per-bin breakdown with a zero count, so a reliability table always
//! has exactly `B` rows.

use serde::{Deserialize, Serialize};

use crate::dataio::LogitSet;
use crate::error::{Error, Result};
use crate::num;

/// Probability floor applied inside the NLL logarithm.
pub const NLL_FLOOR: f64 = 1e-12;

/// Row-stochastic probability matrix with labels.
///
/// Invariants: `N >= 1`, `K >= 2`, entries in `[0, 1]`, every row sums
/// to 1 within `1e-6`, labels in `[0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSet {
    probs: Vec<f64>, // row-major, n * k
    labels: Vec<usize>,
    n: usize,
    k: usize,
}

impl ProbSet {
    pub fn new(probs: Vec<f64>, labels: Vec<usize>, k: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Data("empty dataset".into()));
        }
        if k < 2 {
            return Err(Error::Data(format!("need at least 2 classes, got {k}")));
        }
        if probs.len() != n * k {
            return Err(Error::Data(format!(
                "probability buffer holds {} entries, expected {}",
                probs.len(),
                n * k
            )));
        }
        for (i, row) in probs.chunks_exact(k).enumerate() {
            let mut sum = 0.0;
            for &p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Data(format!(
                        "probability outside [0, 1] at row {i}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Data(format!(
                    "row {i} sums to {sum}, expected 1 within 1e-6"
                )));
            }
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::Data(format!("label out of range at row {i}")));
            }
        }
        Ok(ProbSet {
            probs,
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
        &self.probs[i * self.k..(i + 1) * self.k]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `(confidence, predicted_class)` for row `i`; argmax ties resolve
    /// to the lowest class index.
    pub fn confidence(&self, i: usize) -> (f64, usize) {
        let row = self.row(i);
        let arg = num::argmax(row);
        (row[arg], arg)
    }

    /// Per-row `(confidence, correct)` pairs.
    pub fn confidences(&self) -> Vec<(f64, bool)> {
        (0..self.n)
            .map(|i| {
                let (c, pred) = self.confidence(i);
                (c, pred == self.labels[i])
            })
            .collect()
    }
}

/// Softmax every row of a logit set at temperature 1.
pub fn softmax_rows(set: &LogitSet) -> ProbSet {
    let k = set.k();
    let mut probs = vec![0.0; set.n() * k];
    for (i, (row, _)) in set.rows().enumerate() {
        num::softmax_into(row, 1.0, &mut probs[i * k..(i + 1) * k]);
    }
    ProbSet::new(probs, set.labels().to_vec(), k)
        .expect("softmax rows are valid probabilities by construction")
}

/// One row of a reliability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    /// 1-based bin index.
    pub bin: usize,
    /// Lower edge (exclusive, except for bin 1 which also takes 0).
    pub lo: f64,
    /// Upper edge (inclusive).
    pub hi: f64,
    pub count: usize,
    /// Mean confidence of members (0 for an empty bin).
    pub conf: f64,
    /// Mean accuracy of members (0 for an empty bin).
    pub acc: f64,
}

/// Header for the CSV rendering of [`BinRow`] tables.
pub const BIN_ROW_CSV_HEADER: &str = "bin,lo,hi,count,conf,acc";

/// Full metric bundle for one probability set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ece: f64,
    pub adaece: f64,
    pub classwise_ece: f64,
    pub nll: f64,
    pub brier: f64,
    pub accuracy: f64,
    pub bins: Vec<BinRow>,
}

/// Equal-width bin index (1-based) for a confidence value.
///
/// The arithmetic candidate `ceil(c * B)` can land one bin off when
/// `c * B` rounds across an integer, so the result is nudged until the
/// interval test `(b-1)/B < c <= b/B` holds exactly in f64.
fn hard_bin(conf: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut i = ((conf * b).ceil() as usize).clamp(1, bins);
    while i > 1 && conf <= (i - 1) as f64 / b {
        i -= 1;
    }
    while i < bins && conf > i as f64 / b {
        i += 1;
    }
    i
}

/// ECE over `B` equal-width bins, with the full reliability table.
pub fn ece(set: &ProbSet, bins: usize) -> Result<(f64, Vec<BinRow>)> {
    if bins == 0 {
        return Err(Error::Config("bin count must be at least 1".into()));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut acc_sum = vec![0.0; bins];
    for (conf, correct) in set.confidences() {
        let b = hard_bin(conf, bins) - 1;
        count[b] += 1;
        conf_sum[b] += conf;
        acc_sum[b] += f64::from(correct as u8);
    }
    let n = set.n() as f64;
    let mut total = 0.0;
    let mut rows = Vec::with_capacity(bins);
    for b in 0..bins {
        let (conf, acc) = if count[b] > 0 {
            (conf_sum[b] / count[b] as f64, acc_sum[b] / count[b] as f64)
        } else {
            (0.0, 0.0)
        };
        total += count[b] as f64 / n * (acc - conf).abs();
        rows.push(BinRow {
            bin: b + 1,
            lo: b as f64 / bins as f64,
            hi: (b + 1) as f64 / bins as f64,
            count: count[b],
            conf,
            acc,
        });
    }
    Ok((total, rows))
}

/// Adaptive-bin ECE: `B` confidence-sorted bins of (near-)equal count.
pub fn adaece(set: &ProbSet, bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::Config("bin count must be at least 1".into()));
    }
    if bins > set.n() {
        return Err(Error::Config(format!(
            "adaptive binning needs at least as many samples as bins ({} < {bins})",
            set.n()
        )));
    }
    let mut pairs = set.confidences();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = set.n();
    let base = n / bins;
    let extra = n % bins; // the first `extra` bins take one extra sample
    let mut total = 0.0;
    let mut start = 0usize;
    for b in 0..bins {
        let len = base + usize::from(b < extra);
        let chunk = &pairs[start..start + len];
        start += len;
        let conf: f64 = chunk.iter().map(|p| p.0).sum::<f64>() / len as f64;
        let acc: f64 = chunk.iter().map(|p| f64::from(p.1 as u8)).sum::<f64>() / len as f64;
        total += len as f64 / n as f64 * (acc - conf).abs();
    }
    Ok(total)
}

/// Classwise ECE: one-vs-rest calibration error averaged over classes.
pub fn classwise_ece(set: &ProbSet, bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::Config("bin count must be at least 1".into()));
    }
    let n = set.n() as f64;
    let mut total = 0.0;
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hit_sum = vec![0.0; bins];
    for class in 0..set.k() {
        count.fill(0);
        conf_sum.fill(0.0);
        hit_sum.fill(0.0);
        for i in 0..set.n() {
            let p = set.row(i)[class];
            let b = hard_bin(p, bins) - 1;
            count[b] += 1;
            conf_sum[b] += p;
            hit_sum[b] += f64::from((set.label(i) == class) as u8);
        }
        for b in 0..bins {
            if count[b] > 0 {
                let c = count[b] as f64;
                total += c / n * (hit_sum[b] / c - conf_sum[b] / c).abs();
            }
        }
    }
    Ok(total / set.k() as f64)
}

/// Mean negative log-likelihood, probabilities floored at [`NLL_FLOOR`].
pub fn nll(set: &ProbSet) -> f64 {
    let mut total = 0.0;
    for i in 0..set.n() {
        total -= set.row(i)[set.label(i)].max(NLL_FLOOR).ln();
    }
    total / set.n() as f64
}

/// Mean squared error against one-hot labels (multi-class Brier score).
pub fn brier(set: &ProbSet) -> f64 {
    let mut total = 0.0;
    for i in 0..set.n() {
        let y = set.label(i);
        for (j, &p) in set.row(i).iter().enumerate() {
            let target = f64::from((j == y) as u8);
            total += (p - target) * (p - target);
        }
    }
    total / set.n() as f64
}

/// Top-1 accuracy; argmax ties resolve to the lowest class index.
pub fn accuracy(set: &ProbSet) -> f64 {
    let hits: usize = (0..set.n())
        .filter(|&i| set.confidence(i).1 == set.label(i))
        .count();
    hits as f64 / set.n() as f64
}

/// Compute the full metric bundle at the given equal-width bin count.
pub fn report(set: &ProbSet, bins: usize) -> Result<MetricReport> {
    let (ece_val, rows) = ece(set, bins)?;
    Ok(MetricReport {
        ece: ece_val,
        adaece: adaece(set, bins)?,
        classwise_ece: classwise_ece(set, bins)?,
        nll: nll(set),
        brier: brier(set),
        accuracy: accuracy(set),
        bins: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Binary-probability fixture used by the worked micro-cases:
    /// confidences 0.9, 0.9, 0.6, 0.6 with correctness 1, 0, 1, 1.
    fn micro() -> ProbSet {
        ProbSet::new(
            vec![
                0.9, 0.1, // label 0: correct, conf 0.9
                0.9, 0.1, // label 1: wrong, conf 0.9
                0.6, 0.4, // label 0: correct, conf 0.6
                0.6, 0.4, // label 0: correct, conf 0.6
            ],
            vec![0, 1, 0, 0],
            2,
        )
        .unwrap()
    }

    #[test]
    fn ece_micro_case_is_exact() {
        // Bins (0.8, 0.9] and (0.5, 0.6]: |0.5 - 0.9| and |1.0 - 0.6|,
        // each holding half the samples -> 0.5*0.4 + 0.5*0.4 = 0.4.
        let (e, rows) = ece(&micro(), 10).unwrap();
        assert!((e - 0.4).abs() < 1e-12);
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[8].count, 2); // bin 9 = (0.8, 0.9]
        assert_eq!(rows[5].count, 2); // bin 6 = (0.5, 0.6]
        assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), 4);
        assert!((rows[8].conf - 0.9).abs() < 1e-12);
        assert!((rows[8].acc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn adaece_micro_case_is_exact() {
        // Two equal-count bins after sorting: {0.6, 0.6} and {0.9, 0.9}
        // -> 0.5*|1.0-0.6| + 0.5*|0.5-0.9| = 0.4.
        let a = adaece(&micro(), 2).unwrap();
        assert!((a - 0.4).abs() < 1e-12);
    }

    #[test]
    fn classwise_micro_case_is_exact() {
        // Rows all (1, 0) with label 1: class 0 is confidently wrong
        // (|0-1| = 1), class 1 confidently right but with p = 0
        // (|1-0| = 1) -> mean 1.
        let set = ProbSet::new(vec![1.0, 0.0, 1.0, 0.0], vec![1, 1], 2).unwrap();
        let c = classwise_ece(&set, 10).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nll_and_brier_reference_points() {
        let uniform = ProbSet::new(vec![0.5, 0.5], vec![0], 2).unwrap();
        assert_relative_eq!(nll(&uniform), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_relative_eq!(brier(&uniform), 0.5, epsilon = 1e-15);

        // Confidently wrong one-hot: NLL hits the 1e-12 floor, Brier is 2.
        let wrong = ProbSet::new(vec![1.0, 0.0], vec![1], 2).unwrap();
        assert_relative_eq!(nll(&wrong), -(NLL_FLOOR.ln()), epsilon = 1e-9);
        assert_relative_eq!(nll(&wrong), 27.631021115928547, epsilon = 1e-9);
        assert_relative_eq!(brier(&wrong), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn accuracy_breaks_argmax_ties_low() {
        let set = ProbSet::new(vec![0.5, 0.5, 0.5, 0.5], vec![0, 1], 2).unwrap();
        assert_relative_eq!(accuracy(&set), 0.5);
    }

    #[test]
    fn single_bin_ece_is_global_gap() {
        let set = micro();
        let (e, rows) = ece(&set, 1).unwrap();
        let mean_conf: f64 = 0.75; // (0.9+0.9+0.6+0.6)/4
        let acc: f64 = 0.75;
        assert!((e - (acc - mean_conf).abs()).abs() < 1e-12);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].count, 4);
    }

    #[test]
    fn bin_edges_are_exact_in_f64() {
        // 0.9 * 10 rounds up past 9.0 in f64; the bin index must still
        // honor (0.8, 0.9] exactly.
        assert_eq!(hard_bin(0.9, 10), 9);
        assert_eq!(hard_bin(0.9 + 1e-12, 10), 10);
        assert_eq!(hard_bin(0.1, 10), 1);
        assert_eq!(hard_bin(0.0, 10), 1);
        assert_eq!(hard_bin(1.0, 10), 10);
        for b in 1..=15usize {
            let edge = b as f64 / 15.0;
            assert_eq!(hard_bin(edge, 15), b, "edge {edge} belongs to bin {b}");
        }
    }

    #[test]
    fn report_is_self_consistent() {
        let mut rng = crate::rng::Rng::new(33);
        let n = 500;
        let k = 6;
        let mut values = Vec::with_capacity(n * k);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            values.extend((0..k).map(|_| rng.normal() * 2.0));
            labels.push(rng.below(k as u64) as usize);
        }
        let logits = LogitSet::new(values, labels, k).unwrap();
        let probs = softmax_rows(&logits);
        let rep = report(&probs, 15).unwrap();
        assert_eq!(rep.bins.len(), 15);
        assert_eq!(rep.bins.iter().map(|r| r.count).sum::<usize>(), n);
        for m in [rep.ece, rep.adaece, rep.classwise_ece, rep.accuracy] {
            assert!((0.0..=1.0).contains(&m), "{m}");
        }
        assert!(rep.nll > 0.0);
        assert!((0.0..=2.0).contains(&rep.brier));
    }
}
