//! Differentiable soft-binned calibration error.
//!
//! Hard ECE assigns each sample to exactly one confidence bin, which
//! makes the objective piecewise-constant in the confidences and
//! useless for gradient training. Here each sample instead spreads a
//! unit of mass over all `B` bins with a softmax over negative squared
//! distances to the bin centers `c_b = (b - 0.5) / B`:
//!
//! ```text
//! w_ib = exp(-alpha (p_i - c_b)^2) / sum_b' exp(-alpha (p_i - c_b')^2)
//! ```
//!
//! With per-bin mass `m_b = sum_i w_ib`, soft accuracy
//! `A_b = sum_i w_ib corr_i / m_b` and soft confidence
//! `C_b = sum_i w_ib p_i / m_b`, the objective is
//!
//! ```text
//! SoftECE = ( sum_b (m_b / N) |A_b - C_b|^q )^(1/q)
//! ```
//!
//! The sharpness `alpha` interpolates between two regimes: as
//! `alpha -> 0` every bin sees the global statistics (each `A_b`
//! approaches overall accuracy), and as `alpha -> inf` the weights
//! collapse onto the nearest center, recovering hard ECE for samples
//! away from bin edges. Bins whose mass falls below `1e-12` are
//! excluded from the sum (they contribute 0) and flagged.

use crate::error::{Error, Result};
use crate::num;

/// Bins with less soft mass than this contribute nothing to the
/// objective; only reachable at extreme sharpness.
pub const MASS_FLOOR: f64 = 1e-12;

/// Soft-binning hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftBinConfig {
    bins: usize,
    alpha: f64,
    q: f64,
    centers: Vec<f64>,
}

impl SoftBinConfig {
    /// Validated construction: `bins >= 1`, `alpha > 0`, `q >= 1`.
    pub fn new(bins: usize, alpha: f64, q: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Config("bin count must be at least 1".into()));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!(
                "sharpness alpha must be positive and finite, got {alpha}"
            )));
        }
        if !(q.is_finite() && q >= 1.0) {
            return Err(Error::Config(format!("norm order q must be >= 1, got {q}")));
        }
        let centers = (1..=bins).map(|b| (b as f64 - 0.5) / bins as f64).collect();
        Ok(SoftBinConfig {
            bins,
            alpha,
            q,
            centers,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Bin centers, strictly increasing inside `(0, 1)`.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }
}

impl Default for SoftBinConfig {
    /// 15 bins, `alpha = 50`, `q = 1`.
    fn default() -> Self {
        SoftBinConfig::new(15, 50.0, 1.0).expect("default config is valid")
    }
}

/// Soft membership matrix: `N x B` row-major, each row a distribution
/// over bins.
pub fn membership(confidences: &[f64], cfg: &SoftBinConfig) -> Vec<f64> {
    let b = cfg.bins;
    let mut weights = vec![0.0; confidences.len() * b];
    let mut scores = vec![0.0; b];
    for (i, &p) in confidences.iter().enumerate() {
        for (s, &c) in scores.iter_mut().zip(cfg.centers.iter()) {
            let d = p - c;
            *s = -cfg.alpha * d * d;
        }
        num::softmax_into(&scores, 1.0, &mut weights[i * b..(i + 1) * b]);
    }
    weights
}

/// Aggregate soft-bin statistics for one set of predictions.
#[derive(Debug, Clone)]
pub struct SoftBinState {
    /// `N x B` membership weights, row-major.
    pub weights: Vec<f64>,
    /// Soft mass per bin, `m_b = sum_i w_ib`.
    pub bin_mass: Vec<f64>,
    /// Soft accuracy per bin (0 where the mass floor bites).
    pub soft_acc: Vec<f64>,
    /// Soft confidence per bin (0 where the mass floor bites).
    pub soft_conf: Vec<f64>,
    /// True for bins excluded by the mass floor.
    pub zero_mass: Vec<bool>,
    pub n: usize,
    pub bins: usize,
}

impl SoftBinState {
    pub fn compute(confidences: &[f64], correct: &[bool], cfg: &SoftBinConfig) -> Self {
        assert_eq!(confidences.len(), correct.len());
        let n = confidences.len();
        let b = cfg.bins;
        let weights = membership(confidences, cfg);
        let mut bin_mass = vec![0.0; b];
        let mut acc_sum = vec![0.0; b];
        let mut conf_sum = vec![0.0; b];
        for i in 0..n {
            let row = &weights[i * b..(i + 1) * b];
            let corr = f64::from(correct[i] as u8);
            for (j, &w) in row.iter().enumerate() {
                bin_mass[j] += w;
                acc_sum[j] += w * corr;
                conf_sum[j] += w * confidences[i];
            }
        }
        let mut soft_acc = vec![0.0; b];
        let mut soft_conf = vec![0.0; b];
        let mut zero_mass = vec![false; b];
        for j in 0..b {
            if bin_mass[j] < MASS_FLOOR {
                zero_mass[j] = true;
                log::warn!(
                    "soft bin {} has mass {:.3e} (< {MASS_FLOOR:.0e}); it contributes 0",
                    j + 1,
                    bin_mass[j]
                );
            } else {
                soft_acc[j] = acc_sum[j] / bin_mass[j];
                soft_conf[j] = conf_sum[j] / bin_mass[j];
            }
        }
        SoftBinState {
            weights,
            bin_mass,
            soft_acc,
            soft_conf,
            zero_mass,
            n,
            bins: b,
        }
    }
}

/// Soft accuracy per bin for a precomputed membership matrix.
pub fn soft_accuracy(weights: &[f64], correct: &[bool], bins: usize) -> Vec<f64> {
    let n = correct.len();
    assert_eq!(weights.len(), n * bins);
    let mut mass = vec![0.0; bins];
    let mut acc = vec![0.0; bins];
    for i in 0..n {
        let corr = f64::from(correct[i] as u8);
        for j in 0..bins {
            let w = weights[i * bins + j];
            mass[j] += w;
            acc[j] += w * corr;
        }
    }
    for j in 0..bins {
        acc[j] = if mass[j] < MASS_FLOOR {
            0.0
        } else {
            acc[j] / mass[j]
        };
    }
    acc
}

/// The scalar soft-binned calibration error.
pub fn soft_ece(confidences: &[f64], correct: &[bool], cfg: &SoftBinConfig) -> f64 {
    let state = SoftBinState::compute(confidences, correct, cfg);
    let n = state.n as f64;
    let mut total = 0.0;
    for j in 0..state.bins {
        if state.zero_mass[j] {
            continue;
        }
        let gap = (state.soft_acc[j] - state.soft_conf[j]).abs();
        let powed = if cfg.q == 1.0 {
            gap
        } else if cfg.q == 2.0 {
            gap * gap
        } else {
            gap.powf(cfg.q)
        };
        total += state.bin_mass[j] / n * powed;
    }
    if cfg.q == 1.0 {
        total
    } else {
        total.powf(1.0 / cfg.q)
    }
}

/// Sign with `sign(0) = 0`, the subgradient choice at the kink.
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of [`soft_ece`] with respect to each confidence, for
/// `q = 1` or `q = 2`. Correctness indicators are constants (the
/// predicted class never changes with confidence), so the only moving
/// parts are the memberships and the soft confidences.
///
/// At a kink (`A_b == C_b` under `q = 1`) or at an exact zero of the
/// objective (`q = 2`) the subgradient 0 is returned for the affected
/// terms.
pub fn soft_ece_grad(
    confidences: &[f64],
    correct: &[bool],
    cfg: &SoftBinConfig,
) -> Result<Vec<f64>> {
    if cfg.q != 1.0 && cfg.q != 2.0 {
        return Err(Error::Config(format!(
            "soft calibration gradient supports q = 1 or q = 2, got {}",
            cfg.q
        )));
    }
    let state = SoftBinState::compute(confidences, correct, cfg);
    let n = state.n;
    let b = state.bins;
    let nf = n as f64;

    // Per-bin contrast D_b = A_b - C_b on the included bins.
    let mut contrast = vec![0.0; b];
    for (j, c) in contrast.iter_mut().enumerate() {
        if !state.zero_mass[j] {
            *c = state.soft_acc[j] - state.soft_conf[j];
        }
    }

    // q = 2 needs the inner sum V = sum_b (m_b/N) D_b^2 for the final
    // chain factor d(sqrt V) = dV / (2 sqrt V).
    let value_q2: f64 = (0..b)
        .filter(|&j| !state.zero_mass[j])
        .map(|j| state.bin_mass[j] / nf * contrast[j] * contrast[j])
        .sum();

    let mut grad = vec![0.0; n];
    if cfg.q == 2.0 && value_q2 == 0.0 {
        return Ok(grad); // exactly calibrated: flat subgradient
    }

    let mut dscore = vec![0.0; b];
    for i in 0..n {
        let p = confidences[i];
        let corr = f64::from(correct[i] as u8);
        let w_row = &state.weights[i * b..(i + 1) * b];

        // d s_ib / d p_i = -2 alpha (p_i - c_b); membership derivative
        // is the softmax Jacobian applied to these score derivatives.
        let mut mean_dscore = 0.0;
        for j in 0..b {
            dscore[j] = -2.0 * cfg.alpha * (p - cfg.centers[j]);
            mean_dscore += w_row[j] * dscore[j];
        }

        let mut acc = 0.0;
        for j in 0..b {
            if state.zero_mass[j] {
                continue;
            }
            let dw = w_row[j] * (dscore[j] - mean_dscore);
            let d = contrast[j];
            if cfg.q == 1.0 {
                // d[(m_b/N)|D_b|] collapses to sign(D_b) (dw (corr - p) - w) / N.
                acc += sign0(d) * (dw * (corr - p) - w_row[j]);
            } else {
                // d[(m_b/N) D_b^2] = (dw (2 D (corr - p) - D^2) - 2 D w) / N.
                acc += dw * (2.0 * d * (corr - p) - d * d) - 2.0 * d * w_row[j];
            }
        }
        grad[i] = if cfg.q == 1.0 {
            acc / nf
        } else {
            acc / nf / (2.0 * value_q2.sqrt())
        };
    }
    Ok(grad)
}
