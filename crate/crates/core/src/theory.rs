//! Temperature bounds, the exact temperature solver, and synthetic
//! miscalibrated datasets.
//!
//! For a logit row with a unique maximum, write `g` for the gap to the
//! runner-up, `K` for the class count, and `p` for the target top-1
//! probability after rescaling by temperature `T`. From the softmax
//! identity `sum_{j != max} e^{(z_j - z_max)/T} = 1/p - 1 =: S`, the
//! competitor sum is squeezed between one term and `K - 1` copies of
//! the largest term:
//!
//! ```text
//! e^{-g/T} < S <= (K - 1) e^{-g/T}
//! ```
//!
//! For `p > 1/2` (so `S < 1` and the logs are negative) this pins the
//! solving temperature into
//!
//! ```text
//! -g / ln(S / (K-1))  <=  T  <  -g / ln(S)
//! ```
//!
//! with equality on the left exactly when all `K - 1` non-maximum
//! logits tie (the uniform-gap case), which yields the closed form
//! `T = -g / ln(S / (K-1))`. As the non-maximum logits spread apart
//! the solution moves toward (never reaching) the upper bound, which
//! is also the `K = 2` limit where both bounds coincide.
//!
//! [`solve_temperature`] inverts confidence numerically by bisection —
//! the confidence is strictly decreasing in `T` for a tie-free maximum
//! — and [`check_bounds`] packages solver plus bounds for empirical
//! verification. [`synthesize`] builds labeled logit sets that are
//! calibrated by construction, then distorts them with a known
//! gap-dependent temperature profile so recovery can be tested.

use crate::dataio::LogitSet;
use crate::error::{Error, Result};
use crate::num;
use crate::rng::Rng;
use crate::tempnet::logit_gap;

/// Bisection bracket start, doubled/halved outward as needed.
const BRACKET: (f64, f64) = (1e-6, 1e6);
/// Bisection stops when the achieved confidence is this close.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
/// Iteration cap for bracketing and for bisection.
const MAX_ITERS: usize = 200;

/// The exact temperature driving a row's top-1 probability to
/// `target_p`, found by bisection on the strictly decreasing map
/// `T -> max softmax(z/T)`.
///
/// Requires a tie-free maximum and a feasible target: confidence can
/// only range over `(1/K, 1)`, approaching `1/K` as `T -> inf` and `1`
/// as `T -> 0`.
pub fn solve_temperature(row: &[f64], target_p: f64) -> Result<f64> {
    let k = row.len();
    if k < 2 {
        return Err(Error::Config("need at least 2 logits".into()));
    }
    let (_, hi, second) = num::top_two(row);
    if hi == second {
        return Err(Error::Config(
            "tied maximum logits: confidence is temperature-independent".into(),
        ));
    }
    let floor = 1.0 / k as f64;
    if !(target_p > floor && target_p < 1.0) {
        return Err(Error::Numeric(format!(
            "target confidence {target_p} is infeasible: reachable range is (1/{k}, 1)"
        )));
    }

    let conf = |t: f64| num::scaled_confidence(row, t).0;

    // Bracket: f(lo) > target > f(hi). The confidence spans the whole
    // feasible range, so expansion always terminates for sane targets.
    let (mut lo, mut hi_t) = BRACKET;
    let mut iters = 0;
    while conf(lo) <= target_p {
        lo /= 2.0;
        iters += 1;
        if iters > MAX_ITERS {
            return Err(Error::Numeric(format!(
                "cannot bracket target confidence {target_p} from below"
            )));
        }
    }
    iters = 0;
    while conf(hi_t) >= target_p {
        hi_t *= 2.0;
        iters += 1;
        if iters > MAX_ITERS {
            return Err(Error::Numeric(format!(
                "cannot bracket target confidence {target_p} from above"
            )));
        }
    }

    for _ in 0..MAX_ITERS {
        let mid = 0.5 * (lo + hi_t);
        let c = conf(mid);
        if (c - target_p).abs() < SOLVE_TOLERANCE {
            return Ok(mid);
        }
        if c > target_p {
            lo = mid;
        } else {
            hi_t = mid;
        }
    }
    Err(Error::Numeric(format!(
        "bisection did not reach |confidence - {target_p}| < {SOLVE_TOLERANCE} in {MAX_ITERS} iterations"
    )))
}

/// Solver output together with the analytic sandwich around it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheckRecord {
    /// Logit gap of the row.
    pub gap: f64,
    /// Target top-1 probability.
    pub target_p: f64,
    /// Class count.
    pub k: usize,
    /// Solved temperature.
    pub temperature: f64,
    /// `-g / ln(S / (K-1))`, attained in the uniform-gap case.
    pub lower: f64,
    /// `-g / ln(S)`, the two-effective-class limit.
    pub upper: f64,
    /// Containment verdict (with a small relative tolerance so the
    /// `K = 2` case, where both bounds coincide with `T`, passes).
    pub within_bounds: bool,
}

/// Solve a row's temperature and compare it against the analytic
/// bounds. Only defined for `target_p > 1/2`, where the bound
/// logarithms are negative.
pub fn check_bounds(row: &[f64], target_p: f64) -> Result<BoundCheckRecord> {
    if target_p <= 0.5 {
        return Err(Error::Config(format!(
            "bounds require a target confidence above 1/2, got {target_p}"
        )));
    }
    let temperature = solve_temperature(row, target_p)?;
    let k = row.len();
    let gap = logit_gap(row);
    let s = 1.0 / target_p - 1.0; // in (0, 1) for p > 1/2
    let lower = -gap / (s / (k as f64 - 1.0)).ln();
    let upper = -gap / s.ln();
    let tol = 1e-7 * temperature.abs().max(1.0);
    let within_bounds = temperature >= lower - tol && temperature <= upper + tol;
    Ok(BoundCheckRecord {
        gap,
        target_p,
        k,
        temperature,
        lower,
        upper,
        within_bounds,
    })
}

/// Closed-form temperature for the uniform-gap configuration: one
/// leading logit, all `K - 1` others exactly `delta` below it.
pub fn uniform_gap_temperature(delta: f64, k: usize, target_p: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Config(format!("gap must be positive, got {delta}")));
    }
    let floor = 1.0 / k as f64;
    if !(target_p > floor && target_p < 1.0) {
        return Err(Error::Numeric(format!(
            "target confidence {target_p} is infeasible: reachable range is (1/{k}, 1)"
        )));
    }
    let s = 1.0 / target_p - 1.0;
    Ok(-delta / (s / (k as f64 - 1.0)).ln())
}

/// Gap-dependent temperature profiles used to distort clean logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distortion {
    /// `T(g) = offset + slope * g`, floored at 0.05 to stay positive.
    Affine { offset: f64, slope: f64 },
    /// Logistic ramp from `lo` to `hi` centred at `mid` with scale
    /// `steep`: `T(g) = lo + (hi - lo) / (1 + e^{-(g - mid)/steep})`.
    /// A negative `steep` mirrors the ramp, so small gaps sit on the
    /// `hi` plateau and large gaps on `lo`.
    Logistic {
        lo: f64,
        hi: f64,
        mid: f64,
        steep: f64,
    },
}

/// Smallest temperature the affine profile will emit.
pub const DISTORTION_FLOOR: f64 = 0.05;

impl Distortion {
    fn validate(&self) -> Result<()> {
        match *self {
            Distortion::Affine { offset, slope } => {
                if !(offset.is_finite() && slope.is_finite()) {
                    return Err(Error::Config("affine distortion must be finite".into()));
                }
            }
            Distortion::Logistic { lo, hi, mid, steep } => {
                if !(lo.is_finite() && hi.is_finite() && mid.is_finite() && steep.is_finite()) {
                    return Err(Error::Config("logistic distortion must be finite".into()));
                }
                if lo <= 0.0 || hi <= 0.0 {
                    return Err(Error::Config(format!(
                        "logistic distortion temperatures must be positive, got lo={lo}, hi={hi}"
                    )));
                }
                if steep == 0.0 {
                    return Err(Error::Config(format!(
                        "logistic steepness must be nonzero, got {steep}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The distortion temperature at gap `g`; always positive.
    pub fn temperature(&self, g: f64) -> f64 {
        match *self {
            Distortion::Affine { offset, slope } => (offset + slope * g).max(DISTORTION_FLOOR),
            Distortion::Logistic { lo, hi, mid, steep } => {
                lo + (hi - lo) * num::sigmoid((g - mid) / steep)
            }
        }
    }
}

/// Synthetic dataset request.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// Standard deviation of the clean iid Gaussian logits.
    pub scale: f64,
    pub distortion: Distortion,
}

/// Generate `(clean, distorted)` logit sets.
///
/// Clean rows are iid `N(0, scale^2)` logits with the label drawn from
/// `softmax(row)` — calibrated by construction, since the label
/// distribution is exactly the model's own predictive distribution.
/// Each distorted row is the clean row times `T_dist(g)`, `g` the
/// clean row's logit gap: a model whose logits are `T` times too hot
/// is exactly recalibrated by temperature `T`, so the distortion
/// profile is also the recovery target. Labels are shared (scaling
/// never changes the argmax, so accuracy is shared too).
///
/// Draw order per row (one shared stream): `k` normal deviates, then
/// one uniform for the label. This layout is part of the format: it
/// is what makes a given `(seed, n, k, scale)` reproducible.
pub fn synthesize(cfg: &SynthConfig) -> Result<(LogitSet, LogitSet)> {
    if cfg.n == 0 {
        return Err(Error::Config("need at least 1 row".into()));
    }
    if cfg.k < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    if !(cfg.scale.is_finite() && cfg.scale > 0.0) {
        return Err(Error::Config(format!(
            "logit scale must be positive, got {}",
            cfg.scale
        )));
    }
    cfg.distortion.validate()?;

    let mut rng = Rng::new(cfg.seed);
    let mut clean = Vec::with_capacity(cfg.n * cfg.k);
    let mut distorted = Vec::with_capacity(cfg.n * cfg.k);
    let mut labels = Vec::with_capacity(cfg.n);
    let mut probs = vec![0.0; cfg.k];
    for _ in 0..cfg.n {
        let start = clean.len();
        for _ in 0..cfg.k {
            clean.push(rng.normal() * cfg.scale);
        }
        let row = &clean[start..start + cfg.k];
        num::softmax_into(row, 1.0, &mut probs);
        labels.push(rng.categorical(&probs));

        let t = cfg.distortion.temperature(logit_gap(row));
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Numeric(format!(
                "distortion produced a non-positive temperature {t}"
            )));
        }
        distorted.extend(row.iter().map(|z| z * t));
    }

    Ok((
        LogitSet::new(clean, labels.clone(), cfg.k)?,
        LogitSet::new(distorted, labels, cfg.k)?,
    ))
}

/// CSV header for bound-check tables.
pub const BOUNDS_CSV_HEADER: &str = "g,p,K,T,lower,upper,ok";

impl BoundCheckRecord {
    /// One CSV row matching [`BOUNDS_CSV_HEADER`] (full precision).
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.gap,
            self.target_p,
            self.k,
            self.temperature,
            self.lower,
            self.upper,
            self.within_bounds
        )
    }
}
