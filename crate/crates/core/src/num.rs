//! Low-level numeric kernels shared across modules.
//!
//! Everything here is written for stability first: softmax subtracts
//! the row maximum, softplus never exponentiates a large positive
//! argument, and the temperature-scaled confidence is computed as
//! `1 / sum_j exp((z_j - z_max)/T)` so the dominant term contributes
//! exactly 1 to the denominator.

/// Numerically stable softplus: `ln(1 + e^x) = max(x, 0) + ln(1 + e^{-|x|})`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, stable on both tails.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Index of the row maximum; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    debug_assert!(!row.is_empty());
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// The two largest entries of `row`: `(argmax, z_max, z_second)`.
/// Ties for the maximum resolve to the lowest index, in which case
/// `z_max == z_second`.
pub fn top_two(row: &[f64]) -> (usize, f64, f64) {
    debug_assert!(row.len() >= 2);
    let (mut arg, mut hi) = (0usize, row[0]);
    let mut second = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > hi {
            second = hi;
            hi = v;
            arg = i;
        } else if v > second {
            second = v;
        }
    }
    (arg, hi, second)
}

/// Row softmax at temperature `t`, written into `out`.
pub fn softmax_into(row: &[f64], t: f64, out: &mut [f64]) {
    debug_assert_eq!(row.len(), out.len());
    debug_assert!(t > 0.0);
    let hi = row[argmax(row)];
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(row.iter()) {
        let e = ((z - hi) / t).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Maximum softmax probability of `row` at temperature `t`, plus the
/// arg-max index. Scaling by a positive temperature never reorders
/// logits, so the index is temperature-independent.
pub fn scaled_confidence(row: &[f64], t: f64) -> (f64, usize) {
    debug_assert!(t > 0.0);
    let arg = argmax(row);
    let hi = row[arg];
    let mut denom = 0.0;
    for &z in row {
        denom += ((z - hi) / t).exp();
    }
    (1.0 / denom, arg)
}

/// Derivative of the maximum softmax probability with respect to the
/// temperature, at raw logits `row` and temperature `t`:
///
/// ```text
/// d p_max / d T = p_max * (z_bar - z_max) / T^2,   z_bar = sum_k p_k z_k
/// ```
///
/// Always non-negative: cooling a distribution concentrates it.
pub fn confidence_temp_grad(row: &[f64], t: f64) -> f64 {
    debug_assert!(t > 0.0);
    let hi = row[argmax(row)];
    let mut denom = 0.0;
    let mut weighted = 0.0;
    for &z in row {
        let e = ((z - hi) / t).exp();
        denom += e;
        weighted += e * z;
    }
    let p_max = 1.0 / denom;
    let z_bar = weighted / denom;
    p_max * (z_bar - hi) / (t * t)
}
