//! Per-sample temperature regression network.
//!
//! A single scalar indicator of sample difficulty (by default the logit
//! gap, the margin between the two largest logits) is normalized and
//! pushed through a one-hidden-layer MLP whose output is squashed to a
//! strictly positive temperature:
//!
//! ```text
//! g_hat = (g - mu_g) / sigma_g
//! T(g)  = softplus(W2 . relu(W1 g_hat + b1) + b2) + eps
//! ```
//!
//! With hidden width `d` the trainable parameters are `W1, b1, W2`
//! (each `d`-long) and the scalar `b2`: `3d + 1` in total — 49 at the
//! default `d = 16`. Initialization draws the weight vectors uniformly
//! from `[-1/sqrt(d), 1/sqrt(d)]`, zeroes `b1`, and sets `b2` to
//! `softplus^-1(1) = ln(e - 1)` so an untrained network starts at
//! `T ~= 1` (the identity calibrator) regardless of its input.

use crate::error::{Error, Result};
use crate::num;
use crate::rng::Rng;

/// Default hidden width.
pub const DEFAULT_HIDDEN: usize = 16;
/// Additive floor keeping output temperatures strictly positive.
pub const TEMP_EPS: f64 = 1e-6;
/// `softplus^-1(1) = ln(e - 1)`: the initial output bias.
pub const INIT_OUT_BIAS: f64 = 0.5413248546129181;

/// Scalar difficulty indicators that can drive the network.
///
/// All of them expose the same interface — one finite number per logit
/// row — so the regressor is indifferent to the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Indicator {
    /// Margin between the two largest logits (the default).
    Gap,
    /// Shannon entropy of the softmax distribution (in nats).
    Entropy,
    /// The largest raw logit.
    MaxLogit,
    /// The largest softmax probability.
    Confidence,
    /// Largest logit minus the row mean.
    MeanDev,
}

impl Indicator {
    pub const ALL: [Indicator; 5] = [
        Indicator::Gap,
        Indicator::Entropy,
        Indicator::MaxLogit,
        Indicator::Confidence,
        Indicator::MeanDev,
    ];

    /// Stable string tag (used in model files and on the CLI).
    pub fn as_str(&self) -> &'static str {
        match self {
            Indicator::Gap => "gap",
            Indicator::Entropy => "entropy",
            Indicator::MaxLogit => "maxlogit",
            Indicator::Confidence => "confidence",
            Indicator::MeanDev => "meandev",
        }
    }

    /// Evaluate the indicator on one logit row (`K >= 2`).
    pub fn value(&self, row: &[f64]) -> f64 {
        match self {
            Indicator::Gap => logit_gap(row),
            Indicator::MaxLogit => row[num::argmax(row)],
            Indicator::MeanDev => {
                let hi = row[num::argmax(row)];
                hi - row.iter().sum::<f64>() / row.len() as f64
            }
            Indicator::Confidence => num::scaled_confidence(row, 1.0).0,
            Indicator::Entropy => {
                let mut probs = vec![0.0; row.len()];
                num::softmax_into(row, 1.0, &mut probs);
                // p ln p -> 0 as p -> 0; skip exact zeros from underflow.
                -probs
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| p * p.ln())
                    .sum::<f64>()
            }
        }
    }
}

impl std::str::FromStr for Indicator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Indicator::ALL
            .iter()
            .copied()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown indicator {s:?}; expected one of gap, entropy, maxlogit, confidence, meandev"
                ))
            })
    }
}

impl std::fmt::Display for Indicator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Logit gap: `z_max - z_second` (non-negative; zero iff the top two
/// logits tie).
pub fn logit_gap(row: &[f64]) -> f64 {
    debug_assert!(row.len() >= 2, "gap needs at least two logits");
    let (_, hi, second) = num::top_two(row);
    hi - second
}

/// Population mean and standard deviation of an indicator sample.
///
/// A degenerate spread (`sigma < 1e-12`) falls back to 1 so the
/// normalization stays defined; the fallback is logged.
pub fn fit_gap_stats(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "cannot fit statistics of nothing");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if sigma < 1e-12 {
        log::warn!("indicator spread {sigma:.3e} is degenerate; normalizing by 1");
        (mean, 1.0)
    } else {
        (mean, sigma)
    }
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Normalized input.
    pub ghat: f64,
    /// Hidden pre-activations `u = W1 ghat + b1`.
    pub pre: Vec<f64>,
    /// Hidden activations `h = relu(u)`.
    pub act: Vec<f64>,
    /// Output pre-activation `a = W2 . h + b2`.
    pub out_pre: f64,
}

/// Parameter gradients accumulated by [`TemperatureNet::backward`].
#[derive(Debug, Clone)]
pub struct GradientBuffer {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl GradientBuffer {
    pub fn zeros(hidden: usize) -> Self {
        GradientBuffer {
            w1: vec![0.0; hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2 = 0.0;
    }

    /// Flatten in the canonical parameter order `W1, b1, W2, b2`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.w1.len() + 1);
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.push(self.b2);
        out
    }
}

/// The temperature regressor itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureNet {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
    eps: f64,
    mu_g: f64,
    sigma_g: f64,
}

impl TemperatureNet {
    /// Fresh network with seeded initialization (see module docs).
    pub fn init(hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut rng = Rng::new(seed);
        let w1 = (0..hidden).map(|_| rng.uniform(-bound, bound)).collect();
        let w2 = (0..hidden).map(|_| rng.uniform(-bound, bound)).collect();
        Ok(TemperatureNet {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: INIT_OUT_BIAS,
            eps: TEMP_EPS,
            mu_g: 0.0,
            sigma_g: 1.0,
        })
    }

    /// Rebuild a network from stored parts, validating shapes and
    /// ranges (used when loading model files).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
        eps: f64,
        mu_g: f64,
        sigma_g: f64,
    ) -> Result<Self> {
        let d = w1.len();
        if d == 0 {
            return Err(Error::Schema("hidden width must be at least 1".into()));
        }
        if b1.len() != d || w2.len() != d {
            return Err(Error::Schema(format!(
                "parameter shape mismatch: W1 has {d}, b1 has {}, W2 has {}",
                b1.len(),
                w2.len()
            )));
        }
        let all_finite = w1.iter().chain(&b1).chain(&w2).all(|v| v.is_finite())
            && b2.is_finite()
            && eps.is_finite()
            && mu_g.is_finite()
            && sigma_g.is_finite();
        if !all_finite {
            return Err(Error::Schema("non-finite network parameter".into()));
        }
        if eps < 0.0 {
            return Err(Error::Schema(format!("temperature floor {eps} < 0")));
        }
        if sigma_g <= 0.0 {
            return Err(Error::Schema(format!(
                "indicator scale must be positive, got {sigma_g}"
            )));
        }
        Ok(TemperatureNet {
            w1,
            b1,
            w2,
            b2,
            eps,
            mu_g,
            sigma_g,
        })
    }

    pub fn hidden(&self) -> usize {
        self.w1.len()
    }

    /// Trainable parameter count: `3d + 1`.
    pub fn param_count(&self) -> usize {
        3 * self.hidden() + 1
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn gap_stats(&self) -> (f64, f64) {
        (self.mu_g, self.sigma_g)
    }

    /// Install normalization statistics (from [`fit_gap_stats`]).
    pub fn set_gap_stats(&mut self, mu: f64, sigma: f64) -> Result<()> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!(
                "indicator scale must be positive, got {sigma}"
            )));
        }
        self.mu_g = mu;
        self.sigma_g = sigma;
        Ok(())
    }

    /// Raw parameter views in canonical order.
    pub fn parts(&self) -> (&[f64], &[f64], &[f64], f64) {
        (&self.w1, &self.b1, &self.w2, self.b2)
    }

    /// Flatten parameters in the canonical order `W1, b1, W2, b2`.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.push(self.b2);
        out
    }

    /// Overwrite parameters from a flat vector (inverse of
    /// [`Self::params_flat`]).
    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let d = self.hidden();
        assert_eq!(flat.len(), 3 * d + 1, "flat parameter length mismatch");
        self.w1.copy_from_slice(&flat[0..d]);
        self.b1.copy_from_slice(&flat[d..2 * d]);
        self.w2.copy_from_slice(&flat[2 * d..3 * d]);
        self.b2 = flat[3 * d];
    }

    /// Forward pass: indicator value in, temperature out, with the
    /// cache needed for backprop.
    pub fn forward(&self, g: f64) -> (f64, Cache) {
        let d = self.hidden();
        let ghat = (g - self.mu_g) / self.sigma_g;
        let mut pre = vec![0.0; d];
        let mut act = vec![0.0; d];
        let mut out_pre = self.b2;
        for j in 0..d {
            let u = self.w1[j] * ghat + self.b1[j];
            pre[j] = u;
            let h = u.max(0.0);
            act[j] = h;
            out_pre += self.w2[j] * h;
        }
        let t = num::softplus(out_pre) + self.eps;
        (
            t,
            Cache {
                ghat,
                pre,
                act,
                out_pre,
            },
        )
    }

    /// Temperature only (no cache), for inference.
    pub fn temperature(&self, g: f64) -> f64 {
        self.forward(g).0
    }

    /// Accumulate parameter gradients for one sample given `dL/dT`.
    ///
    /// The relu subgradient at 0 is taken as 0, matching the objective
    /// conventions elsewhere in the crate.
    pub fn backward(&self, cache: &Cache, d_t: f64, grads: &mut GradientBuffer) {
        let d = self.hidden();
        assert_eq!(grads.w1.len(), d, "gradient buffer width mismatch");
        // dT/da = sigmoid(a) through the softplus head.
        let da = d_t * num::sigmoid(cache.out_pre);
        grads.b2 += da;
        for j in 0..d {
            grads.w2[j] += da * cache.act[j];
            if cache.pre[j] > 0.0 {
                let dh = da * self.w2[j];
                grads.w1[j] += dh * cache.ghat;
                grads.b1[j] += dh;
            }
        }
    }
}
