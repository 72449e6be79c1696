//! Calibrator models: training, application, and persistence.
//!
//! Two post-hoc calibrators share one model container:
//!
//! * **ts** — classic temperature scaling: a single global `T`,
//!   found by derivative-free search (log grid + golden section).
//! * **smart** — per-sample temperatures from a [`TemperatureNet`]
//!   driven by a difficulty indicator (logit gap by default), trained
//!   by full-batch gradient descent on a configurable loss.
//!
//! Both only ever rescale logits, so predicted classes — and therefore
//! accuracy — are untouched by construction.
//!
//! Models serialize to a small JSON document (`format_version` 1) that
//! round-trips bit-exactly: floats are written in shortest-round-trip
//! decimal form.

mod loss;
mod train;

pub use loss::loss_value_and_temp_grad;
pub use train::{train_smart, train_ts, TS_GRID_POINTS, TS_SEARCH_RANGE, TS_TOLERANCE};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::LogitSet;
use crate::error::{Error, Result};
use crate::metrics::ProbSet;
use crate::num;
use crate::softbin::SoftBinConfig;
use crate::tempnet::{Indicator, TemperatureNet};

/// Name stamped into model files by this library version.
pub const CREATED_BY: &str = concat!("smartcal ", env!("CARGO_PKG_VERSION"));
/// Model file schema version this library reads and writes.
pub const FORMAT_VERSION: u32 = 1;

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Soft-binned calibration error (the default).
    SoftEce,
    /// Cross-entropy of the rescaled probabilities.
    Ce,
    /// Squared error between confidence and correctness.
    Mse,
    /// Multi-class Brier score of the rescaled probabilities.
    Brier,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::SoftEce,
        LossKind::Ce,
        LossKind::Mse,
        LossKind::Brier,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::SoftEce => "softece",
            LossKind::Ce => "ce",
            LossKind::Mse => "mse",
            LossKind::Brier => "brier",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown loss {s:?}; expected one of softece, ce, mse, brier"
                ))
            })
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameter update rule for the network trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::Config(format!(
                "unknown optimizer {s:?}; expected adam or sgd"
            ))),
        }
    }
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: u32,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub softbin: SoftBinConfig,
    /// Difficulty indicator feeding the network (smart only).
    pub indicator: Indicator,
    /// Hidden width of the network (smart only).
    pub hidden: usize,
}

impl Default for TrainConfig {
    /// Soft-calibration loss, 300 full-batch Adam epochs at 1e-2.
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::SoftEce,
            epochs: 300,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            softbin: SoftBinConfig::default(),
            indicator: Indicator::Gap,
            hidden: crate::tempnet::DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epoch count must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        Ok(())
    }
}

/// One `(epoch, loss)` row per objective evaluation during training.
///
/// For the network trainer, entry `e` is the full-batch loss after `e`
/// optimizer steps (so the first entry is the untrained loss). For the
/// grid search, entries record each probed temperature's loss in probe
/// order.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub entries: Vec<(u32, f64)>,
}

impl TrainLog {
    pub fn push(&mut self, epoch: u32, loss: f64) {
        self.entries.push((epoch, loss));
    }

    /// Render as a two-column CSV with header `epoch,loss`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (epoch, loss) in &self.entries {
            out.push_str(&format!("{epoch},{loss}\n"));
        }
        out
    }
}

/// Provenance recorded alongside a model's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub loss: String,
    pub epochs: u32,
    pub bins: usize,
    pub alpha: f64,
    pub q: f64,
    pub created_by: String,
}

impl ModelMeta {
    fn from_config(cfg: &TrainConfig) -> Self {
        ModelMeta {
            seed: cfg.seed,
            loss: cfg.loss.as_str().to_string(),
            epochs: cfg.epochs,
            bins: cfg.softbin.bins(),
            alpha: cfg.softbin.alpha(),
            q: cfg.softbin.q(),
            created_by: CREATED_BY.to_string(),
        }
    }
}

/// The calibrator parameters proper.
#[derive(Debug, Clone, PartialEq)]
pub enum CalibratorKind {
    Smart {
        net: TemperatureNet,
        indicator: Indicator,
    },
    Ts {
        temperature: f64,
    },
}

/// A trained calibrator plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorModel {
    pub kind: CalibratorKind,
    pub meta: ModelMeta,
}

impl CalibratorModel {
    /// Method tag as stored in model files: `smart` or `ts`.
    pub fn method(&self) -> &'static str {
        match self.kind {
            CalibratorKind::Smart { .. } => "smart",
            CalibratorKind::Ts { .. } => "ts",
        }
    }
}

/// Per-row temperatures this model assigns to a dataset.
pub fn temperatures(model: &CalibratorModel, set: &LogitSet) -> Vec<f64> {
    match &model.kind {
        CalibratorKind::Ts { temperature } => vec![*temperature; set.n()],
        CalibratorKind::Smart { net, indicator } => set
            .rows()
            .map(|(row, _)| net.temperature(indicator.value(row)))
            .collect(),
    }
}

/// Rescale a logit set through the model: `softmax(z_i / T_i)` row by
/// row. Positive temperatures never reorder logits, so predictions are
/// identical to the uncalibrated argmax.
pub fn apply(model: &CalibratorModel, set: &LogitSet) -> ProbSet {
    let temps = temperatures(model, set);
    let k = set.k();
    let mut probs = vec![0.0; set.n() * k];
    for (i, (row, _)) in set.rows().enumerate() {
        num::softmax_into(row, temps[i], &mut probs[i * k..(i + 1) * k]);
    }
    ProbSet::new(probs, set.labels().to_vec(), k)
        .expect("rescaled softmax rows are valid probabilities")
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TsSection {
    #[serde(rename = "T")]
    t: f64,
}

#[derive(Serialize, Deserialize)]
struct SmartSection {
    d: usize,
    #[serde(rename = "W1")]
    w1: Vec<f64>,
    b1: Vec<f64>,
    #[serde(rename = "W2")]
    w2: Vec<f64>,
    b2: f64,
    eps: f64,
    mu_g: f64,
    sigma_g: f64,
    indicator: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ts: Option<TsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    smart: Option<SmartSection>,
    meta: ModelMeta,
}

/// Serialize a model to its JSON document.
pub fn model_to_json(model: &CalibratorModel) -> String {
    let file = match &model.kind {
        CalibratorKind::Ts { temperature } => ModelFile {
            format_version: FORMAT_VERSION,
            method: "ts".into(),
            ts: Some(TsSection { t: *temperature }),
            smart: None,
            meta: model.meta.clone(),
        },
        CalibratorKind::Smart { net, indicator } => {
            let (w1, b1, w2, b2) = net.parts();
            let (mu_g, sigma_g) = net.gap_stats();
            ModelFile {
                format_version: FORMAT_VERSION,
                method: "smart".into(),
                ts: None,
                smart: Some(SmartSection {
                    d: net.hidden(),
                    w1: w1.to_vec(),
                    b1: b1.to_vec(),
                    w2: w2.to_vec(),
                    b2,
                    eps: net.eps(),
                    mu_g,
                    sigma_g,
                    indicator: indicator.as_str().to_string(),
                }),
                meta: model.meta.clone(),
            }
        }
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

/// Parse a model from its JSON document, validating the schema.
pub fn model_from_json(text: &str) -> Result<CalibratorModel> {
    let file: ModelFile = serde_json::from_str(text)
        .map_err(|e| Error::Schema(format!("model file does not parse: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported model format version {}",
            file.format_version
        )));
    }
    let kind = match file.method.as_str() {
        "ts" => {
            let section = file
                .ts
                .ok_or_else(|| Error::Schema("method \"ts\" without a ts section".into()))?;
            if !(section.t.is_finite() && section.t > 0.0) {
                return Err(Error::Schema(format!(
                    "temperature must be positive and finite, got {}",
                    section.t
                )));
            }
            CalibratorKind::Ts {
                temperature: section.t,
            }
        }
        "smart" => {
            let s = file
                .smart
                .ok_or_else(|| Error::Schema("method \"smart\" without a smart section".into()))?;
            if s.w1.len() != s.d {
                return Err(Error::Schema(format!(
                    "declared width {} does not match W1 length {}",
                    s.d,
                    s.w1.len()
                )));
            }
            let net = TemperatureNet::from_parts(s.w1, s.b1, s.w2, s.b2, s.eps, s.mu_g, s.sigma_g)?;
            let indicator: Indicator = s
                .indicator
                .parse()
                .map_err(|e: Error| Error::Schema(e.to_string()))?;
            CalibratorKind::Smart { net, indicator }
        }
        other => {
            return Err(Error::Schema(format!(
                "unknown method {other:?}; expected smart or ts"
            )))
        }
    };
    Ok(CalibratorModel {
        kind,
        meta: file.meta,
    })
}

/// Write a model file.
pub fn save_model(model: &CalibratorModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

/// Read a model file.
pub fn load_model(path: &Path) -> Result<CalibratorModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
