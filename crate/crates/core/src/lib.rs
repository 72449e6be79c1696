//! Post-hoc confidence calibration for classifiers, from logits.
//!
//! The crate turns a validation set of logits and labels into a
//! calibrator that rescales new logits toward honest confidences:
//!
//! * [`calibrators::train_ts`] fits classic temperature scaling — one
//!   global temperature found by derivative-free search.
//! * [`calibrators::train_smart`] fits a per-sample temperature: a
//!   tiny MLP ([`tempnet::TemperatureNet`]) reads a scalar difficulty
//!   indicator (the logit gap by default) and emits a temperature for
//!   each row, trained against a differentiable soft-binned
//!   calibration error ([`softbin`]).
//!
//! Around that core: [`metrics`] implements the standard calibration
//! metric suite (ECE, adaptive ECE, classwise ECE, NLL, Brier),
//! [`theory`] provides an exact per-row temperature solver with
//! analytic lower/upper bounds plus a synthetic miscalibrated-data
//! generator, [`dataio`] reads and writes logit files, and [`rng`]
//! keeps every random draw reproducible byte-for-byte.
//!
//! Rescaling by a positive temperature never reorders logits, so every
//! calibrator in this crate preserves predictions and accuracy exactly.

pub mod calibrators;
pub mod dataio;
mod error;
pub mod metrics;
pub mod num;
pub mod rng;
pub mod softbin;
pub mod tempnet;
pub mod theory;

pub use calibrators::{
    apply, load_model, model_from_json, model_to_json, save_model, temperatures, train_smart,
    train_ts, CalibratorKind, CalibratorModel, LossKind, ModelMeta, OptimizerKind, TrainConfig,
    TrainLog,
};
pub use dataio::{load_logits, save_logits, split, FileFormat, LogitSet, SplitSpec, ValSize};
pub use error::{Error, Result};
pub use metrics::{BinRow, MetricReport, ProbSet};
pub use softbin::SoftBinConfig;
pub use tempnet::{Indicator, TemperatureNet};
pub use theory::{
    check_bounds, solve_temperature, synthesize, uniform_gap_temperature, BoundCheckRecord,
    Distortion, SynthConfig,
};
