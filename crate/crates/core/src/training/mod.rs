//! Loss computation (regular and irregular variants), the optimization
//! loop and checkpointing for the Koopman autoencoder.

mod checkpoint;
mod graph;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use graph::{
    build_orth_loss, build_window_loss, evolution_param, weighted_total, GraphModel, TermNodes,
    WindowBatch,
};
pub use trainer::{train, EpochRecord, ModelConfig, TrainHistory};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::DiffError;
use crate::dynamics::{DynError, TimeSeries};
use crate::koopman::{KoopmanError, KoopmanModel};
use crate::mat::Mat;
use crate::matfun::{orthogonality_defect, MatFunError, SquareMatrix};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("observation times must be strictly increasing from zero")]
    UnsortedTimes,
    #[error("training diverged (non-finite loss)")]
    Diverged,
    #[error("dataset is empty or shorter than the window")]
    EmptyDataset,
    #[error("checkpoint format version {found}, expected {expected}")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("I/O: {0}")]
    Io(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Koopman(#[from] KoopmanError),
    #[error(transparent)]
    MatFun(#[from] MatFunError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Weights of the four loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_pred: f64,
    pub w_ae: f64,
    pub w_lin: f64,
    pub w_orth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        // Orthogonality is a soft regularizer; it gets a small default.
        LossWeights {
            w_pred: 1.0,
            w_ae: 1.0,
            w_lin: 1.0,
            w_orth: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.w_pred, self.w_ae, self.w_lin, self.w_orth];
        if ws.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(TrainError::Shape("loss weights must be nonnegative".into()));
        }
        if ws.iter().all(|&w| w == 0.0) {
            return Err(TrainError::Shape("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Trainable discrete matrix K; missing values handled by masking.
    Discrete,
    /// Trainable generator L with K^t = exp(t L); handles arbitrary
    /// sampling times.
    Continuous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub lr: f64,
    /// Multiplier applied when the validation loss plateaus.
    pub lr_decay: f64,
    /// Plateau patience in epochs.
    pub lr_patience: usize,
    pub epochs: usize,
    /// Window instances per optimizer step.
    pub batch_size: usize,
    /// Samples per training window.
    pub window: usize,
    pub seed: u64,
    pub formulation: Formulation,
    /// Fraction of window instances held out for validation.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            weights: LossWeights::default(),
            lr: 1e-3,
            lr_decay: 0.3,
            lr_patience: 10,
            epochs: 100,
            batch_size: 32,
            window: 100,
            seed: 0,
            formulation: Formulation::Discrete,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.window < 2 {
            return Err(TrainError::Shape("window length must be at least 2".into()));
        }
        if !(self.lr > 0.0) {
            return Err(TrainError::Shape("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Shape("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(TrainError::Shape("val fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Converts one possibly-masked series into a single-item window batch.
///
/// Times are interpreted on the model's native sampling grid; for the
/// discrete formulation they must sit on integer steps.
pub fn series_to_window(
    s: &TimeSeries,
    native_frequency: f64,
    formulation: Formulation,
) -> Result<WindowBatch> {
    if !s.mask()[0] {
        return Err(TrainError::Shape(
            "the first sample of a training series must be observed".into(),
        ));
    }
    let t0 = s.times()[0];
    let mut indices = Vec::new();
    let mut times = Vec::new();
    let mut frames = Vec::new();
    for i in 0..s.len() {
        if !s.mask()[i] {
            continue;
        }
        let steps = (s.times()[i] - t0) * native_frequency;
        let idx = steps.round();
        match formulation {
            Formulation::Discrete => {
                if (steps - idx).abs() > 1e-6 {
                    return Err(TrainError::UnsortedTimes);
                }
                indices.push(idx as usize);
            }
            Formulation::Continuous => {
                // Index is only used for term bookkeeping; order by
                // position.
                indices.push(i);
            }
        }
        times.push(steps);
        frames.push(Mat::row_vector(s.row(i)));
    }
    WindowBatch::new(indices, times, frames)
}

fn model_graph_ids(
    m: &KoopmanModel,
    tape: &mut crate::diffcore::Tape,
) -> Result<std::collections::BTreeMap<String, crate::diffcore::NodeId>> {
    let mut store = crate::diffcore::ParameterStore::new();
    store.merge_prefixed("enc", &m.encoder);
    store.merge_prefixed("dec", &m.decoder);
    store.insert("k", m.k.as_mat().clone());
    Ok(store.bind(tape)?)
}

// Per-series evaluation keeps regular and masked variants on the same
// code path, so a full mask reduces bit-for-bit.
fn eval_term(
    m: &KoopmanModel,
    batch: &[TimeSeries],
    require_full: bool,
    pick: impl Fn(&crate::diffcore::Tape, TermNodes) -> f64,
) -> Result<f64> {
    let mut total = 0.0;
    for s in batch {
        if require_full && !s.is_fully_observed() {
            return Err(TrainError::Shape(
                "regular losses need fully-observed series".into(),
            ));
        }
        let mut tape = crate::diffcore::Tape::new();
        let ids = model_graph_ids(m, &mut tape)?;
        let gm = GraphModel {
            encoder_spec: &m.encoder_spec,
            decoder_spec: &m.decoder_spec,
            formulation: Formulation::Discrete,
        };
        let wb = series_to_window(s, m.native_frequency, Formulation::Discrete)?;
        let terms = build_window_loss(&mut tape, &gm, &ids, &wb)?;
        total += pick(&tape, terms);
    }
    Ok(total)
}

/// Prediction loss over fully-observed series of a common length.
pub fn loss_pred(m: &KoopmanModel, batch: &[TimeSeries]) -> Result<f64> {
    eval_term(m, batch, true, |tape, t| tape.scalar(t.pred))
}

/// Auto-encoding loss.
pub fn loss_ae(m: &KoopmanModel, batch: &[TimeSeries]) -> Result<f64> {
    eval_term(m, batch, true, |tape, t| tape.scalar(t.ae))
}

/// Latent linearity loss.
pub fn loss_lin(m: &KoopmanModel, batch: &[TimeSeries]) -> Result<f64> {
    eval_term(m, batch, true, |tape, t| tape.scalar(t.lin))
}

/// Orthogonality loss, delegating to the matrix-function kernel.
pub fn loss_orth(k: &SquareMatrix) -> Result<f64> {
    Ok(orthogonality_defect(k)?)
}

/// Prediction loss over masked series: terms run over observed indices
/// only. With a full mask this equals `loss_pred` exactly.
pub fn loss_pred_irregular(m: &KoopmanModel, batch: &[TimeSeries]) -> Result<f64> {
    eval_term(m, batch, false, |tape, t| tape.scalar(t.pred))
}

/// Masked auto-encoding loss.
pub fn loss_ae_irregular(m: &KoopmanModel, batch: &[TimeSeries]) -> Result<f64> {
    eval_term(m, batch, false, |tape, t| tape.scalar(t.ae))
}

/// Masked linearity loss.
pub fn loss_lin_irregular(m: &KoopmanModel, batch: &[TimeSeries]) -> Result<f64> {
    eval_term(m, batch, false, |tape, t| tape.scalar(t.lin))
}

/// Continuous-formulation losses of a series sampled at arbitrary
/// times, using `K^t = exp(t L)` for the generator stored in `l`.
pub fn loss_terms_continuous(
    m: &KoopmanModel,
    l: &Mat,
    s: &TimeSeries,
) -> Result<(f64, f64, f64, f64)> {
    let mut tape = crate::diffcore::Tape::new();
    let mut store = crate::diffcore::ParameterStore::new();
    store.merge_prefixed("enc", &m.encoder);
    store.merge_prefixed("dec", &m.decoder);
    store.insert("l", l.clone());
    let ids = store.bind(&mut tape)?;
    let gm = GraphModel {
        encoder_spec: &m.encoder_spec,
        decoder_spec: &m.decoder_spec,
        formulation: Formulation::Continuous,
    };
    let wb = series_to_window(s, m.native_frequency, Formulation::Continuous)?;
    let terms = build_window_loss(&mut tape, &gm, &ids, &wb)?;
    Ok((
        tape.scalar(terms.pred),
        tape.scalar(terms.ae),
        tape.scalar(terms.lin),
        tape.scalar(terms.orth),
    ))
}
