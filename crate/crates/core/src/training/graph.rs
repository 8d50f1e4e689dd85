//! Loss graphs for the Koopman autoencoder.
//!
//! A window batch stacks items that share one observation pattern, so a
//! single graph evaluates the prediction, auto-encoding, linearity and
//! orthogonality terms for the whole batch. Missing-value handling
//! falls out of the pattern: sums run only over observed indices, and a
//! full mask reduces exactly to the regular losses.

use std::collections::BTreeMap;

use crate::diffcore::{mlp_forward_graph, MlpSpec, NodeId, Tape};
use crate::mat::Mat;
use crate::matfun::EXP_SERIES_TERMS;

use super::{Formulation, Result, TrainError};

/// Observed frames of one window, stacked over batch items.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    /// Step indices of observed frames relative to the window start;
    /// strictly increasing, first entry 0.
    pub indices: Vec<usize>,
    /// Observed times in native-step units (equals `indices` on a
    /// regular grid, fractional for arbitrary sampling).
    pub times: Vec<f64>,
    /// One B×C matrix per observed index.
    pub frames: Vec<Mat>,
}

impl WindowBatch {
    pub fn new(indices: Vec<usize>, times: Vec<f64>, frames: Vec<Mat>) -> Result<Self> {
        if indices.is_empty() || indices.len() != frames.len() || times.len() != indices.len() {
            return Err(TrainError::Shape(
                "window batch needs matching, nonempty indices/times/frames".into(),
            ));
        }
        if indices[0] != 0 {
            return Err(TrainError::Shape(
                "window batch must start at an observed index 0".into(),
            ));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TrainError::UnsortedTimes);
        }
        let (rows, cols) = frames[0].shape();
        if frames.iter().any(|f| f.shape() != (rows, cols)) {
            return Err(TrainError::Shape("window batch frames differ in shape".into()));
        }
        Ok(WindowBatch {
            indices,
            times,
            frames,
        })
    }

    pub fn n_items(&self) -> usize {
        self.frames[0].rows()
    }

    pub fn channels(&self) -> usize {
        self.frames[0].cols()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.indices
            .iter()
            .enumerate()
            .all(|(pos, &idx)| pos == idx)
    }
}

/// The four loss terms of one window batch, as scalar nodes.
#[derive(Debug, Clone, Copy)]
pub struct TermNodes {
    pub pred: NodeId,
    pub ae: NodeId,
    pub lin: NodeId,
    pub orth: NodeId,
}

/// Architecture handles needed to emit a loss graph.
pub struct GraphModel<'a> {
    pub encoder_spec: &'a MlpSpec,
    pub decoder_spec: &'a MlpSpec,
    pub formulation: Formulation,
}

/// Name of the evolution parameter for a formulation.
pub fn evolution_param(formulation: Formulation) -> &'static str {
    match formulation {
        Formulation::Discrete => "k",
        Formulation::Continuous => "l",
    }
}

/// Emits the four loss terms for one window batch.
///
/// `ids` must bind `enc.*`, `dec.*` and the evolution parameter (`k`
/// for the discrete formulation, `l` for the continuous one).
pub fn build_window_loss(
    tape: &mut Tape,
    model: &GraphModel,
    ids: &BTreeMap<String, NodeId>,
    batch: &WindowBatch,
) -> Result<TermNodes> {
    let evo = ids
        .get(evolution_param(model.formulation))
        .copied()
        .ok_or_else(|| TrainError::Shape("missing evolution parameter".into()))?;

    // Discrete K (for the orthogonality term, and stepping in the
    // discrete formulation).
    let k = match model.formulation {
        Formulation::Discrete => evo,
        Formulation::Continuous => tape.matrix_exp(evo, EXP_SERIES_TERMS)?,
    };

    // Encode every observed frame.
    let frame_nodes: Vec<NodeId> = batch
        .frames
        .iter()
        .map(|f| tape.constant(f.clone()))
        .collect::<crate::diffcore::Result<_>>()?;
    let encoded: Vec<NodeId> = frame_nodes
        .iter()
        .map(|&f| mlp_forward_graph(tape, model.encoder_spec, ids, "enc", f))
        .collect::<crate::diffcore::Result<_>>()?;

    // Latent states K^t z0 at each observed index.
    let z0 = encoded[0];
    let mut latents: Vec<NodeId> = Vec::with_capacity(batch.indices.len());
    match model.formulation {
        Formulation::Discrete => {
            // Recursive stepping along the integer timeline.
            let mut z = z0;
            let mut at = 0usize;
            for &idx in &batch.indices {
                while at < idx {
                    z = tape.matmul(z, k, false, true)?;
                    at += 1;
                }
                latents.push(z);
            }
        }
        Formulation::Continuous => {
            for (pos, &t) in batch.times.iter().enumerate() {
                if pos == 0 {
                    latents.push(z0);
                    continue;
                }
                let tl = tape.scale(evo, t)?;
                let kt = tape.matrix_exp(tl, EXP_SERIES_TERMS)?;
                latents.push(tape.matmul(z0, kt, false, true)?);
            }
        }
    }

    let zero = tape.constant(Mat::zeros(1, 1))?;

    // Prediction: sum over observed tau >= 1 of ||x_tau - psi(K^tau z0)||^2.
    let mut pred = zero;
    for pos in 0..batch.indices.len() {
        if batch.indices[pos] == 0 {
            continue;
        }
        let decoded = mlp_forward_graph(tape, model.decoder_spec, ids, "dec", latents[pos])?;
        let diff = tape.sub(decoded, frame_nodes[pos])?;
        let term = tape.sum_squares(diff)?;
        pred = tape.add(pred, term)?;
    }

    // Auto-encoding: sum over all observed t of ||x_t - psi(phi(x_t))||^2.
    let mut ae = zero;
    for pos in 0..batch.indices.len() {
        let decoded = mlp_forward_graph(tape, model.decoder_spec, ids, "dec", encoded[pos])?;
        let diff = tape.sub(decoded, frame_nodes[pos])?;
        let term = tape.sum_squares(diff)?;
        ae = tape.add(ae, term)?;
    }

    // Linearity: sum over observed tau >= 1 of ||phi(x_tau) - K^tau z0||^2.
    let mut lin = zero;
    for pos in 0..batch.indices.len() {
        if batch.indices[pos] == 0 {
            continue;
        }
        let diff = tape.sub(encoded[pos], latents[pos])?;
        let term = tape.sum_squares(diff)?;
        lin = tape.add(lin, term)?;
    }

    // Orthogonality: ||K K^T - I||_F^2.
    let orth = build_orth_loss(tape, k)?;

    Ok(TermNodes { pred, ae, lin, orth })
}

pub fn build_orth_loss(tape: &mut Tape, k: NodeId) -> Result<NodeId> {
    let d = tape.value(k).rows();
    let kkt = tape.matmul(k, k, false, true)?;
    let eye = tape.constant(Mat::identity(d))?;
    let diff = tape.sub(kkt, eye)?;
    Ok(tape.sum_squares(diff)?)
}

/// `w_pred*pred + w_ae*ae + w_lin*lin + w_orth*orth`, skipping zero
/// weights so disabled terms cost nothing in the backward pass.
pub fn weighted_total(
    tape: &mut Tape,
    terms: &TermNodes,
    weights: &super::LossWeights,
) -> Result<NodeId> {
    let mut total = tape.constant(Mat::zeros(1, 1))?;
    for (w, node) in [
        (weights.w_pred, terms.pred),
        (weights.w_ae, terms.ae),
        (weights.w_lin, terms.lin),
        (weights.w_orth, terms.orth),
    ] {
        if w != 0.0 {
            let scaled = tape.scale(node, w)?;
            total = tape.add(total, scaled)?;
        }
    }
    Ok(total)
}
