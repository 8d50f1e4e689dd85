//! The optimization loop: windowing, batching, Adam steps, plateau
//! learning-rate decay and per-term history. Deterministic under the
//! config seed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{init_mlp, Activation, Adam, MlpSpec, ParameterStore, Tape};
use crate::dynamics::{augment_state, derive_seed, TimeSeries};
use crate::koopman::KoopmanModel;
use crate::mat::Mat;
use crate::matfun::{expm, SquareMatrix};

use super::graph::{build_window_loss, weighted_total, GraphModel, WindowBatch};
use super::{Formulation, Result, TrainConfig, TrainError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub latent_dim: usize,
    /// Encoder hidden sizes; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Stack states with discrete derivatives before training.
    pub augmented: bool,
}

impl ModelConfig {
    pub fn encoder_spec(&self, input_dim: usize) -> MlpSpec {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.latent_dim);
        MlpSpec::new(sizes, self.activation)
    }

    pub fn decoder_spec(&self, input_dim: usize) -> MlpSpec {
        let mut sizes = vec![self.latent_dim];
        sizes.extend(self.hidden.iter().rev());
        sizes.push(input_dim);
        MlpSpec::new(sizes, self.activation)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Per-term training losses, averaged per window item.
    pub pred: f64,
    pub ae: f64,
    pub lin: f64,
    pub orth: f64,
    pub total: f64,
    /// Weighted total on the held-out split.
    pub val_total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Weighted validation loss of the initialized model.
    pub initial_val_total: f64,
}

impl TrainHistory {
    pub fn final_val_total(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_val_total, |e| e.val_total)
    }
}

/// One window instance: a row range of one series.
#[derive(Debug, Clone)]
struct WindowRef {
    series: usize,
    start: usize,
}

fn build_window_index(dataset: &[TimeSeries], window: usize) -> Result<Vec<WindowRef>> {
    let mut out = Vec::new();
    let stride = (window / 2).max(1);
    for (si, s) in dataset.iter().enumerate() {
        if s.len() < window {
            continue;
        }
        let mut start = 0;
        while start + window <= s.len() {
            out.push(WindowRef { series: si, start });
            start += stride;
        }
    }
    if out.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    Ok(out)
}

/// Extracts a shared-pattern batch from several series over one row
/// range. All series must share the mask (grid pixels and trajectory
/// sets both do).
fn make_batch(
    dataset: &[TimeSeries],
    members: &[usize],
    start: usize,
    window: usize,
    formulation: Formulation,
    native_frequency: f64,
) -> Result<Option<WindowBatch>> {
    let first = &dataset[members[0]];
    // Anchor the window at its first observed row.
    let mut anchor = start;
    let end = start + window;
    while anchor < end && !first.mask()[anchor] {
        anchor += 1;
    }
    let observed: Vec<usize> = (anchor..end).filter(|&i| first.mask()[i]).collect();
    if observed.len() < 2 {
        return Ok(None);
    }
    let t0 = first.times()[anchor];
    let mut indices = Vec::with_capacity(observed.len());
    let mut times = Vec::with_capacity(observed.len());
    let mut frames = Vec::with_capacity(observed.len());
    for &row in &observed {
        let steps = (first.times()[row] - t0) * native_frequency;
        times.push(steps);
        indices.push(match formulation {
            Formulation::Discrete => steps.round() as usize,
            Formulation::Continuous => row - anchor,
        });
        let mut frame = Mat::zeros(members.len(), first.channels());
        for (b, &si) in members.iter().enumerate() {
            frame.row_mut(b).copy_from_slice(dataset[si].row(row));
        }
        frames.push(frame);
    }
    Ok(Some(WindowBatch::new(indices, times, frames)?))
}

struct Evaluator<'a> {
    enc_spec: &'a MlpSpec,
    dec_spec: &'a MlpSpec,
    formulation: Formulation,
}

impl Evaluator<'_> {
    /// Weighted mean-per-item loss terms of one batch; optionally the
    /// gradient of the total.
    fn eval(
        &self,
        params: &ParameterStore,
        batch: &WindowBatch,
        weights: &super::LossWeights,
        want_grad: bool,
    ) -> Result<(EpochRecord, Option<BTreeMap<String, Mat>>)> {
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape)?;
        let gm = GraphModel {
            encoder_spec: self.enc_spec,
            decoder_spec: self.dec_spec,
            formulation: self.formulation,
        };
        let terms = build_window_loss(&mut tape, &gm, &ids, batch)?;
        let total = weighted_total(&mut tape, &terms, weights)?;
        // Normalize per batch item so gradients are comparable across
        // batch sizes.
        let scale = 1.0 / batch.n_items() as f64;
        let objective = tape.scale(total, scale)?;

        let rec = EpochRecord {
            pred: tape.scalar(terms.pred) * scale,
            ae: tape.scalar(terms.ae) * scale,
            lin: tape.scalar(terms.lin) * scale,
            orth: tape.scalar(terms.orth),
            total: tape.scalar(objective),
            val_total: 0.0,
            lr: 0.0,
        };
        if !rec.total.is_finite() {
            return Err(TrainError::Diverged);
        }
        if !want_grad {
            return Ok((rec, None));
        }
        let grads = tape.backward(objective).map_err(|e| match e {
            crate::diffcore::DiffError::NonFinite => TrainError::Diverged,
            other => TrainError::Diff(other),
        })?;
        let mut out = BTreeMap::new();
        for (name, id) in &ids {
            if let Some(g) = grads.get(*id) {
                out.insert(name.clone(), g.clone());
            }
        }
        Ok((rec, Some(out)))
    }
}

/// Trains a Koopman autoencoder. Deterministic under the config seed in
/// this single-threaded implementation.
pub fn train(
    dataset: &[TimeSeries],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    native_frequency: f64,
) -> Result<(KoopmanModel, TrainHistory)> {
    tcfg.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    // Optional state augmentation; it needs fully-observed input.
    let prepared: Vec<TimeSeries> = if mcfg.augmented {
        dataset
            .iter()
            .map(|s| augment_state(s).map(|a| a.into_series()))
            .collect::<std::result::Result<_, _>>()?
    } else {
        dataset.to_vec()
    };
    let channels = prepared[0].channels();
    if prepared.iter().any(|s| s.channels() != channels) {
        return Err(TrainError::Shape("series channel counts differ".into()));
    }

    let enc_spec = mcfg.encoder_spec(channels);
    let dec_spec = mcfg.decoder_spec(channels);
    let mut params = ParameterStore::new();
    params.merge_prefixed("enc", &init_mlp(&enc_spec, derive_seed(tcfg.seed, "enc", 0)));
    params.merge_prefixed("dec", &init_mlp(&dec_spec, derive_seed(tcfg.seed, "dec", 0)));
    match tcfg.formulation {
        // K starts at the identity; equivalently L starts at zero.
        Formulation::Discrete => params.insert("k", Mat::identity(mcfg.latent_dim)),
        Formulation::Continuous => {
            params.insert("l", Mat::zeros(mcfg.latent_dim, mcfg.latent_dim))
        }
    }

    // Window instances, split train/validation.
    let windows = build_window_index(&prepared, tcfg.window)?;
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(tcfg.seed, "split", 0));
    order.shuffle(&mut split_rng);
    let n_val = ((windows.len() as f64 * tcfg.val_fraction).round() as usize)
        .min(windows.len() - 1);
    let (val_ids, train_ids) = order.split_at(n_val);
    let mut train_ids = train_ids.to_vec();
    let val_ids = val_ids.to_vec();
    if train_ids.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    // Group by (start, pattern); the pattern is shared across series by
    // construction, so start alone keys a group.
    let group = |ids: &[usize]| -> Vec<(usize, Vec<usize>)> {
        let mut by_start: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &wid in ids {
            by_start.entry(windows[wid].start).or_default().push(windows[wid].series);
        }
        by_start.into_iter().collect()
    };
    let val_groups = group(&val_ids);

    let evaluator = Evaluator {
        enc_spec: &enc_spec,
        dec_spec: &dec_spec,
        formulation: tcfg.formulation,
    };

    let eval_split = |params: &ParameterStore, groups: &[(usize, Vec<usize>)]| -> Result<f64> {
        let mut total = 0.0;
        let mut items = 0usize;
        for (start, members) in groups {
            if let Some(batch) = make_batch(
                &prepared,
                members,
                *start,
                tcfg.window,
                tcfg.formulation,
                native_frequency,
            )? {
                let (rec, _) = evaluator.eval(params, &batch, &tcfg.weights, false)?;
                total += rec.total * batch.n_items() as f64;
                items += batch.n_items();
            }
        }
        Ok(if items == 0 { 0.0 } else { total / items as f64 })
    };

    let initial_val_total = if val_groups.is_empty() {
        eval_split(&params, &group(&train_ids))?
    } else {
        eval_split(&params, &val_groups)?
    };
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(tcfg.epochs),
        initial_val_total,
    };

    let mut opt = Adam::new(tcfg.lr);
    let mut best_val = initial_val_total;
    let mut plateau = 0usize;

    for epoch in 0..tcfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tcfg.seed, "epoch", epoch as u64));
        train_ids.shuffle(&mut rng);
        // Batches: chunk each start-group into runs of at most
        // batch_size members, then shuffle batch order.
        let mut batches: Vec<(usize, Vec<usize>)> = Vec::new();
        for (start, members) in group(&train_ids) {
            for chunk in members.chunks(tcfg.batch_size) {
                batches.push((start, chunk.to_vec()));
            }
        }
        batches.shuffle(&mut rng);

        let mut sums = EpochRecord::default();
        let mut n_batches = 0usize;
        for (start, members) in &batches {
            let Some(batch) = make_batch(
                &prepared,
                members,
                *start,
                tcfg.window,
                tcfg.formulation,
                native_frequency,
            )?
            else {
                continue;
            };
            let (rec, grads) = evaluator.eval(&params, &batch, &tcfg.weights, true)?;
            opt.step(&mut params, &grads.expect("gradient requested"))?;
            sums.pred += rec.pred;
            sums.ae += rec.ae;
            sums.lin += rec.lin;
            sums.orth += rec.orth;
            sums.total += rec.total;
            n_batches += 1;
        }
        if n_batches == 0 {
            return Err(TrainError::EmptyDataset);
        }
        let inv = 1.0 / n_batches as f64;
        let val_total = if val_groups.is_empty() {
            sums.total * inv
        } else {
            eval_split(&params, &val_groups)?
        };
        history.epochs.push(EpochRecord {
            pred: sums.pred * inv,
            ae: sums.ae * inv,
            lin: sums.lin * inv,
            orth: sums.orth * inv,
            total: sums.total * inv,
            val_total,
            lr: opt.lr(),
        });
        if !val_total.is_finite() {
            return Err(TrainError::Diverged);
        }

        // Plateau-driven learning-rate decay.
        if val_total < best_val * (1.0 - 1e-9) {
            best_val = val_total;
            plateau = 0;
        } else {
            plateau += 1;
            if plateau >= tcfg.lr_patience {
                let next = (opt.lr() * tcfg.lr_decay).max(1e-7);
                opt.set_lr(next);
                plateau = 0;
            }
        }
    }

    // Assemble the trained model; the continuous formulation exposes
    // its dynamics through K = exp(L).
    let k = match tcfg.formulation {
        Formulation::Discrete => SquareMatrix::new(params.get("k")?.clone())?,
        Formulation::Continuous => SquareMatrix::new(expm(params.get("l")?))?,
    };
    let model = KoopmanModel::new(
        enc_spec,
        params.extract_prefixed("enc"),
        dec_spec,
        params.extract_prefixed("dec"),
        k,
        mcfg.augmented,
        native_frequency,
    )?;
    Ok((model, history))
}
