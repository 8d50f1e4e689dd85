//! Variational data assimilation with a trained model as dynamical
//! prior: weak-constraint, constrained-on-z0 and joint fine-tuning
//! modes, spatial/temporal Tikhonov priors, the periodic-interpolation
//! baseline and evaluation metrics.

mod baseline;
mod modes;

pub use baseline::{periodic_baseline, PeriodicOpts};
pub use modes::{assimilate, assimilate_constrained, assimilate_joint, assimilate_weak};

use thiserror::Error;

use crate::diffcore::{DiffError, NodeId, Tape};
use crate::dynamics::{DynError, PixelGrid, TimeSeries};
use crate::koopman::{KoopmanError, KoopmanModel};
use crate::mat::Mat;
use crate::matfun::MatFunError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum AssimError {
    #[error("no observations available")]
    NoObservations,
    #[error("non-finite cost during assimilation")]
    NonFinite,
    #[error("period must be at least 2")]
    DegeneratePeriod,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Koopman(#[from] KoopmanError),
    #[error(transparent)]
    MatFun(#[from] MatFunError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

pub type Result<T> = std::result::Result<T, AssimError>;

/// Masked observations on an integer timeline: frame `t` is an N×C
/// matrix of items (pixels) by channels.
#[derive(Debug, Clone)]
pub struct Observations {
    frames: Vec<(usize, Mat)>,
    n_items: usize,
    channels: usize,
    /// (height, width) when the items form an image grid.
    pub spatial: Option<(usize, usize)>,
}

impl Observations {
    pub fn new(frames: Vec<(usize, Mat)>, spatial: Option<(usize, usize)>) -> Result<Self> {
        if frames.is_empty() {
            return Err(AssimError::NoObservations);
        }
        if frames.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(AssimError::Shape("observation indices must increase".into()));
        }
        let (n_items, channels) = frames[0].1.shape();
        if frames.iter().any(|(_, f)| f.shape() != (n_items, channels)) {
            return Err(AssimError::Shape("observation frames differ in shape".into()));
        }
        if let Some((h, w)) = spatial {
            if h * w != n_items {
                return Err(AssimError::Shape(format!(
                    "{h}x{w} grid cannot hold {n_items} items"
                )));
            }
        }
        Ok(Observations {
            frames,
            n_items,
            channels,
            spatial,
        })
    }

    /// Observed frames of a grid; the time index is the row position in
    /// the grid timeline.
    pub fn from_grid(g: &PixelGrid) -> Result<Self> {
        let mut frames = Vec::new();
        for t in 0..g.n_steps() {
            if g.mask()[t] {
                frames.push((t, g.frame(t)));
            }
        }
        Observations::new(frames, Some((g.height, g.width)))
    }

    /// Single-item observations from a masked series on its native grid.
    pub fn from_series(s: &TimeSeries, native_frequency: f64) -> Result<Self> {
        let t0 = s.times()[0];
        let mut frames = Vec::new();
        for i in 0..s.len() {
            if !s.mask()[i] {
                continue;
            }
            let steps = (s.times()[i] - t0) * native_frequency;
            let idx = steps.round();
            if (steps - idx).abs() > 1e-6 {
                return Err(AssimError::Shape(
                    "series observations must sit on the native grid".into(),
                ));
            }
            frames.push((idx as usize, Mat::row_vector(s.row(i))));
        }
        Observations::new(frames, None)
    }

    pub fn frames(&self) -> &[(usize, Mat)] {
        &self.frames
    }

    pub fn indices(&self) -> Vec<usize> {
        self.frames.iter().map(|(t, _)| *t).collect()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn max_index(&self) -> usize {
        self.frames.last().map(|(t, _)| *t).unwrap_or(0)
    }

    /// Retains only observations with `t < cutoff`.
    pub fn truncated(&self, cutoff: usize) -> Result<Observations> {
        let frames: Vec<(usize, Mat)> = self
            .frames
            .iter()
            .filter(|(t, _)| *t < cutoff)
            .cloned()
            .collect();
        Observations::new(frames, self.spatial)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssimMode {
    /// Optimize the whole trajectory with a soft one-step model term.
    Weak,
    /// Optimize only the latent initial state.
    Constrained,
    /// Constrained plus fine-tuning of K and the decoder.
    Joint,
}

#[derive(Debug, Clone)]
pub struct AssimilationProblem {
    pub observations: Observations,
    pub model: KoopmanModel,
    pub mode: AssimMode,
    /// Dynamical-prior weight (weak mode).
    pub alpha: f64,
    /// Spatial-prior weight.
    pub beta: f64,
    /// Temporal-smoothness weight.
    pub temporal_weight: f64,
    pub iterations: usize,
    /// Learning rate on the trajectory or latent initial state.
    pub lr: f64,
    /// Joint mode: learning rate on K and decoder parameters.
    pub param_lr: f64,
    /// Total reconstruction length T+1; may exceed the observed range
    /// (assimilation-forecasting).
    pub horizon: usize,
    /// Radius of the Cressman fill used to initialize weak mode.
    pub cressman_radius: f64,
}

impl AssimilationProblem {
    pub fn new(observations: Observations, model: KoopmanModel, mode: AssimMode) -> Self {
        let horizon = observations.max_index() + 1;
        AssimilationProblem {
            observations,
            model,
            mode,
            alpha: 0.0,
            beta: 0.0,
            temporal_weight: 0.0,
            iterations: 500,
            lr: 1e-2,
            param_lr: 1e-4,
            horizon,
            cressman_radius: 15.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < self.observations.max_index() + 1 {
            return Err(AssimError::Shape(
                "horizon must cover the observed range".into(),
            ));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.temporal_weight < 0.0 {
            return Err(AssimError::Shape("prior weights must be nonnegative".into()));
        }
        if self.mode != AssimMode::Weak && self.observations.channels() != self.model.input_dim {
            return Err(AssimError::Shape(format!(
                "model expects {} channels, observations carry {}",
                self.model.input_dim,
                self.observations.channels()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AssimilationResult {
    /// Reconstructed frames for t = 0..horizon-1.
    pub trajectory: Vec<Mat>,
    /// Optimized latent initial state (constrained and joint modes).
    pub z0: Option<Mat>,
    /// Fine-tuned model (joint mode).
    pub fine_tuned: Option<KoopmanModel>,
    pub cost_history: Vec<f64>,
}

impl AssimilationResult {
    pub fn initial_cost(&self) -> f64 {
        *self.cost_history.first().unwrap_or(&f64::NAN)
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().unwrap_or(&f64::NAN)
    }

    /// Trend check over the final 10% of iterations.
    pub fn stable_tail(&self) -> bool {
        if self.cost_history.len() < 2 {
            return true;
        }
        let mark = self.cost_history.len() - (self.cost_history.len() / 10).max(1);
        self.final_cost() <= self.cost_history[mark - 1] * (1.0 + 1e-9)
    }
}

/// Sum over 4-neighbor pixel pairs and channels of squared differences.
/// The snapshot is N×C with pixels in row-major (height, width) order.
pub fn tikhonov_spatial(snapshot: &Mat, height: usize, width: usize) -> Result<f64> {
    if snapshot.rows() != height * width {
        return Err(AssimError::Shape(format!(
            "{}x{} grid cannot hold {} items",
            height,
            width,
            snapshot.rows()
        )));
    }
    let c = snapshot.cols();
    let mut total = 0.0;
    for r in 0..height {
        for col in 0..width {
            let p = r * width + col;
            if r + 1 < height {
                let q = (r + 1) * width + col;
                for ch in 0..c {
                    let d = snapshot[(p, ch)] - snapshot[(q, ch)];
                    total += d * d;
                }
            }
            if col + 1 < width {
                let q = r * width + col + 1;
                for ch in 0..c {
                    let d = snapshot[(p, ch)] - snapshot[(q, ch)];
                    total += d * d;
                }
            }
        }
    }
    Ok(total)
}

/// Sum over consecutive rows of squared differences.
pub fn tikhonov_temporal(values: &Mat) -> f64 {
    let mut total = 0.0;
    for t in 0..values.rows().saturating_sub(1) {
        for (a, b) in values.row(t + 1).iter().zip(values.row(t)) {
            let d = a - b;
            total += d * d;
        }
    }
    total
}

/// Mean squared error over frames where the evaluation mask is true.
pub fn masked_mse(predicted: &[Mat], truth: &[Mat], eval_mask: &[bool]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.len() != eval_mask.len() {
        return Err(AssimError::Shape("masked_mse length mismatch".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ((p, t), &keep) in predicted.iter().zip(truth).zip(eval_mask) {
        if !keep {
            continue;
        }
        if p.shape() != t.shape() {
            return Err(AssimError::Shape("masked_mse frame shape mismatch".into()));
        }
        for (a, b) in p.data().iter().zip(t.data()) {
            let d = a - b;
            total += d * d;
        }
        count += p.len();
    }
    if count == 0 {
        return Err(AssimError::NoObservations);
    }
    Ok(total / count as f64)
}

/// Spatial Tikhonov prior emitted as tape nodes: `frame` is an N×C node
/// viewed as a (height, width*C) image.
pub(crate) fn spatial_prior_graph(
    tape: &mut Tape,
    frame: NodeId,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<NodeId> {
    let img = tape.reshape(frame, height, width * channels)?;
    // Vertical neighbors.
    let top = tape.slice(img, 0, 0, height - 1, width * channels)?;
    let bottom = tape.slice(img, 1, 0, height - 1, width * channels)?;
    let dv = tape.sub(top, bottom)?;
    let sv = tape.sum_squares(dv)?;
    // Horizontal neighbors: dropping the first C columns shifts pixels
    // by one within each image row.
    let left = tape.slice(img, 0, 0, height, (width - 1) * channels)?;
    let right = tape.slice(img, 0, channels, height, (width - 1) * channels)?;
    let dh = tape.sub(left, right)?;
    let sh = tape.sum_squares(dh)?;
    Ok(tape.add(sv, sh)?)
}

#[cfg(test)]
mod tests;
