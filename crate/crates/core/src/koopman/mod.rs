//! The Koopman autoencoder model: encode, decode, discrete and
//! continuous forecasting, backward prediction and frequency
//! retargeting.
//!
//! Latent states are row vectors (or N×d pixel batches); advancing one
//! step multiplies by the transpose of the evolution matrix so the
//! column-vector convention `z' = K z` holds rowwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{mlp_forward, DiffError, MlpSpec, ParameterStore};
use crate::dynamics::{DynError, TimeSeries};
use crate::mat::{invert, matmul, Mat};
use crate::matfun::{self, GeneratorMatrix, MatFunError, SquareMatrix};

/// Forecast values above this threshold abort with a divergence error
/// instead of returning infinities.
pub const DIVERGENCE_GUARD: f64 = 1e12;

#[derive(Debug, Error)]
pub enum KoopmanError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("forecast diverged (value above {DIVERGENCE_GUARD:.0e})")]
    NonFinite,
    #[error("evolution matrix is ill-conditioned (estimate {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error(transparent)]
    MatFun(#[from] MatFunError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Dyn(#[from] DynError),
}

pub type Result<T> = std::result::Result<T, KoopmanError>;

/// Latent state: one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState(pub Mat);

impl LatentState {
    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn n_items(&self) -> usize {
        self.0.rows()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KoopmanModel {
    pub encoder_spec: MlpSpec,
    pub encoder: ParameterStore,
    pub decoder_spec: MlpSpec,
    pub decoder: ParameterStore,
    pub k: SquareMatrix,
    pub latent_dim: usize,
    pub input_dim: usize,
    /// Inputs are state-plus-discrete-derivative stacks; predictions
    /// report the leading state block.
    pub augmented: bool,
    /// Samples per model time unit of the data the model was trained on.
    pub native_frequency: f64,
}

impl KoopmanModel {
    pub fn new(
        encoder_spec: MlpSpec,
        encoder: ParameterStore,
        decoder_spec: MlpSpec,
        decoder: ParameterStore,
        k: SquareMatrix,
        augmented: bool,
        native_frequency: f64,
    ) -> Result<Self> {
        let latent_dim = encoder_spec.output_dim();
        let input_dim = encoder_spec.input_dim();
        if k.dim() != latent_dim
            || decoder_spec.input_dim() != latent_dim
            || decoder_spec.output_dim() != input_dim
        {
            return Err(KoopmanError::ShapeMismatch(format!(
                "encoder {}->{}, decoder {}->{}, k dim {}",
                input_dim,
                latent_dim,
                decoder_spec.input_dim(),
                decoder_spec.output_dim(),
                k.dim()
            )));
        }
        encoder_spec.validate(&encoder)?;
        decoder_spec.validate(&decoder)?;
        Ok(KoopmanModel {
            encoder_spec,
            encoder,
            decoder_spec,
            decoder,
            k,
            latent_dim,
            input_dim,
            augmented,
            native_frequency,
        })
    }

    /// Channel count of reported predictions (the state block for
    /// augmented models).
    pub fn report_channels(&self) -> usize {
        if self.augmented {
            self.input_dim / 2
        } else {
            self.input_dim
        }
    }

    pub fn encode(&self, x: &Mat) -> Result<LatentState> {
        Ok(LatentState(mlp_forward(&self.encoder_spec, &self.encoder, x)?))
    }

    pub fn decode(&self, z: &LatentState) -> Result<Mat> {
        Ok(mlp_forward(&self.decoder_spec, &self.decoder, &z.0)?)
    }

    /// One latent step: `z K^T` rowwise.
    pub fn step_latent(&self, z: &LatentState) -> LatentState {
        LatentState(matmul(&z.0, self.k.as_mat(), false, true))
    }

    fn guard(&self, m: &Mat) -> Result<()> {
        if !m.all_finite() || m.max_abs() > DIVERGENCE_GUARD {
            return Err(KoopmanError::NonFinite);
        }
        Ok(())
    }

    /// Latent trajectory by recursive multiplication, `horizon + 1`
    /// states starting at `z0`.
    pub fn latent_trajectory(&self, z0: &LatentState, horizon: usize) -> Result<Vec<LatentState>> {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(z0.clone());
        for t in 0..horizon {
            let next = self.step_latent(&out[t]);
            self.guard(&next.0)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Forecast `horizon` steps from a batch of initial observations
    /// (rows). Returns the decoded frames, including step 0.
    pub fn forecast_frames(&self, x0: &Mat, horizon: usize) -> Result<Vec<Mat>> {
        let z0 = self.encode(x0)?;
        let latents = self.latent_trajectory(&z0, horizon)?;
        let mut frames = Vec::with_capacity(horizon + 1);
        for z in &latents {
            let x = self.decode(z)?;
            self.guard(&x)?;
            frames.push(self.report_block(&x));
        }
        Ok(frames)
    }

    /// First `report_channels` columns of a decoded frame.
    pub fn report_block(&self, decoded: &Mat) -> Mat {
        let c = self.report_channels();
        if c == decoded.cols() {
            decoded.clone()
        } else {
            decoded.block(0, 0, decoded.rows(), c)
        }
    }

    /// Value at step tau is `psi(K^tau phi(x0))`, computed recursively.
    pub fn forecast_discrete(&self, x0: &[f64], horizon: usize) -> Result<TimeSeries> {
        let frames = self.forecast_frames(&Mat::row_vector(x0), horizon)?;
        self.frames_to_series(&frames, |t| t as f64 / self.native_frequency)
    }

    /// Value at time t is `psi(exp(t * f * L) phi(x0))` where L is the
    /// principal logarithm of K and f the native frequency.
    pub fn forecast_continuous(&self, x0: &[f64], query_times: &[f64]) -> Result<TimeSeries> {
        let log = matfun::matrix_log_principal(&self.k)?;
        let z0 = self.encode(&Mat::row_vector(x0))?;
        let mut frames = Vec::with_capacity(query_times.len());
        for &t in query_times {
            let steps = t * self.native_frequency;
            let kt = log.exp_scaled(steps)?;
            let zt = LatentState(matmul(&z0.0, kt.as_mat(), false, true));
            let x = self.decode(&zt)?;
            self.guard(&x)?;
            frames.push(self.report_block(&x));
        }
        self.frames_to_series(&frames, |i| query_times[i])
    }

    /// Backward prediction: value tau steps before the end is
    /// `psi(K^-tau phi(x_end))`; emitted in chronological order with
    /// the end state at time 0.
    pub fn backward_predict(&self, x_end: &[f64], horizon: usize) -> Result<TimeSeries> {
        let kinv = self.k_inverse()?;
        let z_end = self.encode(&Mat::row_vector(x_end))?;
        let mut latents = vec![z_end.0.clone()];
        for t in 0..horizon {
            let next = matmul(&latents[t], &kinv, false, true);
            self.guard(&next)?;
            latents.push(next);
        }
        let mut frames = Vec::with_capacity(horizon + 1);
        for z in latents.iter().rev() {
            let x = self.decode(&LatentState(z.clone()))?;
            self.guard(&x)?;
            frames.push(self.report_block(&x));
        }
        self.frames_to_series(&frames, |i| {
            (i as f64 - horizon as f64) / self.native_frequency
        })
    }

    /// Inverse of K, guarded by a 1-norm condition estimate.
    pub fn k_inverse(&self) -> Result<Mat> {
        let inv = invert(self.k.as_mat()).ok_or(KoopmanError::IllConditioned {
            cond: f64::INFINITY,
        })?;
        let cond = self.k.as_mat().norm_1() * inv.norm_1();
        if cond >= 1e8 {
            return Err(KoopmanError::IllConditioned { cond });
        }
        Ok(inv)
    }

    /// New model advancing at `target` samples per time unit:
    /// `k_bar = exp((native/target) L)`, parameters shared.
    pub fn retarget_frequency(&self, target: f64) -> Result<KoopmanModel> {
        assert!(target > 0.0, "target frequency must be positive");
        let log = matfun::matrix_log_principal(&self.k)?;
        let k_bar = log.exp_scaled(self.native_frequency / target)?;
        let mut out = self.clone();
        out.k = k_bar;
        out.native_frequency = target;
        Ok(out)
    }

    /// Principal logarithm of the evolution matrix.
    pub fn generator(&self) -> Result<GeneratorMatrix> {
        Ok(matfun::matrix_log_principal(&self.k)?)
    }

    fn frames_to_series(
        &self,
        frames: &[Mat],
        time_of: impl Fn(usize) -> f64,
    ) -> Result<TimeSeries> {
        let c = frames.first().map_or(0, Mat::cols);
        let mut values = Mat::zeros(frames.len(), c);
        let mut times = Vec::with_capacity(frames.len());
        for (i, f) in frames.iter().enumerate() {
            if f.rows() != 1 {
                return Err(KoopmanError::ShapeMismatch(
                    "series forecast expects single-row frames".into(),
                ));
            }
            values.row_mut(i).copy_from_slice(f.row(0));
            times.push(time_of(i));
        }
        Ok(TimeSeries::fully_observed(times, values)?)
    }
}

/// Hand-built model whose encoder and decoder are identity linear maps;
/// the latent dynamics are exactly `k`. Useful as a fixture and for
/// closed-form checks.
pub fn identity_model(k: SquareMatrix, native_frequency: f64) -> Result<KoopmanModel> {
    use crate::diffcore::Activation;
    let d = k.dim();
    let spec = MlpSpec::new(vec![d, d], Activation::HyperbolicTangent);
    let mut params = ParameterStore::new();
    params.insert("w0", Mat::identity(d));
    params.insert("b0", Mat::zeros(1, d));
    KoopmanModel::new(
        spec.clone(),
        params.clone(),
        spec,
        params,
        k,
        false,
        native_frequency,
    )
}

#[cfg(test)]
mod tests;
