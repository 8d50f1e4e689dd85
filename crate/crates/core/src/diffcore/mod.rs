//! Minimal reverse-mode differentiation and MLP substrate.
//!
//! Exact gradients of scalar losses with respect to all parameters and
//! to designated inputs, which is what both training and assimilation
//! on the latent initial state need.

mod adam;
mod gradcheck;
mod mlp;
mod tape;

pub use adam::Adam;
pub use gradcheck::{gradient_check, gradient_check_against, CoordCheck, GradientReport};
pub use mlp::{mlp_forward, mlp_forward_graph, MlpSpec};
pub use tape::{Gradients, NodeId, Tape};

use crate::mat::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("unsupported primitive: {0}")]
    UnsupportedPrimitive(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

pub type Result<T> = std::result::Result<T, DiffError>;

/// Activations are applied to all layers except the last; smoothness
/// matters because assimilation differentiates through long model
/// compositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// Smooth rectifier `x * sigmoid(x)`.
    SmoothRectifier,
    HyperbolicTangent,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::SmoothRectifier => x * sigmoid(x),
            Activation::HyperbolicTangent => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::SmoothRectifier => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::HyperbolicTangent => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "smooth-rectifier" | "silu" => Ok(Activation::SmoothRectifier),
            "hyperbolic-tangent" | "tanh" => Ok(Activation::HyperbolicTangent),
            other => Err(DiffError::UnsupportedPrimitive(format!(
                "activation `{other}`"
            ))),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Named real tensors keyed by layer; deterministic iteration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    params: BTreeMap<String, Mat>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Mat) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Mat> {
        self.params
            .get(name)
            .ok_or_else(|| DiffError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Mat> {
        self.params
            .get_mut(name)
            .ok_or_else(|| DiffError::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(Mat::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(Mat::all_finite)
    }

    /// Merge `other` under a `prefix.` namespace.
    pub fn merge_prefixed(&mut self, prefix: &str, other: &ParameterStore) {
        for (name, value) in other.iter() {
            self.insert(format!("{prefix}.{name}"), value.clone());
        }
    }

    /// Split out the sub-store under `prefix.`.
    pub fn extract_prefixed(&self, prefix: &str) -> ParameterStore {
        let mut out = ParameterStore::new();
        let pat = format!("{prefix}.");
        for (name, value) in self.iter() {
            if let Some(rest) = name.strip_prefix(&pat) {
                out.insert(rest, value.clone());
            }
        }
        out
    }

    /// Bind every parameter as a differentiable tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> Result<BTreeMap<String, NodeId>> {
        let mut ids = BTreeMap::new();
        for (name, value) in self.iter() {
            ids.insert(name.clone(), tape.var(value.clone())?);
        }
        Ok(ids)
    }
}

/// Uniform init scaled by the inverse square root of fan-in.
pub fn init_linear(rng: &mut ChaCha8Rng, out_dim: usize, in_dim: usize) -> (Mat, Mat) {
    let bound = 1.0 / (in_dim as f64).sqrt();
    let mut w = Mat::zeros(out_dim, in_dim);
    for v in w.data_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    let mut b = Mat::zeros(1, out_dim);
    for v in b.data_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    (w, b)
}

/// Fresh parameters for an MLP, deterministic under the seed.
pub fn init_mlp(spec: &MlpSpec, seed: u64) -> ParameterStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    for (l, pair) in spec.layer_sizes.windows(2).enumerate() {
        let (w, b) = init_linear(&mut rng, pair[1], pair[0]);
        store.insert(format!("w{l}"), w);
        store.insert(format!("b{l}"), b);
    }
    store
}
