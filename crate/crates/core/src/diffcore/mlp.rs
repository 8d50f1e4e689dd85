//! Multi-layer perceptron: plain forward for inference, graph forward
//! for differentiation. Both run through the same matmul kernel so the
//! two paths produce identical values.

use std::collections::BTreeMap;

use crate::mat::{matmul, Mat};

use super::{Activation, DiffError, NodeId, ParameterStore, Result, Tape};

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    /// Input, hidden..., output sizes. At least two entries.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Self {
        assert!(layer_sizes.len() >= 2, "an MLP needs at least two layer sizes");
        assert!(layer_sizes.iter().all(|&s| s > 0));
        MlpSpec {
            layer_sizes,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Checks that `params` carries `w{l}`/`b{l}` with matching shapes.
    pub fn validate(&self, params: &ParameterStore) -> Result<()> {
        for (l, pair) in self.layer_sizes.windows(2).enumerate() {
            let w = params.get(&format!("w{l}"))?;
            let b = params.get(&format!("b{l}"))?;
            if w.shape() != (pair[1], pair[0]) {
                return Err(DiffError::ShapeMismatch {
                    expected: (pair[1], pair[0]),
                    got: w.shape(),
                });
            }
            if b.shape() != (1, pair[1]) {
                return Err(DiffError::ShapeMismatch {
                    expected: (1, pair[1]),
                    got: b.shape(),
                });
            }
        }
        Ok(())
    }
}

/// Row-batched forward pass: `input` is n×in, the result n×out.
/// The activation is applied to every layer except the last.
pub fn mlp_forward(spec: &MlpSpec, params: &ParameterStore, input: &Mat) -> Result<Mat> {
    if input.cols() != spec.input_dim() {
        return Err(DiffError::ShapeMismatch {
            expected: (input.rows(), spec.input_dim()),
            got: input.shape(),
        });
    }
    let mut x = input.clone();
    for l in 0..spec.n_layers() {
        let w = params.get(&format!("w{l}"))?;
        let b = params.get(&format!("b{l}"))?;
        x = matmul(&x, w, false, true).add_row_broadcast(b);
        if l + 1 < spec.n_layers() {
            for v in x.data_mut() {
                *v = spec.activation.apply(*v);
            }
        }
        if !x.all_finite() {
            return Err(DiffError::NonFinite);
        }
    }
    Ok(x)
}

/// Same forward pass emitted as tape nodes; `param_ids` maps `w{l}`/`b{l}`
/// (optionally under a prefix) to already-bound leaves.
pub fn mlp_forward_graph(
    tape: &mut Tape,
    spec: &MlpSpec,
    param_ids: &BTreeMap<String, NodeId>,
    prefix: &str,
    input: NodeId,
) -> Result<NodeId> {
    let lookup = |name: String| -> Result<NodeId> {
        param_ids
            .get(&name)
            .copied()
            .ok_or(DiffError::UnknownParameter(name))
    };
    let mut x = input;
    for l in 0..spec.n_layers() {
        let w = lookup(if prefix.is_empty() {
            format!("w{l}")
        } else {
            format!("{prefix}.w{l}")
        })?;
        let b = lookup(if prefix.is_empty() {
            format!("b{l}")
        } else {
            format!("{prefix}.b{l}")
        })?;
        let lin = tape.matmul(x, w, false, true)?;
        x = tape.add_row(lin, b)?;
        if l + 1 < spec.n_layers() {
            x = tape.activation(x, spec.activation)?;
        }
    }
    Ok(x)
}
