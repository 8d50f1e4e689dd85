//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! Values are computed eagerly as nodes are appended; `backward` walks
//! the tape once in reverse. The primitive set is exactly what the loss
//! and assimilation costs need: affine maps, activations, elementwise
//! arithmetic, matrix products, slicing and squared norms. Any
//! non-finite intermediate raises instead of propagating.

use crate::mat::{matmul, Mat};

use super::{Activation, DiffError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Hadamard(NodeId, NodeId),
    MatMul {
        a: NodeId,
        b: NodeId,
        ta: bool,
        tb: bool,
    },
    /// Broadcast-add a 1×m row to every row of an n×m matrix.
    AddRow {
        a: NodeId,
        row: NodeId,
    },
    Act(NodeId, Activation),
    SumSquares(NodeId),
    Slice {
        a: NodeId,
        r0: usize,
        c0: usize,
    },
    Reshape(NodeId),
}

struct Node {
    op: Op,
    value: Mat,
    needs_grad: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.shape(), (1, 1), "scalar() on a non-scalar node");
        v.data()[0]
    }

    fn push(&mut self, op: Op, value: Mat, needs_grad: bool) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(DiffError::NonFinite);
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Ok(id)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Differentiable leaf (a parameter or an assimilated input).
    pub fn var(&mut self, value: Mat) -> Result<NodeId> {
        self.push(Op::Leaf, value, true)
    }

    /// Non-differentiable leaf (data).
    pub fn constant(&mut self, value: Mat) -> Result<NodeId> {
        self.push(Op::Leaf, value, false)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(DiffError::ShapeMismatch {
                expected: va.shape(),
                got: vb.shape(),
            });
        }
        let value = va.add(vb);
        self.push(Op::Add(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(DiffError::ShapeMismatch {
                expected: va.shape(),
                got: vb.shape(),
            });
        }
        let value = va.sub(vb);
        self.push(Op::Sub(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let value = self.value(a).scale(c);
        self.push(Op::Scale(a, c), value, self.needs(a))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(DiffError::ShapeMismatch {
                expected: va.shape(),
                got: vb.shape(),
            });
        }
        let value = va.hadamard(vb);
        self.push(Op::Hadamard(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let inner_a = if ta { va.rows() } else { va.cols() };
        let inner_b = if tb { vb.cols() } else { vb.rows() };
        if inner_a != inner_b {
            return Err(DiffError::ShapeMismatch {
                expected: (inner_a, inner_a),
                got: (inner_b, inner_b),
            });
        }
        let value = matmul(va, vb, ta, tb);
        self.push(
            Op::MatMul { a, b, ta, tb },
            value,
            self.needs(a) || self.needs(b),
        )
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(DiffError::ShapeMismatch {
                expected: (1, va.cols()),
                got: vr.shape(),
            });
        }
        let value = va.add_row_broadcast(vr);
        self.push(Op::AddRow { a, row }, value, self.needs(a) || self.needs(row))
    }

    pub fn activation(&mut self, a: NodeId, kind: Activation) -> Result<NodeId> {
        let mut value = self.value(a).clone();
        for v in value.data_mut() {
            *v = kind.apply(*v);
        }
        self.push(Op::Act(a, kind), value, self.needs(a))
    }

    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).sum_squares();
        self.push(
            Op::SumSquares(a),
            Mat::from_vec(1, 1, vec![s]),
            self.needs(a),
        )
    }

    pub fn slice(&mut self, a: NodeId, r0: usize, c0: usize, nr: usize, nc: usize) -> Result<NodeId> {
        let va = self.value(a);
        if r0 + nr > va.rows() || c0 + nc > va.cols() {
            return Err(DiffError::ShapeMismatch {
                expected: va.shape(),
                got: (r0 + nr, c0 + nc),
            });
        }
        let value = va.block(r0, c0, nr, nc);
        self.push(Op::Slice { a, r0, c0 }, value, self.needs(a))
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let va = self.value(a);
        if rows * cols != va.len() {
            return Err(DiffError::ShapeMismatch {
                expected: va.shape(),
                got: (rows, cols),
            });
        }
        let value = va.reshape(rows, cols);
        self.push(Op::Reshape(a), value, self.needs(a))
    }

    /// Scaling-and-squaring Taylor exponential emitted as tape nodes,
    /// so reverse mode applies mechanically.
    pub fn matrix_exp(&mut self, a: NodeId, terms: usize) -> Result<NodeId> {
        let va = self.value(a);
        if va.rows() != va.cols() {
            return Err(DiffError::ShapeMismatch {
                expected: (va.rows(), va.rows()),
                got: va.shape(),
            });
        }
        let n = va.rows();
        let norm = va.norm_1();
        let s = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as i32
        } else {
            0
        };
        let b = self.scale(a, 0.5f64.powi(s))?;
        let eye = self.constant(Mat::identity(n))?;
        let mut acc = self.add(eye, b)?;
        let mut term = b;
        for k in 2..=terms {
            let prod = self.matmul(term, b, false, false)?;
            term = self.scale(prod, 1.0 / k as f64)?;
            acc = self.add(acc, term)?;
        }
        for _ in 0..s {
            acc = self.matmul(acc, acc, false, false)?;
        }
        Ok(acc)
    }

    /// Reverse pass from a scalar loss node. Returns one gradient slot
    /// per node; only nodes that require gradients are populated.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(DiffError::ShapeMismatch {
                expected: (1, 1),
                got: lv.shape(),
            });
        }
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Mat::from_vec(1, 1, vec![1.0]));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !g.all_finite() {
                return Err(DiffError::NonFinite);
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, &g);
                    self.accumulate(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, &g);
                    self.accumulate(&mut grads, *b, &g.scale(-1.0));
                }
                Op::Scale(a, c) => {
                    self.accumulate(&mut grads, *a, &g.scale(*c));
                }
                Op::Hadamard(a, b) => {
                    self.accumulate(&mut grads, *a, &g.hadamard(self.value(*b)));
                    self.accumulate(&mut grads, *b, &g.hadamard(self.value(*a)));
                }
                Op::MatMul { a, b, ta, tb } => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        // d/dA of op(A) op(B): route the adjoint back
                        // through the transposition pattern.
                        let ga = match (ta, tb) {
                            (false, false) => matmul(&g, vb, false, true),
                            (false, true) => matmul(&g, vb, false, false),
                            (true, false) => matmul(vb, &g, false, true),
                            (true, true) => matmul(vb, &g, true, true),
                        };
                        self.accumulate(&mut grads, *a, &ga);
                    }
                    if self.needs(*b) {
                        let gb = match (ta, tb) {
                            (false, false) => matmul(va, &g, true, false),
                            (false, true) => matmul(&g, va, true, false),
                            (true, false) => matmul(va, &g, false, false),
                            (true, true) => matmul(&g, va, true, true),
                        };
                        self.accumulate(&mut grads, *b, &gb);
                    }
                }
                Op::AddRow { a, row } => {
                    self.accumulate(&mut grads, *a, &g);
                    if self.needs(*row) {
                        let mut rsum = Mat::zeros(1, g.cols());
                        for i in 0..g.rows() {
                            for (o, v) in rsum.row_mut(0).iter_mut().zip(g.row(i)) {
                                *o += v;
                            }
                        }
                        self.accumulate(&mut grads, *row, &rsum);
                    }
                }
                Op::Act(a, kind) => {
                    let mut ga = g.clone();
                    for (gv, &x) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *gv *= kind.derivative(x);
                    }
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::SumSquares(a) => {
                    let ga = self.value(*a).scale(2.0 * g.data()[0]);
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Slice { a, r0, c0 } => {
                    let va = self.value(*a);
                    let mut ga = Mat::zeros(va.rows(), va.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            ga[(r0 + i, c0 + j)] = g[(i, j)];
                        }
                    }
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Reshape(a) => {
                    let va = self.value(*a);
                    self.accumulate(&mut grads, *a, &g.reshape(va.rows(), va.cols()));
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Mat>], target: NodeId, g: &Mat) {
        if !self.needs(target) {
            return;
        }
        match &mut grads[target.0] {
            Some(acc) => acc.axpy(1.0, g),
            slot @ None => *slot = Some(g.clone()),
        }
    }
}

pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Mat> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a node that is known to participate in the loss.
    pub fn require(&self, id: NodeId) -> &Mat {
        self.get(id).expect("node has no gradient")
    }
}
