//! Reverse-mode differentiation over an append-only tape.
//!
//! Every operation appends a node holding its value and the indices of its
//! inputs. [`Tape::backward`] walks the nodes in reverse, so accumulation
//! order is fixed by construction order and results are reproducible.

use std::rc::Rc;

use super::tensor::{gemm, Layout, Tensor};
use super::NeuroError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a + b` with `b` a `1 × C` row broadcast over the rows of `a`.
    AddRow(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    /// Block-diagonal product: `ops` is `B × N × N` (not differentiated), `x`
    /// is `(B·N) × C`; block `b` of the result is `ops[b] · x[b]`.
    BlockMatMul { ops: Rc<Tensor>, x: Var },
    /// Right-pads columns with zeros up to the given width.
    PadCols(Var, usize),
    /// Mean of squared differences, a scalar.
    Mse(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for nodes the loss does not depend on.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(what: &str, a: &Tensor, b: &Tensor) -> NeuroError {
    NeuroError::ShapeMismatch(format!("{what}: {:?} vs {:?}", a.shape(), b.shape()))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable leaf (parameter or input whose gradient is wanted).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NeuroError> {
        let v = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) -> Result<(), NeuroError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(what, ta, tb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NeuroError> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NeuroError> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NeuroError> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Mul(a, b), ng))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NeuroError> {
        let (ta, tb) = (self.value(a), self.value(row));
        if ta.shape().len() != 2 || tb.len() != ta.cols() {
            return Err(shape_err("add_row", ta, tb));
        }
        let c = ta.cols();
        let mut v = ta.clone();
        for (k, x) in v.data_mut().iter_mut().enumerate() {
            *x += tb.data()[k % c];
        }
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(v, Op::AddRow(a, row), ng))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 - x);
        let ng = self.ng(a);
        self.push(v, Op::OneMinus(a), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn block_matmul(&mut self, ops: Rc<Tensor>, x: Var) -> Result<Var, NeuroError> {
        let tx = self.value(x);
        let s = ops.shape();
        if s.len() != 3 || s[1] != s[2] || tx.shape().len() != 2 || tx.rows() != s[0] * s[1] {
            return Err(shape_err("block_matmul", &ops, tx));
        }
        let (b, n, c) = (s[0], s[1], tx.cols());
        let mut out = vec![0.0; b * n * c];
        for k in 0..b {
            gemm(
                n,
                n,
                c,
                &ops.data()[k * n * n..],
                Layout::Normal(n),
                &tx.data()[k * n * c..],
                Layout::Normal(c),
                &mut out[k * n * c..],
            );
        }
        let v = Tensor::matrix(b * n, c, out)?;
        let ng = self.ng(x);
        Ok(self.push(v, Op::BlockMatMul { ops, x }, ng))
    }

    pub fn pad_cols(&mut self, a: Var, width: usize) -> Result<Var, NeuroError> {
        let ta = self.value(a);
        if ta.shape().len() != 2 || ta.cols() > width {
            return Err(NeuroError::ShapeMismatch(format!("cannot pad {:?} to {width} columns", ta.shape())));
        }
        let (r, c) = (ta.rows(), ta.cols());
        let mut out = vec![0.0; r * width];
        for i in 0..r {
            out[i * width..i * width + c].copy_from_slice(&ta.data()[i * c..(i + 1) * c]);
        }
        let v = Tensor::matrix(r, width, out)?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::PadCols(a, width), ng))
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, NeuroError> {
        self.same_shape("mse", pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.len().max(1) as f64;
        let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let ng = self.ng(pred) || self.ng(target);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(pred, target), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    /// Gradients of a scalar node with respect to every node that needs one.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NeuroError> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(NeuroError::GraphNotRecorded);
        };
        if node.value.len() != 1 {
            return Err(NeuroError::ShapeMismatch(format!("loss must be scalar, got {:?}", node.value.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(node.value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let mut acc = |v: Var, contrib: Tensor| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    if self.ng(*a) {
                        let mut da = vec![0.0; m * k];
                        gemm(m, n, k, g.data(), Layout::Normal(n), tb.data(), Layout::Transposed(n), &mut da);
                        acc(*a, Tensor::matrix(m, k, da)?);
                    }
                    if self.ng(*b) {
                        let mut db = vec![0.0; k * n];
                        gemm(k, m, n, ta.data(), Layout::Transposed(k), g.data(), Layout::Normal(n), &mut db);
                        acc(*b, Tensor::matrix(k, n, db)?);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|x| -x));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    acc(*a, g.zip_map(tb, |x, y| x * y));
                    acc(*b, g.zip_map(ta, |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    let tr = self.value(*row);
                    let c = tr.len();
                    let mut dr = vec![0.0; c];
                    for (k, x) in g.data().iter().enumerate() {
                        dr[k % c] += x;
                    }
                    acc(*row, Tensor::from_vec(tr.shape(), dr)?);
                    acc(*a, g);
                }
                Op::OneMinus(a) => acc(*a, g.map(|x| -x)),
                Op::Scale(a, c) => acc(*a, g.map(|x| x * c)),
                Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |x, s| x * s * (1.0 - s))),
                Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, t| x * (1.0 - t * t))),
                Op::Relu(a) => acc(*a, g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 })),
                Op::BlockMatMul { ops, x } => {
                    let s = ops.shape();
                    let (b, n) = (s[0], s[1]);
                    let c = g.cols();
                    let mut dx = vec![0.0; b * n * c];
                    for k in 0..b {
                        gemm(
                            n,
                            n,
                            c,
                            &ops.data()[k * n * n..],
                            Layout::Transposed(n),
                            &g.data()[k * n * c..],
                            Layout::Normal(c),
                            &mut dx[k * n * c..],
                        );
                    }
                    acc(*x, Tensor::matrix(b * n, c, dx)?);
                }
                Op::PadCols(a, width) => {
                    let ta = self.value(*a);
                    let (r, c) = (ta.rows(), ta.cols());
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        da[i * c..(i + 1) * c].copy_from_slice(&g.data()[i * width..i * width + c]);
                    }
                    acc(*a, Tensor::matrix(r, c, da)?);
                }
                Op::Mse(p, t) => {
                    let (tp, tt) = (self.value(*p), self.value(*t));
                    let scale = 2.0 * g.item() / tp.len().max(1) as f64;
                    let diff = tp.zip_map(tt, |a, b| (a - b) * scale);
                    acc(*t, diff.map(|x| -x));
                    acc(*p, diff);
                }
                Op::Sum(a) => {
                    let ta = self.value(*a);
                    acc(*a, Tensor::full(ta.shape(), g.item()));
                }
            }
        }
        Ok(Gradients { grads })
    }
}
