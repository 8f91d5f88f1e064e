//! Record-replay reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive applied to a [`Var`] that depends on a
//! watched parameter. Nodes are appended in evaluation order, so the node
//! list is already topologically sorted and [`Tape::backward`] walks it once
//! in reverse.
//!
//! An inference tape (`Tape::inference()`) records nothing and lets
//! intermediate values drop as soon as the caller releases them.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::element::Element;
use crate::error::{contract, Result};
use crate::ops;
use crate::tensor::Tensor;

/// A value flowing through a tape, optionally linked to its recording node.
#[derive(Clone, Debug)]
pub struct Var<T> {
    value: Tensor<T>,
    node: Option<usize>,
}

impl<T: Element> Var<T> {
    /// A value that never receives gradient.
    pub fn constant(value: Tensor<T>) -> Self {
        Self { value, node: None }
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn into_value(self) -> Tensor<T> {
        self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }
}

enum Op<T> {
    Leaf,
    MatMul { a: Tensor<T>, b: Tensor<T> },
    BatchedMatMul { a: Tensor<T>, b: Tensor<T>, transpose_b: bool },
    Linear { x: Tensor<T>, w: Tensor<T> },
    Add,
    Sub,
    Mul { a: Tensor<T>, b: Tensor<T> },
    Scale(T),
    AddCyclic { period: usize },
    Softmax { y: Tensor<T> },
    LayerNorm { xhat: Vec<T>, rstd: Vec<T>, gamma: Tensor<T> },
    Gelu { x: Tensor<T> },
    Relu { x: Tensor<T> },
    Abs { x: Tensor<T> },
    Conv { x: Tensor<T>, k: Tensor<T>, depthwise: bool },
    Gather { index: Arc<[usize]>, src_len: usize },
    Concat { widths: Vec<usize> },
    Reshape,
    Sum,
}

struct Node<T> {
    op: Op<T>,
    inputs: Vec<Option<usize>>,
    /// Shapes of each input, for materializing gradients.
    input_shapes: Vec<Vec<usize>>,
    name: Option<String>,
}

/// Gradient tape. Single-writer: record and replay from one thread.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    recording: bool,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every watched parameter.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    by_node: HashMap<usize, Tensor<T>>,
    by_name: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        var.node.and_then(|n| self.by_node.get(&n))
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.by_name.get(name)
    }

    /// Named gradients in lexicographic order.
    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }
}

impl<T: Element> Tape<T> {
    /// A recording tape.
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            recording: true,
        }
    }

    /// A tape that evaluates without recording anything.
    pub fn inference() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a parameter whose gradient [`Tape::backward`] reports.
    pub fn watch(&self, name: impl Into<String>, value: Tensor<T>) -> Var<T> {
        if !self.recording {
            return Var::constant(value);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: Op::Leaf,
            inputs: vec![],
            input_shapes: vec![value.shape().to_vec()],
            name: Some(name.into()),
        });
        Var {
            value,
            node: Some(nodes.len() - 1),
        }
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<T> {
        Var::constant(value)
    }

    fn record(&self, value: Tensor<T>, op: impl FnOnce() -> Op<T>, inputs: &[&Var<T>]) -> Var<T> {
        if !self.recording || inputs.iter().all(|v| v.node.is_none()) {
            return Var::constant(value);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: op(),
            inputs: inputs.iter().map(|v| v.node).collect(),
            input_shapes: inputs.iter().map(|v| v.shape().to_vec()).collect(),
            name: None,
        });
        Var {
            value,
            node: Some(nodes.len() - 1),
        }
    }

    pub fn matmul(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let y = ops::matmul(&a.value, &b.value)?;
        Ok(self.record(
            y,
            || Op::MatMul {
                a: a.value.clone(),
                b: b.value.clone(),
            },
            &[a, b],
        ))
    }

    pub fn batched_matmul(&self, a: &Var<T>, b: &Var<T>, transpose_b: bool) -> Result<Var<T>> {
        let y = ops::batched_matmul(&a.value, &b.value, transpose_b)?;
        Ok(self.record(
            y,
            || Op::BatchedMatMul {
                a: a.value.clone(),
                b: b.value.clone(),
                transpose_b,
            },
            &[a, b],
        ))
    }

    pub fn linear(&self, x: &Var<T>, w: &Var<T>, b: Option<&Var<T>>) -> Result<Var<T>> {
        let y = ops::linear(&x.value, &w.value, b.map(|b| &b.value))?;
        let op = || Op::Linear {
            x: x.value.clone(),
            w: w.value.clone(),
        };
        Ok(match b {
            Some(b) => self.record(y, op, &[x, w, b]),
            None => self.record(y, op, &[x, w]),
        })
    }

    pub fn add(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let y = ops::add(&a.value, &b.value)?;
        Ok(self.record(y, || Op::Add, &[a, b]))
    }

    pub fn sub(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let y = ops::sub(&a.value, &b.value)?;
        Ok(self.record(y, || Op::Sub, &[a, b]))
    }

    pub fn mul(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let y = ops::mul(&a.value, &b.value)?;
        Ok(self.record(
            y,
            || Op::Mul {
                a: a.value.clone(),
                b: b.value.clone(),
            },
            &[a, b],
        ))
    }

    pub fn scale(&self, a: &Var<T>, s: T) -> Var<T> {
        self.record(ops::scale(&a.value, s), || Op::Scale(s), &[a])
    }

    /// `a + b` with `b` repeated over `a`, see [`ops::add_cyclic`].
    pub fn add_cyclic(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let y = ops::add_cyclic(&a.value, &b.value)?;
        let period = b.value.len();
        Ok(self.record(y, || Op::AddCyclic { period }, &[a, b]))
    }

    pub fn softmax_lastdim(&self, x: &Var<T>) -> Var<T> {
        let y = ops::softmax_lastdim(&x.value);
        let saved = y.clone();
        self.record(y, || Op::Softmax { y: saved }, &[x])
    }

    pub fn layer_norm(&self, x: &Var<T>, gamma: &Var<T>, beta: &Var<T>, eps: T) -> Result<Var<T>> {
        let y = ops::layer_norm(&x.value, &gamma.value, &beta.value, eps)?;
        Ok(self.record(
            y,
            || {
                let (xhat, rstd) = ops::layer_norm_stats(&x.value, eps);
                Op::LayerNorm {
                    xhat,
                    rstd,
                    gamma: gamma.value.clone(),
                }
            },
            &[x, gamma, beta],
        ))
    }

    pub fn gelu(&self, x: &Var<T>) -> Var<T> {
        self.record(ops::gelu(&x.value), || Op::Gelu { x: x.value.clone() }, &[x])
    }

    pub fn relu(&self, x: &Var<T>) -> Var<T> {
        self.record(ops::relu(&x.value), || Op::Relu { x: x.value.clone() }, &[x])
    }

    pub fn abs(&self, x: &Var<T>) -> Var<T> {
        self.record(x.value.map(T::abs), || Op::Abs { x: x.value.clone() }, &[x])
    }

    pub fn conv2d_3x3(&self, x: &Var<T>, k: &Var<T>, b: &Var<T>, depthwise: bool) -> Result<Var<T>> {
        let y = ops::conv2d_3x3(&x.value, &k.value, &b.value, depthwise)?;
        Ok(self.record(
            y,
            || Op::Conv {
                x: x.value.clone(),
                k: k.value.clone(),
                depthwise,
            },
            &[x, k, b],
        ))
    }

    /// `out[i] = x[index[i]]` reshaped to `shape`; the backbone of every
    /// layout permutation (partition, merge, shifts, padding, head slicing,
    /// pixel shuffle).
    pub fn gather(&self, x: &Var<T>, shape: &[usize], index: Arc<[usize]>) -> Result<Var<T>> {
        let y = ops::gather(&x.value, shape, &index)?;
        let src_len = x.value.len();
        Ok(self.record(y, || Op::Gather { index, src_len }, &[x]))
    }

    pub fn pixel_shuffle(&self, x: &Var<T>, r: usize) -> Result<Var<T>> {
        let (shape, index) = ops::pixel_shuffle_index(x.shape(), r)?;
        self.gather(x, &shape, index.into())
    }

    pub fn concat_lastdim(&self, parts: &[&Var<T>]) -> Result<Var<T>> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|p| &p.value).collect();
        let y = ops::concat_lastdim(&values)?;
        let widths = values.iter().map(|v| v.last_dim()).collect();
        Ok(self.record(y, || Op::Concat { widths }, parts))
    }

    pub fn reshape(&self, x: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
        let y = x.value.reshape(shape)?;
        Ok(self.record(y, || Op::Reshape, &[x]))
    }

    pub fn sum(&self, x: &Var<T>) -> Var<T> {
        self.record(Tensor::scalar(x.value.sum()), || Op::Sum, &[x])
    }

    pub fn mean(&self, x: &Var<T>) -> Var<T> {
        let n = T::from_f64(x.value.len() as f64);
        let s = self.sum(x);
        self.scale(&s, T::one() / n)
    }

    /// Mean absolute error.
    pub fn l1_loss(&self, pred: &Var<T>, target: &Var<T>) -> Result<Var<T>> {
        let d = self.sub(pred, target)?;
        let a = self.abs(&d);
        Ok(self.mean(&a))
    }

    /// Replays the tape backward from a scalar `loss`.
    ///
    /// Every watched parameter gets an entry; parameters that do not reach
    /// the loss get an all-zero gradient.
    pub fn backward(&self, loss: &Var<T>) -> Result<Gradients<T>> {
        if loss.value.len() != 1 {
            return Err(contract(
                "backward",
                format!("loss must be scalar, got shape {:?}", loss.shape()),
            ));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(nodes.len(), || None);
        if let Some(root) = loss.node {
            grads[root] = Some(vec![T::one()]);
            for i in (0..=root).rev() {
                let Some(g) = grads[i].take() else { continue };
                let node = &nodes[i];
                if let Op::Leaf = node.op {
                    grads[i] = Some(g);
                    continue;
                }
                let local = backward_node(node, &g);
                for ((input, dg), _) in node.inputs.iter().zip(local).zip(&node.input_shapes) {
                    let (Some(j), Some(dg)) = (input, dg) else { continue };
                    match &mut grads[*j] {
                        Some(acc) => {
                            for (a, d) in acc.iter_mut().zip(&dg) {
                                *a = *a + *d;
                            }
                        }
                        slot @ None => *slot = Some(dg),
                    }
                }
            }
        }
        let mut by_node = HashMap::new();
        let mut by_name = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                continue;
            }
            let shape = &node.input_shapes[0];
            let g = match grads[i].take() {
                Some(g) => Tensor::new_unchecked(shape.clone(), g),
                None => Tensor::new_unchecked(shape.clone(), vec![T::zero(); shape.iter().product()]),
            };
            if let Some(name) = &node.name {
                by_name.insert(name.clone(), g.clone());
            }
            by_node.insert(i, g);
        }
        Ok(Gradients { by_node, by_name })
    }
}

fn backward_node<T: Element>(node: &Node<T>, g: &[T]) -> Vec<Option<Vec<T>>> {
    let shapes = &node.input_shapes;
    let len = |i: usize| shapes[i].iter().product::<usize>();
    match &node.op {
        Op::Leaf => vec![],
        Op::MatMul { a, b } => {
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut da = vec![T::zero(); m * k];
            ops::gemm_bt(g, b.data(), &mut da, m, n, k);
            let mut db = vec![T::zero(); k * n];
            ops::gemm_at(a.data(), g, &mut db, m, k, n);
            vec![Some(da), Some(db)]
        }
        Op::BatchedMatMul { a, b, transpose_b } => {
            let (batch, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
            let n = if *transpose_b { b.shape()[1] } else { b.shape()[2] };
            let mut da = vec![T::zero(); a.len()];
            let mut db = vec![T::zero(); b.len()];
            for i in 0..batch {
                let gb = &g[i * m * n..(i + 1) * m * n];
                let ab = &a.data()[i * m * k..(i + 1) * m * k];
                let bb = &b.data()[i * k * n..(i + 1) * k * n];
                let dab = &mut da[i * m * k..(i + 1) * m * k];
                let dbb = &mut db[i * k * n..(i + 1) * k * n];
                if *transpose_b {
                    ops::gemm(gb, bb, dab, m, n, k);
                    ops::gemm_at(gb, ab, dbb, m, n, k);
                } else {
                    ops::gemm_bt(gb, bb, dab, m, n, k);
                    ops::gemm_at(ab, gb, dbb, m, k, n);
                }
            }
            vec![Some(da), Some(db)]
        }
        Op::Linear { x, w } => {
            let (cin, cout) = (w.shape()[0], w.shape()[1]);
            let rows = x.len() / cin;
            let mut dx = vec![T::zero(); x.len()];
            ops::gemm_bt(g, w.data(), &mut dx, rows, cout, cin);
            let mut dw = vec![T::zero(); w.len()];
            ops::gemm_at(x.data(), g, &mut dw, rows, cin, cout);
            let mut out = vec![Some(dx), Some(dw)];
            if node.inputs.len() == 3 {
                let mut db = vec![T::zero(); cout];
                for row in g.chunks(cout) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d = *d + v;
                    }
                }
                out.push(Some(db));
            }
            out
        }
        Op::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
        Op::Sub => vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())],
        Op::Mul { a, b } => vec![
            Some(g.iter().zip(b.data()).map(|(&x, &y)| x * y).collect()),
            Some(g.iter().zip(a.data()).map(|(&x, &y)| x * y).collect()),
        ],
        Op::Scale(s) => vec![Some(g.iter().map(|&v| v * *s).collect())],
        Op::AddCyclic { period } => {
            let mut db = vec![T::zero(); *period];
            for chunk in g.chunks(*period) {
                for (d, &v) in db.iter_mut().zip(chunk) {
                    *d = *d + v;
                }
            }
            vec![Some(g.to_vec()), Some(db)]
        }
        Op::Softmax { y } => {
            let n = y.last_dim();
            let mut dx = Vec::with_capacity(g.len());
            for (gr, yr) in g.chunks(n).zip(y.data().chunks(n)) {
                let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                dx.extend(gr.iter().zip(yr).map(|(&a, &b)| b * (a - dot)));
            }
            vec![Some(dx)]
        }
        Op::LayerNorm { xhat, rstd, gamma } => {
            let c = gamma.len();
            let cf = T::from_f64(c as f64);
            let mut dx = Vec::with_capacity(g.len());
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            for ((gr, xr), &r) in g.chunks(c).zip(xhat.chunks(c)).zip(rstd) {
                let mut mean_d = T::zero();
                let mut mean_dx = T::zero();
                for j in 0..c {
                    dgamma[j] = dgamma[j] + gr[j] * xr[j];
                    dbeta[j] = dbeta[j] + gr[j];
                    let d = gr[j] * gamma.data()[j];
                    mean_d = mean_d + d;
                    mean_dx = mean_dx + d * xr[j];
                }
                mean_d = mean_d / cf;
                mean_dx = mean_dx / cf;
                for j in 0..c {
                    let d = gr[j] * gamma.data()[j];
                    dx.push(r * (d - mean_d - xr[j] * mean_dx));
                }
            }
            vec![Some(dx), Some(dgamma), Some(dbeta)]
        }
        Op::Gelu { x } => vec![Some(
            g.iter()
                .zip(x.data())
                .map(|(&d, &v)| d * ops::gelu_grad_scalar(v))
                .collect(),
        )],
        Op::Relu { x } => vec![Some(
            g.iter()
                .zip(x.data())
                .map(|(&d, &v)| if v > T::zero() { d } else { T::zero() })
                .collect(),
        )],
        Op::Abs { x } => vec![Some(
            g.iter()
                .zip(x.data())
                .map(|(&d, &v)| {
                    if v > T::zero() {
                        d
                    } else if v < T::zero() {
                        -d
                    } else {
                        T::zero()
                    }
                })
                .collect(),
        )],
        Op::Conv { x, k, depthwise } => {
            let gt = Tensor::new_unchecked(conv_out_shape(x, k, *depthwise), g.to_vec());
            let (dx, dk, db) = ops::conv2d_3x3_backward(x, k, &gt, *depthwise);
            vec![Some(dx), Some(dk), Some(db)]
        }
        Op::Gather { index, src_len } => {
            let mut dx = vec![T::zero(); *src_len];
            ops::scatter_add(g, index, &mut dx);
            vec![Some(dx)]
        }
        Op::Concat { widths } => {
            let total: usize = widths.iter().sum();
            let rows = g.len() / total;
            let mut outs: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(rows * w)).collect();
            for row in g.chunks(total) {
                let mut off = 0;
                for (o, &w) in outs.iter_mut().zip(widths) {
                    o.extend_from_slice(&row[off..off + w]);
                    off += w;
                }
            }
            outs.into_iter().map(Some).collect()
        }
        Op::Reshape => vec![Some(g.to_vec())],
        Op::Sum => vec![Some(vec![g[0]; len(0)])],
    }
}

fn conv_out_shape<T: Element>(x: &Tensor<T>, k: &Tensor<T>, depthwise: bool) -> Vec<usize> {
    let s = x.shape();
    let cout = if depthwise { s[3] } else { k.shape()[3] };
    vec![s[0], s[1], s[2], cout]
}
