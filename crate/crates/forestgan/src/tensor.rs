//! Dense tensors and a tape-based reverse-mode differentiation graph.
//!
//! The graph records a fixed vocabulary of operations (affine algebra,
//! pointwise nonlinearities, reductions) plus a single extension point
//! ([`GraphOp`]) for structured layers that need a hand-written backward
//! rule. Everything is `f64`; condition-number measurements downstream are
//! too precision-sensitive for anything less.

use std::fmt;
use std::rc::Rc;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dense n-dimensional value array in row-major order, with an optional
/// gradient slot of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Contract(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::Contract(format!(
                "shape {shape:?} implies {expect} elements, data has {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            grad: None,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
            grad: None,
        }
    }

    /// Build a 2-D tensor from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Contract("from_rows: no rows".into()));
        }
        let w = rows[0].len();
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::Contract("from_rows: ragged rows".into()));
        }
        Tensor::new(vec![rows.len(), w], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        assert_eq!(self.shape.len(), 2, "row() needs a 2-D tensor");
        let w = self.shape[1];
        &self.data[i * w..(i + 1) * w]
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Add `delta` into the gradient slot, allocating zeros first if absent.
    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.data.len());
        let g = self.grad.get_or_insert_with(|| vec![0.0; self.data.len()]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    pub fn ensure_grad(&mut self) {
        self.grad.get_or_insert_with(|| vec![0.0; self.data.len()]);
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }
}

// Checkpoint wire format is a flat {shape, data} object; gradients are
// transient and never serialized.
impl Serialize for Tensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Tensor", 2)?;
        s.serialize_field("shape", &self.shape)?;
        s.serialize_field("data", &self.data)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            shape: Vec<usize>,
            data: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Tensor::new(raw.shape, raw.data).map_err(serde::de::Error::custom)
    }
}

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Structured operation with a hand-written backward rule, recorded on the
/// graph as a single node. Used for layers (e.g. routing-product blends)
/// that would be awkward to express with the primitive vocabulary.
pub trait GraphOp: fmt::Debug {
    fn label(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    /// Returns one gradient buffer per input, each the input's length.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, out_grad: &[f64]) -> Vec<Vec<f64>>;
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    MatMul,
    Add,
    Sub,
    Mul,
    Neg,
    Relu,
    Sigmoid,
    Exp,
    Log,
    Sqrt,
    Clamp { lo: f64, hi: f64 },
    Sum { axis: Option<usize> },
    Mean,
    LogSoftmax,
    Extension(Rc<dyn GraphOp>),
}

impl Op {
    fn label(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Neg => "neg",
            Op::Relu => "relu",
            Op::Sigmoid => "sigmoid",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sqrt => "sqrt",
            Op::Clamp { .. } => "clamp",
            Op::Sum { .. } => "sum",
            Op::Mean => "mean",
            Op::LogSoftmax => "log_softmax",
            Op::Extension(op) => op.label(),
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    tensor: Tensor,
}

/// Tape of recorded operations. Node inputs always reference earlier nodes,
/// so a single reverse sweep visits each node exactly once.
///
/// A graph and its tensors are confined to one thread; independent graphs
/// may run in parallel freely.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    check_finite: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// Finite checks default to debug builds only; they are a diagnostic,
    /// not an always-on cost.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            check_finite: cfg!(debug_assertions),
        }
    }

    pub fn with_finite_checks(checks: bool) -> Self {
        Graph {
            nodes: Vec::new(),
            check_finite: checks,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    pub fn grad_of(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].tensor.grad()
    }

    /// Record an externally supplied tensor (data batch or parameter copy).
    pub fn input(&mut self, tensor: Tensor) -> Result<NodeId> {
        self.push(Op::Input, vec![], tensor)
    }

    pub fn constant(&mut self, value: f64) -> Result<NodeId> {
        self.input(Tensor::scalar(value))
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, tensor: Tensor) -> Result<NodeId> {
        if self.check_finite && !tensor.is_all_finite() {
            return Err(Error::NonFinite {
                op: op.label().to_string(),
            });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, tensor });
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].tensor, &self.nodes[b.0].tensor);
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_nn(ta.data(), tb.data(), m, k, n);
        self.push(Op::MatMul, vec![a, b], Tensor::new(vec![m, n], out)?)
    }

    fn binary(
        &mut self,
        op: Op,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].tensor, &self.nodes[b.0].tensor);
        let out_shape = broadcast_shape(ta.shape(), tb.shape()).ok_or(Error::ShapeMismatch {
            op: op.label(),
            lhs: ta.shape().to_vec(),
            rhs: tb.shape().to_vec(),
        })?;
        let ea = broadcast_to(ta.data(), ta.shape(), &out_shape);
        let eb = broadcast_to(tb.data(), tb.shape(), &out_shape);
        let data = ea.iter().zip(&eb).map(|(x, y)| f(*x, *y)).collect();
        self.push(op, vec![a, b], Tensor::new(out_shape, data)?)
    }

    /// Elementwise with broadcasting over trailing axes (extent-1 stretch).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Mul, a, b, |x, y| x * y)
    }

    fn unary(&mut self, op: Op, x: NodeId, f: impl Fn(f64) -> f64) -> Result<NodeId> {
        let t = &self.nodes[x.0].tensor;
        let data = t.data().iter().map(|&v| f(v)).collect();
        let shape = t.shape().to_vec();
        self.push(op, vec![x], Tensor::new(shape, data)?)
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Neg, x, |v| -v)
    }

    /// Subgradient at 0 is 0. NaN propagates (`f64::max` would eat it,
    /// hiding poisoned activations from downstream divergence checks).
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Relu, x, |v| if v > 0.0 || v.is_nan() { v } else { 0.0 })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Sigmoid, x, sigmoid_scalar)
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Exp, x, f64::exp)
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        if let Some(v) = self.nodes[x.0].tensor.data().iter().find(|v| **v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {v}"),
            });
        }
        self.unary(Op::Log, x, f64::ln)
    }

    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        if let Some(v) = self.nodes[x.0].tensor.data().iter().find(|v| **v < 0.0) {
            return Err(Error::Domain {
                op: "sqrt",
                detail: format!("negative input {v}"),
            });
        }
        self.unary(Op::Sqrt, x, f64::sqrt)
    }

    /// Pointwise clamp; gradient is zero outside the open interval.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.unary(Op::Clamp { lo, hi }, x, |v| v.clamp(lo, hi))
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let k = self.constant(c)?;
        self.mul(x, k)
    }

    /// Sum over all elements (`axis: None`, scalar result) or along one axis.
    pub fn sum(&mut self, x: NodeId, axis: Option<usize>) -> Result<NodeId> {
        let t = &self.nodes[x.0].tensor;
        match axis {
            None => {
                let s: f64 = t.data().iter().sum();
                self.push(Op::Sum { axis: None }, vec![x], Tensor::scalar(s))
            }
            Some(ax) => {
                let shape = t.shape().to_vec();
                if ax >= shape.len() {
                    return Err(Error::Contract(format!(
                        "sum axis {ax} out of bounds for shape {shape:?}"
                    )));
                }
                let mut out_shape = shape.clone();
                out_shape.remove(ax);
                if out_shape.is_empty() {
                    out_shape.push(1);
                }
                let out = reduce_axis(t.data(), &shape, ax);
                self.push(
                    Op::Sum { axis: Some(ax) },
                    vec![x],
                    Tensor::new(out_shape, out)?,
                )
            }
        }
    }

    /// Mean over all elements; scalar result.
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.nodes[x.0].tensor;
        let s: f64 = t.data().iter().sum();
        let m = s / t.len() as f64;
        self.push(Op::Mean, vec![x], Tensor::scalar(m))
    }

    /// Numerically stable log-softmax over the last axis of a 2-D tensor.
    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.nodes[x.0].tensor;
        if t.shape().len() != 2 {
            return Err(Error::Contract(format!(
                "log_softmax needs a 2-D tensor, got shape {:?}",
                t.shape()
            )));
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &t.data()[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for c in 0..cols {
                out[r * cols + c] = row[c] - lse;
            }
        }
        self.push(Op::LogSoftmax, vec![x], Tensor::new(vec![rows, cols], out)?)
    }

    /// Record a structured operation with its own backward rule.
    pub fn apply(&mut self, op: Rc<dyn GraphOp>, inputs: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = inputs.iter().map(|id| &self.nodes[id.0].tensor).collect();
        let out = op.forward(&tensors)?;
        self.push(Op::Extension(op), inputs.to_vec(), out)
    }

    /// Reverse sweep from a scalar loss, accumulating dL/dx into the
    /// gradient slot of every input (leaf) tensor. Calling twice without
    /// clearing grads accumulates.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let adjoints = self.adjoints(loss)?;
        for (node, adj) in self.nodes.iter_mut().zip(adjoints) {
            if matches!(node.op, Op::Input) {
                match adj {
                    Some(a) => node.tensor.accumulate_grad(&a),
                    None => node.tensor.ensure_grad(),
                }
            }
        }
        Ok(())
    }

    /// Gradients of `loss` with respect to the requested nodes, without
    /// touching any stored gradient state. Nodes the loss does not depend on
    /// get exact zeros.
    pub fn grads_wrt(&self, loss: NodeId, wrt: &[NodeId]) -> Result<Vec<Vec<f64>>> {
        let adjoints = self.adjoints(loss)?;
        Ok(wrt
            .iter()
            .map(|id| {
                adjoints[id.0]
                    .clone()
                    .unwrap_or_else(|| vec![0.0; self.nodes[id.0].tensor.len()])
            })
            .collect())
    }

    fn adjoints(&self, loss: NodeId) -> Result<Vec<Option<Vec<f64>>>> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.tensor.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.tensor.shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let g = match adj[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            let contributions = self.input_grads(node, &g);
            for (input, delta) in node.inputs.iter().zip(contributions) {
                let slot = &mut adj[input.0];
                match slot {
                    Some(acc) => {
                        for (a, d) in acc.iter_mut().zip(&delta) {
                            *a += d;
                        }
                    }
                    None => *slot = Some(delta),
                }
            }
            adj[i] = Some(g);
        }
        Ok(adj)
    }

    fn input_grads(&self, node: &Node, g: &[f64]) -> Vec<Vec<f64>> {
        let t = |id: NodeId| &self.nodes[id.0].tensor;
        match &node.op {
            Op::Input => vec![],
            Op::MatMul => {
                let (a, b) = (t(node.inputs[0]), t(node.inputs[1]));
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let da = matmul_nt(g, b.data(), m, n, k);
                let db = matmul_tn(a.data(), g, m, k, n);
                vec![da, db]
            }
            Op::Add | Op::Sub | Op::Mul => {
                let (a, b) = (t(node.inputs[0]), t(node.inputs[1]));
                let out_shape = node.tensor.shape();
                let (ga, gb): (Vec<f64>, Vec<f64>) = match node.op {
                    Op::Add => (g.to_vec(), g.to_vec()),
                    Op::Sub => (g.to_vec(), g.iter().map(|v| -v).collect()),
                    Op::Mul => {
                        let ea = broadcast_to(a.data(), a.shape(), out_shape);
                        let eb = broadcast_to(b.data(), b.shape(), out_shape);
                        (
                            g.iter().zip(&eb).map(|(gi, bi)| gi * bi).collect(),
                            g.iter().zip(&ea).map(|(gi, ai)| gi * ai).collect(),
                        )
                    }
                    _ => unreachable!(),
                };
                vec![
                    reduce_to_shape(&ga, out_shape, a.shape()),
                    reduce_to_shape(&gb, out_shape, b.shape()),
                ]
            }
            Op::Neg => vec![g.iter().map(|v| -v).collect()],
            Op::Relu => {
                let x = t(node.inputs[0]);
                vec![g
                    .iter()
                    .zip(x.data())
                    .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                    .collect()]
            }
            Op::Sigmoid => {
                let s = node.tensor.data();
                vec![g.iter().zip(s).map(|(gi, si)| gi * si * (1.0 - si)).collect()]
            }
            Op::Exp => {
                let y = node.tensor.data();
                vec![g.iter().zip(y).map(|(gi, yi)| gi * yi).collect()]
            }
            Op::Log => {
                let x = t(node.inputs[0]);
                vec![g.iter().zip(x.data()).map(|(gi, xi)| gi / xi).collect()]
            }
            Op::Sqrt => {
                let y = node.tensor.data();
                vec![g.iter().zip(y).map(|(gi, yi)| gi / (2.0 * yi)).collect()]
            }
            Op::Clamp { lo, hi } => {
                let x = t(node.inputs[0]);
                vec![g
                    .iter()
                    .zip(x.data())
                    .map(|(gi, xi)| if *xi > *lo && *xi < *hi { *gi } else { 0.0 })
                    .collect()]
            }
            Op::Sum { axis } => {
                let x = t(node.inputs[0]);
                match axis {
                    None => vec![vec![g[0]; x.len()]],
                    Some(ax) => vec![spread_axis(g, x.shape(), *ax)],
                }
            }
            Op::Mean => {
                let x = t(node.inputs[0]);
                let n = x.len() as f64;
                vec![vec![g[0] / n; x.len()]]
            }
            Op::LogSoftmax => {
                let y = node.tensor.data();
                let cols = node.tensor.shape()[1];
                let rows = node.tensor.shape()[0];
                let mut dx = vec![0.0; y.len()];
                for r in 0..rows {
                    let gsum: f64 = g[r * cols..(r + 1) * cols].iter().sum();
                    for c in 0..cols {
                        let idx = r * cols + c;
                        dx[idx] = g[idx] - y[idx].exp() * gsum;
                    }
                }
                vec![dx]
            }
            Op::Extension(op) => {
                let inputs: Vec<&Tensor> = node.inputs.iter().map(|id| t(*id)).collect();
                op.backward(&inputs, &node.tensor, g)
            }
        }
    }
}

/// Sigmoid with a sign branch so large |x| neither overflows nor loses
/// precision.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    c
}

/// a[m×n] · b[k×n]ᵀ → [m×k]
fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            c[i * k + p] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    c
}

/// a[m×k]ᵀ · b[m×n] → [k×n]
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[i * n..(i + 1) * n];
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    c
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let ndim = a.len().max(b.len());
    let mut out = vec![0; ndim];
    for i in 0..ndim {
        let da = if i < ndim - a.len() { 1 } else { a[i - (ndim - a.len())] };
        let db = if i < ndim - b.len() { 1 } else { b[i - (ndim - b.len())] };
        if da != db && da != 1 && db != 1 {
            return None;
        }
        out[i] = da.max(db);
    }
    Some(out)
}

fn pad_shape(shape: &[usize], ndim: usize) -> Vec<usize> {
    let mut p = vec![1; ndim];
    p[ndim - shape.len()..].copy_from_slice(shape);
    p
}

/// Materialize `data` (of `shape`) stretched to `out_shape`.
fn broadcast_to(data: &[f64], shape: &[usize], out_shape: &[usize]) -> Vec<f64> {
    if shape == out_shape {
        return data.to_vec();
    }
    let ndim = out_shape.len();
    let padded = pad_shape(shape, ndim);
    let total: usize = out_shape.iter().product();
    let mut out = vec![0.0; total];
    let mut coords = vec![0usize; ndim];
    for (flat, slot) in out.iter_mut().enumerate() {
        let mut rem = flat;
        for d in (0..ndim).rev() {
            coords[d] = rem % out_shape[d];
            rem /= out_shape[d];
        }
        let mut src = 0;
        let mut stride = 1;
        for d in (0..ndim).rev() {
            let c = if padded[d] == 1 { 0 } else { coords[d] };
            src += c * stride;
            stride *= padded[d];
        }
        *slot = data[src];
    }
    out
}

/// Sum a gradient of `grad_shape` back down to `target_shape` (undo
/// broadcasting).
fn reduce_to_shape(grad: &[f64], grad_shape: &[usize], target_shape: &[usize]) -> Vec<f64> {
    if grad_shape == target_shape {
        return grad.to_vec();
    }
    let ndim = grad_shape.len();
    let padded = pad_shape(target_shape, ndim);
    let target_len: usize = target_shape.iter().product();
    let mut out = vec![0.0; target_len];
    let mut coords = vec![0usize; ndim];
    for (flat, g) in grad.iter().enumerate() {
        let mut rem = flat;
        for d in (0..ndim).rev() {
            coords[d] = rem % grad_shape[d];
            rem /= grad_shape[d];
        }
        let mut dst = 0;
        let mut stride = 1;
        for d in (0..ndim).rev() {
            let c = if padded[d] == 1 { 0 } else { coords[d] };
            dst += c * stride;
            stride *= padded[d];
        }
        out[dst] += g;
    }
    out
}

fn reduce_axis(data: &[f64], shape: &[usize], ax: usize) -> Vec<f64> {
    let outer: usize = shape[..ax].iter().product();
    let axis = shape[ax];
    let inner: usize = shape[ax + 1..].iter().product();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for a in 0..axis {
            for i in 0..inner {
                out[o * inner + i] += data[(o * axis + a) * inner + i];
            }
        }
    }
    out
}

fn spread_axis(grad: &[f64], shape: &[usize], ax: usize) -> Vec<f64> {
    let outer: usize = shape[..ax].iter().product();
    let axis = shape[ax];
    let inner: usize = shape[ax + 1..].iter().product();
    let mut out = vec![0.0; outer * axis * inner];
    for o in 0..outer {
        for a in 0..axis {
            for i in 0..inner {
                out[(o * axis + a) * inner + i] = grad[o * inner + i];
            }
        }
    }
    out
}
