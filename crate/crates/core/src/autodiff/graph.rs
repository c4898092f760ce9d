use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Differentiable operation kinds.
///
/// Shape rules:
/// - `Add`, `Sub`, `Mul`: trailing-aligned broadcasting. Each pair of aligned
///   dimensions must be equal or one of them must be 1; missing leading
///   dimensions count as 1.
/// - `MatMul`: `[m, k] x [k, n] -> [m, n]`, rank 2 only.
/// - `Relu`, `Exp`, `Log`, `ClampMin`, `Scale`, `Softmax`: shape preserving.
///   `Log` rejects non-positive inputs.
/// - `Sum`, `Mean`: full reduction to shape `[1]`.
/// - `SumAxis`, `MaxAxis`: remove `axis` (rank-1 inputs reduce to `[1]`).
///   `MaxAxis` routes the gradient to the first maximal element.
/// - `Concat`: all inputs agree on every dimension except `axis`.
/// - `Slice`: keeps `start..end` along `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    MatMul,
    Relu,
    Exp,
    Log,
    ClampMin(f64),
    Sum,
    Mean,
    SumAxis(usize),
    MaxAxis(usize),
    Softmax(usize),
    Concat(usize),
    Slice { axis: usize, start: usize, end: usize },
    Scale(f64),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::MatMul => "matmul",
            OpKind::Relu => "relu",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::ClampMin(_) => "clamp_min",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::SumAxis(_) => "sum_axis",
            OpKind::MaxAxis(_) => "max_axis",
            OpKind::Softmax(_) => "softmax",
            OpKind::Concat(_) => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::Scale(_) => "scale",
        }
    }
}

#[derive(Debug)]
struct Node {
    kind: Option<OpKind>,
    inputs: Vec<Var>,
    value: Tensor,
    requires_grad: bool,
    // flat input offsets of the selected maxima, MaxAxis only
    argmax: Vec<usize>,
}

/// Define-by-run tape. Nodes are appended in evaluation order, so every
/// node's inputs precede it.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `var`; `None` for constants and
    /// for nodes the root does not depend on.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get) but yields zeros for unreachable parameters.
    pub fn get_or_zeros(&self, var: Var, like: &Tensor) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::from_parts(like.shape().to_vec(), vec![0.0; like.len()]))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: gradients are computed for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Constant leaf: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            kind: None,
            inputs: Vec::new(),
            value,
            requires_grad,
            argmax: Vec::new(),
        });
        Var(self.nodes.len() - 1)
    }

    /// Copies the value of `var` into a fresh constant (stop-gradient).
    pub fn detach(&mut self, var: Var) -> Var {
        let value = self.value(var).clone();
        self.constant(value)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Relu, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Exp, &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Log, &[a])
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var> {
        self.apply(OpKind::ClampMin(floor), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Mean, &[a])
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(OpKind::SumAxis(axis), &[a])
    }

    pub fn max_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(OpKind::MaxAxis(axis), &[a])
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(OpKind::Softmax(axis), &[a])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        self.apply(OpKind::Concat(axis), inputs)
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        self.apply(OpKind::Slice { axis, start, end }, &[a])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.apply(OpKind::Scale(factor), &[a])
    }

    /// Evaluates `kind` on `inputs` and records the node.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let arity_ok = match kind {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::MatMul => inputs.len() == 2,
            OpKind::Concat(_) => !inputs.is_empty(),
            _ => inputs.len() == 1,
        };
        if !arity_ok {
            return Err(Error::Contract(format!(
                "{} received {} inputs",
                kind.name(),
                inputs.len()
            )));
        }
        let (value, argmax) = self.forward(kind, inputs)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            kind: Some(kind),
            inputs: inputs.to_vec(),
            value,
            requires_grad,
            argmax,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn forward(&self, kind: OpKind, inputs: &[Var]) -> Result<(Tensor, Vec<usize>)> {
        let x = &self.nodes[inputs[0].0].value;
        let none = Vec::new();
        let out = match kind {
            OpKind::Add => self.elementwise(kind, inputs, |a, b| a + b)?,
            OpKind::Sub => self.elementwise(kind, inputs, |a, b| a - b)?,
            OpKind::Mul => self.elementwise(kind, inputs, |a, b| a * b)?,
            OpKind::MatMul => {
                let b = &self.nodes[inputs[1].0].value;
                matmul_forward(x, b)?
            }
            OpKind::Relu => map(x, |v| if v > 0.0 { v } else { 0.0 }),
            OpKind::Exp => map(x, libm::exp),
            OpKind::Log => {
                if let Some(bad) = x.data().iter().find(|v| !(**v > 0.0)) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("non-positive argument {bad}"),
                    });
                }
                map(x, libm::log)
            }
            OpKind::ClampMin(floor) => map(x, |v| if v >= floor { v } else { floor }),
            OpKind::Scale(c) => map(x, |v| c * v),
            OpKind::Sum => Tensor::scalar(x.data().iter().sum()),
            OpKind::Mean => Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64),
            OpKind::SumAxis(axis) => {
                let (outer, len, inner) = split_axis("sum_axis", x.shape(), axis)?;
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            out[o * inner + i] += x.data()[base + i];
                        }
                    }
                }
                Tensor::from_parts(reduced_shape(x.shape(), axis), out)
            }
            OpKind::MaxAxis(axis) => {
                let (outer, len, inner) = split_axis("max_axis", x.shape(), axis)?;
                let mut out = vec![0.0; outer * inner];
                let mut arg = vec![0; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut best = o * len * inner + i;
                        for l in 1..len {
                            let idx = (o * len + l) * inner + i;
                            if x.data()[idx] > x.data()[best] {
                                best = idx;
                            }
                        }
                        out[o * inner + i] = x.data()[best];
                        arg[o * inner + i] = best;
                    }
                }
                return Ok((Tensor::from_parts(reduced_shape(x.shape(), axis), out), arg));
            }
            OpKind::Softmax(axis) => {
                let (outer, len, inner) = split_axis("softmax", x.shape(), axis)?;
                let mut out = vec![0.0; x.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let mut max = f64::NEG_INFINITY;
                        for l in 0..len {
                            max = max.max(x.data()[at(l)]);
                        }
                        let mut total = 0.0;
                        for l in 0..len {
                            let e = libm::exp(x.data()[at(l)] - max);
                            out[at(l)] = e;
                            total += e;
                        }
                        for l in 0..len {
                            out[at(l)] /= total;
                        }
                    }
                }
                Tensor::from_parts(x.shape().to_vec(), out)
            }
            OpKind::Concat(axis) => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                concat_forward(&values, axis)?
            }
            OpKind::Slice { axis, start, end } => {
                let (outer, len, inner) = split_axis("slice", x.shape(), axis)?;
                if start >= end || end > len {
                    return Err(Error::ShapeMismatch {
                        op: "slice",
                        shapes: vec![x.shape().to_vec(), vec![start, end]],
                    });
                }
                let width = end - start;
                let mut out = Vec::with_capacity(outer * width * inner);
                for o in 0..outer {
                    let from = (o * len + start) * inner;
                    out.extend_from_slice(&x.data()[from..from + width * inner]);
                }
                let mut shape = x.shape().to_vec();
                shape[axis] = width;
                Tensor::from_parts(shape, out)
            }
        };
        Ok((out, none))
    }

    fn elementwise(&self, kind: OpKind, inputs: &[Var], f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let a = &self.nodes[inputs[0].0].value;
        let b = &self.nodes[inputs[1].0].value;
        if a.shape() == b.shape() {
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            return Ok(Tensor::from_parts(a.shape().to_vec(), data));
        }
        let shape =
            broadcast_shape(a.shape(), b.shape()).ok_or_else(|| shape_err(kind.name(), &[a.shape(), b.shape()]))?;
        let oa = broadcast_offsets(a.shape(), &shape);
        let ob = broadcast_offsets(b.shape(), &shape);
        let data = oa.iter().zip(&ob).map(|(&i, &j)| f(a.data()[i], b.data()[j])).collect();
        Ok(Tensor::from_parts(shape, data))
    }

    /// Reverse pass from a scalar root. Every node the root depends on
    /// through trainable leaves receives `d root / d node`; contributions
    /// from multiple uses are summed.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar root, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[root.0].requires_grad {
            return Ok(Gradients {
                grads: vec![None; self.nodes.len()],
            });
        }
        grads[root.0] = Some(vec![1.0]);
        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            let Some(kind) = node.kind else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, kind, &g, &mut grads);
            grads[id] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.filter(|_| node.requires_grad)
                    .map(|g| Tensor::from_parts(node.value.shape().to_vec(), g))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, kind: OpKind, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let inputs = &node.inputs;
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let out_shape = node.value.shape();
        match kind {
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (av, bv) = (val(a), val(b));
                let same = av.shape() == bv.shape();
                let oa = if same {
                    Vec::new()
                } else {
                    broadcast_offsets(av.shape(), out_shape)
                };
                let ob = if same {
                    Vec::new()
                } else {
                    broadcast_offsets(bv.shape(), out_shape)
                };
                let ia = |k: usize| if same { k } else { oa[k] };
                let ib = |k: usize| if same { k } else { ob[k] };
                if wants(a) {
                    let acc = slot(grads, a, av.len());
                    for (k, &gk) in g.iter().enumerate() {
                        acc[ia(k)] += match kind {
                            OpKind::Mul => gk * bv.data()[ib(k)],
                            _ => gk,
                        };
                    }
                }
                if wants(b) {
                    let acc = slot(grads, b, bv.len());
                    for (k, &gk) in g.iter().enumerate() {
                        acc[ib(k)] += match kind {
                            OpKind::Mul => gk * av.data()[ia(k)],
                            OpKind::Sub => -gk,
                            _ => gk,
                        };
                    }
                }
            }
            OpKind::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (av, bv) = (val(a), val(b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if wants(a) {
                    let acc = slot(grads, a, av.len());
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bv.data()[p * n + j];
                            }
                            acc[i * k + p] += s;
                        }
                    }
                }
                if wants(b) {
                    let acc = slot(grads, b, bv.len());
                    for i in 0..m {
                        for p in 0..k {
                            let aip = av.data()[i * k + p];
                            for j in 0..n {
                                acc[p * n + j] += aip * g[i * n + j];
                            }
                        }
                    }
                }
            }
            _ => self.propagate_unary(node, kind, g, grads),
        }
    }

    fn propagate_unary(&self, node: &Node, kind: OpKind, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        if let OpKind::Concat(axis) = kind {
            let (outer, _, inner) = split_axis("concat", node.value.shape(), axis).expect("validated in forward");
            let total = node.value.shape()[axis];
            let mut offset = 0;
            for &input in &node.inputs {
                let iv = &self.nodes[input.0].value;
                let width = iv.shape()[axis];
                if self.nodes[input.0].requires_grad {
                    let acc = slot(grads, input, iv.len());
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        let dst = o * width * inner;
                        for q in 0..width * inner {
                            acc[dst + q] += g[src + q];
                        }
                    }
                }
                offset += width;
            }
            return;
        }
        let input = node.inputs[0];
        if !self.nodes[input.0].requires_grad {
            return;
        }
        let x = &self.nodes[input.0].value;
        let y = &node.value;
        let acc = slot(grads, input, x.len());
        match kind {
            OpKind::Relu => {
                for (k, gk) in g.iter().enumerate() {
                    if x.data()[k] > 0.0 {
                        acc[k] += gk;
                    }
                }
            }
            OpKind::Exp => {
                for (k, gk) in g.iter().enumerate() {
                    acc[k] += gk * y.data()[k];
                }
            }
            OpKind::Log => {
                for (k, gk) in g.iter().enumerate() {
                    acc[k] += gk / x.data()[k];
                }
            }
            OpKind::ClampMin(floor) => {
                for (k, gk) in g.iter().enumerate() {
                    if x.data()[k] >= floor {
                        acc[k] += gk;
                    }
                }
            }
            OpKind::Scale(c) => {
                for (k, gk) in g.iter().enumerate() {
                    acc[k] += c * gk;
                }
            }
            OpKind::Sum => {
                for a in acc.iter_mut() {
                    *a += g[0];
                }
            }
            OpKind::Mean => {
                let share = g[0] / x.len() as f64;
                for a in acc.iter_mut() {
                    *a += share;
                }
            }
            OpKind::SumAxis(axis) => {
                let (outer, len, inner) = split_axis("sum_axis", x.shape(), axis).expect("validated");
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            acc[base + i] += g[o * inner + i];
                        }
                    }
                }
            }
            OpKind::MaxAxis(_) => {
                for (k, &pos) in node.argmax.iter().enumerate() {
                    acc[pos] += g[k];
                }
            }
            OpKind::Softmax(axis) => {
                let (outer, len, inner) = split_axis("softmax", x.shape(), axis).expect("validated");
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let dot: f64 = (0..len).map(|l| g[at(l)] * y.data()[at(l)]).sum();
                        for l in 0..len {
                            acc[at(l)] += y.data()[at(l)] * (g[at(l)] - dot);
                        }
                    }
                }
            }
            OpKind::Slice { axis, start, end } => {
                let (outer, len, inner) = split_axis("slice", x.shape(), axis).expect("validated");
                let width = end - start;
                for o in 0..outer {
                    let dst = (o * len + start) * inner;
                    let src = o * width * inner;
                    for q in 0..width * inner {
                        acc[dst + q] += g[src + q];
                    }
                }
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::MatMul | OpKind::Concat(_) => {
                unreachable!("handled by caller")
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], var: Var, len: usize) -> &mut Vec<f64> {
    grads[var.0].get_or_insert_with(|| vec![0.0; len])
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
}

fn matmul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(shape_err("matmul", &[a.shape(), b.shape()]));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a.data()[i * k + p];
            let brow = &b.data()[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

fn concat_forward(values: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = values[0];
    let mismatch = || Error::ShapeMismatch {
        op: "concat",
        shapes: values.iter().map(|t| t.shape().to_vec()).collect(),
    };
    if axis >= first.rank() {
        return Err(mismatch());
    }
    for t in values {
        let compatible = t.rank() == first.rank()
            && t.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(d, (x, y))| d == axis || x == y);
        if !compatible {
            return Err(mismatch());
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let total: usize = values.iter().map(|t| t.shape()[axis]).sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for t in values {
            let width = t.shape()[axis] * inner;
            out.extend_from_slice(&t.data()[o * width..(o + 1) * width]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, out))
}

fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::ShapeMismatch {
            op,
            shapes: vec![shape.to_vec(), vec![axis]],
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|&(d, _)| d != axis)
        .map(|(_, &s)| s)
        .collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

/// Result shape of trailing-aligned broadcasting, if the shapes conform.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for d in 0..rank {
        let da = if d + a.len() >= rank { a[d + a.len() - rank] } else { 1 };
        let db = if d + b.len() >= rank { b[d + b.len() - rank] } else { 1 };
        out[d] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every flat index of `out`, the flat index of the broadcast source.
fn broadcast_offsets(input: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let pad = rank - input.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for d in (0..rank).rev() {
        let dim = if d >= pad { input[d - pad] } else { 1 };
        strides[d] = if dim == 1 { 0 } else { acc };
        acc *= dim;
    }
    let total: usize = out.iter().product();
    let mut offsets = Vec::with_capacity(total);
    let mut index = vec![0; rank];
    let mut offset = 0;
    for _ in 0..total {
        offsets.push(offset);
        for d in (0..rank).rev() {
            index[d] += 1;
            offset += strides[d];
            if index[d] < out[d] {
                break;
            }
            offset -= strides[d] * out[d];
            index[d] = 0;
        }
    }
    offsets
}
