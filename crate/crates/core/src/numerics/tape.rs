//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node holding its value and enough saved state to
//! produce the vector-Jacobian product later. Nodes only ever reference
//! earlier nodes, so one reverse sweep over the node list visits each node
//! after all of its consumers.

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize, m: usize, k: usize, n: usize },
    Linear { x: usize, w: usize, b: Option<usize>, rows: usize, fan_in: usize, fan_out: usize },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, factor: f64 },
    Offset { x: usize },
    Sine { x: usize, omega0: f64 },
    Gelu { x: usize },
    Sigmoid { x: usize },
    Softmax { x: usize, axis: usize },
    LayerNorm { x: usize, gain: usize, shift: usize, xhat: Vec<f64>, inv_std: Vec<f64> },
    Transpose { x: usize, rows: usize, cols: usize },
    SliceCols { x: usize, cols: usize, start: usize, len: usize },
    ConcatCols { parts: Vec<(usize, usize)>, rows: usize },
    MeanRows { x: usize, rows: usize, cols: usize },
    Gather { x: usize, index: Vec<usize> },
    Reshape { x: usize },
    Sum { x: usize },
    Mse { pred: usize, target: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Records operations for a single forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every leaf that required them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
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

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        Tensor::new(node.shape.clone(), node.value.clone()).expect("tape values are validated")
    }

    /// Registers a tensor as a leaf; it receives a gradient iff `requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            op: Op::Leaf,
            needs_grad: t.requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.nodes.push(Node { shape, value: t.into_data(), op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    fn push(
        &mut self,
        name: &'static str,
        shape: Vec<usize>,
        value: Vec<f64>,
        op: Op,
        inputs: &[usize],
    ) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { shape, value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.nodes[v.0].shape[..] {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::shape(op, format!("expected a matrix, got {s:?}"))),
        }
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.nodes[a.0].shape, self.nodes[b.0].shape),
            ));
        }
        Ok(())
    }

    fn map(&mut self, x: Var, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let node = &self.nodes[x.0];
        let value = node.value.iter().map(|&v| f(v)).collect();
        let shape = node.shape.clone();
        self.push(name, shape, value, op, &[x.0])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}×{k}] · [{k2}×{n}]")));
        }
        let value = kernels::matmul(&self.nodes[a.0].value, &self.nodes[b.0].value, m, k, n);
        self.push("matmul", vec![m, n], value, Op::MatMul { a: a.0, b: b.0, m, k, n }, &[a.0, b.0])
    }

    /// Affine map `x·Wᵀ + b` with `W` stored as `[fan_out × fan_in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (rows, fan_in) = self.dims2(x, "linear")?;
        let (fan_out, w_in) = self.dims2(w, "linear")?;
        if w_in != fan_in {
            return Err(Error::shape("linear", format!("input width {fan_in}, weight {fan_out}×{w_in}")));
        }
        let mut value =
            kernels::matmul_bt(&self.nodes[x.0].value, &self.nodes[w.0].value, rows, fan_in, fan_out);
        let mut inputs = vec![x.0, w.0];
        if let Some(b) = b {
            let bias = &self.nodes[b.0];
            if bias.value.len() != fan_out {
                return Err(Error::shape("linear", format!("bias {:?} for width {fan_out}", bias.shape)));
            }
            for row in value.chunks_mut(fan_out) {
                for (o, bj) in row.iter_mut().zip(&bias.value) {
                    *o += bj;
                }
            }
            inputs.push(b.0);
        }
        let op = Op::Linear { x: x.0, w: w.0, b: b.map(|b| b.0), rows, fan_in, fan_out };
        self.push("linear", vec![rows, fan_out], value, op, &inputs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x + y).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push("add", shape, value, Op::Add { a: a.0, b: b.0 }, &[a.0, b.0])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x * y).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push("mul", shape, value, Op::Mul { a: a.0, b: b.0 }, &[a.0, b.0])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.map(x, "scale", Op::Scale { x: x.0, factor }, |v| v * factor)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        self.map(x, "add_scalar", Op::Offset { x: x.0 }, |v| v + c)
    }

    /// Elementwise `sin(omega0 · x)`.
    pub fn sine(&mut self, x: Var, omega0: f64) -> Result<Var> {
        self.map(x, "sine", Op::Sine { x: x.0, omega0 }, |v| (omega0 * v).sin())
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.map(x, "gelu", Op::Gelu { x: x.0 }, kernels::gelu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, "sigmoid", Op::Sigmoid { x: x.0 }, kernels::sigmoid)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let node = &self.nodes[x.0];
        if axis >= node.shape.len() {
            return Err(Error::shape("softmax", format!("axis {axis} for shape {:?}", node.shape)));
        }
        let value = kernels::softmax(&node.value, &node.shape, axis);
        let shape = node.shape.clone();
        self.push("softmax", shape, value, Op::Softmax { x: x.0, axis }, &[x.0])
    }

    /// Normalizes over the last axis, then applies `gain` and `shift`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let node = &self.nodes[x.0];
        let d = *node.shape.last().expect("tensors have rank >= 1");
        if self.nodes[gain.0].value.len() != d || self.nodes[shift.0].value.len() != d {
            return Err(Error::shape("layer_norm", format!("affine parameters must have length {d}")));
        }
        let (xhat, inv_std) = kernels::normalize_rows(&node.value, d, eps);
        // an overflowed variance would otherwise hide as inv_std == 0
        if inv_std.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return Err(Error::NonFinite("layer_norm"));
        }
        let g = &self.nodes[gain.0].value;
        let s = &self.nodes[shift.0].value;
        let value = xhat.iter().enumerate().map(|(i, v)| v * g[i % d] + s[i % d]).collect();
        let shape = node.shape.clone();
        let op = Op::LayerNorm { x: x.0, gain: gain.0, shift: shift.0, xhat, inv_std };
        self.push("layer_norm", shape, value, op, &[x.0, gain.0, shift.0])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims2(x, "transpose")?;
        let src = &self.nodes[x.0].value;
        let mut value = vec![0.0; src.len()];
        for r in 0..rows {
            for c in 0..cols {
                value[c * rows + r] = src[r * cols + c];
            }
        }
        self.push("transpose", vec![cols, rows], value, Op::Transpose { x: x.0, rows, cols }, &[x.0])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims2(x, "slice_cols")?;
        if len == 0 || start + len > cols {
            return Err(Error::shape("slice_cols", format!("[{start}, {}) of {cols} columns", start + len)));
        }
        let src = &self.nodes[x.0].value;
        let value = (0..rows).flat_map(|r| src[r * cols + start..r * cols + start + len].iter().copied()).collect();
        self.push("slice_cols", vec![rows, len], value, Op::SliceCols { x: x.0, cols, start, len }, &[x.0])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat_cols"))?;
        let (rows, _) = self.dims2(*first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_cols")?;
            if r != rows {
                return Err(Error::shape("concat_cols", format!("row counts {rows} vs {r}")));
            }
            widths.push((p.0, c));
        }
        let total: usize = widths.iter().map(|w| w.1).sum();
        let mut value = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &(id, c) in &widths {
                value.extend_from_slice(&self.nodes[id].value[r * c..(r + 1) * c]);
            }
        }
        let inputs: Vec<usize> = widths.iter().map(|w| w.0).collect();
        self.push("concat_cols", vec![rows, total], value, Op::ConcatCols { parts: widths, rows }, &inputs)
    }

    /// Column-wise mean of a matrix, as a `[1 × cols]` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims2(x, "mean_rows")?;
        let src = &self.nodes[x.0].value;
        let mut value = vec![0.0; cols];
        for row in src.chunks(cols) {
            for (o, v) in value.iter_mut().zip(row) {
                *o += v;
            }
        }
        value.iter_mut().for_each(|v| *v /= rows as f64);
        self.push("mean_rows", vec![1, cols], value, Op::MeanRows { x: x.0, rows, cols }, &[x.0])
    }

    /// `out[i] = x[index[i]]`, laid out with `shape`.
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: Vec<usize>) -> Result<Var> {
        let src = &self.nodes[x.0].value;
        if shape.iter().product::<usize>() != index.len() || index.iter().any(|&i| i >= src.len()) {
            return Err(Error::shape("gather", format!("{} indices into {} values", index.len(), src.len())));
        }
        let value = index.iter().map(|&i| src[i]).collect();
        self.push("gather", shape, value, Op::Gather { x: x.0, index }, &[x.0])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let node = &self.nodes[x.0];
        if shape.iter().product::<usize>() != node.value.len() {
            return Err(Error::shape("reshape", format!("{:?} -> {shape:?}", node.shape)));
        }
        let value = node.value.clone();
        self.push("reshape", shape, value, Op::Reshape { x: x.0 }, &[x.0])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.nodes[x.0].value.iter().sum();
        self.push("sum", vec![1], vec![total], Op::Sum { x: x.0 }, &[x.0])
    }

    /// Mean squared difference against a fixed target.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let p = &self.nodes[pred.0].value;
        if p.len() != target.len() {
            return Err(Error::shape("mse", format!("{} predictions vs {} targets", p.len(), target.len())));
        }
        let loss = p.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        let op = Op::Mse { pred: pred.0, target: target.to_vec() };
        self.push("mse", vec![1], vec![loss], op, &[pred.0])
    }

    /// Reverse sweep from a scalar loss. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes;
        if nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            if matches!(nodes[i].op, Op::Leaf) || !nodes[i].needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            propagate(&nodes, i, &nodes[i].op, &dy, &mut grads);
        }
        for (g, node) in grads.iter_mut().zip(&nodes) {
            let wanted = matches!(node.op, Op::Leaf) && node.needs_grad;
            if !wanted {
                *g = None;
            } else if g.is_none() {
                // required a gradient but was unreachable from the loss
                *g = Some(vec![0.0; node.value.len()]);
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].needs_grad {
        return;
    }
    let g = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]);
    f(g);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn propagate(nodes: &[Node], i: usize, op: &Op, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let y = &nodes[i].value;
    match *op {
        Op::Leaf => {}
        Op::MatMul { a, b, m, k, n } => {
            accumulate(grads, nodes, a, |g| add_into(g, &kernels::matmul_bt(dy, &nodes[b].value, m, n, k)));
            accumulate(grads, nodes, b, |g| kernels::matmul_at_acc(g, &nodes[a].value, dy, m, k, n));
        }
        Op::Linear { x, w, b, rows, fan_in, fan_out } => {
            accumulate(grads, nodes, x, |g| {
                add_into(g, &kernels::matmul(dy, &nodes[w].value, rows, fan_out, fan_in))
            });
            accumulate(grads, nodes, w, |g| kernels::matmul_at_acc(g, dy, &nodes[x].value, rows, fan_out, fan_in));
            if let Some(b) = b {
                accumulate(grads, nodes, b, |g| {
                    for row in dy.chunks(fan_out) {
                        add_into(g, row);
                    }
                });
            }
        }
        Op::Add { a, b } => {
            accumulate(grads, nodes, a, |g| add_into(g, dy));
            accumulate(grads, nodes, b, |g| add_into(g, dy));
        }
        Op::Mul { a, b } => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            accumulate(grads, nodes, a, |g| g.iter_mut().zip(dy).zip(bv).for_each(|((g, d), v)| *g += d * v));
            accumulate(grads, nodes, b, |g| g.iter_mut().zip(dy).zip(av).for_each(|((g, d), v)| *g += d * v));
        }
        Op::Scale { x, factor } => {
            accumulate(grads, nodes, x, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d * factor));
        }
        Op::Offset { x } | Op::Reshape { x } => accumulate(grads, nodes, x, |g| add_into(g, dy)),
        Op::Sine { x, omega0 } => {
            let xv = &nodes[x].value;
            accumulate(grads, nodes, x, |g| {
                for ((g, d), v) in g.iter_mut().zip(dy).zip(xv) {
                    *g += d * omega0 * (omega0 * v).cos();
                }
            });
        }
        Op::Gelu { x } => {
            let xv = &nodes[x].value;
            accumulate(grads, nodes, x, |g| {
                g.iter_mut().zip(dy).zip(xv).for_each(|((g, d), v)| *g += d * kernels::gelu_grad(*v))
            });
        }
        Op::Sigmoid { x } => {
            accumulate(grads, nodes, x, |g| {
                g.iter_mut().zip(dy).zip(y).for_each(|((g, d), s)| *g += d * s * (1.0 - s))
            });
        }
        Op::Softmax { x, axis } => {
            let (outer, len, inner) = kernels::axis_split(&nodes[i].shape, axis);
            accumulate(grads, nodes, x, |g| {
                for o in 0..outer {
                    for q in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + q;
                        let dot: f64 = (0..len).map(|j| y[at(j)] * dy[at(j)]).sum();
                        for j in 0..len {
                            g[at(j)] += y[at(j)] * (dy[at(j)] - dot);
                        }
                    }
                }
            });
        }
        Op::LayerNorm { x, gain, shift, ref xhat, ref inv_std } => {
            let d = nodes[gain].value.len();
            let gv = &nodes[gain].value;
            accumulate(grads, nodes, gain, |g| {
                for (idx, (dyv, xh)) in dy.iter().zip(xhat).enumerate() {
                    g[idx % d] += dyv * xh;
                }
            });
            accumulate(grads, nodes, shift, |g| {
                for row in dy.chunks(d) {
                    add_into(g, row);
                }
            });
            accumulate(grads, nodes, x, |g| {
                for (r, s) in inv_std.iter().enumerate() {
                    let span = r * d..(r + 1) * d;
                    let dxhat: Vec<f64> = dy[span.clone()].iter().zip(gv).map(|(a, b)| a * b).collect();
                    let xh = &xhat[span.clone()];
                    let sum_d: f64 = dxhat.iter().sum();
                    let sum_dx: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
                    for (j, gj) in g[span].iter_mut().enumerate() {
                        *gj += s / d as f64 * (d as f64 * dxhat[j] - sum_d - xh[j] * sum_dx);
                    }
                }
            });
        }
        Op::Transpose { x, rows, cols } => {
            accumulate(grads, nodes, x, |g| {
                for r in 0..rows {
                    for c in 0..cols {
                        g[r * cols + c] += dy[c * rows + r];
                    }
                }
            });
        }
        Op::SliceCols { x, cols, start, len } => {
            accumulate(grads, nodes, x, |g| {
                for (r, row) in dy.chunks(len).enumerate() {
                    add_into(&mut g[r * cols + start..r * cols + start + len], row);
                }
            });
        }
        Op::ConcatCols { ref parts, rows } => {
            let total: usize = parts.iter().map(|p| p.1).sum();
            let mut offset = 0;
            for &(id, c) in parts {
                accumulate(grads, nodes, id, |g| {
                    for r in 0..rows {
                        add_into(&mut g[r * c..(r + 1) * c], &dy[r * total + offset..r * total + offset + c]);
                    }
                });
                offset += c;
            }
        }
        Op::MeanRows { x, rows, cols } => {
            accumulate(grads, nodes, x, |g| {
                for row in g.chunks_mut(cols) {
                    row.iter_mut().zip(dy).for_each(|(g, d)| *g += d / rows as f64);
                }
            });
        }
        Op::Gather { x, ref index } => {
            accumulate(grads, nodes, x, |g| {
                for (d, &src) in dy.iter().zip(index) {
                    g[src] += d;
                }
            });
        }
        Op::Sum { x } => accumulate(grads, nodes, x, |g| g.iter_mut().for_each(|g| *g += dy[0])),
        Op::Mse { pred, ref target } => {
            let p = &nodes[pred].value;
            let scale = 2.0 * dy[0] / p.len() as f64;
            accumulate(grads, nodes, pred, |g| {
                for ((g, a), b) in g.iter_mut().zip(p).zip(target) {
                    *g += scale * (a - b);
                }
            });
        }
    }
}
