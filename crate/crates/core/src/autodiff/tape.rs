use super::tensor::{matmul, matmul_nt_acc, matmul_tn_acc, split_axis};
use super::{AutodiffError, Tensor};

/// Inputs to `ln` are floored here; non-positive inputs are rejected.
pub const LOG_FLOOR: f64 = 1e-12;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// The operation kinds the tape can record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Exp,
    Log,
    Sigmoid,
    Relu,
    Gelu,
    Softmax,
    LayerNorm,
    Mean,
    Sum,
    Concat,
    Slice,
    Transpose,
    Reshape,
    Clamp,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// Same-shape add, or `b` broadcast over the rows of `a`.
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Relu(Var),
    Gelu(Var),
    Softmax { input: Var, axis: usize },
    LayerNorm { input: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Mean { input: Var, axis: usize },
    Sum(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Transpose(Var),
    Reshape(Var),
    Clamp { input: Var, lo: f64, hi: f64 },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddScalar(..) => OpKind::AddScalar,
            Op::Exp(..) => OpKind::Exp,
            Op::Log(..) => OpKind::Log,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Relu(..) => OpKind::Relu,
            Op::Gelu(..) => OpKind::Gelu,
            Op::Softmax { .. } => OpKind::Softmax,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Mean { .. } => OpKind::Mean,
            Op::Sum(..) => OpKind::Sum,
            Op::Concat { .. } => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Transpose(..) => OpKind::Transpose,
            Op::Reshape(..) => OpKind::Reshape,
            Op::Clamp { .. } => OpKind::Clamp,
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Eager-recording reverse-mode tape.
///
/// Every op computes its value immediately and appends a node, so node ids
/// are already in topological order. One tape serves one forward/backward
/// pass; [`Tape::backward`] consumes its ability to record further.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    differentiated: bool,
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Gradient of the last `backward` loss with respect to `v`; `None`
    /// when `v` does not influence the loss.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::from_parts(self.nodes[v.0].value.shape().to_vec(), g.clone()))
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var, AutodiffError> {
        if self.differentiated {
            return Err(AutodiffError::StaleTape);
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn mismatch(&self, op: &'static str, vars: &[Var]) -> AutodiffError {
        AutodiffError::ShapeMismatch {
            op,
            shapes: vars.iter().map(|v| self.shape(*v).to_vec()).collect(),
        }
    }

    pub fn leaf(&mut self, value: Tensor) -> Result<Var, AutodiffError> {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var, AutodiffError> {
        self.leaf(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", &[a, b]));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    /// Elementwise add. `b` may also be a vector matching the last
    /// dimension of `a`, in which case it is added to every row.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let row_broadcast = sb.len() == 1 && sa.len() >= 1 && sa[sa.len() - 1] == sb[0];
        if sa != sb && !row_broadcast {
            return Err(self.mismatch("add", &[a, b]));
        }
        let bd = self.value(b).data();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_exact_mut(bd.len().max(1)) {
            row.iter_mut().zip(bd).for_each(|(x, y)| *x += y);
        }
        let shape = sa.to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("sub", &[a, b]));
        }
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("mul", &[a, b]));
        }
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        let out = map(self.value(a), |x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        let out = map(self.value(a), |x| x + s);
        self.push(out, Op::AddScalar(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = map(self.value(a), f64::exp);
        self.push(out, Op::Exp(a))
    }

    /// Natural log with inputs floored at [`LOG_FLOOR`]. Non-positive
    /// inputs are a domain error.
    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        if let Some(&bad) = self.value(a).data().iter().find(|x| !(**x > 0.0)) {
            return Err(AutodiffError::Domain { op: "log", value: bad });
        }
        let out = map(self.value(a), |x| x.max(LOG_FLOOR).ln());
        self.push(out, Op::Log(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = map(self.value(a), sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = map(self.value(a), |x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = map(self.value(a), gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len().max(1) || shape.is_empty() {
            return Err(AutodiffError::InvalidAxis { op: "softmax", axis, rank: shape.len() });
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let x = self.value(a).data();
        if inner == 1 {
            let mut out = x.to_vec();
            softmax_rows(&mut out, len);
            return self.push(Tensor::from_parts(shape, out), Op::Softmax { input: a, axis });
        }
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| x[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (x[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[idx(j)] /= total;
                }
            }
        }
        self.push(Tensor::from_parts(shape, out), Op::Softmax { input: a, axis })
    }

    /// Normalizes over the last axis, then applies `gamma` and `beta`.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, AutodiffError> {
        let shape = self.shape(a).to_vec();
        let width = *shape.last().unwrap_or(&0);
        if shape.is_empty() || self.shape(gamma) != [width] || self.shape(beta) != [width] {
            return Err(self.mismatch("layer_norm", &[a, gamma, beta]));
        }
        let x = self.value(a).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let rows = x.len() / width;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; x.len()];
        for r in 0..rows {
            let row = &x[r * width..(r + 1) * width];
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..width {
                let h = (row[j] - mean) * is;
                xhat[r * width + j] = h;
                out[r * width + j] = h * g[j] + b[j];
            }
        }
        self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm { input: a, gamma, beta, xhat, inv_std },
        )
    }

    /// Mean along `axis`; the axis is removed from the output shape.
    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::InvalidAxis { op: "mean", axis, rank: shape.len() });
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        if len == 0 {
            return Err(self.mismatch("mean", &[a]));
        }
        let x = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += x[(o * len + j) * inner + i];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= len as f64);
        let mut out_shape = shape;
        out_shape.remove(axis);
        self.push(Tensor::from_parts(out_shape, out), Op::Mean { input: a, axis })
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let total = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        let first = match inputs.first() {
            Some(v) => self.shape(*v).to_vec(),
            None => return Err(AutodiffError::ShapeMismatch { op: "concat", shapes: Vec::new() }),
        };
        if axis >= first.len() {
            return Err(AutodiffError::InvalidAxis { op: "concat", axis, rank: first.len() });
        }
        let compatible = inputs.iter().all(|v| {
            let s = self.shape(*v);
            s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(d, (x, y))| d == axis || x == y)
        });
        if !compatible {
            return Err(self.mismatch("concat", inputs));
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let total: usize = inputs.iter().map(|v| self.shape(*v)[axis]).sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let len = self.shape(*v)[axis];
                let d = self.value(*v).data();
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        self.push(Tensor::from_parts(shape, out), Op::Concat { inputs: inputs.to_vec(), axis })
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::InvalidAxis { op: "slice", axis, rank: shape.len() });
        }
        if start >= end || end > shape[axis] {
            return Err(self.mismatch("slice", &[a]));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            out.extend_from_slice(&x[(o * len + start) * inner..(o * len + end) * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = end - start;
        self.push(Tensor::from_parts(out_shape, out), Op::Slice { input: a, axis, start })
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 {
            return Err(self.mismatch("transpose", &[a]));
        }
        let out = transpose(self.value(a).data(), shape[0], shape[1]);
        self.push(Tensor::from_parts(vec![shape[1], shape[0]], out), Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                shapes: vec![self.shape(a).to_vec(), shape.to_vec()],
            });
        }
        let data = self.value(a).data().to_vec();
        self.push(Tensor::from_parts(shape.to_vec(), data), Op::Reshape(a))
    }

    /// Clamps into `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, AutodiffError> {
        let out = map(self.value(a), |x| x.clamp(lo, hi));
        self.push(out, Op::Clamp { input: a, lo, hi })
    }

    /// Reverse pass from a scalar `loss`. Populates gradients for every
    /// node the loss depends on. A tape can be differentiated only once.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        if self.differentiated {
            return Err(AutodiffError::StaleTape);
        }
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss { shape: self.shape(loss).to_vec() });
        }
        self.differentiated = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                matmul_nt_acc(g, val(*b), m, k, n, slot(grads, *a, m * k));
                matmul_tn_acc(val(*a), g, m, k, n, slot(grads, *b, k * n));
            }
            Op::Add(a, b) => {
                add_into(slot(grads, *a, g.len()), g);
                let width = self.nodes[b.0].value.len();
                let gb = slot(grads, *b, width);
                for (i, gv) in g.iter().enumerate() {
                    gb[i % width] += gv;
                }
            }
            Op::Sub(a, b) => {
                add_into(slot(grads, *a, g.len()), g);
                let gb = slot(grads, *b, g.len());
                gb.iter_mut().zip(g).for_each(|(o, gv)| *o -= gv);
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                let ga = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * xb[i];
                }
                let gb = slot(grads, *b, g.len());
                for i in 0..g.len() {
                    gb[i] += g[i] * xa[i];
                }
            }
            Op::Scale(a, s) => {
                let ga = slot(grads, *a, g.len());
                ga.iter_mut().zip(g).for_each(|(o, gv)| *o += gv * s);
            }
            Op::AddScalar(a) => add_into(slot(grads, *a, g.len()), g),
            Op::Exp(a) => {
                let y = node.value.data();
                let ga = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * y[i];
                }
            }
            Op::Log(a) => {
                let x = val(*a);
                let ga = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    if x[i] >= LOG_FLOOR {
                        ga[i] += g[i] / x[i];
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let ga = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }
            Op::Relu(a) => {
                let x = val(*a);
                let ga = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    if x[i] > 0.0 {
                        ga[i] += g[i];
                    }
                }
            }
            Op::Gelu(a) => {
                let x = val(*a);
                let ga = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * gelu_grad(x[i]);
                }
            }
            Op::Softmax { input, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = split_axis(node.value.shape(), *axis);
                let ga = slot(grads, *input, g.len());
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let dot: f64 = (0..len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..len {
                            ga[idx(j)] += y[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { input, gamma, beta, xhat, inv_std } => {
                let gam = val(*gamma);
                let width = gam.len();
                let rows = g.len() / width;
                {
                    let gg = slot(grads, *gamma, width);
                    for r in 0..rows {
                        for j in 0..width {
                            gg[j] += g[r * width + j] * xhat[r * width + j];
                        }
                    }
                }
                {
                    let gb = slot(grads, *beta, width);
                    for r in 0..rows {
                        for j in 0..width {
                            gb[j] += g[r * width + j];
                        }
                    }
                }
                let gx = slot(grads, *input, g.len());
                let w = width as f64;
                let mut dxhat = vec![0.0; width];
                for r in 0..rows {
                    let base = r * width;
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for j in 0..width {
                        dxhat[j] = g[base + j] * gam[j];
                        sum_d += dxhat[j];
                        sum_dx += dxhat[j] * xhat[base + j];
                    }
                    for j in 0..width {
                        gx[base + j] +=
                            inv_std[r] / w * (w * dxhat[j] - sum_d - xhat[base + j] * sum_dx);
                    }
                }
            }
            Op::Mean { input, axis } => {
                let shape = self.shape(*input);
                let (outer, len, inner) = split_axis(shape, *axis);
                let ga = slot(grads, *input, outer * len * inner);
                let inv = 1.0 / len as f64;
                for o in 0..outer {
                    for j in 0..len {
                        for i in 0..inner {
                            ga[(o * len + j) * inner + i] += g[o * inner + i] * inv;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let n = self.nodes[a.0].value.len();
                slot(grads, *a, n).iter_mut().for_each(|o| *o += g[0]);
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for v in inputs {
                    let len = self.shape(*v)[*axis];
                    let gv = slot(grads, *v, outer * len * inner);
                    for o in 0..outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                        add_into(&mut gv[o * len * inner..(o + 1) * len * inner], src);
                    }
                    offset += len;
                }
            }
            Op::Slice { input, axis, start } => {
                let (outer, len, inner) = split_axis(self.shape(*input), *axis);
                let width = node.value.shape()[*axis];
                let ga = slot(grads, *input, outer * len * inner);
                for o in 0..outer {
                    let dst = &mut ga[(o * len + start) * inner..(o * len + start + width) * inner];
                    add_into(dst, &g[o * width * inner..(o + 1) * width * inner]);
                }
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                let gt = transpose(g, s[0], s[1]);
                add_into(slot(grads, *a, g.len()), &gt);
            }
            Op::Reshape(a) => add_into(slot(grads, *a, g.len()), g),
            Op::Clamp { input, lo, hi } => {
                let x = val(*input);
                let ga = slot(grads, *input, g.len());
                for i in 0..g.len() {
                    if x[i] >= *lo && x[i] <= *hi {
                        ga[i] += g[i];
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|x| f(*x)).collect())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place softmax over contiguous rows of length `len`.
pub(crate) fn softmax_rows(data: &mut [f64], len: usize) {
    for row in data.chunks_exact_mut(len) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
}

pub fn gelu(x: f64) -> f64 {
    // 0.5 x (1 + tanh u) == x / (1 + e^{-2u}), one exp instead of tanh.
    x / (1.0 + (-2.0 * GELU_C * (x + GELU_K * x * x * x)).exp())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}
