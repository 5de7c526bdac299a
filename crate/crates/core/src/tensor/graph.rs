use super::kernels;
use super::nn;
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(super) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(super) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    BatchMatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Reshape(Var),
    Permute {
        input: Var,
        offsets: Vec<usize>,
    },
    Broadcast {
        input: Var,
        offsets: Vec<usize>,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Narrow {
        input: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    /// Elementwise map whose local derivative was computed in the forward pass.
    Pointwise {
        input: Var,
        deriv: Vec<f64>,
    },
    Softmax {
        input: Var,
        axis: usize,
    },
    LayerNorm(nn::NormSaved),
    BatchNorm(nn::NormSaved),
    CrossEntropy {
        probs: Var,
        targets: Vec<usize>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

pub(super) struct Node {
    pub(super) value: Tensor,
    pub(super) op: Op,
    pub(super) requires_grad: bool,
    pub(super) grad: Option<Tensor>,
}

/// Operation tape for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so the tape is always
/// topologically sorted. A graph is meant to live for one forward/backward
/// pass and is not shared across threads.
pub struct Graph {
    pub(super) nodes: Vec<Node>,
    check_finite: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// New empty graph. Non-finite checking follows `debug_assertions`.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            check_finite: cfg!(debug_assertions),
        }
    }

    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(super) fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = self
            .operands(&op)
            .iter()
            .any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn operands(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::BatchMatMul { a, b, .. } => vec![*a, *b],
            Op::Scale(x, _)
            | Op::Reshape(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::SumSquares(x)
            | Op::Permute { input: x, .. }
            | Op::Broadcast { input: x, .. }
            | Op::Narrow { input: x, .. }
            | Op::Pointwise { input: x, .. }
            | Op::Softmax { input: x, .. }
            | Op::CrossEntropy { probs: x, .. }
            | Op::SoftmaxCrossEntropy { logits: x, .. } => vec![*x],
            Op::Concat { parts, .. } => parts.clone(),
            Op::LayerNorm(s) | Op::BatchNorm(s) => vec![s.x, s.gamma, s.beta],
        }
    }

    /// Records an input value. Gradients are accumulated for it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last [`Graph::backward`] root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Brings two operands to their common broadcast shape.
    fn broadcast_pair(&mut self, a: Var, b: Var, op: &str) -> Result<(Var, Var)> {
        if self.shape(a) == self.shape(b) {
            return Ok((a, b));
        }
        let target = kernels::broadcast_shape(self.shape(a), self.shape(b)).ok_or_else(|| {
            Error::dim(format!(
                "{op}: shapes {:?} and {:?} do not broadcast",
                self.shape(a),
                self.shape(b)
            ))
        })?;
        let a = self.broadcast_to(a, &target)?;
        let b = self.broadcast_to(b, &target)?;
        Ok((a, b))
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.broadcast_pair(a, b, "add")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, data)?, Op::Add(a, b), "add")
    }

    /// Elementwise difference with broadcasting.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.broadcast_pair(a, b, "sub")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, data)?, Op::Sub(a, b), "sub")
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.broadcast_pair(a, b, "mul")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, data)?, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a * c).collect();
        let t = Tensor::new(v.shape().to_vec(), data)?;
        self.push(t, Op::Scale(x, c), "scale")
    }

    /// `[m,k] · [k,n] → [m,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!(
                "matmul: cannot multiply {sa:?} by {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::new(vec![m, n], data)?, Op::MatMul(a, b), "matmul")
    }

    /// Batched product `[b,m,k] · [b,k,n] → [b,m,n]`; with `trans_b` the
    /// right operand is `[b,n,k]` and is transposed per batch.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if trans_b {
                sa[2] == sb[2]
            } else {
                sa[2] == sb[1]
            };
        if !ok {
            return Err(Error::dim(format!(
                "batch_matmul: cannot multiply {sa:?} by {sb:?} (trans_b={trans_b})"
            )));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b { sb[1] } else { sb[2] };
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(batch * m * n);
        for i in 0..batch {
            let ab = &av[i * m * k..(i + 1) * m * k];
            let bb = &bv[i * k * n..(i + 1) * k * n];
            if trans_b {
                data.extend(kernels::matmul_bt(ab, bb, m, k, n));
            } else {
                data.extend(kernels::matmul(ab, bb, m, k, n));
            }
        }
        self.push(
            Tensor::new(vec![batch, m, n], data)?,
            Op::BatchMatMul { a, b, trans_b },
            "batch_matmul",
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape.to_vec())?;
        self.push(t, Op::Reshape(x), "reshape")
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len()
            || perm
                .iter()
                .any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::dim(format!(
                "permute: {perm:?} is not a permutation of {} axes",
                shape.len()
            )));
        }
        let in_strides = kernels::strides(&shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let offsets = kernels::gather_offsets(&out_shape, &src_strides);
        let src = self.value(x).data();
        let data = offsets.iter().map(|&o| src[o]).collect();
        self.push(
            Tensor::new(out_shape, data)?,
            Op::Permute { input: x, offsets },
            "permute",
        )
    }

    /// Numpy-style broadcast to `shape`; the backward pass sums over the
    /// broadcast axes.
    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if self.shape(x) == shape {
            return Ok(x);
        }
        let strides = kernels::broadcast_strides(self.shape(x), shape).ok_or_else(|| {
            Error::dim(format!("cannot broadcast {:?} to {shape:?}", self.shape(x)))
        })?;
        let offsets = kernels::gather_offsets(shape, &strides);
        let src = self.value(x).data();
        let data = offsets.iter().map(|&o| src[o]).collect();
        self.push(
            Tensor::new(shape.to_vec(), data)?,
            Op::Broadcast { input: x, offsets },
            "broadcast",
        )
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(
                *parts
                    .first()
                    .ok_or_else(|| Error::dim("concat of nothing"))?,
            )
            .to_vec();
        if axis >= first.len() {
            return Err(Error::dim(format!(
                "concat: axis {axis} out of range for {first:?}"
            )));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim(format!(
                    "concat: {s:?} incompatible with {first:?} on axis {axis}"
                )));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * len..(o + 1) * len]);
            }
        }
        self.push(
            Tensor::new(out_shape, data)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            "concat",
        )
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(format!(
                "narrow: [{start}, {}) on axis {axis} of {shape:?}",
                start + len
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.push(
            Tensor::new(out_shape, data)?,
            Op::Narrow {
                input: x,
                axis,
                start,
            },
            "narrow",
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), "mean")
    }

    /// `Σ x²` as a scalar.
    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(s), Op::SumSquares(x), "sum_squares")
    }

    /// Runs reverse accumulation from a scalar root. Gradients from earlier
    /// calls are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads);
            let shape = self.nodes[id].value.shape().to_vec();
            self.nodes[id].grad = Some(Tensor::new(shape, g)?);
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let mut acc = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
                acc(*b, g.iter().zip(av).map(|(g, a)| g * a).collect());
            }
            Op::Scale(x, c) => acc(*x, g.iter().map(|v| v * c).collect()),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.requires_grad(*a) {
                    acc(*a, kernels::matmul_bt(g, self.value(*b).data(), m, n, k));
                }
                if self.requires_grad(*b) {
                    acc(*b, kernels::matmul_at(self.value(*a).data(), g, m, k, n));
                }
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let sa = self.shape(*a);
                let (batch, m, k) = (sa[0], sa[1], sa[2]);
                let n = node.value.shape()[2];
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let mut ga = Vec::with_capacity(batch * m * k);
                let mut gb = Vec::with_capacity(batch * k * n);
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let ai = &av[i * m * k..(i + 1) * m * k];
                    let bi = &bv[i * k * n..(i + 1) * k * n];
                    if *trans_b {
                        // C = A·Bᵀ with B [n,k]: dA = dC·B, dB = dCᵀ·A
                        ga.extend(kernels::matmul(gi, bi, m, n, k));
                        gb.extend(kernels::matmul_at(gi, ai, m, n, k));
                    } else {
                        ga.extend(kernels::matmul_bt(gi, bi, m, n, k));
                        gb.extend(kernels::matmul_at(ai, gi, m, k, n));
                    }
                }
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::Permute { input, offsets } | Op::Broadcast { input, offsets } => {
                let mut out = vec![0.0; self.value(*input).len()];
                for (gv, &o) in g.iter().zip(offsets) {
                    out[o] += gv;
                }
                acc(*input, out);
            }
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p)[*axis] * inner;
                    let mut out = Vec::with_capacity(outer * len);
                    for o in 0..outer {
                        out.extend_from_slice(&g[o * total + offset..o * total + offset + len]);
                    }
                    acc(p, out);
                    offset += len;
                }
            }
            Op::Narrow { input, axis, start } => {
                let in_shape = self.shape(*input);
                let outer: usize = in_shape[..*axis].iter().product();
                let inner: usize = in_shape[axis + 1..].iter().product();
                let len = node.value.shape()[*axis];
                let mut out = vec![0.0; self.value(*input).len()];
                for o in 0..outer {
                    let dst = (o * in_shape[*axis] + start) * inner;
                    out[dst..dst + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                acc(*input, out);
            }
            Op::Sum(x) => acc(*x, vec![g[0]; self.value(*x).len()]),
            Op::Mean(x) => {
                let n = self.value(*x).len();
                acc(*x, vec![g[0] / n as f64; n]);
            }
            Op::SumSquares(x) => acc(
                *x,
                self.value(*x)
                    .data()
                    .iter()
                    .map(|v| 2.0 * v * g[0])
                    .collect(),
            ),
            Op::Pointwise { input, deriv } => {
                acc(*input, g.iter().zip(deriv).map(|(g, d)| g * d).collect())
            }
            Op::Softmax { input, axis } => acc(*input, nn::softmax_backward(&node.value, *axis, g)),
            Op::LayerNorm(s) => {
                let gamma = self.value(s.gamma).data();
                let (dx, dgamma, dbeta) = nn::layer_norm_backward(s, gamma, g);
                acc(s.x, dx);
                acc(s.gamma, dgamma);
                acc(s.beta, dbeta);
            }
            Op::BatchNorm(s) => {
                let gamma = self.value(s.gamma).data();
                let (dx, dgamma, dbeta) = nn::batch_norm_backward(s, gamma, g);
                acc(s.x, dx);
                acc(s.gamma, dgamma);
                acc(s.beta, dbeta);
            }
            Op::CrossEntropy { probs, targets } => {
                acc(
                    *probs,
                    nn::cross_entropy_backward(self.value(*probs), targets, g[0]),
                );
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let classes = self.shape(*logits)[1];
                let batch = targets.len() as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| p * g[0] / batch).collect();
                for (row, &t) in targets.iter().enumerate() {
                    d[row * classes + t] -= g[0] / batch;
                }
                acc(*logits, d);
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect()
}
