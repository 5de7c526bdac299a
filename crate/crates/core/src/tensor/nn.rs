//! Neural-network operations recorded on the autodiff tape.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::graph::{Graph, Op, Var};
use super::Tensor;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-6;
pub const BATCH_NORM_EPS: f64 = 1e-3;
pub const BATCH_NORM_MOMENTUM: f64 = 0.99;

const CE_EPS: f64 = 1e-12;
const RRELU_LOWER: f64 = 1.0 / 8.0;
const RRELU_UPPER: f64 = 1.0 / 3.0;

/// Whether stochastic layers sample (train) or act deterministically (eval).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// tanh approximation
    Gelu,
    /// Randomized leaky ReLU: negative slope drawn from U[1/8, 1/3] per
    /// element in training, fixed to the interval midpoint in eval.
    Rrelu,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            "rrelu" => Ok(Activation::Rrelu),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
            Activation::Rrelu => "rrelu",
        })
    }
}

/// Running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: BATCH_NORM_MOMENTUM,
            eps: BATCH_NORM_EPS,
        }
    }
}

/// Values cached by the normalization ops for their backward pass.
pub(crate) struct NormSaved {
    pub x: Var,
    pub gamma: Var,
    pub beta: Var,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub rows: usize,
    pub d: usize,
    /// Batch norm only: normalized with batch statistics (train mode).
    pub batch_stats: bool,
}

fn gelu(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const K: f64 = 0.044_715;
    let u = C * (x + K * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * K * x * x);
    (y, dy)
}

impl Graph {
    fn pointwise(
        &mut self,
        x: Var,
        values: Vec<f64>,
        deriv: Vec<f64>,
        name: &'static str,
    ) -> Result<Var> {
        let t = Tensor::new(self.shape(x).to_vec(), values)?;
        self.push(t, Op::Pointwise { input: x, deriv }, name)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let (y, d): (Vec<f64>, Vec<f64>) = self
            .value(x)
            .data()
            .iter()
            .map(|&v| if v > 0.0 { (v, 1.0) } else { (0.0, 0.0) })
            .unzip();
        self.pointwise(x, y, d, "relu")
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let (y, d): (Vec<f64>, Vec<f64>) = self.value(x).data().iter().map(|&v| gelu(v)).unzip();
        self.pointwise(x, y, d, "gelu")
    }

    pub fn rrelu<R: Rng + ?Sized>(&mut self, x: Var, mode: Mode, rng: &mut R) -> Result<Var> {
        let n = self.value(x).len();
        let slopes: Vec<f64> = match mode {
            Mode::Train => (0..n)
                .map(|_| rng.random_range(RRELU_LOWER..=RRELU_UPPER))
                .collect(),
            Mode::Eval => vec![(RRELU_LOWER + RRELU_UPPER) / 2.0; n],
        };
        let (y, d): (Vec<f64>, Vec<f64>) = self
            .value(x)
            .data()
            .iter()
            .zip(&slopes)
            .map(|(&v, &a)| if v >= 0.0 { (v, 1.0) } else { (a * v, a) })
            .unzip();
        self.pointwise(x, y, d, "rrelu")
    }

    pub fn activation<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        kind: Activation,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        match kind {
            Activation::Relu => self.relu(x),
            Activation::Gelu => self.gelu(x),
            Activation::Rrelu => self.rrelu(x, mode, rng),
        }
    }

    /// Softmax along `axis`, computed after subtracting the slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim(format!(
                "softmax: axis {axis} out of range for {shape:?}"
            )));
        }
        let src = self.value(x);
        if !src.is_finite() {
            return Err(Error::NonFinite {
                op: "softmax input",
            });
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let src = src.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let max = (0..len)
                    .map(|j| src[at(j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[at(j)] /= total;
                }
            }
        }
        self.push(
            Tensor::new(shape, out)?,
            Op::Softmax { input: x, axis },
            "softmax",
        )
    }

    /// Normalizes each vector along the last axis, then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Config(format!(
                "layer_norm eps must be positive, got {eps}"
            )));
        }
        let shape = self.shape(x).to_vec();
        let d = *shape
            .last()
            .ok_or_else(|| Error::dim("layer_norm of a rank-0 tensor"))?;
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(p) != [d] {
                return Err(Error::dim(format!(
                    "layer_norm: {name} has shape {:?}, expected [{d}]",
                    self.shape(p)
                )));
            }
        }
        let rows = self.value(x).len() / d;
        let src = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; src.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = g[j] * h + b[j];
            }
        }
        let saved = NormSaved {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            rows,
            d,
            batch_stats: true,
        };
        self.push(Tensor::new(shape, out)?, Op::LayerNorm(saved), "layer_norm")
    }

    /// Batch normalization over `[batch, d]`.
    ///
    /// Train mode normalizes with batch statistics (population variance) and
    /// folds them into `state` with its momentum; eval mode reads `state`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState,
        mode: Mode,
    ) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(Error::dim(format!(
                "batch_norm expects [batch, d], got {shape:?}"
            )));
        }
        let (batch, d) = (shape[0], shape[1]);
        if self.shape(gamma) != [d] || self.shape(beta) != [d] || state.running_mean.len() != d {
            return Err(Error::dim(format!(
                "batch_norm: feature size {d} does not match parameters"
            )));
        }
        if mode == Mode::Train && batch < 2 {
            return Err(Error::Data(
                "batch_norm in train mode needs at least 2 samples".into(),
            ));
        }
        let src = self.value(x).data();
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; d];
                let mut var = vec![0.0; d];
                for r in 0..batch {
                    for j in 0..d {
                        mean[j] += src[r * d + j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= batch as f64);
                for r in 0..batch {
                    for j in 0..d {
                        var[j] += (src[r * d + j] - mean[j]).powi(2);
                    }
                }
                var.iter_mut().for_each(|v| *v /= batch as f64);
                (mean, var)
            }
            Mode::Eval => (state.running_mean.clone(), state.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; src.len()];
        let mut out = vec![0.0; src.len()];
        for r in 0..batch {
            for j in 0..d {
                let h = (src[r * d + j] - mean[j]) * inv_std[j];
                xhat[r * d + j] = h;
                out[r * d + j] = g[j] * h + b[j];
            }
        }
        if mode == Mode::Train {
            let m = state.momentum;
            for j in 0..d {
                state.running_mean[j] = m * state.running_mean[j] + (1.0 - m) * mean[j];
                state.running_var[j] = m * state.running_var[j] + (1.0 - m) * var[j];
            }
        }
        let saved = NormSaved {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            rows: batch,
            d,
            batch_stats: mode == Mode::Train,
        };
        self.push(Tensor::new(shape, out)?, Op::BatchNorm(saved), "batch_norm")
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let y = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        self.pointwise(x, y, mask, "dropout")
    }

    /// Mean over the batch of `-ln(p_true)`, with `p` clamped at 1e-12.
    pub fn categorical_cross_entropy(&mut self, probs: Var, onehot: &Tensor) -> Result<Var> {
        let shape = self.shape(probs).to_vec();
        if shape.len() != 2 || onehot.shape() != shape.as_slice() {
            return Err(Error::dim(format!(
                "cross entropy: probs {shape:?} vs one-hot {:?}",
                onehot.shape()
            )));
        }
        let targets = onehot_targets(onehot)?;
        let classes = shape[1];
        let p = self.value(probs).data();
        for (r, row) in p.chunks(classes).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-4 {
                return Err(Error::Data(format!("probability row {r} sums to {s}")));
            }
        }
        let loss = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -p[r * classes + t].max(CE_EPS).ln())
            .sum::<f64>()
            / targets.len() as f64;
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { probs, targets },
            "cross_entropy",
        )
    }

    /// Fused softmax + cross entropy on raw logits. The gradient with
    /// respect to the logits is `(softmax − onehot) / batch`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, onehot: &Tensor) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || onehot.shape() != shape.as_slice() {
            return Err(Error::dim(format!(
                "cross entropy: logits {shape:?} vs one-hot {:?}",
                onehot.shape()
            )));
        }
        let targets = onehot_targets(onehot)?;
        let classes = shape[1];
        let z = self.value(logits).data();
        let mut probs = vec![0.0; z.len()];
        let mut loss = 0.0;
        for (r, row) in z.chunks(classes).enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for j in 0..classes {
                probs[r * classes + j] = (row[j] - lse).exp();
            }
            loss += lse - row[targets[r]];
        }
        loss /= targets.len() as f64;
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            },
            "softmax_cross_entropy",
        )
    }
}

/// Converts one-hot rows into class indices, rejecting anything that is not
/// exactly one 1 among 0s.
pub(crate) fn onehot_targets(onehot: &Tensor) -> Result<Vec<usize>> {
    let classes = *onehot.shape().last().unwrap_or(&1);
    onehot
        .data()
        .chunks(classes)
        .enumerate()
        .map(|(r, row)| {
            let ones: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(i, _)| i)
                .collect();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones.len() == 1 && zeros == classes - 1 {
                Ok(ones[0])
            } else {
                Err(Error::Data(format!(
                    "row {r} is not a valid one-hot vector: {row:?}"
                )))
            }
        })
        .collect()
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(super) fn softmax_backward(y: &Tensor, axis: usize, g: &[f64]) -> Vec<f64> {
    let (outer, len, inner) = split_axis(y.shape(), axis);
    let y = y.data();
    let mut dx = vec![0.0; y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let dot: f64 = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
            for j in 0..len {
                dx[at(j)] = y[at(j)] * (g[at(j)] - dot);
            }
        }
    }
    dx
}

pub(super) fn layer_norm_backward(
    s: &NormSaved,
    gamma: &[f64],
    g: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = s.d;
    let mut dx = vec![0.0; g.len()];
    let mut dgamma = vec![0.0; d];
    let mut dbeta = vec![0.0; d];
    let mut dxhat = vec![0.0; d];
    for r in 0..s.rows {
        let (mut sum_dh, mut sum_dh_h) = (0.0, 0.0);
        for j in 0..d {
            let k = r * d + j;
            dgamma[j] += g[k] * s.xhat[k];
            dbeta[j] += g[k];
            dxhat[j] = g[k] * gamma[j];
            sum_dh += dxhat[j];
            sum_dh_h += dxhat[j] * s.xhat[k];
        }
        let scale = s.inv_std[r] / d as f64;
        for j in 0..d {
            let k = r * d + j;
            dx[k] = scale * (d as f64 * dxhat[j] - sum_dh - s.xhat[k] * sum_dh_h);
        }
    }
    (dx, dgamma, dbeta)
}

pub(super) fn batch_norm_backward(
    s: &NormSaved,
    gamma: &[f64],
    g: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, d) = (s.rows, s.d);
    let mut dx = vec![0.0; g.len()];
    let mut dgamma = vec![0.0; d];
    let mut dbeta = vec![0.0; d];
    for r in 0..n {
        for j in 0..d {
            let k = r * d + j;
            dgamma[j] += g[k] * s.xhat[k];
            dbeta[j] += g[k];
        }
    }
    for j in 0..d {
        if s.batch_stats {
            // dxhat = g·gamma; Σ dxhat = gamma·dbeta; Σ dxhat·xhat = gamma·dgamma
            let (sum_dh, sum_dh_h) = (gamma[j] * dbeta[j], gamma[j] * dgamma[j]);
            let scale = s.inv_std[j] / n as f64;
            for r in 0..n {
                let k = r * d + j;
                dx[k] = scale * (n as f64 * g[k] * gamma[j] - sum_dh - s.xhat[k] * sum_dh_h);
            }
        } else {
            for r in 0..n {
                let k = r * d + j;
                dx[k] = g[k] * gamma[j] * s.inv_std[j];
            }
        }
    }
    (dx, dgamma, dbeta)
}

pub(super) fn cross_entropy_backward(probs: &Tensor, targets: &[usize], g: f64) -> Vec<f64> {
    let classes = probs.shape()[1];
    let batch = targets.len() as f64;
    let p = probs.data();
    let mut d = vec![0.0; p.len()];
    for (r, &t) in targets.iter().enumerate() {
        let v = p[r * classes + t];
        if v >= CE_EPS {
            d[r * classes + t] = -g / (batch * v);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run<F: FnOnce(&mut Graph, Var) -> Result<Var>>(input: &[f64], f: F) -> Vec<f64> {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(input.to_vec()));
        let y = f(&mut g, x).unwrap();
        g.value(y).data().to_vec()
    }

    #[test]
    fn relu_matches_definition() {
        assert_eq!(
            run(&[-1.0, 0.0, 2.5], |g, x| g.relu(x)),
            vec![0.0, 0.0, 2.5]
        );
    }

    #[test]
    fn gelu_fixes_zero() {
        assert_eq!(run(&[0.0], |g, x| g.gelu(x)), vec![0.0]);
    }

    #[test]
    fn unknown_activation_is_config_error() {
        assert!(matches!(
            "swish".parse::<Activation>(),
            Err(Error::Config(_))
        ));
        assert_eq!("GELU".parse::<Activation>().unwrap(), Activation::Gelu);
    }

    #[test]
    fn rrelu_eval_uses_midpoint_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = run(&[-48.0, 2.0], |g, x| g.rrelu(x, Mode::Eval, &mut rng));
        assert!((y[0] + 11.0).abs() < 1e-12);
        assert_eq!(y[1], 2.0);
    }

    #[test]
    fn rrelu_train_slopes_stay_in_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = run(&[-1.0; 1000], |g, x| g.rrelu(x, Mode::Train, &mut rng));
        assert!(y.iter().all(|v| (-RRELU_UPPER..=-RRELU_LOWER).contains(v)));
    }

    #[test]
    fn softmax_examples() {
        let y = run(&[0.0; 7], |g, x| g.softmax(x, 0));
        assert!(y.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-15));

        let y = run(&[2f64.ln(), 0.0], |g, x| g.softmax(x, 0));
        assert!((y[0] - 2.0 / 3.0).abs() < 1e-15 && (y[1] - 1.0 / 3.0).abs() < 1e-15);

        let y = run(&[1000.0, 1000.0], |g, x| g.softmax(x, 0));
        assert_eq!(y, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let mut g = Graph::new().with_finite_checks(false);
        let x = g.constant(Tensor::from_vec(vec![f64::NAN, 1.0]));
        assert!(matches!(g.softmax(x, 0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn softmax_middle_axis() {
        let mut g = Graph::new();
        let x = g.constant(
            Tensor::new(vec![2, 3, 2], (0..12).map(|v| v as f64 * 0.3).collect()).unwrap(),
        );
        let y = g.softmax(x, 1).unwrap();
        let t = g.value(y);
        for o in 0..2 {
            for i in 0..2 {
                let s: f64 = (0..3).map(|j| t.at(&[o, j, i])).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    fn layer_norm_of(x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(vec![1, d], x.to_vec()).unwrap());
        let gamma = g.constant(Tensor::ones(&[d]));
        let beta = g.constant(Tensor::zeros(&[d]));
        let y = g.layer_norm(xv, gamma, beta, LAYER_NORM_EPS).unwrap();
        g.value(y).data().to_vec()
    }

    #[test]
    fn layer_norm_examples() {
        assert_eq!(layer_norm_of(&[1.0, 1.0, 1.0]), vec![0.0; 3]);
        let y = layer_norm_of(&[-1.0, 1.0]);
        assert!((y[0] + 1.0).abs() < 1e-6 && (y[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn layer_norm_checks_feature_size() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 4]));
        let gamma = g.constant(Tensor::ones(&[3]));
        let beta = g.constant(Tensor::zeros(&[4]));
        assert!(matches!(
            g.layer_norm(x, gamma, beta, 1e-6),
            Err(Error::Dimension(_))
        ));
    }

    fn bn(x: Tensor, state: &mut BatchNormState, mode: Mode) -> Result<Vec<f64>> {
        let d = x.shape()[1];
        let mut g = Graph::new();
        let xv = g.constant(x);
        let gamma = g.constant(Tensor::ones(&[d]));
        let beta = g.constant(Tensor::zeros(&[d]));
        let y = g.batch_norm(xv, gamma, beta, state, mode)?;
        Ok(g.value(y).data().to_vec())
    }

    #[test]
    fn batch_norm_train_uses_population_variance() {
        let mut s = BatchNormState::new(1);
        let y = bn(
            Tensor::new(vec![2, 1], vec![0.0, 2.0]).unwrap(),
            &mut s,
            Mode::Train,
        )
        .unwrap();
        // (±1)/sqrt(1 + 1e-3)
        let expected = 1.0 / (1.0f64 + BATCH_NORM_EPS).sqrt();
        assert!((y[0] + expected).abs() < 1e-12 && (y[1] - expected).abs() < 1e-12);
        assert!((y[0] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn batch_norm_eval_is_identity_with_unit_stats() {
        let mut s = BatchNormState::new(3);
        s.eps = 0.0;
        let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 3.0, 0.0, -0.25]).unwrap();
        let y = bn(x.clone(), &mut s, Mode::Eval).unwrap();
        assert_eq!(y, x.data());
    }

    #[test]
    fn batch_norm_running_stats_follow_momentum() {
        let mut s = BatchNormState::new(1);
        bn(
            Tensor::new(vec![2, 1], vec![0.0, 2.0]).unwrap(),
            &mut s,
            Mode::Train,
        )
        .unwrap();
        bn(
            Tensor::new(vec![2, 1], vec![4.0, 6.0]).unwrap(),
            &mut s,
            Mode::Train,
        )
        .unwrap();
        // mean: 0 → 0.01·1 = 0.01 → 0.99·0.01 + 0.01·5 = 0.0599
        // var:  1 → 0.99 + 0.01·1 = 1.0 → 0.99·1.0 + 0.01·1 = 1.0
        assert!((s.running_mean[0] - 0.0599).abs() < 1e-15);
        assert!((s.running_var[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn batch_norm_single_sample_train_is_error() {
        let mut s = BatchNormState::new(2);
        assert!(bn(Tensor::zeros(&[1, 2]), &mut s, Mode::Train).is_err());
        assert!(bn(Tensor::zeros(&[1, 2]), &mut s, Mode::Eval).is_ok());
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = [1.0, -2.0, 3.0];
        assert_eq!(run(&x, |g, v| g.dropout(v, 0.0, Mode::Train, &mut rng)), x);
        assert_eq!(run(&x, |g, v| g.dropout(v, 0.5, Mode::Eval, &mut rng)), x);
        assert!(matches!(
            run_err(|g, v| g.dropout(v, 1.0, Mode::Train, &mut rng)),
            Error::Config(_)
        ));
    }

    fn run_err<F: FnOnce(&mut Graph, Var) -> Result<Var>>(f: F) -> Error {
        let mut g = Graph::new();
        let x = g.constant(Tensor::ones(&[2]));
        f(&mut g, x).unwrap_err()
    }

    #[test]
    fn dropout_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let y = run(&vec![1.0; n], |g, v| {
            g.dropout(v, 0.5, Mode::Train, &mut rng)
        });
        let survivors = y.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        let mean = y.iter().sum::<f64>() / n as f64;
        assert!((survivors - 0.5).abs() < 0.01, "{survivors}");
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    fn ce(probs: Vec<f64>, onehot: Vec<f64>, classes: usize) -> Result<f64> {
        let rows = probs.len() / classes;
        let mut g = Graph::new();
        let p = g.constant(Tensor::new(vec![rows, classes], probs).unwrap());
        let oh = Tensor::new(vec![rows, classes], onehot).unwrap();
        let l = g.categorical_cross_entropy(p, &oh)?;
        Ok(g.value(l).item())
    }

    #[test]
    fn cross_entropy_examples() {
        let mut oh = vec![0.0; 7];
        oh[3] = 1.0;
        assert_eq!(ce(oh.clone(), oh.clone(), 7).unwrap(), 0.0);
        let uniform = vec![1.0 / 7.0; 7];
        assert!((ce(uniform, oh, 7).unwrap() - 7f64.ln()).abs() < 1e-12);
        assert!((7f64.ln() - 1.9459).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_rejects_bad_onehot() {
        let probs = vec![0.5, 0.5];
        assert!(matches!(
            ce(probs.clone(), vec![1.0, 1.0], 2),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            ce(probs.clone(), vec![0.0, 0.0], 2),
            Err(Error::Data(_))
        ));
        assert!(matches!(ce(probs, vec![0.5, 0.5], 2), Err(Error::Data(_))));
    }

    #[test]
    fn cross_entropy_clamps_zero_probability() {
        let loss = ce(vec![1.0, 0.0], vec![0.0, 1.0], 2).unwrap();
        assert!((loss - (-(1e-12f64).ln())).abs() < 1e-9);
    }
}
