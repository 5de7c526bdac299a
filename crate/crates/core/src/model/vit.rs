use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{HeadInput, ViTConfig};
use super::params::{ParamStore, Precision};
use super::patch::patchify_batch;
use crate::error::{Error, Result};
use crate::tensor::{
    BatchNormState, Graph, Mode, Tensor, Var, BATCH_NORM_EPS, BATCH_NORM_MOMENTUM, LAYER_NORM_EPS,
};

const INIT_STD: f64 = 0.02;
const PREDICT_CHUNK: usize = 32;

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Normal(0, std) truncated to ±2 std.
    TruncNormal(f64),
    /// Glorot uniform on `[-sqrt(6/(fan_in+fan_out)), +…]`.
    Glorot {
        fan_in: usize,
        fan_out: usize,
    },
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    pub trainable: bool,
}

impl ParamSpec {
    fn new(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        ParamSpec {
            name: name.into(),
            shape,
            init,
            trainable: true,
        }
    }

    fn buffer(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        ParamSpec {
            name: name.into(),
            shape,
            init,
            trainable: false,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Whether a parameter belongs to the classification head rather than the
/// pre-trainable backbone.
pub fn is_head_param(name: &str) -> bool {
    name.starts_with("head.")
}

/// Attention weights captured for one sample: per layer, a
/// `[heads, seq, seq]` block of row-stochastic matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub seq_len: usize,
    pub num_heads: usize,
    pub layers: Vec<Vec<f64>>,
}

impl AttentionRecord {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Row-major `[seq, seq]` matrix of one head.
    pub fn head(&self, layer: usize, head: usize) -> &[f64] {
        let t2 = self.seq_len * self.seq_len;
        &self.layers[layer][head * t2..(head + 1) * t2]
    }

    /// Largest deviation of any row sum from 1, and whether every entry is
    /// nonnegative.
    pub fn row_sum_error(&self) -> (f64, bool) {
        let mut worst = 0.0f64;
        let mut nonneg = true;
        for layer in &self.layers {
            for row in layer.chunks(self.seq_len) {
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
                nonneg &= row.iter().all(|&v| v >= 0.0);
            }
        }
        (worst, nonneg)
    }
}

/// Graph leaves for the model parameters of one forward pass.
pub struct Bindings {
    vars: IndexMap<String, Var>,
}

impl Bindings {
    /// Bindings over caller-supplied graph values, e.g. for gradient checks.
    pub fn from_vars(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Bindings {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameter '{name}' is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

pub struct ForwardOutput {
    pub logits: Var,
    pub probs: Var,
    /// Flattened encoder output fed to the head, `[B, head_input_dim]`.
    pub head_input: Var,
    /// Final-LN token states `[B, seq_len, D]`.
    pub tokens: Var,
    pub seq_len: usize,
    /// One record per sample when attention capture was requested.
    pub attention: Vec<AttentionRecord>,
    /// Updated running statistics from train-mode batch norm.
    pub bn_updates: Vec<(String, BatchNormState)>,
}

/// A Vision Transformer backbone with the lesion classification head:
/// flatten → batch norm → dense → activation → batch norm → dropout →
/// dense → softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ViTModel {
    config: ViTConfig,
    params: ParamStore,
}

impl ViTModel {
    /// Every parameter the configuration implies, in canonical order.
    pub fn param_specs(config: &ViTConfig) -> Vec<ParamSpec> {
        let d = config.hidden_dim;
        let m = config.mlp_dim;
        let tn = Init::TruncNormal(INIT_STD);
        let mut specs = vec![
            ParamSpec::new("patch_embed.w", vec![config.patch_dim(), d], tn),
            ParamSpec::new("patch_embed.b", vec![d], Init::Zeros),
            ParamSpec::new("cls_token", vec![d], tn),
            ParamSpec::new("pos_embed", vec![config.seq_len(), d], Init::Zeros),
        ];
        for i in 0..config.depth {
            let p = format!("blocks.{i}");
            specs.push(ParamSpec::new(
                format!("{p}.ln1.gamma"),
                vec![d],
                Init::Ones,
            ));
            specs.push(ParamSpec::new(
                format!("{p}.ln1.beta"),
                vec![d],
                Init::Zeros,
            ));
            for w in ["q", "k", "v", "o"] {
                specs.push(ParamSpec::new(format!("{p}.attn.w{w}"), vec![d, d], tn));
                specs.push(ParamSpec::new(
                    format!("{p}.attn.b{w}"),
                    vec![d],
                    Init::Zeros,
                ));
            }
            specs.push(ParamSpec::new(
                format!("{p}.ln2.gamma"),
                vec![d],
                Init::Ones,
            ));
            specs.push(ParamSpec::new(
                format!("{p}.ln2.beta"),
                vec![d],
                Init::Zeros,
            ));
            specs.push(ParamSpec::new(format!("{p}.mlp.w1"), vec![d, m], tn));
            specs.push(ParamSpec::new(format!("{p}.mlp.b1"), vec![m], Init::Zeros));
            specs.push(ParamSpec::new(format!("{p}.mlp.w2"), vec![m, d], tn));
            specs.push(ParamSpec::new(format!("{p}.mlp.b2"), vec![d], Init::Zeros));
        }
        specs.push(ParamSpec::new("final_ln.gamma", vec![d], Init::Ones));
        specs.push(ParamSpec::new("final_ln.beta", vec![d], Init::Zeros));

        let f = config.head_input_dim();
        let h = config.head_neurons;
        let c = config.num_classes;
        let bn = |specs: &mut Vec<ParamSpec>, p: &str, n: usize| {
            specs.push(ParamSpec::new(format!("{p}.gamma"), vec![n], Init::Ones));
            specs.push(ParamSpec::new(format!("{p}.beta"), vec![n], Init::Zeros));
            specs.push(ParamSpec::buffer(
                format!("{p}.running_mean"),
                vec![n],
                Init::Zeros,
            ));
            specs.push(ParamSpec::buffer(
                format!("{p}.running_var"),
                vec![n],
                Init::Ones,
            ));
        };
        bn(&mut specs, "head.bn1", f);
        specs.push(ParamSpec::new(
            "head.dense1.w",
            vec![f, h],
            Init::Glorot {
                fan_in: f,
                fan_out: h,
            },
        ));
        specs.push(ParamSpec::new("head.dense1.b", vec![h], Init::Zeros));
        bn(&mut specs, "head.bn2", h);
        specs.push(ParamSpec::new(
            "head.dense2.w",
            vec![h, c],
            Init::Glorot {
                fan_in: h,
                fan_out: c,
            },
        ));
        specs.push(ParamSpec::new("head.dense2.b", vec![c], Init::Zeros));
        specs
    }

    /// Deterministic random initialization in 32-bit storage.
    pub fn init(config: ViTConfig, seed: u64) -> Result<Self> {
        Self::init_with_precision(config, seed, Precision::F32)
    }

    pub fn init_with_precision(config: ViTConfig, seed: u64, precision: Precision) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new(precision);
        for (i, spec) in Self::param_specs(&config).iter().enumerate() {
            params.insert(
                &spec.name,
                spec.shape.clone(),
                init_values(spec, seed, i as u64),
                spec.trainable,
            )?;
        }
        Ok(ViTModel { config, params })
    }

    /// Assembles a model from an already-populated store, checking that the
    /// names and shapes are exactly those the configuration implies.
    pub fn from_params(config: ViTConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let specs = Self::param_specs(&config);
        for spec in &specs {
            let p = params
                .get(&spec.name)
                .ok_or_else(|| Error::Config(format!("missing parameter '{}'", spec.name)))?;
            if p.shape != spec.shape {
                return Err(Error::dim(format!(
                    "parameter '{}' has shape {:?}, expected {:?}",
                    spec.name, p.shape, spec.shape
                )));
            }
        }
        if params.len() != specs.len() {
            let known: std::collections::HashSet<&str> =
                specs.iter().map(|s| s.name.as_str()).collect();
            let extra: Vec<&str> = params.names().filter(|n| !known.contains(n)).collect();
            return Err(Error::Config(format!(
                "unexpected parameters: {}",
                extra.join(", ")
            )));
        }
        Ok(ViTModel { config, params })
    }

    pub(crate) fn fresh_values(
        config: &ViTConfig,
        seed: u64,
        name: &str,
    ) -> Option<(ParamSpec, Vec<f64>)> {
        Self::param_specs(config)
            .into_iter()
            .enumerate()
            .find(|(_, s)| s.name == name)
            .map(|(i, s)| {
                let v = init_values(&s, seed, i as u64);
                (s, v)
            })
    }

    pub fn config(&self) -> &ViTConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn to_precision(&self, precision: Precision) -> Self {
        ViTModel {
            config: self.config.clone(),
            params: self.params.to_precision(precision),
        }
    }

    /// Sets the dropout rate of the head; used by ablations.
    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        let mut c = self.config.clone();
        c.dropout_rate = rate;
        c.validate()?;
        self.config = c;
        Ok(())
    }

    /// Trainable scalars actually held by the model.
    pub fn live_param_count(&self, include_head: bool) -> usize {
        self.params
            .count_where(|n| include_head || !is_head_param(n))
    }

    /// Records every parameter as a graph leaf; `grad` decides which ones
    /// accumulate gradients (buffers never do).
    pub fn bind(&self, g: &mut Graph, grad: impl Fn(&str) -> bool) -> Bindings {
        let vars = self
            .params
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(name, p)| (name.to_string(), g.leaf(p.to_tensor(), grad(name))))
            .collect();
        Bindings { vars }
    }

    fn linear(
        g: &mut Graph,
        b: &Bindings,
        x: Var,
        prefix: &str,
        w: &str,
        bias: &str,
    ) -> Result<Var> {
        let y = g.matmul(x, b.get(&format!("{prefix}.{w}"))?)?;
        g.add(y, b.get(&format!("{prefix}.{bias}"))?)
    }

    /// Splits `[B·T, D]` into per-head `[B·H, T, dh]`.
    fn split_heads(&self, g: &mut Graph, x: Var, batch: usize) -> Result<Var> {
        let (t, h, dh) = (
            self.config.seq_len(),
            self.config.num_heads,
            self.config.head_dim(),
        );
        let x = g.reshape(x, &[batch, t, h, dh])?;
        let x = g.permute(x, &[0, 2, 1, 3])?;
        g.reshape(x, &[batch * h, t, dh])
    }

    fn encoder_block(
        &self,
        g: &mut Graph,
        b: &Bindings,
        x: Var,
        layer: usize,
        batch: usize,
        captured: Option<&mut Vec<Vec<f64>>>,
    ) -> Result<Var> {
        let c = &self.config;
        let (t, d, h, dh) = (c.seq_len(), c.hidden_dim, c.num_heads, c.head_dim());
        let p = format!("blocks.{layer}");

        let normed = g.layer_norm(
            x,
            b.get(&format!("{p}.ln1.gamma"))?,
            b.get(&format!("{p}.ln1.beta"))?,
            LAYER_NORM_EPS,
        )?;
        let flat = g.reshape(normed, &[batch * t, d])?;
        let attn_p = format!("{p}.attn");
        let q = Self::linear(g, b, flat, &attn_p, "wq", "bq")?;
        let k = Self::linear(g, b, flat, &attn_p, "wk", "bk")?;
        let v = Self::linear(g, b, flat, &attn_p, "wv", "bv")?;
        let (q, k, v) = (
            self.split_heads(g, q, batch)?,
            self.split_heads(g, k, batch)?,
            self.split_heads(g, v, batch)?,
        );
        let scores = g.batch_matmul(q, k, true)?;
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt())?;
        let attn = g.softmax(scores, 2)?;
        if let Some(store) = captured {
            store.push(g.value(attn).data().to_vec());
        }
        let ctx = g.batch_matmul(attn, v, false)?;
        let ctx = g.reshape(ctx, &[batch, h, t, dh])?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[batch * t, d])?;
        let out = Self::linear(g, b, ctx, &attn_p, "wo", "bo")?;
        let out = g.reshape(out, &[batch, t, d])?;
        let x = g.add(x, out)?;

        let normed = g.layer_norm(
            x,
            b.get(&format!("{p}.ln2.gamma"))?,
            b.get(&format!("{p}.ln2.beta"))?,
            LAYER_NORM_EPS,
        )?;
        let flat = g.reshape(normed, &[batch * t, d])?;
        let mlp_p = format!("{p}.mlp");
        let hidden = Self::linear(g, b, flat, &mlp_p, "w1", "b1")?;
        let hidden = g.gelu(hidden)?;
        let out = Self::linear(g, b, hidden, &mlp_p, "w2", "b2")?;
        let out = g.reshape(out, &[batch, t, d])?;
        g.add(x, out)
    }

    fn bn_state(&self, prefix: &str) -> Result<BatchNormState> {
        Ok(BatchNormState {
            running_mean: self.params.values(&format!("{prefix}.running_mean"))?,
            running_var: self.params.values(&format!("{prefix}.running_var"))?,
            momentum: BATCH_NORM_MOMENTUM,
            eps: BATCH_NORM_EPS,
        })
    }

    /// Runs the model on `[B, H, W, 3]` images in `[0, 1]`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        b: &Bindings,
        images: &Tensor,
        mode: Mode,
        capture_attention: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let c = &self.config;
        let s = images.shape();
        if s.len() != 4 || s[1] != c.image_size || s[2] != c.image_size || s[3] != 3 {
            return Err(Error::dim(format!(
                "expected images [B, {0}, {0}, 3], got {s:?}",
                c.image_size
            )));
        }
        let batch = s[0];
        if mode == Mode::Train && batch < 2 {
            return Err(Error::Data(
                "train-mode forward needs a batch of at least 2".into(),
            ));
        }
        let (n, t, d) = (c.num_patches(), c.seq_len(), c.hidden_dim);

        let patches =
            patchify_batch(images, c.patch_size)?.reshape(vec![batch * n, c.patch_dim()])?;
        let x = g.constant(patches);
        let emb = Self::linear(g, b, x, "patch_embed", "w", "b")?;
        let emb = g.reshape(emb, &[batch, n, d])?;
        let cls = g.reshape(b.get("cls_token")?, &[1, 1, d])?;
        let cls = g.broadcast_to(cls, &[batch, 1, d])?;
        let tokens = g.concat(&[cls, emb], 1)?;
        let pos = g.reshape(b.get("pos_embed")?, &[1, t, d])?;
        let mut x = g.add(tokens, pos)?;

        let mut captured = capture_attention.then(Vec::new);
        for layer in 0..c.depth {
            x = self.encoder_block(g, b, x, layer, batch, captured.as_mut())?;
        }
        let tokens = g.layer_norm(
            x,
            b.get("final_ln.gamma")?,
            b.get("final_ln.beta")?,
            LAYER_NORM_EPS,
        )?;

        let head_input = match c.head_input {
            HeadInput::Sequence => g.reshape(tokens, &[batch, t * d])?,
            HeadInput::ClassToken => {
                let cls = g.narrow(tokens, 1, 0, 1)?;
                g.reshape(cls, &[batch, d])?
            }
        };

        let mut bn_updates = Vec::new();
        let mut bn1 = self.bn_state("head.bn1")?;
        let y = g.batch_norm(
            head_input,
            b.get("head.bn1.gamma")?,
            b.get("head.bn1.beta")?,
            &mut bn1,
            mode,
        )?;
        let y = Self::linear(g, b, y, "head.dense1", "w", "b")?;
        let y = g.activation(y, c.head_activation, mode, rng)?;
        let mut bn2 = self.bn_state("head.bn2")?;
        let y = g.batch_norm(
            y,
            b.get("head.bn2.gamma")?,
            b.get("head.bn2.beta")?,
            &mut bn2,
            mode,
        )?;
        let y = g.dropout(y, c.dropout_rate, mode, rng)?;
        let logits = Self::linear(g, b, y, "head.dense2", "w", "b")?;
        let probs = g.softmax(logits, 1)?;
        if mode == Mode::Train {
            bn_updates.push(("head.bn1".to_string(), bn1));
            bn_updates.push(("head.bn2".to_string(), bn2));
        }

        let attention = match captured {
            Some(layers) => split_attention(&layers, batch, c.num_heads, t),
            None => Vec::new(),
        };
        Ok(ForwardOutput {
            logits,
            probs,
            head_input,
            tokens,
            seq_len: t,
            attention,
            bn_updates,
        })
    }

    /// Stores running statistics produced by a train-mode forward.
    pub fn apply_bn_updates(&mut self, updates: &[(String, BatchNormState)]) -> Result<()> {
        for (prefix, state) in updates {
            self.params
                .set(&format!("{prefix}.running_mean"), &state.running_mean)?;
            self.params
                .set(&format!("{prefix}.running_var"), &state.running_var)?;
        }
        Ok(())
    }

    /// Eval-mode class probabilities `[B, classes]`.
    pub fn predict(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.predict_inner(images, false)?.0)
    }

    /// Eval-mode probabilities plus one attention record per image.
    pub fn predict_with_attention(
        &self,
        images: &Tensor,
    ) -> Result<(Tensor, Vec<AttentionRecord>)> {
        self.predict_inner(images, true)
    }

    fn predict_inner(
        &self,
        images: &Tensor,
        capture: bool,
    ) -> Result<(Tensor, Vec<AttentionRecord>)> {
        let s = images.shape().to_vec();
        if s.len() != 4 {
            return Err(Error::dim(format!(
                "expected [B, H, W, 3] images, got {s:?}"
            )));
        }
        let per = s[1] * s[2] * s[3];
        let classes = self.config.num_classes;
        let mut probs = Vec::with_capacity(s[0] * classes);
        let mut records = Vec::new();
        // eval mode draws nothing from the generator
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for chunk in images.data().chunks(PREDICT_CHUNK * per) {
            let n = chunk.len() / per;
            let batch = Tensor::new(vec![n, s[1], s[2], s[3]], chunk.to_vec())?;
            let mut g = Graph::new();
            let b = self.bind(&mut g, |_| false);
            let out = self.forward(&mut g, &b, &batch, Mode::Eval, capture, &mut rng)?;
            probs.extend_from_slice(g.value(out.probs).data());
            records.extend(out.attention);
        }
        Ok((Tensor::new(vec![s[0], classes], probs)?, records))
    }
}

fn split_attention(
    layers: &[Vec<f64>],
    batch: usize,
    heads: usize,
    t: usize,
) -> Vec<AttentionRecord> {
    let per_sample = heads * t * t;
    (0..batch)
        .map(|bi| AttentionRecord {
            seq_len: t,
            num_heads: heads,
            layers: layers
                .iter()
                .map(|l| l[bi * per_sample..(bi + 1) * per_sample].to_vec())
                .collect(),
        })
        .collect()
}

/// Values for one parameter. Each parameter draws from its own ChaCha
/// stream so any subset can be regenerated independently.
fn init_values(spec: &ParamSpec, seed: u64, stream: u64) -> Vec<f64> {
    let n = spec.len();
    match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::TruncNormal(std) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let normal = Normal::new(0.0, std).expect("positive std");
            (0..n)
                .map(|_| loop {
                    let v: f64 = normal.sample(&mut rng);
                    if v.abs() <= 2.0 * std {
                        break v;
                    }
                })
                .collect()
        }
        Init::Glorot { fan_in, fan_out } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_batch(batch: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..batch * 8 * 8 * 3)
            .map(|_| rng.random::<f64>())
            .collect();
        Tensor::new(vec![batch, 8, 8, 3], data).unwrap()
    }

    #[test]
    fn tiny_forward_shapes() {
        let model = ViTModel::init(ViTConfig::tiny(), 1).unwrap();
        let mut g = Graph::new();
        let b = model.bind(&mut g, |_| false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = model
            .forward(&mut g, &b, &tiny_batch(2, 0), Mode::Eval, true, &mut rng)
            .unwrap();
        assert_eq!(g.shape(out.probs), &[2, 7]);
        assert_eq!(out.seq_len, 5);
        assert_eq!(out.attention.len(), 2);
        let rec = &out.attention[0];
        assert_eq!((rec.depth(), rec.num_heads, rec.seq_len), (1, 2, 5));
        assert_eq!(rec.head(0, 1).len(), 25);
        for row in g.value(out.probs).data().chunks(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn wrong_image_size_is_dimension_error() {
        let model = ViTModel::init(ViTConfig::tiny(), 1).unwrap();
        let bad = Tensor::zeros(&[2, 12, 12, 3]);
        assert!(matches!(model.predict(&bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn train_mode_needs_two_samples() {
        let model = ViTModel::init(ViTConfig::tiny(), 1).unwrap();
        let mut g = Graph::new();
        let b = model.bind(&mut g, |_| true);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(model
            .forward(&mut g, &b, &tiny_batch(1, 0), Mode::Train, false, &mut rng)
            .is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = ViTModel::init(ViTConfig::tiny(), 5).unwrap();
        let b = ViTModel::init(ViTConfig::tiny(), 5).unwrap();
        let c = ViTModel::init(ViTConfig::tiny(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_follows_the_scheme() {
        let m = ViTModel::init(ViTConfig::tiny(), 9).unwrap();
        let p = m.params();
        assert!(p.values("pos_embed").unwrap().iter().all(|&v| v == 0.0));
        assert!(p
            .values("blocks.0.attn.bq")
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert!(p
            .values("final_ln.gamma")
            .unwrap()
            .iter()
            .all(|&v| v == 1.0));
        assert!(p
            .values("head.bn1.running_var")
            .unwrap()
            .iter()
            .all(|&v| v == 1.0));
        let w = p.values("blocks.0.mlp.w1").unwrap();
        assert!(w.iter().all(|v| v.abs() <= 2.0 * INIT_STD + 1e-9));
        assert!(w.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn live_count_matches_closed_form() {
        let m = ViTModel::init(ViTConfig::tiny(), 0).unwrap();
        assert_eq!(m.live_param_count(false), 1056);
        assert_eq!(m.live_param_count(true), m.config().param_count(true));
        let mut cls = ViTConfig::tiny();
        cls.head_input = HeadInput::ClassToken;
        let m = ViTModel::init(cls.clone(), 0).unwrap();
        assert_eq!(m.live_param_count(true), cls.param_count(true));
    }

    #[test]
    fn from_params_rejects_extras_and_gaps() {
        let m = ViTModel::init(ViTConfig::tiny(), 0).unwrap();
        let mut extra = m.params().clone();
        extra.insert("bogus", vec![1], vec![0.0], true).unwrap();
        let err = ViTModel::from_params(ViTConfig::tiny(), extra).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }
}
