//! A small audio spectrogram transformer.
//!
//! Spectrogram patches are embedded by a non-overlapping convolution, folded
//! into a token sequence and passed through pre-norm encoder blocks that all
//! preserve the `(B, D, N)` shape. After every block the activations can be
//! unfolded back onto the `(F', T')` patch grid, inspected or rewritten by an
//! [`Intervention`], and folded again. The classifier is a mean-pool followed
//! by an affine head that is fitted in closed form on frozen embeddings.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::container::{Container, Tensor};
use crate::error::{invalid, Error, Result};
use crate::features::{FeatureConfig, LogMelSpectrogram};
use crate::ridge::ridge_fit;
use crate::tensor::{fold, unfold, ActivationTensor};

const LN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub num_blocks: usize,
    pub num_heads: usize,
    pub mlp_hidden: usize,
    pub num_classes: usize,
    /// Center every patch kernel to zero sum, so a uniform log-level offset
    /// within a patch leaves its embedding unchanged.
    pub zero_mean_kernels: bool,
    /// Std of the fixed positional embedding added to the tokens entering block 0.
    pub pos_embed_std: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            patch_size: 16,
            embed_dim: 64,
            num_blocks: 6,
            num_heads: 4,
            mlp_hidden: 128,
            num_classes: 10,
            zero_mean_kernels: true,
            pos_embed_std: 1.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, features: &FeatureConfig) -> Result<()> {
        let p = self.patch_size;
        if p == 0 || self.embed_dim == 0 || self.num_blocks == 0 || self.num_heads == 0 {
            return Err(invalid("patch size, embed dim, blocks and heads must be positive"));
        }
        if self.mlp_hidden == 0 {
            return Err(invalid("mlp hidden width must be positive"));
        }
        if !(self.pos_embed_std >= 0.0 && self.pos_embed_std.is_finite()) {
            return Err(invalid("positional embedding std must be finite and >= 0"));
        }
        if self.num_classes < 2 {
            return Err(invalid("need at least two classes"));
        }
        if features.n_mels % p != 0 {
            return Err(invalid(format!(
                "n_mels {} not divisible by patch size {p}",
                features.n_mels
            )));
        }
        if features.target_frames % p != 0 {
            return Err(invalid(format!(
                "target frames {} not divisible by patch size {p}",
                features.target_frames
            )));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(invalid(format!(
                "embed dim {} not divisible by {} heads",
                self.embed_dim, self.num_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

impl LayerNorm {
    fn identity(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
        }
    }

    fn apply(&self, x: &[f32], out: &mut [f32]) {
        let n = x.len() as f32;
        let mean = x.iter().sum::<f32>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for (((o, v), g), b) in out.iter_mut().zip(x).zip(&self.gamma).zip(&self.beta) {
            *o = (v - mean) * inv * g + b;
        }
    }

    /// Row-wise normalization of a token-major `(N, D)` buffer.
    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let d = self.gamma.len();
        let mut out = vec![0.0; x.len()];
        for (row, o) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.apply(row, o);
        }
        out
    }
}

/// Dense layer, `weight` is `out x in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    fn random(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        Self {
            weight: gaussian(in_dim * out_dim, scale, rng),
            bias: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    /// `x` is `(rows, in_dim)`; returns `(rows, out_dim)`.
    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let rows = x.len() / self.in_dim;
        let mut out = Vec::with_capacity(rows * self.out_dim);
        for r in x.chunks_exact(self.in_dim) {
            for (w, b) in self.weight.chunks_exact(self.in_dim).zip(&self.bias) {
                out.push(b + dot(r, w));
            }
        }
        out
    }
}

/// Fixed-order eight-lane dot product.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn gaussian(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (scale * z) as f32
        })
        .collect()
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl BlockParams {
    fn random(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.embed_dim;
        let h = cfg.mlp_hidden;
        Self {
            ln1: LayerNorm::identity(d),
            query: Linear::random(d, d, rng),
            key: Linear::random(d, d, rng),
            value: Linear::random(d, d, rng),
            out: Linear::random(d, d, rng),
            ln2: LayerNorm::identity(d),
            fc1: Linear::random(d, h, rng),
            fc2: Linear::random(h, d, rng),
        }
    }

    fn attention(&self, x: &[f32], heads: usize) -> Vec<f32> {
        let d = self.query.out_dim;
        let n = x.len() / d;
        let hd = d / heads;
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let scale = 1.0 / (hd as f32).sqrt();
        let mut ctx = vec![0.0f32; n * d];
        let mut kh = vec![0.0f32; n * hd];
        let mut scores = vec![0.0f32; n];
        for h in 0..heads {
            let off = h * hd;
            for j in 0..n {
                kh[j * hd..(j + 1) * hd].copy_from_slice(&k[j * d + off..j * d + off + hd]);
            }
            for i in 0..n {
                let qi = &q[i * d + off..i * d + off + hd];
                let mut max = f32::NEG_INFINITY;
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = dot(qi, &kh[j * hd..(j + 1) * hd]) * scale;
                    max = max.max(*s);
                }
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    total += *s;
                }
                let out = &mut ctx[i * d + off..i * d + off + hd];
                for (j, s) in scores.iter().enumerate() {
                    let w = s / total;
                    for (o, vv) in out.iter_mut().zip(&v[j * d + off..j * d + off + hd]) {
                        *o += w * vv;
                    }
                }
            }
        }
        self.out.forward(&ctx)
    }

    /// Pre-norm block over a token-major `(N, D)` buffer, in place.
    fn forward_tokens(&self, x: &mut [f32], heads: usize) {
        let attn = self.attention(&self.ln1.forward(x), heads);
        for (v, a) in x.iter_mut().zip(&attn) {
            *v += a;
        }
        let mut hidden = self.fc1.forward(&self.ln2.forward(x));
        for v in hidden.iter_mut() {
            *v = gelu(*v);
        }
        let mlp = self.fc2.forward(&hidden);
        for (v, m) in x.iter_mut().zip(&mlp) {
            *v += m;
        }
    }
}

/// Where an intervention or tap sits in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    /// Output of the patch embedding.
    Embedding,
    /// Output of transformer block `l`, counting from 0.
    Block(usize),
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Site::Embedding => write!(f, "embedding"),
            Site::Block(l) => write!(f, "block {l}"),
        }
    }
}

type Action<'a> = Box<dyn Fn(&mut ActivationTensor) -> Result<()> + Send + Sync + 'a>;

/// A shape-preserving rewrite of the unfolded activations at one site.
pub struct Intervention<'a> {
    pub site: Site,
    action: Action<'a>,
}

impl<'a> Intervention<'a> {
    pub fn new(
        site: Site,
        action: impl Fn(&mut ActivationTensor) -> Result<()> + Send + Sync + 'a,
    ) -> Self {
        Self {
            site,
            action: Box::new(action),
        }
    }

    pub fn identity(site: Site) -> Self {
        Self::new(site, |_| Ok(()))
    }
}

impl std::fmt::Debug for Intervention<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Intervention").field("site", &self.site).finish()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `B x C`
    pub logits: Vec<Vec<f32>>,
    /// Mean-pooled final activations, `B x D`.
    pub pooled: Vec<Vec<f32>>,
    /// Unfolded patch-embedding output (after any embedding intervention).
    pub embedding: ActivationTensor,
    /// Unfolded output of each block (after any intervention at that block).
    pub blocks: Vec<ActivationTensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    config: ModelConfig,
    features: FeatureConfig,
    /// `D x (p * p)`, patch rows are mel bins, columns are frames.
    patch_weight: Vec<f32>,
    patch_bias: Vec<f32>,
    /// `D x N`, frequency-major tokens.
    pos_embed: Vec<f32>,
    blocks: Vec<BlockParams>,
    /// `C x D`
    head_weight: Vec<f32>,
    head_bias: Vec<f32>,
    head_trained: bool,
}

pub fn init_model(cfg: &ModelConfig, features: &FeatureConfig) -> Result<EncoderModel> {
    EncoderModel::new(cfg, features)
}

impl EncoderModel {
    pub fn new(cfg: &ModelConfig, features: &FeatureConfig) -> Result<Self> {
        features.validate()?;
        cfg.validate(features)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let p2 = cfg.patch_size * cfg.patch_size;
        let d = cfg.embed_dim;
        let mut patch_weight = gaussian(d * p2, 1.0 / (p2 as f64).sqrt(), &mut rng);
        if cfg.zero_mean_kernels {
            for k in patch_weight.chunks_exact_mut(p2) {
                let mean = k.iter().map(|&v| v as f64).sum::<f64>() / p2 as f64;
                k.iter_mut().for_each(|v| *v -= mean as f32);
            }
        }
        let blocks = (0..cfg.num_blocks)
            .map(|_| BlockParams::random(cfg, &mut rng))
            .collect();
        let (nf, nt) = (features.n_mels / cfg.patch_size, features.target_frames / cfg.patch_size);
        let pos_embed = gaussian(d * nf * nt, cfg.pos_embed_std, &mut rng);
        Ok(Self {
            config: cfg.clone(),
            features: features.clone(),
            patch_weight,
            patch_bias: vec![0.0; d],
            pos_embed,
            blocks,
            head_weight: vec![0.0; cfg.num_classes * d],
            head_bias: vec![0.0; cfg.num_classes],
            head_trained: false,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.features
    }

    pub fn blocks(&self) -> &[BlockParams] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `(F', T')` for this model's feature configuration.
    pub fn grid(&self) -> (usize, usize) {
        let p = self.config.patch_size;
        (self.features.n_mels / p, self.features.target_frames / p)
    }

    pub fn head_trained(&self) -> bool {
        self.head_trained
    }

    pub fn patch_weight(&self) -> &[f32] {
        &self.patch_weight
    }

    pub fn set_patch_bias(&mut self, bias: Vec<f32>) -> Result<()> {
        if bias.len() != self.config.embed_dim {
            return Err(Error::ShapeMismatch("patch bias length".into()));
        }
        self.patch_bias = bias;
        Ok(())
    }

    /// Installs an affine head; `weight` is `C x D`.
    pub fn set_head(&mut self, weight: Vec<f32>, bias: Vec<f32>) -> Result<()> {
        let (c, d) = (self.config.num_classes, self.config.embed_dim);
        if weight.len() != c * d || bias.len() != c {
            return Err(Error::ShapeMismatch(format!(
                "head must be {c}x{d} plus {c} biases"
            )));
        }
        self.head_weight = weight;
        self.head_bias = bias;
        self.head_trained = true;
        Ok(())
    }

    /// Hash of the configuration and every encoder parameter except the head.
    ///
    /// Silent references depend only on these, so retraining the head keeps
    /// a cached reference valid.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).unwrap_or_default());
        h.update(serde_json::to_vec(&self.features).unwrap_or_default());
        for t in self.encoder_tensors() {
            for v in &t.data {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Non-overlapping patch convolution; returns `(B, D, F', T')`.
    pub fn patch_embed(&self, specs: &[LogMelSpectrogram]) -> Result<ActivationTensor> {
        let p = self.config.patch_size;
        let d = self.config.embed_dim;
        let (m, t) = (self.features.n_mels, self.features.target_frames);
        let (nf, nt) = self.grid();
        if specs.is_empty() {
            return Err(invalid("empty batch"));
        }
        let mut out = ActivationTensor::zeros_unfolded(specs.len(), d, nf, nt);
        let mut patch = vec![0.0f32; p * p];
        for (b, spec) in specs.iter().enumerate() {
            if spec.n_mels() != m || spec.n_frames() != t {
                return Err(Error::ShapeMismatch(format!(
                    "spectrogram {b} is {}x{}, model expects {m}x{t}",
                    spec.n_mels(),
                    spec.n_frames()
                )));
            }
            for f in 0..nf {
                for tt in 0..nt {
                    for r in 0..p {
                        let row = spec.row(f * p + r);
                        for c in 0..p {
                            patch[r * p + c] = row[tt * p + c] as f32;
                        }
                    }
                    for (dd, (w, bias)) in self
                        .patch_weight
                        .chunks_exact(p * p)
                        .zip(&self.patch_bias)
                        .enumerate()
                    {
                        out.time_row_mut(b, dd, f)[tt] = bias + dot(&patch, w);
                    }
                }
            }
        }
        Ok(out)
    }

    /// One encoder block over a folded `(B, D, N)` tensor.
    pub fn encoder_block(&self, index: usize, x: ActivationTensor) -> Result<ActivationTensor> {
        let block = self
            .blocks
            .get(index)
            .ok_or_else(|| invalid(format!("block {index} out of range")))?;
        if x.grid().is_some() || x.dim() != self.config.embed_dim {
            return Err(Error::ShapeMismatch(format!(
                "block {index} expects folded (B, {}, N), got {:?}",
                self.config.embed_dim,
                x.dims()
            )));
        }
        let (batch, d, n) = (x.batch(), x.dim(), x.tokens());
        let mut data = x.into_data();
        let mut tokens = vec![0.0f32; n * d];
        for item in data.chunks_exact_mut(d * n) {
            // (D, N) -> (N, D)
            for dd in 0..d {
                for j in 0..n {
                    tokens[j * d + dd] = item[dd * n + j];
                }
            }
            block.forward_tokens(&mut tokens, self.config.num_heads);
            for dd in 0..d {
                for j in 0..n {
                    item[dd * n + j] = tokens[j * d + dd];
                }
            }
        }
        let out = ActivationTensor::folded(data, batch, d, n)?;
        if !out.all_finite() {
            return Err(Error::NonFinite {
                site: Site::Block(index).to_string(),
            });
        }
        Ok(out)
    }

    fn check_interventions(&self, interventions: &[Intervention<'_>]) -> Result<()> {
        for iv in interventions {
            if let Site::Block(l) = iv.site {
                if l >= self.blocks.len() {
                    return Err(invalid(format!(
                        "intervention at block {l}, model has {} blocks",
                        self.blocks.len()
                    )));
                }
            }
        }
        for w in interventions.windows(2) {
            if w[0].site >= w[1].site {
                return Err(invalid(format!(
                    "interventions must be strictly increasing by site ({} then {})",
                    w[0].site, w[1].site
                )));
            }
        }
        Ok(())
    }

    fn intervene(
        &self,
        site: Site,
        x: &mut ActivationTensor,
        interventions: &[Intervention<'_>],
    ) -> Result<()> {
        if let Some(iv) = interventions.iter().find(|iv| iv.site == site) {
            let dims = x.dims();
            (iv.action)(x)?;
            if x.dims() != dims {
                return Err(Error::ShapeMismatch(format!(
                    "intervention at {site} changed shape {dims:?} -> {:?}",
                    x.dims()
                )));
            }
            if !x.all_finite() {
                return Err(Error::NonFinite {
                    site: format!("intervention at {site}"),
                });
            }
        }
        Ok(())
    }

    /// Full forward pass with per-block taps and optional interventions.
    pub fn forward(
        &self,
        specs: &[LogMelSpectrogram],
        interventions: &[Intervention<'_>],
    ) -> Result<ForwardOutput> {
        self.check_interventions(interventions)?;
        let (nf, nt) = self.grid();

        let mut x = self.patch_embed(specs)?;
        if !x.all_finite() {
            return Err(Error::NonFinite {
                site: Site::Embedding.to_string(),
            });
        }
        self.intervene(Site::Embedding, &mut x, interventions)?;
        let embedding = x.clone();
        let mut folded = fold(x)?;
        for item in folded.data_mut().chunks_exact_mut(self.pos_embed.len()) {
            item.iter_mut().zip(&self.pos_embed).for_each(|(v, p)| *v += p);
        }

        let mut taps = Vec::with_capacity(self.blocks.len());
        for l in 0..self.blocks.len() {
            let mut grid = unfold(self.encoder_block(l, folded)?, nf, nt)?;
            self.intervene(Site::Block(l), &mut grid, interventions)?;
            taps.push(grid.clone());
            folded = fold(grid)?;
        }

        let pooled = mean_pool(&folded);
        let logits = pooled.iter().map(|p| self.head(p)).collect();
        Ok(ForwardOutput {
            logits,
            pooled,
            embedding,
            blocks: taps,
        })
    }

    fn head(&self, pooled: &[f32]) -> Vec<f32> {
        self.head_weight
            .chunks_exact(self.config.embed_dim)
            .zip(&self.head_bias)
            .map(|(w, b)| b + dot(pooled, w))
            .collect()
    }

    /// Fits the head by ridge regression on one-hot targets over frozen pooled embeddings.
    pub fn train_head(
        &mut self,
        specs: &[LogMelSpectrogram],
        labels: &[usize],
        ridge_lambda: f64,
    ) -> Result<()> {
        let pooled = self.forward(specs, &[])?.pooled;
        self.train_head_from_pooled(&pooled, labels, ridge_lambda)
    }

    pub fn train_head_from_pooled(
        &mut self,
        pooled: &[Vec<f32>],
        labels: &[usize],
        ridge_lambda: f64,
    ) -> Result<()> {
        let c = self.config.num_classes;
        if pooled.is_empty() {
            return Err(invalid("training set is empty"));
        }
        if pooled.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} embeddings but {} labels",
                pooled.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= c) {
            return Err(invalid(format!("label {bad} out of range for {c} classes")));
        }
        let x: Vec<Vec<f64>> = pooled
            .iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        let y: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..c).map(|k| if k == l { 1.0 } else { 0.0 }).collect())
            .collect();
        let sol = ridge_fit(&x, &y, ridge_lambda)?;
        let weight = sol.weights.iter().flatten().map(|&v| v as f32).collect();
        let bias = sol.bias.iter().map(|&v| v as f32).collect();
        self.set_head(weight, bias)
    }

    fn encoder_tensors(&self) -> Vec<Tensor> {
        let p = self.config.patch_size;
        let d = self.config.embed_dim;
        let mut out = vec![
            Tensor {
                name: "patch_embed.weight".into(),
                dims: vec![d, 1, p, p],
                data: self.patch_weight.clone(),
            },
            Tensor {
                name: "patch_embed.bias".into(),
                dims: vec![d],
                data: self.patch_bias.clone(),
            },
            Tensor {
                name: "pos_embed".into(),
                dims: vec![d, self.pos_embed.len() / d.max(1)],
                data: self.pos_embed.clone(),
            },
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let vec_t = |name: &str, v: &[f32]| Tensor {
                name: format!("blocks.{i}.{name}"),
                dims: vec![v.len()],
                data: v.to_vec(),
            };
            let lin = |name: &str, l: &Linear| {
                [
                    Tensor {
                        name: format!("blocks.{i}.{name}.weight"),
                        dims: vec![l.out_dim, l.in_dim],
                        data: l.weight.clone(),
                    },
                    vec_t(&format!("{name}.bias"), &l.bias),
                ]
            };
            out.push(vec_t("ln1.gamma", &b.ln1.gamma));
            out.push(vec_t("ln1.beta", &b.ln1.beta));
            out.extend(lin("attn.query", &b.query));
            out.extend(lin("attn.key", &b.key));
            out.extend(lin("attn.value", &b.value));
            out.extend(lin("attn.out", &b.out));
            out.push(vec_t("ln2.gamma", &b.ln2.gamma));
            out.push(vec_t("ln2.beta", &b.ln2.beta));
            out.extend(lin("mlp.fc1", &b.fc1));
            out.extend(lin("mlp.fc2", &b.fc2));
        }
        out
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(
            "model",
            json!({
                "model": self.config,
                "features": self.features,
                "head_trained": self.head_trained,
            }),
        );
        c.fingerprint = Some(self.fingerprint());
        for t in self.encoder_tensors() {
            c.push(t);
        }
        c.push(Tensor {
            name: "head.weight".into(),
            dims: vec![self.config.num_classes, self.config.embed_dim],
            data: self.head_weight.clone(),
        });
        c.push(Tensor {
            name: "head.bias".into(),
            dims: vec![self.config.num_classes],
            data: self.head_bias.clone(),
        });
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("model")?;
        let config: ModelConfig = serde_json::from_value(c.config["model"].clone())?;
        let features: FeatureConfig = serde_json::from_value(c.config["features"].clone())?;
        let head_trained = c.config["head_trained"].as_bool().unwrap_or(false);
        let mut model = Self::new(&config, &features)?;

        let take = |name: &str, dims: &[usize]| -> Result<Vec<f32>> {
            let t = c.tensor(name)?;
            if t.dims != dims {
                return Err(Error::Format(format!(
                    "tensor {name} has dims {:?}, expected {dims:?}",
                    t.dims
                )));
            }
            Ok(t.data.clone())
        };
        let expected = model.encoder_tensors();
        let mut loaded = expected
            .iter()
            .map(|t| take(&t.name, &t.dims))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        model.patch_weight = loaded.next().unwrap_or_default();
        model.patch_bias = loaded.next().unwrap_or_default();
        model.pos_embed = loaded.next().unwrap_or_default();
        for b in model.blocks.iter_mut() {
            b.ln1.gamma = loaded.next().unwrap_or_default();
            b.ln1.beta = loaded.next().unwrap_or_default();
            for l in [&mut b.query, &mut b.key, &mut b.value, &mut b.out] {
                l.weight = loaded.next().unwrap_or_default();
                l.bias = loaded.next().unwrap_or_default();
            }
            b.ln2.gamma = loaded.next().unwrap_or_default();
            b.ln2.beta = loaded.next().unwrap_or_default();
            for l in [&mut b.fc1, &mut b.fc2] {
                l.weight = loaded.next().unwrap_or_default();
                l.bias = loaded.next().unwrap_or_default();
            }
        }
        model.head_weight = take("head.weight", &[config.num_classes, config.embed_dim])?;
        model.head_bias = take("head.bias", &[config.num_classes])?;
        model.head_trained = head_trained;
        if let Some(fp) = &c.fingerprint {
            if *fp != model.fingerprint() {
                return Err(Error::Format("model fingerprint does not match its weights".into()));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Mean over tokens for each item and channel of a folded tensor.
fn mean_pool(x: &ActivationTensor) -> Vec<Vec<f32>> {
    let (d, n) = (x.dim(), x.tokens());
    x.data()
        .chunks_exact(d * n)
        .map(|item| {
            item.chunks_exact(n)
                .map(|row| row.iter().sum::<f32>() / n as f32)
                .collect()
        })
        .collect()
}

/// Argmax with ties resolved to the lowest index.
pub fn classify(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}
