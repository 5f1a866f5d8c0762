//! Non-autoregressive transformer encoder-decoder.
//!
//! Encoder layers: causal relative self-attention, add & norm, feed-forward,
//! add & norm. Decoder layers: causal relative self-attention over the
//! queries, cross-attention to the encoder latent `Z`, shared attention to the
//! graph embedding `X`, feed-forward; each followed by add & norm. All `T2`
//! output frames come out of a single decoder pass.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::MultiHeadAttention;
use crate::autograd::{Graph, Var};
use crate::embedding::{
    embed, sinusoid_table, EmbeddingConfig, Embedded, GatParams, PoseEncoder, DEFAULT_J_DIM,
    DEFAULT_LEAKY_SLOPE,
};
use crate::error::{Error, Result};
use crate::layers::{FeedForward, LayerNorm, Linear};
use crate::params::ParamStore;
use crate::skeleton::{Adjacency, HorizonSpec, MotionSequence, Skeleton, Window};
use crate::tensor::Tensor;
use crate::transform::{canonicalize, compute_params, decanonicalize, TransformParams};

/// Component switches for ablation studies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Replace graph attention with a per-frame linear embedding.
    pub no_gat: bool,
    /// Plain (absolute-position, unmasked) self-attention.
    pub no_relative_attn: bool,
    /// Drop the decoder's shared attention to the graph embedding.
    pub no_shared_attn: bool,
    /// Drop the decoder's cross-attention to the encoder latent.
    pub no_cross_attn: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_joints: usize,
    pub j_dim: usize,
    pub gat_heads: usize,
    pub leaky_slope: f64,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub rel_clip: usize,
    pub dropout: f64,
    pub input_len: usize,
    pub output_len: usize,
    /// Heading interval in frames.
    pub delta: usize,
    /// Work in the canonical frame; disable to study the raw-coordinate model.
    pub canonicalize: bool,
    pub ablation: Ablation,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(num_joints: usize, horizon: HorizonSpec) -> Self {
        ModelConfig {
            num_joints,
            j_dim: DEFAULT_J_DIM,
            gat_heads: 1,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            num_layers: 4,
            num_heads: 8,
            ffn_dim: 2048,
            rel_clip: horizon.input_len + horizon.output_len,
            dropout: 0.1,
            input_len: horizon.input_len,
            output_len: horizon.output_len,
            delta: 1,
            canonicalize: true,
            ablation: Ablation::default(),
            seed: 0,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.num_joints * self.j_dim
    }

    pub fn horizon(&self) -> HorizonSpec {
        HorizonSpec {
            input_len: self.input_len,
            output_len: self.output_len,
        }
    }

    pub fn embedding(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            num_joints: self.num_joints,
            j_dim: self.j_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        EmbeddingConfig::new(self.num_joints, self.j_dim)?;
        HorizonSpec::new(self.input_len, self.output_len)?;
        if self.num_heads == 0 || !self.model_dim().is_multiple_of(self.num_heads) {
            return bad(format!(
                "model_dim {} not divisible by num_heads {}",
                self.model_dim(),
                self.num_heads
            ));
        }
        if self.gat_heads == 0 {
            return bad("gat_heads must be positive".into());
        }
        if self.rel_clip < 1 {
            return bad("rel_clip must be at least 1".into());
        }
        if self.ffn_dim == 0 {
            return bad("ffn_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.delta < 1 || self.delta >= self.input_len {
            return bad(format!(
                "delta must satisfy 1 <= delta < input_len, got {}",
                self.delta
            ));
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite".into());
        }
        Ok(())
    }

    fn self_attn_clip(&self) -> Option<usize> {
        (!self.ablation.no_relative_attn).then_some(self.rel_clip)
    }

    fn self_attn_causal(&self) -> bool {
        !self.ablation.no_relative_attn
    }
}

/// Exact number of learnable scalars for `cfg`.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let d = cfg.model_dim();
    let mha_self = MultiHeadAttention::num_params(d, cfg.num_heads, cfg.self_attn_clip());
    let mha = MultiHeadAttention::num_params(d, cfg.num_heads, None);
    let ffn = FeedForward::num_params(d, cfg.ffn_dim);
    let ln = LayerNorm::num_params(d);

    let encoder_layer = mha_self + ln + ffn + ln;
    let mut decoder_layer = mha_self + ln + ffn + ln;
    if !cfg.ablation.no_cross_attn {
        decoder_layer += mha + ln;
    }
    if !cfg.ablation.no_shared_attn {
        decoder_layer += mha + ln;
    }
    PoseEncoder::num_params(&cfg.embedding(), cfg.gat_heads, !cfg.ablation.no_gat)
        + cfg.num_layers * (encoder_layer + decoder_layer)
        + Linear::num_params(d, 3 * cfg.num_joints)
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    self_attn: MultiHeadAttention,
    norm1: LayerNorm,
    ffn: FeedForward,
    norm2: LayerNorm,
}

#[derive(Debug, Clone, Copy)]
struct DecoderLayer {
    self_attn: MultiHeadAttention,
    norm1: LayerNorm,
    cross: Option<(MultiHeadAttention, LayerNorm)>,
    shared: Option<(MultiHeadAttention, LayerNorm)>,
    ffn: FeedForward,
    norm_out: LayerNorm,
}

#[derive(Debug, Clone)]
struct Layout {
    encoder: PoseEncoder,
    enc_layers: Vec<EncoderLayer>,
    dec_layers: Vec<DecoderLayer>,
    output: Linear,
}

impl Layout {
    fn register(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Layout {
        let d = cfg.model_dim();
        let n = cfg.num_joints;
        let encoder = if cfg.ablation.no_gat {
            let lin = Linear::register(store, "embed", 3 * n, d, rng);
            PoseEncoder::Linear {
                weight: lin.weight,
                bias: lin.bias,
            }
        } else {
            PoseEncoder::Gat(GatParams::register(
                store,
                "gat",
                cfg.j_dim,
                cfg.gat_heads,
                cfg.leaky_slope,
                rng,
            ))
        };
        let clip = cfg.self_attn_clip();
        let enc_layers = (0..cfg.num_layers)
            .map(|l| {
                let p = format!("encoder.{l}");
                EncoderLayer {
                    self_attn: MultiHeadAttention::register(store, &format!("{p}.self_attn"), d, cfg.num_heads, clip, rng),
                    norm1: LayerNorm::register(store, &format!("{p}.norm1"), d),
                    ffn: FeedForward::register(store, &format!("{p}.ffn"), d, cfg.ffn_dim, rng),
                    norm2: LayerNorm::register(store, &format!("{p}.norm2"), d),
                }
            })
            .collect();
        let dec_layers = (0..cfg.num_layers)
            .map(|l| {
                let p = format!("decoder.{l}");
                let self_attn =
                    MultiHeadAttention::register(store, &format!("{p}.self_attn"), d, cfg.num_heads, clip, rng);
                let norm1 = LayerNorm::register(store, &format!("{p}.norm1"), d);
                let cross = (!cfg.ablation.no_cross_attn).then(|| {
                    (
                        MultiHeadAttention::register(store, &format!("{p}.cross_attn"), d, cfg.num_heads, None, rng),
                        LayerNorm::register(store, &format!("{p}.norm_cross"), d),
                    )
                });
                let shared = (!cfg.ablation.no_shared_attn).then(|| {
                    (
                        MultiHeadAttention::register(store, &format!("{p}.shared_attn"), d, cfg.num_heads, None, rng),
                        LayerNorm::register(store, &format!("{p}.norm_shared"), d),
                    )
                });
                DecoderLayer {
                    self_attn,
                    norm1,
                    cross,
                    shared,
                    ffn: FeedForward::register(store, &format!("{p}.ffn"), d, cfg.ffn_dim, rng),
                    norm_out: LayerNorm::register(store, &format!("{p}.norm_out"), d),
                }
            })
            .collect();
        let output = Linear::register(store, "output", d, 3 * n, rng);
        Layout {
            encoder,
            enc_layers,
            dec_layers,
            output,
        }
    }
}

/// Dropout applied to sublayer outputs while training.
pub struct Dropout<'r> {
    rate: f64,
    rng: Option<&'r mut ChaCha8Rng>,
}

impl<'r> Dropout<'r> {
    pub fn disabled() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn new(rate: f64, rng: &'r mut ChaCha8Rng) -> Self {
        Dropout { rate, rng: Some(rng) }
    }

    fn apply(&mut self, g: &mut Graph, x: Var) -> Var {
        let Some(rng) = self.rng.as_deref_mut() else { return x };
        if self.rate <= 0.0 {
            return x;
        }
        let (r, c) = g.shape(x);
        let keep = 1.0 - self.rate;
        let mask = (0..r * c)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        g.mul_const(x, Tensor::from_vec(r, c, mask))
    }
}

/// Decoder queries: the last embedded input frame repeated `t2` times plus
/// the temporal encoding of the target positions `T1..T1+t2` (0-based).
pub fn init_queries(embedded: &Tensor, t2: usize) -> Result<Tensor> {
    let (t1, d) = embedded.shape();
    if t1 == 0 || t2 == 0 {
        return Err(Error::DimensionMismatch("init_queries needs T1 >= 1 and T2 >= 1".into()));
    }
    let mut out = sinusoid_table(t1, t2, d)?;
    for r in 0..t2 {
        for (o, v) in out.row_mut(r).iter_mut().zip(embedded.row(t1 - 1)) {
            *o += v;
        }
    }
    Ok(out)
}

/// A global-frame forecast with the intermediate canonical output.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub global: MotionSequence,
    /// `T2 × 3N` canonical coordinates.
    pub canonical: Tensor,
    pub transform: TransformParams,
}

/// Canonical-frame tensors for one training window.
#[derive(Debug, Clone)]
pub struct PreparedWindow {
    /// `T1 × 3N`
    pub input: Tensor,
    /// `T2 × 3N`
    pub target: Tensor,
    pub transform: TransformParams,
}

pub struct Model {
    config: ModelConfig,
    skeleton: Arc<Skeleton>,
    adjacency: Adjacency,
    params: ParamStore,
    layout: Layout,
    decode_calls: AtomicUsize,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Model {
            config: self.config.clone(),
            skeleton: self.skeleton.clone(),
            adjacency: self.adjacency.clone(),
            params: self.params.clone(),
            layout: self.layout.clone(),
            decode_calls: AtomicUsize::new(self.decode_calls.load(Ordering::Relaxed)),
        }
    }
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.config)
            .field("num_params", &self.params.num_scalars())
            .finish()
    }
}

impl Model {
    /// Fresh model with Glorot-initialized weights drawn from `config.seed`.
    pub fn new(config: ModelConfig, skeleton: Arc<Skeleton>) -> Result<Self> {
        config.validate()?;
        if skeleton.num_joints() != config.num_joints {
            return Err(Error::SkeletonMismatch(format!(
                "config has {} joints, skeleton has {}",
                config.num_joints,
                skeleton.num_joints()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let layout = Layout::register(&config, &mut params, &mut rng);
        debug_assert_eq!(params.num_scalars(), count_params(&config));
        Ok(Model {
            adjacency: skeleton.adjacency(),
            config,
            skeleton,
            params,
            layout,
            decode_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn skeleton(&self) -> &Arc<Skeleton> {
        &self.skeleton
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Switches canonicalization at inference without touching weights.
    pub fn set_canonicalize(&mut self, on: bool) {
        self.config.canonicalize = on;
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn pose_encoder(&self) -> &PoseEncoder {
        &self.layout.encoder
    }

    /// Number of decoder passes run since construction.
    pub fn decode_calls(&self) -> usize {
        self.decode_calls.load(Ordering::Relaxed)
    }

    pub fn embed_graph(&self, g: &mut Graph, coords: Var) -> Result<Embedded> {
        embed(g, coords, &self.adjacency, &self.layout.encoder, &self.config.embedding())
    }

    pub fn encode_graph(&self, g: &mut Graph, embedded: Var, drop: &mut Dropout) -> Var {
        let causal = self.config.self_attn_causal();
        let mut x = drop.apply(g, embedded);
        for layer in &self.layout.enc_layers {
            let a = layer.self_attn.self_attend(g, x, causal);
            let a = drop.apply(g, a);
            let s = g.add(x, a);
            x = layer.norm1.forward(g, s);
            let f = layer.ffn.forward(g, x);
            let f = drop.apply(g, f);
            let s = g.add(x, f);
            x = layer.norm2.forward(g, s);
        }
        x
    }

    pub fn queries_graph(&self, g: &mut Graph, embedded: Var) -> Result<Var> {
        let (t1, d) = g.shape(embedded);
        let t2 = self.config.output_len;
        let rep = g.repeat_row(embedded, t1 - 1, t2);
        let te = g.constant(sinusoid_table(t1, t2, d)?);
        Ok(g.add(rep, te))
    }

    pub fn decode_graph(&self, g: &mut Graph, queries: Var, z: Var, graph: Var, drop: &mut Dropout) -> Var {
        self.decode_calls.fetch_add(1, Ordering::Relaxed);
        let causal = self.config.self_attn_causal();
        let mut q = queries;
        for layer in &self.layout.dec_layers {
            let a = layer.self_attn.self_attend(g, q, causal);
            let a = drop.apply(g, a);
            let s = g.add(q, a);
            q = layer.norm1.forward(g, s);
            if let Some((attn, norm)) = &layer.cross {
                let a = attn.cross_attend(g, q, z);
                let a = drop.apply(g, a);
                let s = g.add(q, a);
                q = norm.forward(g, s);
            }
            if let Some((attn, norm)) = &layer.shared {
                let a = attn.cross_attend(g, q, graph);
                let a = drop.apply(g, a);
                let s = g.add(q, a);
                q = norm.forward(g, s);
            }
            let f = layer.ffn.forward(g, q);
            let f = drop.apply(g, f);
            let s = g.add(q, f);
            q = layer.norm_out.forward(g, s);
        }
        q
    }

    pub fn project_graph(&self, g: &mut Graph, h: Var) -> Var {
        self.layout.output.forward(g, h)
    }

    /// Canonical `T1 × 3N` input to canonical `T2 × 3N` output.
    pub fn forward_graph(&self, g: &mut Graph, coords: Var, drop: &mut Dropout) -> Result<Var> {
        let (t1, w) = g.shape(coords);
        if t1 != self.config.input_len || w != 3 * self.config.num_joints {
            return Err(Error::DimensionMismatch(format!(
                "expected {} × {} input, got {t1} × {w}",
                self.config.input_len,
                3 * self.config.num_joints
            )));
        }
        let e = self.embed_graph(g, coords)?;
        let z = self.encode_graph(g, e.embedded, drop);
        let q = self.queries_graph(g, e.embedded)?;
        let h = self.decode_graph(g, q, z, e.graph, drop);
        Ok(self.project_graph(g, h))
    }

    pub fn encode(&self, embedded: &Tensor) -> Result<Tensor> {
        self.check_width(embedded)?;
        let mut g = Graph::inference(&self.params);
        let x = g.constant(embedded.clone());
        let z = self.encode_graph(&mut g, x, &mut Dropout::disabled());
        Ok(g.value(z).clone())
    }

    pub fn decode(&self, queries: &Tensor, z: &Tensor, graph: &Tensor) -> Result<Tensor> {
        self.check_width(queries)?;
        self.check_width(z)?;
        self.check_width(graph)?;
        let mut g = Graph::inference(&self.params);
        let q = g.constant(queries.clone());
        let z = g.constant(z.clone());
        let x = g.constant(graph.clone());
        let h = self.decode_graph(&mut g, q, z, x, &mut Dropout::disabled());
        Ok(g.value(h).clone())
    }

    /// `T2 × D` decoder output to `T2 × 3N` canonical coordinates.
    pub fn project_output(&self, h: &Tensor) -> Result<Tensor> {
        self.check_width(h)?;
        let mut g = Graph::inference(&self.params);
        let x = g.constant(h.clone());
        let y = self.project_graph(&mut g, x);
        Ok(g.value(y).clone())
    }

    fn check_width(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.config.model_dim() || x.rows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected T × {} tensor, got {:?}",
                self.config.model_dim(),
                x.shape()
            )));
        }
        Ok(())
    }

    fn check_skeleton(&self, seq: &MotionSequence) -> Result<()> {
        if !self.skeleton.same_layout(seq.skeleton()) {
            return Err(Error::SkeletonMismatch(
                "sequence skeleton differs from the model skeleton".into(),
            ));
        }
        Ok(())
    }

    /// Transform parameters the model uses for an observed segment.
    pub fn transform_for(&self, s_in: &MotionSequence) -> Result<TransformParams> {
        if self.config.canonicalize {
            compute_params(s_in, self.skeleton.root_index(), self.config.delta)
        } else {
            Ok(TransformParams::identity())
        }
    }

    /// Canonicalizes a window into model-space tensors, with parameters
    /// taken from the window's own observed segment.
    pub fn prepare(&self, w: &Window) -> Result<PreparedWindow> {
        self.check_skeleton(&w.input)?;
        let h = self.config.horizon();
        if w.input.len() != h.input_len || w.target.len() != h.output_len {
            return Err(Error::DimensionMismatch(format!(
                "window is {} → {}, model expects {} → {}",
                w.input.len(),
                w.target.len(),
                h.input_len,
                h.output_len
            )));
        }
        let tp = self.transform_for(&w.input)?;
        let w3 = 3 * self.config.num_joints;
        Ok(PreparedWindow {
            input: Tensor::from_vec(h.input_len, w3, canonicalize(&w.input, &tp).to_flat()),
            target: Tensor::from_vec(h.output_len, w3, canonicalize(&w.target, &tp).to_flat()),
            transform: tp,
        })
    }

    /// Forecast for an observed segment of exactly `input_len` frames.
    pub fn predict(&self, s_in: &MotionSequence) -> Result<Prediction> {
        self.check_skeleton(s_in)?;
        if s_in.len() != self.config.input_len {
            return Err(Error::DimensionMismatch(format!(
                "expected {} observed frames, got {}",
                self.config.input_len,
                s_in.len()
            )));
        }
        let tp = self.transform_for(s_in)?;
        let canon = canonicalize(s_in, &tp);
        let input = Tensor::from_vec(s_in.len(), 3 * self.config.num_joints, canon.to_flat());
        let out = self.predict_canonical(&input)?;
        let canon_out = MotionSequence::from_flat(self.skeleton.clone(), out.data(), s_in.fps())?;
        Ok(Prediction {
            global: decanonicalize(&canon_out, &tp),
            canonical: out,
            transform: tp,
        })
    }

    /// Canonical-space forward pass with dropout off.
    pub fn predict_canonical(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::inference(&self.params);
        let x = g.constant(input.clone());
        let y = self.forward_graph(&mut g, x, &mut Dropout::disabled())?;
        Ok(g.value(y).clone())
    }

    /// Global-frame forecast of `output_len` frames.
    pub fn forward(&self, s_in: &MotionSequence) -> Result<MotionSequence> {
        Ok(self.predict(s_in)?.global)
    }
}
