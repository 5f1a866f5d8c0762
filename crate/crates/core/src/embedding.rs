//! Per-frame pose embeddings.
//!
//! Canonical joint coordinates go through a single graph-attention layer over
//! the kinematic chain, receive a sinusoidal per-joint encoding, are flattened
//! to `D = N × j_dim` features per frame and finally receive a sinusoidal
//! per-frame encoding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Mask, Var};
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::params::{ParamId, ParamStore};
use crate::skeleton::Adjacency;
use crate::tensor::Tensor;

pub const DEFAULT_J_DIM: usize = 32;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub num_joints: usize,
    pub j_dim: usize,
}

impl EmbeddingConfig {
    pub fn new(num_joints: usize, j_dim: usize) -> Result<Self> {
        if num_joints == 0 || j_dim == 0 {
            return Err(Error::InvalidConfig("num_joints and j_dim must be positive".into()));
        }
        if !j_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("j_dim must be even, got {j_dim}")));
        }
        Ok(EmbeddingConfig { num_joints, j_dim })
    }

    pub fn model_dim(&self) -> usize {
        self.num_joints * self.j_dim
    }
}

/// Sinusoid table: `out[p][2i] = sin(p / 10000^(2i/d))`, `out[p][2i+1] = cos(..)`
/// for positions `start..start + len`.
pub fn sinusoid_table(start: usize, len: usize, d: usize) -> Result<Tensor> {
    if !d.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("encoding width must be even, got {d}")));
    }
    let mut out = Tensor::zeros(len, d);
    for r in 0..len {
        let pos = (start + r) as f64;
        for i in 0..d / 2 {
            let freq = 10000f64.powf(-((2 * i) as f64) / d as f64);
            let (s, c) = (pos * freq).sin_cos();
            out.set(r, 2 * i, s);
            out.set(r, 2 * i + 1, c);
        }
    }
    Ok(out)
}

/// Per-joint encoding, `N × j_dim`.
pub fn spatial_encoding(n: usize, j_dim: usize) -> Result<Tensor> {
    sinusoid_table(0, n, j_dim)
}

/// Per-frame encoding, `t_len × d`, for frames `0..t_len`.
pub fn temporal_encoding(t_len: usize, d: usize) -> Result<Tensor> {
    sinusoid_table(0, t_len, d)
}

/// `T × N × j` (stored as `(T·N) × j`) to `T × (N·j)`; joint order preserved.
pub fn flatten_pose(x: &Tensor, n: usize) -> Tensor {
    let (rows, j) = x.shape();
    assert_eq!(rows % n, 0, "rows must be a multiple of the joint count");
    x.clone().reshape(rows / n, n * j)
}

pub fn unflatten_pose(x: &Tensor, n: usize) -> Tensor {
    let (t, d) = x.shape();
    assert_eq!(d % n, 0, "width must be a multiple of the joint count");
    x.clone().reshape(t * n, d / n)
}

/// Learnable state of the graph-attention layer.
///
/// `weight` is `3 × (heads·j_dim)` (head-major column blocks); `attn` is
/// `heads × 2·j_dim` with the source half first; `bias` is `1 × j_dim`.
#[derive(Debug, Clone, Copy)]
pub struct GatParams {
    pub weight: ParamId,
    pub attn: ParamId,
    pub bias: ParamId,
    pub num_heads: usize,
    pub j_dim: usize,
    pub leaky_slope: f64,
}

impl GatParams {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        j_dim: usize,
        num_heads: usize,
        leaky_slope: f64,
        rng: &mut impl Rng,
    ) -> Self {
        GatParams {
            weight: store.add_glorot(format!("{name}.weight"), 3, num_heads * j_dim, rng),
            attn: store.add_glorot(format!("{name}.attn"), num_heads, 2 * j_dim, rng),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(1, j_dim)),
            num_heads,
            j_dim,
            leaky_slope,
        }
    }

    pub fn num_params(j_dim: usize, num_heads: usize) -> usize {
        3 * num_heads * j_dim + num_heads * 2 * j_dim + j_dim
    }

    /// Runs the layer on `(T·N) × 3` coordinates; returns `(T·N) × j_dim`.
    ///
    /// Each head scores `e_ij = LeakyReLU(a_srcᵀ h_i + a_dstᵀ h_j)` for
    /// neighbors `j` of `i`, normalizes with a masked softmax and aggregates
    /// `Σ_j α_ij h_j`. Heads are averaged, then the bias is added.
    pub fn forward(&self, g: &mut Graph, coords: Var, adj: &Adjacency) -> Var {
        self.forward_with_attention(g, coords, adj).0
    }

    /// As [`forward`](Self::forward), also returning each head's attention
    /// matrix (`(T·N) × N`).
    pub fn forward_with_attention(&self, g: &mut Graph, coords: Var, adj: &Adjacency) -> (Var, Vec<Var>) {
        let n = adj.len();
        let mask = Mask::new(n, n, adj.mask());
        let w = g.param(self.weight);
        let attn = g.param(self.attn);
        let h_all = g.matmul(coords, w);
        let mut heads = Vec::with_capacity(self.num_heads);
        let mut alphas = Vec::with_capacity(self.num_heads);
        for head in 0..self.num_heads {
            let h = g.slice_cols(h_all, head * self.j_dim, self.j_dim);
            let a_row = g.slice_rows(attn, head, 1);
            let a_src = g.slice_cols(a_row, 0, self.j_dim);
            let a_dst = g.slice_cols(a_row, self.j_dim, self.j_dim);
            let s_src = g.matmul_bt(h, a_src);
            let s_dst = g.matmul_bt(h, a_dst);
            let e = g.pair_sum(s_src, s_dst, n);
            let e = g.leaky_relu(e, self.leaky_slope);
            let alpha = g.softmax(e, Some(mask.clone()));
            heads.push(g.block_matmul(alpha, h, n));
            alphas.push(alpha);
        }
        let mut out = heads[0];
        for &h in &heads[1..] {
            out = g.add(out, h);
        }
        if self.num_heads > 1 {
            out = g.scale(out, 1.0 / self.num_heads as f64);
        }
        let b = g.param(self.bias);
        (g.add_row(out, b), alphas)
    }
}

/// Frame encoder: the graph-attention layer, or a per-frame linear map from
/// `3N` coordinates to `D` features when graph attention is ablated.
#[derive(Debug, Clone, Copy)]
pub enum PoseEncoder {
    Gat(GatParams),
    Linear { weight: ParamId, bias: ParamId },
}

impl PoseEncoder {
    pub fn num_params(cfg: &EmbeddingConfig, gat_heads: usize, use_gat: bool) -> usize {
        if use_gat {
            GatParams::num_params(cfg.j_dim, gat_heads)
        } else {
            Linear::num_params(3 * cfg.num_joints, cfg.model_dim())
        }
    }
}

/// Output of [`embed`]: the graph embedding `X` (spatial encoding included)
/// and `X` plus the temporal encoding.
#[derive(Debug, Clone, Copy)]
pub struct Embedded {
    pub graph: Var,
    pub embedded: Var,
}

/// Embeds `T × 3N` canonical coordinates into `T × D`.
pub fn embed(
    g: &mut Graph,
    coords: Var,
    adj: &Adjacency,
    encoder: &PoseEncoder,
    cfg: &EmbeddingConfig,
) -> Result<Embedded> {
    let (t, w) = g.shape(coords);
    let n = cfg.num_joints;
    if w != 3 * n || adj.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected {} coordinates per frame over {n} joints, got {w} (adjacency {})",
            3 * n,
            adj.len()
        )));
    }
    let spatial = spatial_encoding(n, cfg.j_dim)?;
    let graph = match encoder {
        PoseEncoder::Gat(p) => {
            if p.j_dim != cfg.j_dim {
                return Err(Error::DimensionMismatch(format!(
                    "graph layer width {} != j_dim {}",
                    p.j_dim, cfg.j_dim
                )));
            }
            let nodes = g.reshape(coords, t * n, 3);
            let x = p.forward(g, nodes, adj);
            let enc = g.constant(tile_rows(&spatial, t));
            let x = g.add(x, enc);
            g.reshape(x, t, cfg.model_dim())
        }
        PoseEncoder::Linear { weight, bias } => {
            let lin = Linear {
                weight: *weight,
                bias: *bias,
            };
            let x = lin.forward(g, coords);
            let enc = g.constant(tile_rows(&flatten_pose(&spatial, n), t));
            g.add(x, enc)
        }
    };
    let te = g.constant(temporal_encoding(t, cfg.model_dim())?);
    let embedded = g.add(graph, te);
    Ok(Embedded { graph, embedded })
}

fn tile_rows(x: &Tensor, times: usize) -> Tensor {
    let mut data = Vec::with_capacity(x.len() * times);
    for _ in 0..times {
        data.extend_from_slice(x.data());
    }
    Tensor::from_vec(x.rows() * times, x.cols(), data)
}

/// Graph-attention features for `(T·N) × 3` canonical coordinates.
pub fn gat_forward(frames: &Tensor, adj: &Adjacency, store: &ParamStore, params: &GatParams) -> Result<Tensor> {
    let n = adj.len();
    if frames.cols() != 3 || n == 0 || !frames.rows().is_multiple_of(n) {
        return Err(Error::DimensionMismatch(format!(
            "expected (T·{n}) × 3 coordinates, got {:?}",
            frames.shape()
        )));
    }
    let mut g = Graph::inference(store);
    let x = g.constant(frames.clone());
    let y = params.forward(&mut g, x, adj);
    Ok(g.value(y).clone())
}

/// `T × D` embedding of `T × 3N` canonical coordinates.
pub fn embed_sequence(
    coords: &Tensor,
    adj: &Adjacency,
    store: &ParamStore,
    encoder: &PoseEncoder,
    cfg: &EmbeddingConfig,
) -> Result<Tensor> {
    let mut g = Graph::inference(store);
    let x = g.constant(coords.clone());
    let e = embed(&mut g, x, adj, encoder, cfg)?;
    Ok(g.value(e.embedded).clone())
}
