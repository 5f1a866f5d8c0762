//! Multi-head scaled dot-product attention with optional learned
//! relative-position terms.
//!
//! With relative terms enabled, the logit between query `i` and key `j` is
//! `q_i · (k_j + rk[clip(j - i)]) / sqrt(d_head)` and the output of query `i`
//! is `Σ_j α_ij (v_j + rv[clip(j - i)])`, where offsets are clipped to
//! `[-clip, clip]` and the tables `rk`, `rv` are shared across heads.

use rand::Rng;

use crate::autograd::{Graph, Mask, Var};
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct RelativeTables {
    pub keys: ParamId,
    pub values: ParamId,
    pub clip: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub relative: Option<RelativeTables>,
    pub num_heads: usize,
    pub model_dim: usize,
}

impl MultiHeadAttention {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        model_dim: usize,
        num_heads: usize,
        rel_clip: Option<usize>,
        rng: &mut impl Rng,
    ) -> Self {
        assert_eq!(model_dim % num_heads, 0, "model_dim must be divisible by num_heads");
        let dh = model_dim / num_heads;
        let query = Linear::register(store, &format!("{name}.query"), model_dim, model_dim, rng);
        let key = Linear::register(store, &format!("{name}.key"), model_dim, model_dim, rng);
        let value = Linear::register(store, &format!("{name}.value"), model_dim, model_dim, rng);
        let output = Linear::register(store, &format!("{name}.output"), model_dim, model_dim, rng);
        let relative = rel_clip.map(|clip| RelativeTables {
            keys: store.add_glorot(format!("{name}.rel_keys"), 2 * clip + 1, dh, rng),
            values: store.add_glorot(format!("{name}.rel_values"), 2 * clip + 1, dh, rng),
            clip,
        });
        MultiHeadAttention {
            query,
            key,
            value,
            output,
            relative,
            num_heads,
            model_dim,
        }
    }

    pub fn num_params(model_dim: usize, num_heads: usize, rel_clip: Option<usize>) -> usize {
        let dh = model_dim / num_heads;
        4 * Linear::num_params(model_dim, model_dim) + rel_clip.map_or(0, |k| 2 * (2 * k + 1) * dh)
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    /// Self-attention over the rows of `x`.
    pub fn self_attend(&self, g: &mut Graph, x: Var, causal: bool) -> Var {
        let t = g.shape(x).0;
        let mask = causal.then(|| Mask::causal(t));
        self.attend(g, x, x, mask).0
    }

    /// Attention from the rows of `q` to the rows of `kv`, with no mask and
    /// no relative terms.
    pub fn cross_attend(&self, g: &mut Graph, q: Var, kv: Var) -> Var {
        self.attend(g, q, kv, None).0
    }

    /// Core attention; also returns each head's attention matrix.
    pub fn attend(&self, g: &mut Graph, q_in: Var, kv_in: Var, mask: Option<Mask>) -> (Var, Vec<Var>) {
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.query.forward(g, q_in);
        let k = self.key.forward(g, kv_in);
        let v = self.value.forward(g, kv_in);
        let rel = if q_in == kv_in { self.relative } else { None };
        let rel_vars = rel.map(|r| (g.param(r.keys), g.param(r.values), r.clip));

        let mut heads = Vec::with_capacity(self.num_heads);
        let mut weights = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let mut logits = g.matmul_bt(qh, kh);
            if let Some((rk, _, clip)) = rel_vars {
                let per_offset = g.matmul_bt(qh, rk);
                let expanded = g.rel_gather(per_offset, clip);
                logits = g.add(logits, expanded);
            }
            let logits = g.scale(logits, scale);
            let alpha = g.softmax(logits, mask.clone());
            let mut out = g.matmul(alpha, vh);
            if let Some((_, rv, clip)) = rel_vars {
                let buckets = g.rel_scatter(alpha, clip);
                let extra = g.matmul(buckets, rv);
                out = g.add(out, extra);
            }
            heads.push(out);
            weights.push(alpha);
        }
        let merged = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        (self.output.forward(g, merged), weights)
    }
}

/// Self-attention over `x` (`T × D`) using weights from `store`.
pub fn relative_self_attention(
    x: &Tensor,
    store: &ParamStore,
    attn: &MultiHeadAttention,
    causal: bool,
) -> Result<Tensor> {
    if x.cols() != attn.model_dim || x.rows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "attention expects T × {} input with T ≥ 1, got {:?}",
            attn.model_dim,
            x.shape()
        )));
    }
    let mut g = Graph::inference(store);
    let xv = g.constant(x.clone());
    let y = attn.self_attend(&mut g, xv, causal);
    Ok(g.value(y).clone())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn setup(d: usize, heads: usize, clip: Option<usize>, seed: u64) -> (ParamStore, MultiHeadAttention) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let a = MultiHeadAttention::register(&mut store, "attn", d, heads, clip, &mut rng);
        // non-zero biases so they take part in the checks
        for id in [a.query.bias, a.key.bias, a.value.bias, a.output.bias] {
            store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
        (store, a)
    }

    #[test]
    fn single_token_is_value_then_output_projection() {
        let (store, a) = setup(8, 2, Some(2), 1);
        let x = Tensor::from_vec(1, 8, (0..8).map(|v| v as f64 * 0.1 - 0.3).collect());
        let got = relative_self_attention(&x, &store, &a, true).unwrap();

        let mut v = x.matmul(store.get(a.value.weight));
        v.add_assign(store.get(a.value.bias));
        // the only offset is 0, bucket index = clip
        let rv = store.get(a.relative.unwrap().values);
        for h in 0..2 {
            for c in 0..4 {
                let cur = v.get(0, h * 4 + c);
                v.set(0, h * 4 + c, cur + rv.get(2, c));
            }
        }
        let mut want = v.matmul(store.get(a.output.weight));
        want.add_assign(store.get(a.output.bias));
        assert!(got.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn causal_outputs_ignore_future_rows() {
        let (store, a) = setup(12, 3, Some(3), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::from_vec(5, 12, (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let base = relative_self_attention(&x, &store, &a, true).unwrap();
        for t in 0..4 {
            let mut y = x.clone();
            for r in t + 1..5 {
                y.row_mut(r).iter_mut().for_each(|v| *v += 3.0);
            }
            let out = relative_self_attention(&y, &store, &a, true).unwrap();
            for r in 0..=t {
                assert_eq!(out.row(r), base.row(r), "row {r} changed after perturbing > {t}");
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let (store, a) = setup(12, 3, Some(2), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Tensor::from_vec(6, 12, (0..72).map(|_| rng.gen_range(-2.0..2.0)).collect());
        for causal in [false, true] {
            let mut g = Graph::inference(&store);
            let xv = g.constant(x.clone());
            let mask = causal.then(|| Mask::causal(6));
            let (_, ws) = a.attend(&mut g, xv, xv, mask);
            for w in ws {
                let w = g.value(w);
                for r in 0..6 {
                    assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    if causal {
                        assert!(w.row(r)[r + 1..].iter().all(|&v| v == 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_width() {
        let (store, a) = setup(8, 2, None, 3);
        assert!(relative_self_attention(&Tensor::zeros(3, 6), &store, &a, false).is_err());
        assert!(relative_self_attention(&Tensor::zeros(0, 8), &store, &a, false).is_err());
    }

    #[test]
    fn param_count_matches_allocation() {
        for (d, h, clip) in [(8, 2, Some(2)), (12, 3, None), (96, 1, Some(5))] {
            let (store, _) = setup(d, h, clip, 5);
            assert_eq!(store.num_scalars(), MultiHeadAttention::num_params(d, h, clip));
        }
    }
}
