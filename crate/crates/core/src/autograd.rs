//! Reverse-mode differentiation over 2-D tensors.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters are
//! borrowed from a [`ParamStore`] rather than copied, so an inference pass
//! costs no more memory traffic than the arithmetic itself.

use std::collections::HashMap;
use std::sync::Arc;

use crate::params::{ParamId, ParamStore};
use crate::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Boolean mask applied row-periodically: row `r` of the masked tensor uses
/// mask row `r % rows`.
#[derive(Debug, Clone)]
pub struct Mask {
    rows: usize,
    cols: usize,
    allowed: Arc<[bool]>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Self {
        assert_eq!(allowed.len(), rows * cols, "mask size");
        Mask {
            rows,
            cols,
            allowed: allowed.into(),
        }
    }

    /// Lower-triangular mask: position `i` sees positions `<= i`.
    pub fn causal(t: usize) -> Self {
        let allowed = (0..t * t).map(|k| k % t <= k / t).collect();
        Mask::new(t, t, allowed)
    }

    pub fn allows(&self, r: usize, c: usize) -> bool {
        self.allowed[(r % self.rows) * self.cols + c]
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Arc<Tensor>),
    Relu(Var),
    LeakyRelu(Var, f64),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    RepeatRow(Var, usize),
    Reshape(Var),
    PairSum(Var, Var, usize),
    BlockMatMul(Var, Var, usize),
    RelGather(Var, usize),
    RelScatter(Var, usize),
    RowNormMean(Var, Arc<Tensor>),
    DotConst(Var, Arc<Tensor>),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Relative offset `j - i` clipped to `[-k, k]`, shifted to `[0, 2k]`.
#[inline]
pub fn rel_index(i: usize, j: usize, k: usize) -> usize {
    let d = (j as isize - i as isize).clamp(-(k as isize), k as isize);
    (d + k as isize) as usize
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
    track_params: bool,
}

impl<'a> Graph<'a> {
    /// A graph whose parameters receive gradients.
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            track_params: true,
        }
    }

    /// A graph for forward-only evaluation.
    pub fn inference(store: &'a ParamStore) -> Self {
        Graph {
            track_params: false,
            ..Graph::new(store)
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match (&self.nodes[v.0].value, &self.nodes[v.0].op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input that receives a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: self.track_params,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, _) = self.shape(a);
        let (_, n) = self.shape(b);
        let mut out = Tensor::zeros(m, n);
        gemm(self.value(a), false, self.value(b), false, &mut out, 0.0);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (m, _) = self.shape(a);
        let (n, _) = self.shape(b);
        let mut out = Tensor::zeros(m, n);
        gemm(self.value(a), false, self.value(b), true, &mut out, 0.0);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMulBT(a, b), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let mut out = self.value(a).clone();
        let r = self.value(row);
        assert_eq!((1, out.cols()), r.shape(), "add_row shape");
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(out, Op::AddRow(a, row), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    /// Element-wise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape(), c.shape(), "mul_const shape");
        for (o, m) in out.data_mut().iter_mut().zip(c.data()) {
            *o *= m;
        }
        let ng = self.ng(a);
        self.push(out, Op::MulConst(a, Arc::new(c)), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        let ng = self.ng(a);
        self.push(out, Op::LeakyRelu(a, slope), ng)
    }

    /// Row-wise softmax; masked-out entries get probability zero.
    pub fn softmax(&mut self, a: Var, mask: Option<Mask>) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let allowed = |c: usize| mask.as_ref().is_none_or(|m| m.allows(r, c));
            let row = x.row(r);
            let max = (0..row.len())
                .filter(|&c| allowed(c))
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            let o = out.row_mut(r);
            let mut sum = 0.0;
            for c in 0..row.len() {
                if allowed(c) {
                    o[c] = (row[c] - max).exp();
                    sum += o[c];
                }
            }
            o.iter_mut().for_each(|v| *v /= sum);
        }
        let ng = self.ng(a);
        self.push(out, Op::Softmax(a), ng)
    }

    /// Per-row layer normalization with learned `1 × n` scale and offset.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (m, n) = xv.shape();
        let g = self.value(gamma);
        let b = self.value(beta);
        let mut xhat = Tensor::zeros(m, n);
        let mut out = Tensor::zeros(m, n);
        let mut inv_std = Vec::with_capacity(m);
        for r in 0..m {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for c in 0..n {
                let h = (row[c] - mean) * is;
                xhat.set(r, c, h);
                out.set(r, c, h * g.data()[c] + b.data()[c]);
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows(), len);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        let ng = self.ng(a);
        self.push(out, Op::SliceCols(a, start), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let x = self.value(p);
            assert_eq!(x.rows(), rows, "concat_cols rows");
            for r in 0..rows {
                out.row_mut(r)[off..off + x.cols()].copy_from_slice(x.row(r));
            }
            off += x.cols();
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let out = Tensor::from_vec(len, c, x.data()[start * c..(start + len) * c].to_vec());
        let ng = self.ng(a);
        self.push(out, Op::SliceRows(a, start), ng)
    }

    /// Row `row` of `a` repeated `times` times.
    pub fn repeat_row(&mut self, a: Var, row: usize, times: usize) -> Var {
        let x = self.value(a);
        let src = x.row(row);
        let mut data = Vec::with_capacity(times * src.len());
        for _ in 0..times {
            data.extend_from_slice(src);
        }
        let out = Tensor::from_vec(times, x.cols(), data);
        let ng = self.ng(a);
        self.push(out, Op::RepeatRow(a, row), ng)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let out = self.value(a).clone().reshape(rows, cols);
        let ng = self.ng(a);
        self.push(out, Op::Reshape(a), ng)
    }

    /// Block pairwise sums: for `src`, `dst` of shape `(B·n) × 1`,
    /// `out[b·n + i][j] = src[b·n + i] + dst[b·n + j]`.
    pub fn pair_sum(&mut self, src: Var, dst: Var, n: usize) -> Var {
        let s = self.value(src);
        let d = self.value(dst);
        assert_eq!(s.shape(), d.shape());
        assert_eq!(s.cols(), 1);
        let rows = s.rows();
        assert_eq!(rows % n, 0, "pair_sum block size");
        let mut out = Tensor::zeros(rows, n);
        for r in 0..rows {
            let base = (r / n) * n;
            for j in 0..n {
                out.set(r, j, s.data()[r] + d.data()[base + j]);
            }
        }
        let ng = self.ng(src) || self.ng(dst);
        self.push(out, Op::PairSum(src, dst, n), ng)
    }

    /// Block-diagonal product: block `b` of the result is
    /// `alpha[b·n..(b+1)·n, :] · h[b·n..(b+1)·n, :]`.
    pub fn block_matmul(&mut self, alpha: Var, h: Var, n: usize) -> Var {
        let a = self.value(alpha);
        let x = self.value(h);
        assert_eq!(a.cols(), n);
        assert_eq!(a.rows(), x.rows());
        let (rows, f) = x.shape();
        let mut out = Tensor::zeros(rows, f);
        for r in 0..rows {
            let base = (r / n) * n;
            let ar = a.row(r);
            let o = out.row_mut(r);
            for (j, &w) in ar.iter().enumerate() {
                if w != 0.0 {
                    for (ov, hv) in o.iter_mut().zip(x.row(base + j)) {
                        *ov += w * hv;
                    }
                }
            }
        }
        let ng = self.ng(alpha) || self.ng(h);
        self.push(out, Op::BlockMatMul(alpha, h, n), ng)
    }

    /// Expands per-offset scores `m` (`T × (2k+1)`) into a `T × T` matrix
    /// with `out[i][j] = m[i][rel_index(i, j, k)]`.
    pub fn rel_gather(&mut self, m: Var, k: usize) -> Var {
        let x = self.value(m);
        assert_eq!(x.cols(), 2 * k + 1);
        let t = x.rows();
        let mut out = Tensor::zeros(t, t);
        for i in 0..t {
            for j in 0..t {
                out.set(i, j, x.get(i, rel_index(i, j, k)));
            }
        }
        let ng = self.ng(m);
        self.push(out, Op::RelGather(m, k), ng)
    }

    /// Sums a `T × T` matrix into per-offset buckets: `T × (2k+1)`.
    pub fn rel_scatter(&mut self, a: Var, k: usize) -> Var {
        let x = self.value(a);
        let t = x.rows();
        assert_eq!(x.cols(), t);
        let mut out = Tensor::zeros(t, 2 * k + 1);
        for i in 0..t {
            for j in 0..t {
                let idx = rel_index(i, j, k);
                let v = out.get(i, idx) + x.get(i, j);
                out.set(i, idx, v);
            }
        }
        let ng = self.ng(a);
        self.push(out, Op::RelScatter(a, k), ng)
    }

    /// Mean over rows of the Euclidean norm of `a - target`; a `1 × 1` scalar.
    pub fn row_norm_mean(&mut self, a: Var, target: Tensor) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), target.shape(), "row_norm_mean shape");
        let mut total = 0.0;
        for r in 0..x.rows() {
            total += x
                .row(r)
                .iter()
                .zip(target.row(r))
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>()
                .sqrt();
        }
        let out = Tensor::from_vec(1, 1, vec![total / x.rows() as f64]);
        let ng = self.ng(a);
        self.push(out, Op::RowNormMean(a, Arc::new(target)), ng)
    }

    /// `Σ a ⊙ c` as a `1 × 1` scalar.
    pub fn dot_const(&mut self, a: Var, c: Tensor) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), c.shape(), "dot_const shape");
        let s = x.data().iter().zip(c.data()).map(|(p, q)| p * q).sum();
        let ng = self.ng(a);
        self.push(Tensor::from_vec(1, 1, vec![s]), Op::DotConst(a, Arc::new(c)), ng)
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut params = HashMap::new();
        for (&id, &v) in &self.param_nodes {
            if let Some(g) = grads[v.0].take() {
                params.insert(id, g);
            }
        }
        Gradients {
            nodes: grads,
            params,
        }
    }

    fn propagate(&self, op: &Op, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = self.nodes[idx].value.as_ref();
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    let av = self.value(*a);
                    let acc = slot(grads, *a, av.shape());
                    gemm(g, false, self.value(*b), true, acc, 1.0);
                }
                if self.ng(*b) {
                    let bv = self.value(*b);
                    let acc = slot(grads, *b, bv.shape());
                    gemm(self.value(*a), true, g, false, acc, 1.0);
                }
            }
            Op::MatMulBT(a, b) => {
                if self.ng(*a) {
                    let acc = slot(grads, *a, self.value(*a).shape());
                    gemm(g, false, self.value(*b), false, acc, 1.0);
                }
                if self.ng(*b) {
                    let acc = slot(grads, *b, self.value(*b).shape());
                    gemm(g, true, self.value(*a), false, acc, 1.0);
                }
            }
            Op::Transpose(a) => {
                self.accum(grads, *a, &g.transpose());
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, g);
                self.accum(grads, *b, g);
            }
            Op::AddRow(a, row) => {
                self.accum(grads, *a, g);
                if self.ng(*row) {
                    let mut s = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (acc, v) in s.data_mut().iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    self.accum(grads, *row, &s);
                }
            }
            Op::Scale(a, s) => {
                self.accum(grads, *a, &g.map(|v| v * s));
            }
            Op::MulConst(a, c) => {
                let mut d = g.clone();
                for (v, m) in d.data_mut().iter_mut().zip(c.data()) {
                    *v *= m;
                }
                self.accum(grads, *a, &d);
            }
            Op::Relu(a) => {
                let y = out.unwrap();
                let mut d = g.clone();
                for (v, &o) in d.data_mut().iter_mut().zip(y.data()) {
                    if o <= 0.0 {
                        *v = 0.0;
                    }
                }
                self.accum(grads, *a, &d);
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let mut d = g.clone();
                for (v, &xi) in d.data_mut().iter_mut().zip(x.data()) {
                    if xi <= 0.0 {
                        *v *= slope;
                    }
                }
                self.accum(grads, *a, &d);
            }
            Op::Softmax(a) => {
                let y = out.unwrap();
                let mut d = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                        *dv = yr[c] * (gr[c] - dot);
                    }
                }
                self.accum(grads, *a, &d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (m, n) = xhat.shape();
                let gm = self.value(*gamma).data().to_vec();
                if self.ng(*gamma) || self.ng(*beta) {
                    let mut dg = Tensor::zeros(1, n);
                    let mut db = Tensor::zeros(1, n);
                    for r in 0..m {
                        for c in 0..n {
                            dg.data_mut()[c] += g.get(r, c) * xhat.get(r, c);
                            db.data_mut()[c] += g.get(r, c);
                        }
                    }
                    self.accum(grads, *gamma, &dg);
                    self.accum(grads, *beta, &db);
                }
                if self.ng(*x) {
                    let mut dx = Tensor::zeros(m, n);
                    let nf = n as f64;
                    for r in 0..m {
                        let dxh: Vec<f64> = (0..n).map(|c| g.get(r, c) * gm[c]).collect();
                        let s1: f64 = dxh.iter().sum();
                        let s2: f64 = dxh.iter().zip(xhat.row(r)).map(|(p, q)| p * q).sum();
                        for c in 0..n {
                            let v = inv_std[r] / nf * (nf * dxh[c] - s1 - xhat.get(r, c) * s2);
                            dx.set(r, c, v);
                        }
                    }
                    self.accum(grads, *x, &dx);
                }
            }
            Op::SliceCols(a, start) => {
                if self.ng(*a) {
                    let shape = self.value(*a).shape();
                    let acc = slot(grads, *a, shape);
                    for r in 0..g.rows() {
                        for (dst, v) in acc.row_mut(r)[*start..*start + g.cols()]
                            .iter_mut()
                            .zip(g.row(r))
                        {
                            *dst += v;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let shape = self.value(p).shape();
                    if self.ng(p) {
                        let acc = slot(grads, p, shape);
                        for r in 0..g.rows() {
                            for (dst, v) in acc
                                .row_mut(r)
                                .iter_mut()
                                .zip(&g.row(r)[off..off + shape.1])
                            {
                                *dst += v;
                            }
                        }
                    }
                    off += shape.1;
                }
            }
            Op::SliceRows(a, start) => {
                if self.ng(*a) {
                    let shape = self.value(*a).shape();
                    let c = shape.1;
                    let acc = slot(grads, *a, shape);
                    for (dst, v) in acc.data_mut()[start * c..(start + g.rows()) * c]
                        .iter_mut()
                        .zip(g.data())
                    {
                        *dst += v;
                    }
                }
            }
            Op::RepeatRow(a, row) => {
                if self.ng(*a) {
                    let shape = self.value(*a).shape();
                    let acc = slot(grads, *a, shape);
                    for r in 0..g.rows() {
                        for (dst, v) in acc.row_mut(*row).iter_mut().zip(g.row(r)) {
                            *dst += v;
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                let (r, c) = self.value(*a).shape();
                self.accum(grads, *a, &g.clone().reshape(r, c));
            }
            Op::PairSum(src, dst, n) => {
                let rows = g.rows();
                let mut ds = Tensor::zeros(rows, 1);
                let mut dd = Tensor::zeros(rows, 1);
                for r in 0..rows {
                    let base = (r / n) * n;
                    let gr = g.row(r);
                    ds.data_mut()[r] = gr.iter().sum();
                    for j in 0..*n {
                        dd.data_mut()[base + j] += gr[j];
                    }
                }
                self.accum(grads, *src, &ds);
                self.accum(grads, *dst, &dd);
            }
            Op::BlockMatMul(alpha, h, n) => {
                let a = self.value(*alpha);
                let x = self.value(*h);
                if self.ng(*alpha) {
                    let mut da = Tensor::zeros(a.rows(), *n);
                    for r in 0..a.rows() {
                        let base = (r / n) * n;
                        for j in 0..*n {
                            let s: f64 = g.row(r).iter().zip(x.row(base + j)).map(|(p, q)| p * q).sum();
                            da.set(r, j, s);
                        }
                    }
                    self.accum(grads, *alpha, &da);
                }
                if self.ng(*h) {
                    let mut dh = Tensor::zeros(x.rows(), x.cols());
                    for r in 0..a.rows() {
                        let base = (r / n) * n;
                        for j in 0..*n {
                            let w = a.get(r, j);
                            if w != 0.0 {
                                for (dst, v) in dh.row_mut(base + j).iter_mut().zip(g.row(r)) {
                                    *dst += w * v;
                                }
                            }
                        }
                    }
                    self.accum(grads, *h, &dh);
                }
            }
            Op::RelGather(m, k) => {
                let t = g.rows();
                let mut d = Tensor::zeros(t, 2 * k + 1);
                for i in 0..t {
                    for j in 0..t {
                        let idx = rel_index(i, j, *k);
                        let v = d.get(i, idx) + g.get(i, j);
                        d.set(i, idx, v);
                    }
                }
                self.accum(grads, *m, &d);
            }
            Op::RelScatter(a, k) => {
                let t = g.rows();
                let mut d = Tensor::zeros(t, t);
                for i in 0..t {
                    for j in 0..t {
                        d.set(i, j, g.get(i, rel_index(i, j, *k)));
                    }
                }
                self.accum(grads, *a, &d);
            }
            Op::RowNormMean(a, target) => {
                let x = self.value(*a);
                let scale = g.data()[0] / x.rows() as f64;
                let mut d = Tensor::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let diff: Vec<f64> = x.row(r).iter().zip(target.row(r)).map(|(p, q)| p - q).collect();
                    let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        for (dst, v) in d.row_mut(r).iter_mut().zip(&diff) {
                            *dst = scale * v / norm;
                        }
                    }
                }
                self.accum(grads, *a, &d);
            }
            Op::DotConst(a, c) => {
                let s = g.data()[0];
                self.accum(grads, *a, &c.map(|v| v * s));
            }
        }
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, g: &Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => t.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }
}

fn slot(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: HashMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient with respect to a graph variable, if one flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    /// Adds every parameter gradient into `acc` (indexed like the store).
    pub fn accumulate_into(&self, acc: &mut [Tensor]) {
        for (id, g) in &self.params {
            acc[id.index()].add_assign(g);
        }
    }
}
