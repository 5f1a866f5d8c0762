//! Loss, AdamW and the mini-batch training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::{evaluate, EvalReport};
use crate::model::{Ablation, Dropout, Model, PreparedWindow};
use crate::params::{ParamId, ParamStore};
use crate::skeleton::Window;
use crate::tensor::Tensor;

/// Mean over frames of the Euclidean norm of the per-frame pose difference.
/// Both inputs are `T2 × 3N`.
pub fn l2_loss(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    if pred.shape() != gt.shape() || pred.rows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "loss shapes {:?} and {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let total: f64 = (0..pred.rows())
        .map(|r| {
            pred.row(r)
                .iter()
                .zip(gt.row(r))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / pred.rows() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the batch gradient to at most this global L2 norm.
    pub grad_clip: Option<f64>,
    /// Cosine-anneal the learning rate down to this value at the last epoch.
    /// Off by default (constant rate).
    pub min_learning_rate: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            weight_decay: 1e-5,
            max_epochs: 20,
            batch_size: 32,
            seed: 0,
            ablation: Ablation::default(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: None,
            min_learning_rate: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.max_epochs < 1 {
            return bad("max_epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.grad_clip.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return bad("grad_clip must be positive");
        }
        if self
            .min_learning_rate
            .is_some_and(|m| !(m > 0.0 && m <= self.learning_rate))
        {
            return bad("min_learning_rate must lie in (0, learning_rate]");
        }
        Ok(())
    }

    /// Learning rate used during `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.min_learning_rate {
            Some(min) if self.max_epochs > 1 => {
                let x = epoch.min(self.max_epochs - 1) as f64 / (self.max_epochs - 1) as f64;
                min + 0.5 * (self.learning_rate - min) * (1.0 + (std::f64::consts::PI * x).cos())
            }
            _ => self.learning_rate,
        }
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamHyper {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One AdamW update with decoupled weight decay:
/// `θ ← θ - lr·wd·θ - lr·m̂ / (sqrt(v̂) + ε)`.
pub fn adamw_step(params: &mut ParamStore, grads: &[Tensor], state: &mut AdamState, h: AdamHyper) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::DimensionMismatch("gradient/state count differs from parameters".into()));
    }
    for (i, g) in grads.iter().enumerate() {
        if let Some(k) = g.data().iter().position(|v| !v.is_finite()) {
            let id = ParamId(i);
            return Err(Error::NonFinite(format!(
                "gradient of {} at flat index {k} is {}",
                params.name(id),
                g.data()[k]
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        let p = params.get_mut(ParamId(i)).data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for k in 0..p.len() {
            let gk = g.data()[k];
            m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * gk;
            v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * gk * gk;
            let mh = m[k] / bc1;
            let vh = v[k] / bc2;
            p[k] -= h.lr * h.weight_decay * p[k];
            p[k] -= h.lr * mh / (vh.sqrt() + h.eps);
        }
    }
    Ok(())
}

/// Loss and parameter gradients for one prepared window.
pub fn window_gradient(model: &Model, w: &PreparedWindow, dropout_seed: Option<u64>) -> Result<(f64, Vec<(ParamId, Tensor)>)> {
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let mut drop = match rng.as_mut() {
        Some(r) => Dropout::new(model.config().dropout, r),
        None => Dropout::disabled(),
    };
    let mut g = Graph::new(model.params());
    let x = g.constant(w.input.clone());
    let y = model.forward_graph(&mut g, x, &mut drop)?;
    let loss = g.row_norm_mean(y, w.target.clone());
    let value = g.value(loss).data()[0];
    let grads = g.backward(loss);
    let mut out: Vec<(ParamId, Tensor)> = model
        .params()
        .ids()
        .filter_map(|id| grads.param(id).map(|t| (id, t.clone())))
        .collect();
    out.sort_by_key(|(id, _)| id.index());
    Ok((value, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Option<EvalReport>,
    pub wall_clock_s: f64,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }
}

/// Optimizer position, for resuming.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub adam: AdamState,
    pub next_epoch: usize,
}

/// Trains `model` in place.
///
/// Windows are canonicalized with parameters from their own observed
/// segment, and the loss is computed in that canonical frame. Batches are
/// shuffled per epoch from `cfg.seed`; per-window gradients are computed via
/// `exec` and summed in window order, so results do not depend on the number
/// of worker threads. If `val` is given, the model ends at the parameters of
/// the epoch with the lowest validation `ade_pose + ade_traj`.
///
/// The ablation switches in `cfg` must match the ones `model` was built with.
/// `on_epoch` runs after each epoch and may set `record.checkpoint`.
pub fn train<F>(
    model: &mut Model,
    windows: &[Window],
    val: Option<&[Window]>,
    cfg: &TrainConfig,
    exec: Exec,
    resume: Option<TrainState>,
    mut on_epoch: F,
) -> Result<(TrainLog, TrainState)>
where
    F: FnMut(&mut EpochRecord, &Model, &TrainState) -> Result<()>,
{
    cfg.validate()?;
    if model.config().ablation != cfg.ablation {
        return Err(Error::InvalidConfig(format!(
            "train config ablation {:?} differs from the model's {:?}",
            cfg.ablation,
            model.config().ablation
        )));
    }
    if windows.is_empty() {
        return Err(Error::InvalidSequence("no training windows".into()));
    }
    let prepared = windows
        .iter()
        .map(|w| model.prepare(w))
        .collect::<Result<Vec<_>>>()?;
    let mut hyper = AdamHyper {
        lr: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    };
    let mut state = resume.unwrap_or_else(|| TrainState {
        adam: AdamState::new(model.params()),
        next_epoch: 0,
    });
    let use_dropout = model.config().dropout > 0.0;
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let start = Instant::now();

    for epoch in state.next_epoch..cfg.max_epochs {
        hyper.lr = cfg.learning_rate_at(epoch);
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc = model.params().zeros_like();
            let mut batch_loss = 0.0;
            for chunk in batch.chunks(exec.width().max(1)) {
                let results = exec.map(chunk, |&i| {
                    let seed = use_dropout.then(|| {
                        cfg.seed
                            .wrapping_add(0x51_7C_C1_B7_27_22_0A_95u64.wrapping_mul(state.adam.step + 1))
                            .wrapping_add(i as u64)
                    });
                    window_gradient(model, &prepared[i], seed)
                });
                for r in results {
                    let (l, grads) = r?;
                    batch_loss += l;
                    for (id, g) in grads {
                        acc[id.index()].add_assign(&g);
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: batch_loss,
                });
            }
            let inv = 1.0 / batch.len() as f64;
            acc.iter_mut().for_each(|g| g.scale_assign(inv));
            if let Some(clip) = cfg.grad_clip {
                let norm = acc
                    .iter()
                    .flat_map(|g| g.data())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > clip {
                    acc.iter_mut().for_each(|g| g.scale_assign(clip / norm));
                }
            }
            adamw_step(model.params_mut(), &acc, &mut state.adam, hyper)?;
            loss_sum += batch_loss;
        }
        let train_loss = loss_sum / prepared.len() as f64;
        let val_report = match val {
            Some(v) if !v.is_empty() => Some(evaluate(model, v, exec)?),
            _ => None,
        };
        if let Some(r) = &val_report {
            let score = r.ade_pose + r.ade_traj;
            if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
                best = Some((score, epoch, model.params().clone()));
            }
        }
        state.next_epoch = epoch + 1;
        let mut record = EpochRecord {
            epoch,
            train_loss,
            val: val_report,
            wall_clock_s: start.elapsed().as_secs_f64(),
            checkpoint: None,
        };
        on_epoch(&mut record, model, &state)?;
        log.records.push(record);
    }
    if let Some((_, epoch, params)) = best {
        *model.params_mut() = params;
        log.best_epoch = Some(epoch);
    }
    Ok((log, state))
}
