//! Self-describing checkpoint container.
//!
//! Layout: the 8-byte magic `PTRJCKPT`, a little-endian `u64` header length,
//! a JSON header, then every tensor's values as little-endian `f64` in the
//! order the header lists them (parameters, then optimizer first moments,
//! then second moments when present).

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::skeleton::Skeleton;
use crate::tensor::Tensor;
use crate::training::{AdamState, TrainConfig, TrainState};

pub const MAGIC: &[u8; 8] = b"PTRJCKPT";
pub const FORMAT: &str = "posetraj-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerEntry {
    step: u64,
    next_epoch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    model: ModelConfig,
    skeleton: Skeleton,
    /// GAT layers carry an additive bias term.
    gat_bias: bool,
    params: Vec<TensorEntry>,
    optimizer: Option<OptimizerEntry>,
    train: Option<TrainConfig>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<TrainState>,
    pub train: Option<TrainConfig>,
}

/// Writes `model` (and optionally optimizer state) to `path` atomically.
pub fn save(path: &Path, model: &Model, optimizer: Option<&TrainState>, train: Option<&TrainConfig>) -> Result<()> {
    let params = model.params();
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        model: model.config().clone(),
        skeleton: (**model.skeleton()).clone(),
        gat_bias: true,
        params: params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.into(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
        optimizer: optimizer.map(|s| OptimizerEntry {
            step: s.adam.step,
            next_epoch: s.next_epoch,
        }),
        train: train.cloned(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut tensors: Vec<&Tensor> = params.tensors().iter().collect();
    if let Some(s) = optimizer {
        tensors.extend(s.adam.m.iter());
        tensors.extend(s.adam.v.iter());
    }
    let scalars: usize = tensors.iter().map(|t| t.len()).sum();
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * scalars);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in tensors {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let bad = |m: String| Error::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..)
        .filter(|b| b.len() >= hlen)
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&body[..hlen])?;
    if header.format != FORMAT {
        return Err(bad(format!("format tag {:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    if !header.gat_bias {
        return Err(bad("GAT layers without bias are not supported".into()));
    }
    let mut values = body[hlen..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |rows: usize, cols: usize| -> Result<Tensor> {
        let data: Vec<f64> = values.by_ref().take(rows * cols).collect();
        if data.len() != rows * cols {
            return Err(bad("truncated tensor data".into()));
        }
        Ok(Tensor::from_vec(rows, cols, data))
    };

    let mut model = Model::new(header.model.clone(), Arc::new(header.skeleton.clone()))?;
    let mut entries = Vec::with_capacity(header.params.len());
    for e in &header.params {
        entries.push((e.name.clone(), take(e.rows, e.cols)?));
    }
    model.params_mut().load_from(entries)?;

    let optimizer = match &header.optimizer {
        Some(o) => {
            let shapes: Vec<(usize, usize)> = model.params().tensors().iter().map(Tensor::shape).collect();
            let m = shapes.iter().map(|&(r, c)| take(r, c)).collect::<Result<Vec<_>>>()?;
            let v = shapes.iter().map(|&(r, c)| take(r, c)).collect::<Result<Vec<_>>>()?;
            Some(TrainState {
                adam: AdamState { step: o.step, m, v },
                next_epoch: o.next_epoch,
            })
        }
        None => None,
    };
    if values.next().is_some() || !(body.len() - hlen).is_multiple_of(8) {
        return Err(bad("trailing bytes after tensor data".into()));
    }
    Ok(Checkpoint {
        model,
        optimizer,
        train: header.train,
    })
}

/// Loads and checks that the stored model matches what the caller expects.
pub fn load_expecting(path: &Path, config: Option<&ModelConfig>, skeleton: Option<&Skeleton>) -> Result<Checkpoint> {
    let ck = load(path)?;
    if let Some(cfg) = config {
        if ck.model.config() != cfg {
            return Err(Error::Checkpoint(format!(
                "{}: stored model config differs from the requested one",
                path.display()
            )));
        }
    }
    if let Some(s) = skeleton {
        check_skeleton(&ck.model, s)?;
    }
    Ok(ck)
}

pub fn check_skeleton(model: &Model, s: &Skeleton) -> Result<()> {
    if !model.skeleton().same_layout(s) {
        return Err(Error::SkeletonMismatch(format!(
            "model has {} joints (root {}), data has {} joints (root {})",
            model.skeleton().num_joints(),
            model.skeleton().root_index(),
            s.num_joints(),
            s.root_index()
        )));
    }
    Ok(())
}
