//! Displacement errors and forward-pass latency.
//!
//! All errors are mean Euclidean distances in meters. Trajectory errors use
//! the root joint; pose errors use root-relative joints and average over the
//! `N - 1` non-root joints.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::Model;
use crate::skeleton::{MotionSequence, Pose, Window};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub ade_pose: f64,
    pub fde_pose: f64,
    pub ade_traj: f64,
    pub fde_traj: f64,
    /// Median single forward pass, batch 1; `None` when not measured.
    pub runtime_ms: Option<f64>,
    pub num_windows: usize,
}

fn check(pred: &[Pose], gt: &[Pose], root: usize) -> Result<()> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    for (p, q) in pred.iter().zip(gt) {
        if p.num_joints() != q.num_joints() || root >= p.num_joints() {
            return Err(Error::DimensionMismatch(format!(
                "joint counts {} vs {} (root {root})",
                p.num_joints(),
                q.num_joints()
            )));
        }
    }
    Ok(())
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn traj_err(p: &Pose, q: &Pose, root: usize) -> f64 {
    dist(p.coords[root], q.coords[root])
}

fn pose_err(p: &Pose, q: &Pose, root: usize) -> f64 {
    let n = p.num_joints();
    if n < 2 {
        return 0.0;
    }
    let (pr, qr) = (p.coords[root], q.coords[root]);
    let sum: f64 = (0..n)
        .filter(|&j| j != root)
        .map(|j| {
            let a = p.coords[j];
            let b = q.coords[j];
            dist(
                [a[0] - pr[0], a[1] - pr[1], a[2] - pr[2]],
                [b[0] - qr[0], b[1] - qr[1], b[2] - qr[2]],
            )
        })
        .sum();
    sum / (n - 1) as f64
}

pub fn ade_traj(pred: &[Pose], gt: &[Pose], root: usize) -> Result<f64> {
    check(pred, gt, root)?;
    Ok(pred.iter().zip(gt).map(|(p, q)| traj_err(p, q, root)).sum::<f64>() / pred.len() as f64)
}

pub fn fde_traj(pred: &[Pose], gt: &[Pose], root: usize) -> Result<f64> {
    check(pred, gt, root)?;
    Ok(traj_err(pred.last().unwrap(), gt.last().unwrap(), root))
}

pub fn ade_pose(pred: &[Pose], gt: &[Pose], root: usize) -> Result<f64> {
    check(pred, gt, root)?;
    Ok(pred.iter().zip(gt).map(|(p, q)| pose_err(p, q, root)).sum::<f64>() / pred.len() as f64)
}

pub fn fde_pose(pred: &[Pose], gt: &[Pose], root: usize) -> Result<f64> {
    check(pred, gt, root)?;
    Ok(pose_err(pred.last().unwrap(), gt.last().unwrap(), root))
}

/// All four errors for one predicted sequence.
pub fn window_errors(pred: &MotionSequence, gt: &MotionSequence) -> Result<EvalReport> {
    let root = gt.skeleton().root_index();
    let (p, q) = (pred.frames(), gt.frames());
    Ok(EvalReport {
        ade_pose: ade_pose(p, q, root)?,
        fde_pose: fde_pose(p, q, root)?,
        ade_traj: ade_traj(p, q, root)?,
        fde_traj: fde_traj(p, q, root)?,
        runtime_ms: None,
        num_windows: 1,
    })
}

/// Averages per-window reports.
pub fn mean_report(reports: &[EvalReport]) -> EvalReport {
    let n = reports.len().max(1) as f64;
    let mut out = EvalReport {
        num_windows: reports.len(),
        ..Default::default()
    };
    for r in reports {
        out.ade_pose += r.ade_pose / n;
        out.fde_pose += r.fde_pose / n;
        out.ade_traj += r.ade_traj / n;
        out.fde_traj += r.fde_traj / n;
    }
    out
}

/// Constant-pose baseline: the last observed frame held for `t2` frames.
pub fn zero_velocity(s_in: &MotionSequence, t2: usize) -> MotionSequence {
    let last = s_in.slice(s_in.len() - 1, 1);
    let frames = vec![last.frames()[0].clone(); t2];
    MotionSequence::new(s_in.skeleton().clone(), frames, s_in.fps()).expect("copied frames are valid")
}

/// Mean errors of `model` over `windows`, compared in the global frame.
pub fn evaluate(model: &Model, windows: &[Window], exec: Exec) -> Result<EvalReport> {
    evaluate_with(windows, exec, |w| model.forward(&w.input))
}

/// Mean errors of an arbitrary predictor over `windows`.
pub fn evaluate_with<F>(windows: &[Window], exec: Exec, predict: F) -> Result<EvalReport>
where
    F: Fn(&Window) -> Result<MotionSequence> + Sync + Send,
{
    if windows.is_empty() {
        return Err(Error::InvalidSequence("no windows to evaluate".into()));
    }
    let reports = exec
        .map(windows, |w| window_errors(&predict(w)?, &w.target))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_report(&reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub samples_ms: Vec<f64>,
}

pub const BENCH_WARMUP: usize = 3;

/// Times `repeats` single forward passes after [`BENCH_WARMUP`] untimed ones.
pub fn bench_forward(model: &Model, s_in: &MotionSequence, repeats: usize) -> Result<LatencyStats> {
    bench_fn(repeats, || model.forward(s_in).map(|_| ()))
}

pub fn bench_fn(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<LatencyStats> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    for _ in 0..BENCH_WARMUP {
        f()?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(latency_stats(samples))
}

/// Median (midpoint for even counts) and nearest-rank 95th percentile.
pub fn latency_stats(samples_ms: Vec<f64>) -> LatencyStats {
    let mut sorted = samples_ms.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    LatencyStats {
        median_ms: median,
        p95_ms: sorted[rank - 1],
        samples_ms,
    }
}

/// Fixed-width rows: method, ADE/FDE pose, ADE/FDE trajectory, runtime.
pub fn format_table(rows: &[(String, EvalReport)]) -> String {
    let mut s = format!(
        "{:<24} {:>16} {:>16} {:>10}\n",
        "Method", "ADE/FDE_Po (m)", "ADE/FDE_Tr (m)", "R (ms)"
    );
    for (name, r) in rows {
        let rt = r.runtime_ms.map_or("-".to_string(), |v| format!("{v:.1}"));
        s.push_str(&format!(
            "{:<24} {:>16} {:>16} {:>10}\n",
            name,
            format!("{:.3} / {:.3}", r.ade_pose, r.fde_pose),
            format!("{:.3} / {:.3}", r.ade_traj, r.fde_traj),
            rt
        ));
    }
    s
}
