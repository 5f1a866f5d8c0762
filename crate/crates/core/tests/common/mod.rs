//! Fixtures and reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use posetraj::data::{generate_synthetic, Mode, SyntheticSpec};
use posetraj::model::ModelConfig;
use posetraj::skeleton::{split_sequence, HorizonSpec, MotionSequence, Pose, Skeleton, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn h36m() -> Arc<Skeleton> {
    Arc::new(Skeleton::h36m17())
}

/// Straight and wavy walks alternately, each cut to exactly one window.
pub fn walk_windows(count: usize, h: HorizonSpec, fps: f64, seed: u64) -> Vec<Window> {
    let sk = h36m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = h.total() as f64 / fps;
    (0..count)
        .map(|i| {
            let mode = if i % 2 == 0 { Mode::Straight } else { Mode::Wavy };
            let spec = SyntheticSpec::random(mode, duration, fps, &mut rng);
            let seq = generate_synthetic(&spec, &sk).unwrap();
            split_sequence(&seq, h).unwrap()
        })
        .collect()
}

pub fn random_sequence(sk: &Arc<Skeleton>, frames: usize, range: f64, rng: &mut impl Rng) -> MotionSequence {
    let flat: Vec<f64> = (0..frames * sk.num_joints() * 3).map(|_| rng.gen_range(-range..range)).collect();
    MotionSequence::from_flat(sk.clone(), &flat, 10.0).unwrap()
}

/// A small model that trains in seconds.
pub fn tiny_config(h: HorizonSpec) -> ModelConfig {
    let mut c = ModelConfig::new(17, h);
    c.j_dim = 8;
    c.num_layers = 1;
    c.num_heads = 4;
    c.ffn_dim = 128;
    c.dropout = 0.0;
    c
}

pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Loop-based error reference: `(ade_pose, fde_pose, ade_traj, fde_traj)`.
pub fn naive_errors(pred: &[Pose], gt: &[Pose], root: usize) -> (f64, f64, f64, f64) {
    let t = pred.len();
    let n = pred[0].num_joints();
    let mut pose = vec![0.0; t];
    let mut traj = vec![0.0; t];
    for f in 0..t {
        traj[f] = dist(pred[f].joint(root), gt[f].joint(root));
        let mut acc = 0.0;
        for j in 0..n {
            if j == root {
                continue;
            }
            let mut a = pred[f].joint(j);
            let mut b = gt[f].joint(j);
            for k in 0..3 {
                a[k] -= pred[f].joint(root)[k];
                b[k] -= gt[f].joint(root)[k];
            }
            acc += dist(a, b);
        }
        pose[f] = acc / (n - 1) as f64;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&pose), pose[t - 1], mean(&traj), traj[t - 1])
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
