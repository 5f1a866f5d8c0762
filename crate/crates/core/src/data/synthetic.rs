//! Synthetic walking figures on the 17-joint layout.
//!
//! The root follows a planar path at constant forward speed. Limbs are rigid
//! segments rotated about their parent joint, with swing angles driven by a
//! gait phase `2π · distance / stride`, so bone lengths never change.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{MotionSequence, Pose, Skeleton};
use crate::transform::RigidTransform;

pub const MIN_SPEED: f64 = 0.6;
pub const MAX_SPEED: f64 = 1.6;
pub const DEFAULT_STRIDE: f64 = 0.6;
/// Speed and stride multiplier for [`Mode::Run`].
pub const RUN_FACTOR: f64 = 2.0;
const REFERENCE_HEIGHT: f64 = 1.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Constant heading.
    Straight,
    /// Sinusoidal lateral offset around a straight mean line.
    Wavy,
    /// Heading turning at a constant slow rate.
    Deviating,
    /// Straight, at `RUN_FACTOR` times the speed with longer strides.
    Run,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Straight, Mode::Wavy, Mode::Deviating, Mode::Run];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Straight => "straight",
            Mode::Wavy => "wavy",
            Mode::Deviating => "deviating",
            Mode::Run => "run",
        };
        f.write_str(s)
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown synthetic mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub mode: Mode,
    /// Forward speed in m/s, within `[MIN_SPEED, MAX_SPEED]`.
    pub speed: f64,
    pub duration_s: f64,
    pub fps: f64,
    pub seed: u64,
    pub actor_height: f64,
    pub stride: f64,
}

impl SyntheticSpec {
    pub fn new(mode: Mode, speed: f64, duration_s: f64, fps: f64, seed: u64) -> Self {
        SyntheticSpec {
            mode,
            speed,
            duration_s,
            fps,
            seed,
            actor_height: REFERENCE_HEIGHT,
            stride: DEFAULT_STRIDE,
        }
    }

    /// Speed, height and seed drawn from `rng`.
    pub fn random(mode: Mode, duration_s: f64, fps: f64, rng: &mut impl Rng) -> Self {
        SyntheticSpec {
            actor_height: rng.gen_range(1.5..1.95),
            ..SyntheticSpec::new(mode, rng.gen_range(MIN_SPEED..=MAX_SPEED), duration_s, fps, rng.gen())
        }
    }

    pub fn num_frames(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(MIN_SPEED..=MAX_SPEED).contains(&self.speed) {
            return bad(format!("speed {} outside [{MIN_SPEED}, {MAX_SPEED}] m/s", self.speed));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.duration_s.is_finite() && self.num_frames() >= 1) {
            return bad(format!("duration {} s gives no frames", self.duration_s));
        }
        if !(0.5..=2.5).contains(&self.actor_height) {
            return bad(format!("actor height {} m is implausible", self.actor_height));
        }
        if !(self.stride > 0.0 && self.stride.is_finite()) {
            return bad(format!("stride must be positive, got {}", self.stride));
        }
        Ok(())
    }
}

/// Seeded path parameters behind a generated sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub origin: [f64; 2],
    pub heading: f64,
    /// Wavy lateral amplitude (m) and period (s).
    pub amplitude: f64,
    pub period: f64,
    /// Deviating turn rate (rad/s).
    pub turn_rate: f64,
    pub speed: f64,
    pub stride: f64,
}

impl PathParams {
    pub fn new(spec: &SyntheticSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let origin = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let heading = rng.gen_range(-PI..PI);
        let amplitude = rng.gen_range(0.2..0.5);
        let period = rng.gen_range(2.0..5.0);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let turn_rate = sign * rng.gen_range(0.1..0.35);
        let run = if spec.mode == Mode::Run { RUN_FACTOR } else { 1.0 };
        PathParams {
            origin,
            heading,
            amplitude,
            period,
            turn_rate,
            speed: spec.speed * run,
            stride: spec.stride * run,
        }
    }

    /// Root ground position, heading, and distance along the mean path at time `t`.
    pub fn at(&self, mode: Mode, t: f64) -> ([f64; 2], f64, f64) {
        let (s0, c0) = self.heading.sin_cos();
        let d = self.speed * t;
        match mode {
            Mode::Straight | Mode::Run => ([self.origin[0] + d * c0, self.origin[1] + d * s0], self.heading, d),
            Mode::Wavy => {
                let w = TAU / self.period;
                let lat = self.amplitude * (w * t).sin();
                let pos = [self.origin[0] + d * c0 - lat * s0, self.origin[1] + d * s0 + lat * c0];
                let yaw = self.heading + (self.amplitude * w * (w * t).cos()).atan2(self.speed);
                (pos, yaw, d)
            }
            Mode::Deviating => {
                let k = self.turn_rate;
                let yaw = self.heading + k * t;
                let r = self.speed / k;
                let pos = [
                    self.origin[0] + r * (yaw.sin() - s0),
                    self.origin[1] - r * (yaw.cos() - c0),
                ];
                (pos, yaw, d)
            }
        }
    }
}

struct Gait {
    leg: f64,
    knee: f64,
    arm: f64,
    bob: f64,
    lean: f64,
}

const WALK: Gait = Gait {
    leg: 0.35,
    knee: 0.5,
    arm: 0.3,
    bob: 0.02,
    lean: 0.05,
};

const RUN: Gait = Gait {
    leg: 0.6,
    knee: 1.2,
    arm: 0.6,
    bob: 0.04,
    lean: 0.2,
};

/// Segment from its parent joint, swung forward by `angle` about the lateral axis.
fn swing(len: f64, angle: f64) -> [f64; 3] {
    [len * angle.sin(), 0.0, -len * angle.cos()]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Pitch about the lateral (y) axis; positive tips +z towards +x.
fn pitch(p: [f64; 3], a: f64) -> [f64; 3] {
    let (s, c) = a.sin_cos();
    [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]]
}

/// Body-frame joints (x forward, y left, z up) relative to the pelvis.
fn body_pose(phase: f64, g: &Gait, scale: f64) -> [[f64; 3]; 17] {
    let l = |v: f64| v * scale;
    let s = phase.sin();
    let c = phase.cos();
    let mut j = [[0.0; 3]; 17];
    j[1] = [0.0, -l(0.12), -l(0.05)];
    j[2] = add(j[1], swing(l(0.44), -g.leg * s));
    j[3] = add(j[2], swing(l(0.43), -g.leg * s - g.knee * (1.0 + c) / 2.0));
    j[4] = [0.0, l(0.12), -l(0.05)];
    j[5] = add(j[4], swing(l(0.44), g.leg * s));
    j[6] = add(j[5], swing(l(0.43), g.leg * s - g.knee * (1.0 - c) / 2.0));
    let upper = [
        [0.0, 0.0, l(0.22)],
        [0.0, 0.0, l(0.25)],
        [l(0.02), 0.0, l(0.10)],
        [0.0, 0.0, l(0.12)],
    ];
    j[7] = pitch(upper[0], g.lean);
    j[8] = add(j[7], pitch(upper[1], g.lean));
    j[9] = add(j[8], pitch(upper[2], g.lean));
    j[10] = add(j[9], pitch(upper[3], g.lean));
    j[11] = add(j[8], pitch([0.0, l(0.17), -l(0.03)], g.lean));
    j[12] = add(j[11], swing(l(0.28), -g.arm * s));
    j[13] = add(j[12], swing(l(0.25), -g.arm * s + 0.3));
    j[14] = add(j[8], pitch([0.0, -l(0.17), -l(0.03)], g.lean));
    j[15] = add(j[14], swing(l(0.28), g.arm * s));
    j[16] = add(j[15], swing(l(0.25), g.arm * s + 0.3));
    j
}

/// Generates a walking figure on the 17-joint layout. Other layouts are
/// rejected.
pub fn generate_synthetic(spec: &SyntheticSpec, skeleton: &Arc<Skeleton>) -> Result<MotionSequence> {
    spec.validate()?;
    if !skeleton.same_layout(&Skeleton::h36m17()) {
        return Err(Error::UnsupportedSkeleton(format!(
            "{} joints; only the 17-joint layout is animated",
            skeleton.num_joints()
        )));
    }
    let path = PathParams::new(spec);
    let gait = if spec.mode == Mode::Run { &RUN } else { &WALK };
    let scale = spec.actor_height / REFERENCE_HEIGHT;
    let pelvis_height = scale * 0.98;
    let frames = (0..spec.num_frames())
        .map(|f| {
            let t = f as f64 / spec.fps;
            let (pos, yaw, dist) = path.at(spec.mode, t);
            let phase = TAU * dist / path.stride;
            let z = pelvis_height + scale * gait.bob * (2.0 * phase).cos();
            let place = RigidTransform {
                yaw,
                translation: [pos[0], pos[1], z],
            };
            Pose {
                coords: body_pose(phase, gait, scale).iter().map(|&p| place.apply(p)).collect(),
            }
        })
        .collect();
    MotionSequence::new(skeleton.clone(), frames, spec.fps)
}

/// Applies one rigid transform, drawn uniformly with planar translation in
/// `±max_translation` m per axis and yaw in `±max_yaw` rad, to every frame.
/// Vertical coordinates are left unchanged.
pub fn apply_random_rigid(
    seq: &MotionSequence,
    max_translation: f64,
    max_yaw: f64,
    seed: u64,
) -> (MotionSequence, RigidTransform) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sym = |r: f64| (2.0 * rng.gen::<f64>() - 1.0) * r;
    let tx = sym(max_translation);
    let ty = sym(max_translation);
    let yaw = sym(max_yaw);
    let g = RigidTransform {
        yaw,
        translation: [tx, ty, 0.0],
    };
    (g.apply_seq(seq), g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h36m() -> Arc<Skeleton> {
        Arc::new(Skeleton::h36m17())
    }

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn straight_root_advances_speed_over_fps() {
        let spec = SyntheticSpec::new(Mode::Straight, 1.0, 3.0, 10.0, 4);
        let seq = generate_synthetic(&spec, &h36m()).unwrap();
        for t in 1..seq.len() {
            let (a, b) = (seq.root(t - 1), seq.root(t));
            let planar = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            assert!((planar - 0.1).abs() < 1e-12, "{planar}");
        }
    }

    #[test]
    fn bone_lengths_are_constant() {
        for mode in Mode::ALL {
            let spec = SyntheticSpec::new(mode, 1.3, 5.0, 16.0, 11);
            let seq = generate_synthetic(&spec, &h36m()).unwrap();
            for &(a, b) in seq.skeleton().edges() {
                let l0 = dist(seq.frames()[0].joint(a), seq.frames()[0].joint(b));
                for f in seq.frames() {
                    assert!((dist(f.joint(a), f.joint(b)) - l0).abs() < 1e-9, "{mode}");
                }
            }
        }
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let spec = SyntheticSpec::new(Mode::Deviating, 0.9, 2.0, 10.0, 99);
        let a = generate_synthetic(&spec, &h36m()).unwrap();
        let b = generate_synthetic(&spec, &h36m()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn other_layouts_are_unsupported() {
        let spec = SyntheticSpec::new(Mode::Straight, 1.0, 1.0, 10.0, 0);
        let e = generate_synthetic(&spec, &Arc::new(Skeleton::cmu31()));
        assert!(matches!(e, Err(Error::UnsupportedSkeleton(_))));
    }

    #[test]
    fn speed_outside_range_is_rejected() {
        let spec = SyntheticSpec::new(Mode::Straight, 2.0, 1.0, 10.0, 0);
        assert!(generate_synthetic(&spec, &h36m()).is_err());
    }

    #[test]
    fn zero_width_rigid_is_identity() {
        let spec = SyntheticSpec::new(Mode::Wavy, 1.0, 1.0, 10.0, 3);
        let seq = generate_synthetic(&spec, &h36m()).unwrap();
        let (out, g) = apply_random_rigid(&seq, 0.0, 0.0, 17);
        assert_eq!(g, RigidTransform::identity());
        assert_eq!(out, seq);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("jog".parse::<Mode>().is_err());
    }
}
