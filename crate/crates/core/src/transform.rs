//! Motion canonicalization.
//!
//! A sequence is translated so the root joint of the last observed frame sits
//! at the origin, then rotated about z so the observed heading points along
//! +x. The same parameters map predictions back to the global frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::MotionSequence;

/// Root displacements shorter than this (meters) carry no heading.
pub const STATIONARY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    /// Translation added to every joint, `-root(T1)`.
    pub v: [f64; 3],
    /// Observed heading in (-π, π].
    pub theta: f64,
    /// Frames between the two root samples used for the heading.
    pub delta: usize,
}

impl TransformParams {
    /// Parameters that leave a sequence unchanged.
    pub fn identity() -> Self {
        TransformParams {
            v: [0.0; 3],
            theta: 0.0,
            delta: 1,
        }
    }

    /// Global → canonical for a single point.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = (-self.theta).sin_cos();
        let x = p[0] + self.v[0];
        let y = p[1] + self.v[1];
        let z = p[2] + self.v[2];
        [c * x - s * y, s * x + c * y, z]
    }

    /// Canonical → global for a single point.
    pub fn invert(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.theta.sin_cos();
        let x = c * p[0] - s * p[1];
        let y = s * p[0] + c * p[1];
        [x - self.v[0], y - self.v[1], p[2] - self.v[2]]
    }
}

fn wrap_angle(a: f64) -> f64 {
    // atan2 yields [-π, π]; fold -π onto π
    if a <= -std::f64::consts::PI {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

pub fn compute_params(s_in: &MotionSequence, root: usize, delta: usize) -> Result<TransformParams> {
    if delta < 1 {
        return Err(Error::InvalidConfig("delta must be at least 1 frame".into()));
    }
    if s_in.len() < delta + 1 {
        return Err(Error::SequenceTooShort {
            needed: delta + 1,
            have: s_in.len(),
        });
    }
    if root >= s_in.num_joints() {
        return Err(Error::InvalidConfig(format!("root index {root} out of range")));
    }
    let last = s_in.len() - 1;
    let now = s_in.frames()[last].coords[root];
    let before = s_in.frames()[last - delta].coords[root];
    let dx = now[0] - before[0];
    let dy = now[1] - before[1];
    let theta = if dx.hypot(dy) < STATIONARY_EPS {
        0.0
    } else {
        wrap_angle(dy.atan2(dx))
    };
    Ok(TransformParams {
        v: [-now[0], -now[1], -now[2]],
        theta,
        delta,
    })
}

pub fn canonicalize(seq: &MotionSequence, p: &TransformParams) -> MotionSequence {
    seq.map_points(|q| p.apply(q))
}

pub fn decanonicalize(seq: &MotionSequence, p: &TransformParams) -> MotionSequence {
    seq.map_points(|q| p.invert(q))
}

/// Yaw about the global origin followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub yaw: f64,
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            yaw: 0.0,
            translation: [0.0; 3],
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            c * p[0] - s * p[1] + self.translation[0],
            s * p[0] + c * p[1] + self.translation[1],
            p[2] + self.translation[2],
        ]
    }

    pub fn apply_seq(&self, seq: &MotionSequence) -> MotionSequence {
        seq.map_points(|q| self.apply(q))
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
    use std::sync::Arc;

    use super::*;
    use crate::skeleton::Skeleton;

    fn root_path(points: &[[f64; 3]]) -> MotionSequence {
        let sk = Arc::new(Skeleton::chain(1));
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        MotionSequence::from_flat(sk, &flat, 10.0).unwrap()
    }

    #[test]
    fn stationary_root_gives_zero_heading() {
        let s = root_path(&[[2.0, 3.0, 0.9], [2.0, 3.0, 0.9]]);
        let p = compute_params(&s, 0, 1).unwrap();
        assert_eq!(p.v, [-2.0, -3.0, -0.9]);
        assert_eq!(p.theta, 0.0);
    }

    #[test]
    fn heading_from_root_displacement() {
        let s = root_path(&[[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]]);
        assert!((compute_params(&s, 0, 1).unwrap().theta - FRAC_PI_4).abs() < 1e-15);
        let s = root_path(&[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!((compute_params(&s, 0, 1).unwrap().theta - FRAC_PI_2).abs() < 1e-15);
        // heading straight back along -x is +π, never -π
        let s = root_path(&[[0.0, -0.0, 0.0], [-1.0, -0.0, 0.0]]);
        assert_eq!(compute_params(&s, 0, 1).unwrap().theta, PI);
    }

    #[test]
    fn delta_selects_earlier_frame() {
        let s = root_path(&[[0.0, 0.0, 0.0], [5.0, 5.0, 0.0], [0.0, 1.0, 0.0]]);
        let p = compute_params(&s, 0, 2).unwrap();
        assert!((p.theta - FRAC_PI_2).abs() < 1e-15);
        assert!(matches!(
            compute_params(&s, 0, 3),
            Err(Error::SequenceTooShort { needed: 4, have: 3 })
        ));
    }

    #[test]
    fn canonicalize_maps_heading_to_x() {
        let s = root_path(&[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 2.0, 0.0]]);
        let p = compute_params(&s.slice(0, 2), 0, 1).unwrap();
        let c = canonicalize(&s, &p);
        let r1 = c.root(1);
        let r2 = c.root(2);
        assert!(r1.iter().all(|v| v.abs() < 1e-15));
        assert!((r2[0] - 1.0).abs() < 1e-15 && r2[1].abs() < 1e-15 && r2[2] == 0.0);
    }

    #[test]
    fn identity_cases() {
        let s = root_path(&[[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.3]]);
        let p = compute_params(&s.slice(0, 2), 0, 1).unwrap();
        assert_eq!(canonicalize(&s, &p), s);
        let id = TransformParams::identity();
        assert_eq!(decanonicalize(&s, &id), s);
    }

    #[test]
    fn inverse_of_heading_example() {
        let p = TransformParams {
            v: [0.0, -1.0, 0.0],
            theta: FRAC_PI_2,
            delta: 1,
        };
        let g = p.invert([1.0, 0.0, 0.0]);
        assert!(g[0].abs() < 1e-15 && (g[1] - 2.0).abs() < 1e-15 && g[2] == 0.0);
    }
}
