//! Skeletons, poses and motion sequences.
//!
//! Coordinates are meters in a z-up global frame. Joint order is fixed per
//! skeleton and is part of the sequence file header.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bone connectivity of a body model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonRepr", into = "SkeletonRepr")]
pub struct Skeleton {
    joint_names: Vec<String>,
    edges: Vec<(usize, usize)>,
    root_index: usize,
}

#[derive(Serialize, Deserialize)]
struct SkeletonRepr {
    joint_names: Vec<String>,
    edges: Vec<(usize, usize)>,
    root_index: usize,
}

impl TryFrom<SkeletonRepr> for Skeleton {
    type Error = Error;
    fn try_from(r: SkeletonRepr) -> Result<Self> {
        Skeleton::new(r.joint_names, r.edges, r.root_index)
    }
}

impl From<Skeleton> for SkeletonRepr {
    fn from(s: Skeleton) -> Self {
        SkeletonRepr {
            joint_names: s.joint_names,
            edges: s.edges,
            root_index: s.root_index,
        }
    }
}

impl Skeleton {
    pub fn new(
        joint_names: Vec<String>,
        edges: Vec<(usize, usize)>,
        root_index: usize,
    ) -> Result<Self> {
        let n = joint_names.len();
        if n == 0 {
            return Err(Error::InvalidSkeleton("no joints".into()));
        }
        if root_index >= n {
            return Err(Error::InvalidSkeleton(format!(
                "root index {root_index} out of range for {n} joints"
            )));
        }
        let mut seen = HashSet::new();
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::InvalidSkeleton(format!(
                    "edge ({a}, {b}) out of range for {n} joints"
                )));
            }
            if a == b {
                return Err(Error::InvalidSkeleton(format!("self-edge on joint {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidSkeleton(format!("duplicate edge ({a}, {b})")));
            }
        }
        // connectivity by union-find
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b) in &edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let r0 = find(&mut parent, 0);
        if (1..n).any(|i| find(&mut parent, i) != r0) {
            return Err(Error::InvalidSkeleton("edge set is not connected".into()));
        }
        Ok(Skeleton {
            joint_names,
            edges,
            root_index,
        })
    }

    /// Builds a skeleton from `(name, parent)` pairs; `None` marks the root.
    pub fn from_parents(joints: &[(&str, Option<usize>)]) -> Result<Self> {
        let names = joints.iter().map(|(n, _)| n.to_string()).collect();
        let edges = joints
            .iter()
            .enumerate()
            .filter_map(|(i, (_, p))| p.map(|p| (p, i)))
            .collect();
        let roots: Vec<usize> = joints
            .iter()
            .enumerate()
            .filter(|(_, (_, p))| p.is_none())
            .map(|(i, _)| i)
            .collect();
        if roots.len() != 1 {
            return Err(Error::InvalidSkeleton(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        Skeleton::new(names, edges, roots[0])
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    /// Symmetric 0/1 adjacency of the kinematic chain, with self-loops.
    pub fn adjacency(&self) -> Adjacency {
        build_adjacency(self)
    }

    /// Two skeletons are compatible when joint count, names, root and the
    /// unordered edge set agree.
    pub fn same_layout(&self, other: &Skeleton) -> bool {
        let norm = |s: &Skeleton| {
            let mut e: Vec<_> = s.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
            e.sort_unstable();
            e
        };
        self.joint_names == other.joint_names
            && self.root_index == other.root_index
            && norm(self) == norm(other)
    }

    /// 17-joint Human3.6M layout. Root is the pelvis (joint 0).
    pub fn h36m17() -> Self {
        Skeleton::from_parents(&[
            ("pelvis", None),
            ("r_hip", Some(0)),
            ("r_knee", Some(1)),
            ("r_ankle", Some(2)),
            ("l_hip", Some(0)),
            ("l_knee", Some(4)),
            ("l_ankle", Some(5)),
            ("spine", Some(0)),
            ("thorax", Some(7)),
            ("neck", Some(8)),
            ("head", Some(9)),
            ("l_shoulder", Some(8)),
            ("l_elbow", Some(11)),
            ("l_wrist", Some(12)),
            ("r_shoulder", Some(8)),
            ("r_elbow", Some(14)),
            ("r_wrist", Some(15)),
        ])
        .expect("built-in layout is valid")
    }

    /// 31-joint CMU mocap (ASF) hierarchy. Root is joint 0.
    pub fn cmu31() -> Self {
        Skeleton::from_parents(&[
            ("root", None),
            ("lhipjoint", Some(0)),
            ("lfemur", Some(1)),
            ("ltibia", Some(2)),
            ("lfoot", Some(3)),
            ("ltoes", Some(4)),
            ("rhipjoint", Some(0)),
            ("rfemur", Some(6)),
            ("rtibia", Some(7)),
            ("rfoot", Some(8)),
            ("rtoes", Some(9)),
            ("lowerback", Some(0)),
            ("upperback", Some(11)),
            ("thorax", Some(12)),
            ("lowerneck", Some(13)),
            ("upperneck", Some(14)),
            ("head", Some(15)),
            ("lclavicle", Some(13)),
            ("lhumerus", Some(17)),
            ("lradius", Some(18)),
            ("lwrist", Some(19)),
            ("lhand", Some(20)),
            ("lfingers", Some(21)),
            ("lthumb", Some(20)),
            ("rclavicle", Some(13)),
            ("rhumerus", Some(24)),
            ("rradius", Some(25)),
            ("rwrist", Some(26)),
            ("rhand", Some(27)),
            ("rfingers", Some(28)),
            ("rthumb", Some(27)),
        ])
        .expect("built-in layout is valid")
    }

    /// 30-joint layout: the 24 SMPL body joints plus six head keypoints.
    pub fn darko30() -> Self {
        Skeleton::from_parents(&[
            ("pelvis", None),
            ("l_hip", Some(0)),
            ("r_hip", Some(0)),
            ("spine1", Some(0)),
            ("l_knee", Some(1)),
            ("r_knee", Some(2)),
            ("spine2", Some(3)),
            ("l_ankle", Some(4)),
            ("r_ankle", Some(5)),
            ("spine3", Some(6)),
            ("l_foot", Some(7)),
            ("r_foot", Some(8)),
            ("neck", Some(9)),
            ("l_collar", Some(9)),
            ("r_collar", Some(9)),
            ("head", Some(12)),
            ("l_shoulder", Some(13)),
            ("r_shoulder", Some(14)),
            ("l_elbow", Some(16)),
            ("r_elbow", Some(17)),
            ("l_wrist", Some(18)),
            ("r_wrist", Some(19)),
            ("l_hand", Some(20)),
            ("r_hand", Some(21)),
            ("head_top", Some(15)),
            ("nose", Some(15)),
            ("l_eye", Some(25)),
            ("r_eye", Some(25)),
            ("l_ear", Some(15)),
            ("r_ear", Some(15)),
        ])
        .expect("built-in layout is valid")
    }

    /// Linear chain `j0 - j1 - ... - j{n-1}` rooted at joint 0.
    pub fn chain(n: usize) -> Self {
        let names = (0..n).map(|i| format!("j{i}")).collect();
        let edges = (1..n).map(|i| (i - 1, i)).collect();
        Skeleton::new(names, edges, 0).expect("chain is valid for n >= 1")
    }
}

/// N×N 0/1 adjacency matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    data: Vec<u8>,
}

impl Adjacency {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.n + j]
    }

    pub fn is_connected(&self, i: usize, j: usize) -> bool {
        self.get(i, j) != 0
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.data[i * self.n..(i + 1) * self.n]
            .iter()
            .map(|&v| v as usize)
            .sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v != 0).collect()
    }
}

pub fn build_adjacency(skeleton: &Skeleton) -> Adjacency {
    let n = skeleton.num_joints();
    let mut data = vec![0u8; n * n];
    for i in 0..n {
        data[i * n + i] = 1;
    }
    for &(a, b) in skeleton.edges() {
        data[a * n + b] = 1;
        data[b * n + a] = 1;
    }
    Adjacency { n, data }
}

/// One pose: N joint positions in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub coords: Vec<[f64; 3]>,
}

impl Pose {
    pub fn new(coords: Vec<[f64; 3]>) -> Result<Self> {
        if let Some((i, _)) = coords
            .iter()
            .enumerate()
            .find(|(_, c)| !c.iter().all(|v| v.is_finite()))
        {
            return Err(Error::InvalidPose(format!("joint {i} has a non-finite coordinate")));
        }
        Ok(Pose { coords })
    }

    pub fn num_joints(&self) -> usize {
        self.coords.len()
    }

    pub fn joint(&self, i: usize) -> [f64; 3] {
        self.coords[i]
    }
}

/// Ordered frames of global joint positions sampled at `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    skeleton: Arc<Skeleton>,
    frames: Vec<Pose>,
    fps: f64,
}

impl MotionSequence {
    pub fn new(skeleton: Arc<Skeleton>, frames: Vec<Pose>, fps: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidSequence("no frames".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidSequence(format!("fps must be positive, got {fps}")));
        }
        let n = skeleton.num_joints();
        for (t, f) in frames.iter().enumerate() {
            if f.num_joints() != n {
                return Err(Error::InvalidSequence(format!(
                    "frame {t} has {} joints, skeleton has {n}",
                    f.num_joints()
                )));
            }
            if !f.coords.iter().flatten().all(|v| v.is_finite()) {
                return Err(Error::InvalidSequence(format!("frame {t} has non-finite values")));
            }
        }
        Ok(MotionSequence {
            skeleton,
            frames,
            fps,
        })
    }

    /// Builds a sequence from row-major `frames × N × 3` values.
    pub fn from_flat(skeleton: Arc<Skeleton>, flat: &[f64], fps: f64) -> Result<Self> {
        let n = skeleton.num_joints();
        if flat.is_empty() || !flat.len().is_multiple_of(3 * n) {
            return Err(Error::DimensionMismatch(format!(
                "{} values is not a positive multiple of 3·{n}",
                flat.len()
            )));
        }
        let frames = flat
            .chunks(3 * n)
            .map(|row| Pose {
                coords: row.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
            })
            .collect();
        MotionSequence::new(skeleton, frames, fps)
    }

    pub fn skeleton(&self) -> &Arc<Skeleton> {
        &self.skeleton
    }

    pub fn frames(&self) -> &[Pose] {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_joints(&self) -> usize {
        self.skeleton.num_joints()
    }

    pub fn root(&self, t: usize) -> [f64; 3] {
        self.frames[t].coords[self.skeleton.root_index()]
    }

    /// Row-major `frames × N × 3` copy of the coordinates.
    pub fn to_flat(&self) -> Vec<f64> {
        self.frames
            .iter()
            .flat_map(|f| f.coords.iter().flatten().copied())
            .collect()
    }

    /// Frames `[start, start + len)`; panics if out of range.
    pub fn slice(&self, start: usize, len: usize) -> MotionSequence {
        MotionSequence {
            skeleton: self.skeleton.clone(),
            frames: self.frames[start..start + len].to_vec(),
            fps: self.fps,
        }
    }

    /// Appends the frames of `other` (same skeleton and rate).
    pub fn concat(&self, other: &MotionSequence) -> Result<MotionSequence> {
        if !self.skeleton.same_layout(&other.skeleton) {
            return Err(Error::SkeletonMismatch("cannot concatenate sequences".into()));
        }
        let mut frames = self.frames.clone();
        frames.extend_from_slice(&other.frames);
        Ok(MotionSequence {
            skeleton: self.skeleton.clone(),
            frames,
            fps: self.fps,
        })
    }

    /// Applies `f` to every joint position.
    pub fn map_points(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> MotionSequence {
        let frames = self
            .frames
            .iter()
            .map(|p| Pose {
                coords: p.coords.iter().map(|&c| f(c)).collect(),
            })
            .collect();
        MotionSequence {
            skeleton: self.skeleton.clone(),
            frames,
            fps: self.fps,
        }
    }
}

/// Observed (`input_len`) and predicted (`output_len`) frame counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonSpec {
    pub input_len: usize,
    pub output_len: usize,
}

impl HorizonSpec {
    pub fn new(input_len: usize, output_len: usize) -> Result<Self> {
        if input_len < 2 {
            return Err(Error::InvalidHorizon(format!(
                "input_len must be at least 2, got {input_len}"
            )));
        }
        if output_len < 1 {
            return Err(Error::InvalidHorizon("output_len must be at least 1".into()));
        }
        Ok(HorizonSpec {
            input_len,
            output_len,
        })
    }

    pub fn total(&self) -> usize {
        self.input_len + self.output_len
    }
}

/// An observed segment with its ground-truth continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: MotionSequence,
    pub target: MotionSequence,
}

pub fn split_sequence(seq: &MotionSequence, h: HorizonSpec) -> Result<Window> {
    if seq.len() < h.total() {
        return Err(Error::SequenceTooShort {
            needed: h.total(),
            have: seq.len(),
        });
    }
    Ok(Window {
        input: seq.slice(0, h.input_len),
        target: seq.slice(h.input_len, h.output_len),
    })
}

pub fn sliding_windows(seq: &MotionSequence, h: HorizonSpec, stride: usize) -> Vec<Window> {
    assert!(stride >= 1, "stride must be at least 1");
    if seq.len() < h.total() {
        return Vec::new();
    }
    (0..=seq.len() - h.total())
        .step_by(stride)
        .map(|start| Window {
            input: seq.slice(start, h.input_len),
            target: seq.slice(start + h.input_len, h.output_len),
        })
        .collect()
}
