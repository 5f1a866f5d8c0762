//! Plain-text sequence files.
//!
//! ```text
//! format_version=1
//! joint_names=pelvis,r_hip,r_knee
//! edges=0-1,1-2
//! root=0
//! fps=10
//! units=m
//! ---
//! x0 y0 z0 x1 y1 z1 x2 y2 z2
//! ...
//! ```
//!
//! Header lines are `key=value` and all six keys are required. Each body row
//! is one frame of `3N` whitespace-separated decimals in joint order. Values
//! are written in shortest round-trip form, so a write/read cycle is
//! bit-exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::skeleton::{MotionSequence, Pose, Skeleton};

pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "seq";
const SEPARATOR: &str = "---";
const KEYS: [&str; 6] = ["format_version", "joint_names", "edges", "root", "fps", "units"];

pub fn format_sequence(seq: &MotionSequence) -> Result<String> {
    let sk = seq.skeleton();
    if let Some(n) = sk
        .joint_names()
        .iter()
        .find(|n| n.is_empty() || n.contains([',', '\n', '\r']) || n.trim() != n.as_str())
    {
        return Err(Error::InvalidSkeleton(format!("joint name {n:?} cannot be stored")));
    }
    let mut out = String::new();
    let edges: Vec<String> = sk.edges().iter().map(|(a, b)| format!("{a}-{b}")).collect();
    writeln!(out, "format_version={FORMAT_VERSION}").unwrap();
    writeln!(out, "joint_names={}", sk.joint_names().join(",")).unwrap();
    writeln!(out, "edges={}", edges.join(",")).unwrap();
    writeln!(out, "root={}", sk.root_index()).unwrap();
    writeln!(out, "fps={}", seq.fps()).unwrap();
    writeln!(out, "units=m").unwrap();
    writeln!(out, "{SEPARATOR}").unwrap();
    for f in seq.frames() {
        let mut first = true;
        for c in f.coords.iter().flatten() {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{c}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_sequence(seq: &MotionSequence, path: &Path) -> Result<()> {
    fs::write(path, format_sequence(seq)?)?;
    Ok(())
}

pub fn read_sequence(path: &Path) -> Result<MotionSequence> {
    parse_sequence(&fs::read_to_string(path)?, path)
}

/// Parses file contents; `path` is used only in error messages.
pub fn parse_sequence(text: &str, path: &Path) -> Result<MotionSequence> {
    let header_err = |msg: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines().enumerate();
    let mut fields: HashMap<&str, &str> = HashMap::new();
    loop {
        let Some((_, line)) = lines.next() else {
            return Err(header_err(format!("missing {SEPARATOR:?} separator")));
        };
        let line = line.trim();
        if line == SEPARATOR {
            break;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| header_err(format!("expected key=value, got {line:?}")))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(header_err(format!("unknown key {k:?}")));
        }
        if fields.insert(k, v.trim()).is_some() {
            return Err(header_err(format!("duplicate key {k:?}")));
        }
    }
    if let Some(k) = KEYS.iter().find(|k| !fields.contains_key(*k)) {
        return Err(header_err(format!("missing key {k:?}")));
    }
    let version: u32 = fields["format_version"]
        .parse()
        .map_err(|_| header_err("format_version is not an integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(header_err(format!("unsupported format_version {version}")));
    }
    let units = fields["units"];
    if units != "m" {
        return Err(Error::Units(units.into()));
    }
    let names: Vec<String> = fields["joint_names"].split(',').map(|s| s.trim().to_string()).collect();
    let edges = if fields["edges"].is_empty() {
        Vec::new()
    } else {
        fields["edges"]
            .split(',')
            .map(|e| {
                let (a, b) = e.trim().split_once('-')?;
                Some((a.parse().ok()?, b.parse().ok()?))
            })
            .collect::<Option<Vec<(usize, usize)>>>()
            .ok_or_else(|| header_err("edges must be comma-separated i-j pairs".into()))?
    };
    let root: usize = fields["root"]
        .parse()
        .map_err(|_| header_err("root is not an integer".into()))?;
    let fps: f64 = fields["fps"]
        .parse()
        .ok()
        .filter(|f: &f64| f.is_finite() && *f > 0.0)
        .ok_or_else(|| header_err("fps must be a positive number".into()))?;
    let skeleton = Skeleton::new(names, edges, root).map_err(|e| header_err(e.to_string()))?;
    let n = skeleton.num_joints();

    let mut frames = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut coords = Vec::with_capacity(3 * n);
        for tok in line.split_whitespace() {
            match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => coords.push(v),
                _ => {
                    return Err(Error::BadValue {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        token: tok.into(),
                    })
                }
            }
        }
        if coords.len() != 3 * n {
            return Err(Error::RowLength {
                path: path.to_path_buf(),
                line: idx + 1,
                expected: 3 * n,
                found: coords.len(),
            });
        }
        frames.push(Pose {
            coords: coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        });
    }
    MotionSequence::new(Arc::new(skeleton), frames, fps)
}

/// Reads every `*.seq` file in `dir`, sorted by file name.
pub fn read_dir(dir: &Path) -> Result<Vec<(PathBuf, MotionSequence)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == EXTENSION))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| read_sequence(&p).map(|s| (p, s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MotionSequence {
        let sk = Arc::new(Skeleton::chain(2));
        MotionSequence::from_flat(sk, &[0.1, -2.5, 3.0, 1e-17, 4.0, -0.0, 0.3, 0.2, 0.1, 7.0, 8.0, 9.0], 10.0).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let s = sample();
        let text = format_sequence(&s).unwrap();
        let back = parse_sequence(&text, Path::new("x")).unwrap();
        let bits = |s: &MotionSequence| s.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&s));
        assert_eq!(back.fps(), 10.0);
        assert_eq!(**back.skeleton(), **s.skeleton());
    }

    fn replace(text: &str, from: &str, to: &str) -> String {
        assert!(text.contains(from));
        text.replacen(from, to, 1)
    }

    #[test]
    fn short_row_is_a_row_length_error() {
        let sk = Arc::new(Skeleton::h36m17());
        let seq = MotionSequence::from_flat(sk, &[0.5; 51], 10.0).unwrap();
        let text = format_sequence(&seq).unwrap();
        let bad = replace(&text, "0.5\n", "\n");
        let e = parse_sequence(&bad, Path::new("x")).unwrap_err();
        assert!(matches!(e, Error::RowLength { expected: 51, found: 50, line: 8, .. }), "{e}");
    }

    #[test]
    fn other_units_are_rejected() {
        let text = replace(&format_sequence(&sample()).unwrap(), "units=m", "units=mm");
        assert!(matches!(parse_sequence(&text, Path::new("x")), Err(Error::Units(u)) if u == "mm"));
    }

    #[test]
    fn non_finite_values_are_bad_values() {
        let text = replace(&format_sequence(&sample()).unwrap(), "-2.5", "NaN");
        assert!(matches!(parse_sequence(&text, Path::new("x")), Err(Error::BadValue { token, .. }) if token == "NaN"));
        let text = replace(&format_sequence(&sample()).unwrap(), "-2.5", "abc");
        assert!(matches!(parse_sequence(&text, Path::new("x")), Err(Error::BadValue { .. })));
    }

    #[test]
    fn header_problems_are_malformed_header() {
        let good = format_sequence(&sample()).unwrap();
        for bad in [
            replace(&good, "root=0\n", ""),
            replace(&good, "---\n", ""),
            replace(&good, "fps=10", "fps=-1"),
            replace(&good, "format_version=1", "format_version=2"),
            replace(&good, "edges=0-1", "edges=0-0"),
            replace(&good, "units=m\n", "units=m\ncolor=red\n"),
        ] {
            assert!(
                matches!(parse_sequence(&bad, Path::new("x")), Err(Error::MalformedHeader { .. })),
                "{bad}"
            );
        }
    }
}
