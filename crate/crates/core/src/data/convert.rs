//! Conversion of raw joint-position tables into sequences.
//!
//! Input is a delimited text table with one frame per row and `x y z` per
//! joint. Each dataset's raw export differs in joint count, units, up axis
//! and frame rate, so all of those are parameters.

use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::skeleton::{MotionSequence, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Meters,
    Centimeters,
    Millimeters,
}

impl Units {
    pub fn to_meters(self) -> f64 {
        match self {
            Units::Meters => 1.0,
            Units::Centimeters => 0.01,
            Units::Millimeters => 0.001,
        }
    }
}

impl FromStr for Units {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(Units::Meters),
            "cm" => Ok(Units::Centimeters),
            "mm" => Ok(Units::Millimeters),
            _ => Err(Error::Units(s.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpAxis {
    Y,
    Z,
}

impl FromStr for UpAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" => Ok(UpAxis::Y),
            "z" => Ok(UpAxis::Z),
            _ => Err(Error::InvalidConfig(format!("up axis must be y or z, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub units: Units,
    pub up: UpAxis,
    pub source_fps: f64,
    pub target_fps: f64,
    /// Source column-triple index for each output joint. `None` takes the
    /// first `N` joints in order.
    pub joint_map: Option<Vec<usize>>,
}

/// Parses rows of numbers separated by commas and/or whitespace. A first
/// row that does not parse as numbers is treated as a column header.
pub fn parse_table(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(f64::from_str)
            .collect();
        match parsed {
            Ok(r) if r.iter().all(|v| v.is_finite()) => rows.push(r),
            _ if rows.is_empty() && i == 0 => continue,
            _ => {
                return Err(Error::InvalidSequence(format!(
                    "line {}: non-numeric or non-finite value",
                    i + 1
                )))
            }
        }
    }
    Ok(rows)
}

/// Integer decimation step between two rates.
pub fn downsample_step(source_fps: f64, target_fps: f64) -> Result<usize> {
    let ratio = source_fps / target_fps;
    let step = ratio.round();
    if !(ratio.is_finite() && step >= 1.0 && (ratio - step).abs() < 1e-9) {
        return Err(Error::InvalidConfig(format!(
            "cannot downsample {source_fps} fps to {target_fps} fps by an integer step"
        )));
    }
    Ok(step as usize)
}

/// Builds a sequence on `skeleton` from a raw table.
pub fn convert_table(rows: &[Vec<f64>], skeleton: &Arc<Skeleton>, opts: &ConvertOptions) -> Result<MotionSequence> {
    let n = skeleton.num_joints();
    let map: Vec<usize> = opts.joint_map.clone().unwrap_or_else(|| (0..n).collect());
    if map.len() != n {
        return Err(Error::InvalidConfig(format!(
            "joint map has {} entries for {n} joints",
            map.len()
        )));
    }
    let step = downsample_step(opts.source_fps, opts.target_fps)?;
    let scale = opts.units.to_meters();
    let mut flat = Vec::with_capacity(rows.len() / step * 3 * n);
    for (i, row) in rows.iter().enumerate().step_by(step) {
        if row.len() % 3 != 0 {
            return Err(Error::InvalidSequence(format!(
                "row {i} has {} values, not a multiple of 3",
                row.len()
            )));
        }
        for &src in &map {
            let p = row.get(3 * src..3 * src + 3).ok_or_else(|| {
                Error::InvalidSequence(format!("row {i} has no joint {src}"))
            })?;
            let [x, y, z] = [p[0] * scale, p[1] * scale, p[2] * scale];
            match opts.up {
                UpAxis::Z => flat.extend([x, y, z]),
                // Rotate +90° about x so that +y becomes +z.
                UpAxis::Y => flat.extend([x, -z, y]),
            }
        }
    }
    MotionSequence::from_flat(skeleton.clone(), &flat, opts.target_fps)
}
