//! Trajectory records, scene windows and the elementary trajectory transforms.
//!
//! Positions are world meters as read from the dataset files. Velocities are
//! per-frame displacements; nothing downstream divides by wall-clock time.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed frames per window.
pub const T_OBS: usize = 8;
/// Total frames per window (observed + predicted).
pub const T_END: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position2 {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity2 {
    pub dx: f64,
    pub dy: f64,
}

impl Position2 {
    pub const ORIGIN: Position2 = Position2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Position2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Position2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Velocity2 {
    pub const ZERO: Velocity2 = Velocity2 { dx: 0.0, dy: 0.0 };

    pub const fn new(dx: f64, dy: f64) -> Self {
        Velocity2 { dx, dy }
    }

    pub fn norm(self) -> f64 {
        self.dx.hypot(self.dy)
    }

    pub fn dot(self, other: Velocity2) -> f64 {
        self.dx * other.dx + self.dy * other.dy
    }

    pub fn is_finite(self) -> bool {
        self.dx.is_finite() && self.dy.is_finite()
    }
}

impl fmt::Display for Position2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Displacement between two positions.
impl Sub for Position2 {
    type Output = Velocity2;
    fn sub(self, rhs: Position2) -> Velocity2 {
        Velocity2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Add<Velocity2> for Position2 {
    type Output = Position2;
    fn add(self, rhs: Velocity2) -> Position2 {
        Position2::new(self.x + rhs.dx, self.y + rhs.dy)
    }
}

impl Sub<Velocity2> for Position2 {
    type Output = Position2;
    fn sub(self, rhs: Velocity2) -> Position2 {
        Position2::new(self.x - rhs.dx, self.y - rhs.dy)
    }
}

impl Add for Velocity2 {
    type Output = Velocity2;
    fn add(self, rhs: Velocity2) -> Velocity2 {
        Velocity2::new(self.dx + rhs.dx, self.dy + rhs.dy)
    }
}

impl Sub for Velocity2 {
    type Output = Velocity2;
    fn sub(self, rhs: Velocity2) -> Velocity2 {
        Velocity2::new(self.dx - rhs.dx, self.dy - rhs.dy)
    }
}

impl Neg for Velocity2 {
    type Output = Velocity2;
    fn neg(self) -> Velocity2 {
        Velocity2::new(-self.dx, -self.dy)
    }
}

impl Mul<f64> for Velocity2 {
    type Output = Velocity2;
    fn mul(self, k: f64) -> Velocity2 {
        Velocity2::new(self.dx * k, self.dy * k)
    }
}

impl From<Position2> for Velocity2 {
    /// The displacement from the origin to `p`.
    fn from(p: Position2) -> Velocity2 {
        Velocity2::new(p.x, p.y)
    }
}

/// One pedestrian's positions on consecutive frame steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub pedestrian_id: i64,
    pub start_frame: i64,
    pub positions: Vec<Position2>,
}

impl Trajectory {
    pub fn new(pedestrian_id: i64, start_frame: i64, positions: Vec<Position2>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidTrajectory(format!(
                "pedestrian {pedestrian_id} has no positions"
            )));
        }
        if let Some(bad) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidTrajectory(format!(
                "pedestrian {pedestrian_id} has a non-finite position at index {bad}"
            )));
        }
        Ok(Trajectory {
            pedestrian_id,
            start_frame,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn first(&self) -> Position2 {
        self.positions[0]
    }

    pub fn last(&self) -> Position2 {
        self.positions[self.positions.len() - 1]
    }

    /// The first `n` positions, keeping identity and start frame.
    pub fn prefix(&self, n: usize) -> Trajectory {
        Trajectory {
            pedestrian_id: self.pedestrian_id,
            start_frame: self.start_frame,
            positions: self.positions[..n.min(self.positions.len())].to_vec(),
        }
    }

    pub fn translate(&self, offset: Velocity2) -> Trajectory {
        self.map_positions(|p| p + offset)
    }

    fn map_positions(&self, f: impl Fn(Position2) -> Position2) -> Trajectory {
        Trajectory {
            pedestrian_id: self.pedestrian_id,
            start_frame: self.start_frame,
            positions: self.positions.iter().copied().map(f).collect(),
        }
    }
}

/// Per-frame displacements `positions[t + 1] - positions[t]`.
pub fn velocity_profile(traj: &Trajectory) -> Result<Vec<Velocity2>> {
    if traj.positions.len() < 2 {
        return Err(Error::InvalidTrajectory(format!(
            "velocity profile needs at least 2 positions, pedestrian {} has {}",
            traj.pedestrian_id,
            traj.positions.len()
        )));
    }
    Ok(traj.positions.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Express the trajectory relative to `goal`.
pub fn goal_shift(traj: &Trajectory, goal: Position2) -> Trajectory {
    traj.map_positions(|p| Position2::new(p.x - goal.x, p.y - goal.y))
}

/// Translate so the first position sits at the origin.
pub fn normalize_start(traj: &Trajectory) -> Trajectory {
    let start = traj.first();
    goal_shift(traj, start)
}

/// A set of pedestrians that are all present on the same `t_end` frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneWindow {
    /// Name of the dataset this window was cut from.
    pub source: String,
    pub start_frame: i64,
    pub trajectories: Vec<Trajectory>,
    pub t_obs: usize,
    pub t_end: usize,
}

impl SceneWindow {
    pub fn new(
        source: impl Into<String>,
        start_frame: i64,
        trajectories: Vec<Trajectory>,
        t_obs: usize,
        t_end: usize,
    ) -> Result<Self> {
        if t_obs == 0 || t_obs >= t_end {
            return Err(Error::invalid(format!(
                "window needs 0 < t_obs < t_end, got t_obs={t_obs} t_end={t_end}"
            )));
        }
        if let Some(t) = trajectories.iter().find(|t| t.len() != t_end) {
            return Err(Error::InvalidTrajectory(format!(
                "pedestrian {} has {} positions, window expects {t_end}",
                t.pedestrian_id,
                t.len()
            )));
        }
        Ok(SceneWindow {
            source: source.into(),
            start_frame,
            trajectories,
            t_obs,
            t_end,
        })
    }

    /// Number of pedestrians.
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn pred_len(&self) -> usize {
        self.t_end - self.t_obs
    }

    /// Ground-truth endpoints, one per pedestrian.
    pub fn endpoints(&self) -> Vec<Position2> {
        self.trajectories.iter().map(Trajectory::last).collect()
    }

    /// Observed prefixes, one per pedestrian.
    pub fn observed(&self) -> Vec<Trajectory> {
        self.trajectories.iter().map(|t| t.prefix(self.t_obs)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub frame_id: i64,
    pub pedestrian_id: i64,
    pub x: f64,
    pub y: f64,
}

/// A parsed dataset file: rows sorted by (frame, pedestrian), unique per pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub rows: Vec<Row>,
    /// Spacing between consecutive annotated frames (10 in the ETH/UCY files).
    pub frame_step: i64,
}

impl Dataset {
    pub fn from_rows(name: impl Into<String>, mut rows: Vec<Row>) -> Result<Self> {
        let name = name.into();
        rows.sort_by_key(|r| (r.frame_id, r.pedestrian_id));
        if let Some(w) = rows
            .windows(2)
            .find(|w| (w[0].frame_id, w[0].pedestrian_id) == (w[1].frame_id, w[1].pedestrian_id))
        {
            return Err(Error::Config(format!(
                "{name}: duplicate record for frame {} pedestrian {}",
                w[0].frame_id, w[0].pedestrian_id
            )));
        }
        let mut frames: Vec<i64> = rows.iter().map(|r| r.frame_id).collect();
        frames.dedup();
        let frame_step = frames
            .windows(2)
            .map(|w| w[1] - w[0])
            .min()
            .unwrap_or(1)
            .max(1);
        Ok(Dataset {
            name,
            rows,
            frame_step,
        })
    }

    /// Parse the whitespace-separated `frame_id pedestrian_id x y` format.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let name = name.into();
        let mut rows = Vec::new();
        let mut seen = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                source_name: name.clone(),
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(parse_err(format!(
                    "expected 4 fields (frame_id pedestrian_id x y), found {}",
                    fields.len()
                )));
            }
            let num = |i: usize, what: &str| -> Result<f64> {
                let v: f64 = fields[i]
                    .parse()
                    .map_err(|_| parse_err(format!("{what} `{}` is not a number", fields[i])))?;
                if !v.is_finite() {
                    return Err(parse_err(format!("{what} `{}` is not finite", fields[i])));
                }
                Ok(v)
            };
            let row = Row {
                frame_id: num(0, "frame_id")?.trunc() as i64,
                pedestrian_id: num(1, "pedestrian_id")?.trunc() as i64,
                x: num(2, "x")?,
                y: num(3, "y")?,
            };
            if let Some(prev) = seen.insert((row.frame_id, row.pedestrian_id), line_no) {
                return Err(parse_err(format!(
                    "duplicate record for frame {} pedestrian {} (first seen on line {prev})",
                    row.frame_id, row.pedestrian_id
                )));
            }
            rows.push(row);
        }
        Dataset::from_rows(name, rows)
    }

    /// Read a dataset file; the dataset is named after the file stem.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Dataset::parse(name, &text)
    }

    /// Render rows back into the text format, one record per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 32);
        for r in &self.rows {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", r.frame_id, r.pedestrian_id, r.x, r.y));
        }
        out
    }

    pub fn pedestrian_ids(&self) -> Vec<i64> {
        let mut ids: Vec<i64> = self.rows.iter().map(|r| r.pedestrian_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Cut a dataset into fixed-length windows.
///
/// A window starts every `stride` frame steps. A pedestrian belongs to a window
/// only if it is annotated on all `t_end` frames of it; windows nobody fully
/// occupies are dropped.
pub fn window_scenes(
    ds: &Dataset,
    t_obs: usize,
    t_end: usize,
    stride: usize,
) -> Result<Vec<SceneWindow>> {
    if stride == 0 {
        return Err(Error::invalid("window stride must be at least 1"));
    }
    if t_obs == 0 || t_obs >= t_end {
        return Err(Error::invalid(format!(
            "window needs 0 < t_obs < t_end, got t_obs={t_obs} t_end={t_end}"
        )));
    }
    let (Some(first), Some(last)) = (ds.rows.first(), ds.rows.last()) else {
        return Ok(Vec::new());
    };
    let step = ds.frame_step;
    let mut at: HashMap<(i64, i64), Position2> = HashMap::with_capacity(ds.rows.len());
    let mut by_frame: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for r in &ds.rows {
        at.insert((r.frame_id, r.pedestrian_id), Position2::new(r.x, r.y));
        by_frame.entry(r.frame_id).or_default().push(r.pedestrian_id);
    }

    let span = (t_end as i64 - 1) * step;
    let mut windows = Vec::new();
    let mut start = first.frame_id;
    while start + span <= last.frame_id {
        let mut trajectories = Vec::new();
        for &ped in by_frame.get(&start).map(Vec::as_slice).unwrap_or(&[]) {
            let positions: Option<Vec<Position2>> = (0..t_end as i64)
                .map(|k| at.get(&(start + k * step, ped)).copied())
                .collect();
            if let Some(positions) = positions {
                trajectories.push(Trajectory::new(ped, start, positions)?);
            }
        }
        if !trajectories.is_empty() {
            windows.push(SceneWindow::new(&ds.name, start, trajectories, t_obs, t_end)?);
        }
        start += stride as i64 * step;
    }
    Ok(windows)
}
