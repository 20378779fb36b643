//! Synthetic goal-driven arc trajectories.
//!
//! Pedestrians walk circular arcs from a start to a goal at constant speed,
//! arriving on the last frame of their 20-frame slot. Headings come from a
//! few dominant flow directions, as in real scenes with entrances and exits.
//! Pedestrians are emitted in small groups sharing a slot, so each slot
//! becomes one scene window.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, Position2, Row, T_END};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub trajectories: usize,
    /// Pedestrians sharing each 20-frame slot.
    pub group_size: usize,
    pub seed: u64,
    /// Number of evenly spaced flow directions.
    pub flows: usize,
    /// Chord length range from start to goal.
    pub min_length: f64,
    pub max_length: f64,
    /// Largest half-angle of an arc, radians.
    pub max_bend: f64,
    /// Heading jitter around the flow direction, radians (std).
    pub heading_jitter: f64,
    /// Per-position Gaussian noise (std).
    pub position_noise: f64,
    /// Frame-id spacing between consecutive annotated frames.
    pub frame_step: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            trajectories: 200,
            group_size: 2,
            seed: 0,
            flows: 4,
            min_length: 1.6,
            max_length: 2.0,
            max_bend: 0.45,
            heading_jitter: 0.05,
            position_noise: 0.0,
            frame_step: 10,
        }
    }
}

/// Point at fraction `f` of an arc from the origin to `(chord, 0)` whose
/// tangent leaves the chord at angle `bend`.
fn arc_point(chord: f64, bend: f64, f: f64) -> (f64, f64) {
    if bend.abs() < 1e-9 {
        return (chord * f, 0.0);
    }
    let radius = chord / (2.0 * bend.sin());
    let phi = bend - 2.0 * bend * f;
    (radius * (bend.sin() - phi.sin()), radius * (phi.cos() - bend.cos()))
}

/// Generate a dataset of `cfg.trajectories` arc walkers.
pub fn generate(name: impl Into<String>, cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.trajectories == 0 || cfg.group_size == 0 || cfg.flows == 0 {
        return Err(Error::Config(
            "synth needs trajectories, group_size and flows >= 1".into(),
        ));
    }
    if !(cfg.min_length > 0.0 && cfg.max_length >= cfg.min_length) {
        return Err(Error::Config("synth length range is invalid".into()));
    }
    if !(cfg.max_bend >= 0.0 && cfg.max_bend < PI / 2.0) {
        return Err(Error::Config("synth max_bend must lie in [0, pi/2)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter = Normal::new(0.0, cfg.heading_jitter).map_err(|e| Error::Config(e.to_string()))?;
    let noise = Normal::new(0.0, cfg.position_noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut rows = Vec::with_capacity(cfg.trajectories * T_END);
    for ped in 0..cfg.trajectories {
        let slot = (ped / cfg.group_size) as i64;
        let flow = rng.random_range(0..cfg.flows);
        let heading = 2.0 * PI * flow as f64 / cfg.flows as f64 + jitter.sample(&mut rng);
        let chord = rng.random_range(cfg.min_length..=cfg.max_length);
        let bend = if cfg.max_bend > 0.0 {
            rng.random_range(-cfg.max_bend..=cfg.max_bend)
        } else {
            0.0
        };
        // starts sit upstream of the scene centre, spread across the flow
        let lateral = rng.random_range(-1.5..1.5);
        let (c, s) = (heading.cos(), heading.sin());
        let start = Position2::new(-c - lateral * s, -s + lateral * c);
        for t in 0..T_END {
            let f = t as f64 / (T_END - 1) as f64;
            let (ax, ay) = arc_point(chord, bend, f);
            let (nx, ny) = if cfg.position_noise > 0.0 && t > 0 && t + 1 < T_END {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            rows.push(Row {
                frame_id: (slot * T_END as i64 + t as i64) * cfg.frame_step,
                pedestrian_id: ped as i64,
                x: start.x + ax * c - ay * s + nx,
                y: start.y + ax * s + ay * c + ny,
            });
        }
    }
    Dataset::from_rows(name, rows)
}
