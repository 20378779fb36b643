//! The goal attractor and the natural-gradient velocity law built on it.
//!
//! `Φ(p) = ‖p − goal‖` is the Lyapunov candidate. Velocities follow
//! `v = −P ∇Φ` with `P = L Lᵀ + σI` positive definite, so `⟨v, ∇Φ⟩ < 0`
//! everywhere off the goal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Position2, Trajectory, Velocity2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub sigma: f64,
    /// Radius around the goal treated as the equilibrium.
    pub goal_epsilon: f64,
    /// Integration step in frame units.
    pub dt: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            sigma: 1e-8,
            goal_epsilon: 1e-6,
            dt: 1.0,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.goal_epsilon > 0.0 && self.goal_epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "goal_epsilon must be > 0, got {}",
                self.goal_epsilon
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Entries of the lower-triangular factor `L = [[a, 0], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PdMatrixParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PdMatrixParams {
    pub const IDENTITY: PdMatrixParams = PdMatrixParams { a: 1.0, b: 0.0, c: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        PdMatrixParams { a, b, c }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2 {
        m11: 1.0,
        m12: 0.0,
        m21: 0.0,
        m22: 1.0,
    };

    pub const fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Matrix2 { m11, m12, m21, m22 }
    }

    pub fn mul_vec(&self, v: Velocity2) -> Velocity2 {
        Velocity2::new(
            self.m11 * v.dx + self.m12 * v.dy,
            self.m21 * v.dx + self.m22 * v.dy,
        )
    }

    pub fn is_symmetric(&self) -> bool {
        self.m12 == self.m21
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn symmetric_eigenvalues(&self) -> (f64, f64) {
        let off = 0.5 * (self.m12 + self.m21);
        let mean = 0.5 * (self.m11 + self.m22);
        let half_diff = 0.5 * (self.m11 - self.m22);
        let radius = half_diff.hypot(off);
        (mean - radius, mean + radius)
    }
}

/// `Φ(p) = ‖p − goal‖`.
pub fn attractor_value(p: Position2, goal: Position2) -> f64 {
    p.distance(goal)
}

/// `∇Φ`, defined as zero within `eps` of the goal.
pub fn attractor_gradient(p: Position2, goal: Position2, eps: f64) -> Velocity2 {
    let d = p - goal;
    let r = d.norm();
    if r > eps {
        d * (1.0 / r)
    } else {
        Velocity2::ZERO
    }
}

/// `P = L Lᵀ + σI`.
pub fn assemble_pd(params: PdMatrixParams, sigma: f64) -> Result<Matrix2> {
    if !params.is_finite() {
        return Err(Error::invalid(format!("non-finite PD parameters {params:?}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    let PdMatrixParams { a, b, c } = params;
    let off = a * b;
    Ok(Matrix2::new(a * a + sigma, off, off, b * b + c * c + sigma))
}

/// `v = −P ∇Φ(p)`.
pub fn natural_gradient_velocity(
    p: Position2,
    goal: Position2,
    pd: &Matrix2,
    cfg: &DynamicsConfig,
) -> Velocity2 {
    let grad = attractor_gradient(p, goal, cfg.goal_epsilon);
    if grad == Velocity2::ZERO {
        return Velocity2::ZERO;
    }
    -pd.mul_vec(grad)
}

pub fn euler_step(p: Position2, v: Velocity2, dt: f64) -> Position2 {
    p + v * dt
}

/// Largest step in `[0, dt]` that does not carry `p` past the point of the
/// ray `p + s·v` closest to the goal.
pub fn step_length(p: Position2, goal: Position2, v: Velocity2, dt: f64) -> f64 {
    let vv = v.dot(v);
    if vv == 0.0 {
        return dt;
    }
    let toward = (goal - p).dot(v);
    dt.min((toward / vv).max(0.0))
}

/// Euler step limited by [`step_length`], so `Φ` never increases.
pub fn guarded_step(p: Position2, goal: Position2, v: Velocity2, dt: f64) -> Position2 {
    euler_step(p, v, step_length(p, goal, v, dt))
}

/// Integrate `steps` guarded Euler steps of the natural-gradient system.
///
/// `field` receives the step index and current position and returns the
/// factor of `P` for that step. The returned trajectory has `steps + 1`
/// positions starting at `start`; once within `goal_epsilon` of the goal the
/// position is held.
pub fn rollout<F>(
    start: Position2,
    goal: Position2,
    mut field: F,
    steps: usize,
    cfg: &DynamicsConfig,
) -> Result<Trajectory>
where
    F: FnMut(usize, Position2) -> Result<PdMatrixParams>,
{
    if steps == 0 {
        return Err(Error::invalid("rollout needs at least one step"));
    }
    let mut positions = Vec::with_capacity(steps + 1);
    positions.push(start);
    let mut p = start;
    for k in 0..steps {
        if attractor_value(p, goal) > cfg.goal_epsilon {
            let pd = assemble_pd(field(k, p)?, cfg.sigma)?;
            let v = natural_gradient_velocity(p, goal, &pd, cfg);
            p = guarded_step(p, goal, v, cfg.dt);
        }
        positions.push(p);
    }
    Trajectory::new(0, 0, positions)
}
