//! Planar state, dynamics, stage cost and the rotation-about-target reduction.
//!
//! A world state holds the obstacle `h` and robot `r`; the target `t` is
//! static and passed alongside. Rotating the whole scene about `t` leaves the
//! problem unchanged, and each orbit is labelled by the reduced triple
//! `(d, e, θ)`: obstacle distance, target distance, and the angle between
//! `r - t` and `h - r`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance below which a norm counts as zero.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at `angle` radians from the x axis.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise rotation about the origin.
    pub fn rotate(self, beta: f64) -> Self {
        let (s, c) = beta.sin_cos();
        Vec2 {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Componentwise clamp into `[lo, hi]`.
    pub fn clamp(self, lo: Vec2, hi: Vec2) -> Self {
        Vec2 {
            x: self.x.clamp(lo.x, hi.x),
            y: self.y.clamp(lo.y, hi.y),
        }
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2 { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Obstacle position `h` and robot position `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub h: Vec2,
    pub r: Vec2,
}

impl WorldState {
    pub const fn new(h: Vec2, r: Vec2) -> Self {
        WorldState { h, r }
    }

    /// Rotates obstacle and robot about `center` by `beta`.
    pub fn rotate_about(self, center: Vec2, beta: f64) -> Self {
        WorldState {
            h: center + (self.h - center).rotate(beta),
            r: center + (self.r - center).rotate(beta),
        }
    }
}

/// `(d, e, θ)`: obstacle distance, target distance, angle in `[0, π]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub d: f64,
    pub e: f64,
    pub theta: f64,
}

impl ReducedState {
    pub const fn new(d: f64, e: f64, theta: f64) -> Self {
        ReducedState { d, e, theta }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Weight between goal attraction (1) and obstacle repulsion (0).
    pub lambda: f64,
    /// Arrival radius around the target.
    #[serde(rename = "R")]
    pub radius: f64,
    /// Regularizer of the obstacle term.
    pub epsilon: f64,
}

impl CostParams {
    pub fn new(lambda: f64, radius: f64, epsilon: f64) -> Result<Self> {
        let p = CostParams {
            lambda,
            radius,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::param("lambda", format!("{} not in [0, 1]", self.lambda)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::param("R", format!("{} must be positive", self.radius)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("{} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

/// Constant-position model: `(h + w, r + u)`.
pub fn step_full(s: WorldState, u: Vec2, w: Vec2) -> WorldState {
    WorldState {
        h: s.h + w,
        r: s.r + u,
    }
}

/// Stage cost `f(h, r)`; zero once the robot is within the arrival radius.
pub fn incremental_cost(s: WorldState, t: Vec2, p: &CostParams) -> f64 {
    stage_cost(s.h.dist(s.r), s.r.dist(t), p)
}

/// Stage cost expressed in reduced coordinates; independent of `θ`.
pub fn reduced_cost(rs: ReducedState, p: &CostParams) -> f64 {
    stage_cost(rs.d, rs.e, p)
}

#[inline]
fn stage_cost(d: f64, e: f64, p: &CostParams) -> f64 {
    if e <= p.radius {
        0.0
    } else {
        let gap = e - p.radius;
        p.lambda * gap * gap + (1.0 - p.lambda) / (d + p.epsilon)
    }
}

/// Rotation angle that carries `r - t` onto the positive x axis.
pub fn moving_frame_angle(r: Vec2, t: Vec2) -> Result<f64> {
    let v = r - t;
    if v.norm() < DEGENERACY_TOL {
        return Err(Error::DegenerateFrame);
    }
    Ok(-v.y.atan2(v.x))
}

/// Angle between `a` and `b` in `[0, π]`; 0 when either is (near) zero.
/// Equal to `acos(a·b / ‖a‖‖b‖)` with the argument clamped to `[−1, 1]`.
#[inline]
fn angle_between(a: Vec2, b: Vec2) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na < DEGENERACY_TOL || nb < DEGENERACY_TOL {
        return 0.0;
    }
    let (a, b) = (a * (1.0 / na), b * (1.0 / nb));
    // atan2 stays well conditioned near 0 and π where acos of the dot is not
    (a.x * b.y - a.y * b.x).abs().atan2(a.dot(b))
}

pub fn reduce(s: WorldState, t: Vec2) -> ReducedState {
    let target_to_robot = s.r - t;
    let robot_to_obstacle = s.h - s.r;
    ReducedState {
        d: robot_to_obstacle.norm(),
        e: target_to_robot.norm(),
        theta: angle_between(target_to_robot, robot_to_obstacle),
    }
}

/// Representative on the cross-section: robot due east of the target,
/// obstacle at angle `θ` from the east direction.
pub fn lift(rs: ReducedState, t: Vec2) -> WorldState {
    let r = t + Vec2::new(rs.e, 0.0);
    let h = r + Vec2::from_angle(rs.theta) * rs.d;
    WorldState { h, r }
}

/// One step of the dynamics written directly in reduced coordinates.
pub fn step_reduced(rs: ReducedState, u: Vec2, w: Vec2) -> ReducedState {
    let (s, c) = rs.theta.sin_cos();
    let nu = Vec2::new(rs.e + u.x, u.y);
    let xi = Vec2::new(rs.d * c + w.x - u.x, rs.d * s + w.y - u.y);
    ReducedState {
        d: xi.norm(),
        e: nu.norm(),
        theta: angle_between(nu, xi),
    }
}
