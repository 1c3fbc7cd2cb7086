//! Comparison controllers: the nominal goal-seeker, discrete-time CBF safety
//! filters around it, and receding-horizon A* that ignores the obstacle.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::action_models::{mean_disturbance, ActionSet, DisturbanceModel};
use crate::error::{Error, Result};
use crate::geometry::{step_full, Vec2, WorldState};
use crate::rollout::{ConstraintBox, Controller, Decision};

/// Maximum number of A* node expansions before giving up.
pub const ASTAR_NODE_BUDGET: usize = 1_000_000;

/// Positions are hashed on a grid of this pitch.
const ASTAR_KEY_SCALE: f64 = 1e9;

/// Slack on box membership for accumulated rounding in A* positions.
const BOX_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbfParams {
    pub alpha: f64,
    pub d0: f64,
}

impl CbfParams {
    pub fn new(alpha: f64, d0: f64) -> Result<Self> {
        let p = CbfParams { alpha, d0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", format!("{} not in (0, 1)", self.alpha)));
        }
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return Err(Error::param("d0", format!("{} must be positive", self.d0)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbfMode {
    Expectation,
    CertaintyEquivalence,
}

/// Action that brings the robot closest to the target; ignores the obstacle.
pub fn nominal_control(s: WorldState, t: Vec2, actions: &ActionSet) -> Vec2 {
    let mut best = actions.actions[0];
    let mut best_dist = f64::INFINITY;
    for u in actions.iter() {
        let d = (s.r + u).dist(t);
        if d < best_dist {
            best_dist = d;
            best = u;
        }
    }
    best
}

/// Barrier `B(x) = ‖h − r‖ − d0`.
pub fn barrier(s: WorldState, d0: f64) -> f64 {
    s.h.dist(s.r) - d0
}

/// Left-hand side of the barrier condition for action `u`.
pub fn cbf_constraint_lhs(s: WorldState, u: Vec2, w: &DisturbanceModel, prm: &CbfParams, mode: CbfMode) -> f64 {
    match mode {
        CbfMode::Expectation => w
            .iter()
            .map(|(wi, p)| p * barrier(step_full(s, u, wi), prm.d0))
            .sum(),
        CbfMode::CertaintyEquivalence => barrier(step_full(s, u, mean_disturbance(w)), prm.d0),
    }
}

/// Safety-filtered action and whether the least-violating fallback was used.
pub fn cbf_decide(
    s: WorldState,
    t: Vec2,
    actions: &ActionSet,
    w: &DisturbanceModel,
    prm: &CbfParams,
    mode: CbfMode,
) -> Decision {
    let nominal = nominal_control(s, t, actions);
    let rhs = prm.alpha * barrier(s, prm.d0);

    let mut best: Option<(Vec2, f64)> = None;
    let mut least_violating = (actions.actions[0], f64::NEG_INFINITY);
    for u in actions.iter() {
        let lhs = cbf_constraint_lhs(s, u, w, prm, mode);
        if lhs > least_violating.1 {
            least_violating = (u, lhs);
        }
        if lhs >= rhs {
            let dev = (u - nominal).norm_sq();
            if best.is_none_or(|(_, b)| dev < b) {
                best = Some((u, dev));
            }
        }
    }
    match best {
        Some((u, _)) => Decision {
            action: u,
            fallback: false,
        },
        None => Decision {
            action: least_violating.0,
            fallback: true,
        },
    }
}

pub fn cbf_control(
    s: WorldState,
    t: Vec2,
    actions: &ActionSet,
    w: &DisturbanceModel,
    prm: &CbfParams,
    mode: CbfMode,
) -> Vec2 {
    cbf_decide(s, t, actions, w, prm, mode).action
}

#[derive(Clone, Copy, Debug)]
struct OpenNode {
    f: f64,
    g: usize,
    seq: usize,
    pos: Vec2,
    first_move: Option<usize>,
}

impl PartialEq for OpenNode {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for OpenNode {
    // max-heap: smallest f first, then deepest, then oldest
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(self.g.cmp(&o.g))
            .then(o.seq.cmp(&self.seq))
    }
}

fn key(p: Vec2) -> (i64, i64) {
    (
        (p.x * ASTAR_KEY_SCALE).round() as i64,
        (p.y * ASTAR_KEY_SCALE).round() as i64,
    )
}

fn in_box(b: &ConstraintBox, p: Vec2) -> bool {
    p.x >= b.lo.x - BOX_SLACK
        && p.x <= b.hi.x + BOX_SLACK
        && p.y >= b.lo.y - BOX_SLACK
        && p.y <= b.hi.y + BOX_SLACK
}

/// Result of an A* search from the robot to the target disc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AStarPath {
    /// Number of unit moves on the shortest path.
    pub length: usize,
    /// Index into the action set of the first move, `None` if already at the goal.
    pub first_move: Option<usize>,
    pub expanded: usize,
}

/// Shortest path in unit moves from `start` into `{p : ‖p − t‖ ≤ radius}`.
///
/// Moves are the nonzero actions of `actions`; positions stay in `bounds`.
/// The heuristic `max(0, ‖p − t‖ − radius)` is admissible because each move
/// changes the distance to `t` by at most one.
pub fn astar_path(
    start: Vec2,
    t: Vec2,
    radius: f64,
    actions: &ActionSet,
    bounds: &ConstraintBox,
    budget: usize,
) -> Option<AStarPath> {
    let heuristic = |p: Vec2| (p.dist(t) - radius).max(0.0);
    let moves = actions.unit_moves();

    let mut open = BinaryHeap::new();
    let mut best_g: HashMap<(i64, i64), usize> = HashMap::new();
    let mut seq = 0;
    open.push(OpenNode {
        f: heuristic(start),
        g: 0,
        seq,
        pos: start,
        first_move: None,
    });
    best_g.insert(key(start), 0);
    let mut expanded = 0;

    while let Some(node) = open.pop() {
        if node.pos.dist(t) <= radius {
            return Some(AStarPath {
                length: node.g,
                first_move: node.first_move,
                expanded,
            });
        }
        if best_g.get(&key(node.pos)).is_some_and(|&g| g < node.g) {
            continue;
        }
        expanded += 1;
        if expanded > budget {
            return None;
        }
        for (i, &m) in moves.iter().enumerate() {
            let next = node.pos + m;
            if !in_box(bounds, next) {
                continue;
            }
            let g = node.g + 1;
            let k = key(next);
            if best_g.get(&k).is_some_and(|&old| old <= g) {
                continue;
            }
            best_g.insert(k, g);
            seq += 1;
            open.push(OpenNode {
                f: g as f64 + heuristic(next),
                g,
                seq,
                pos: next,
                first_move: node.first_move.or(Some(i)),
            });
        }
    }
    None
}

/// First move of an A* path to the target disc, re-planned every call.
/// Falls back to [`nominal_control`] when the search fails.
pub fn astar_control(s: WorldState, t: Vec2, radius: f64, actions: &ActionSet, bounds: &ConstraintBox) -> Vec2 {
    astar_decide(s, t, radius, actions, bounds).action
}

fn astar_decide(s: WorldState, t: Vec2, radius: f64, actions: &ActionSet, bounds: &ConstraintBox) -> Decision {
    match astar_path(s.r, t, radius, actions, bounds, ASTAR_NODE_BUDGET) {
        Some(path) => match path.first_move {
            Some(i) => actions.actions[i].into(),
            None => Vec2::ZERO.into(),
        },
        None => Decision {
            action: nominal_control(s, t, actions),
            fallback: true,
        },
    }
}

pub struct NominalController<'a> {
    pub actions: &'a ActionSet,
}

impl Controller for NominalController<'_> {
    fn decide(&self, s: WorldState, t: Vec2, _: usize) -> Decision {
        nominal_control(s, t, self.actions).into()
    }
}

pub struct CbfController<'a> {
    pub actions: &'a ActionSet,
    pub disturbance: &'a DisturbanceModel,
    pub params: CbfParams,
    pub mode: CbfMode,
}

impl Controller for CbfController<'_> {
    fn decide(&self, s: WorldState, t: Vec2, _: usize) -> Decision {
        cbf_decide(s, t, self.actions, self.disturbance, &self.params, self.mode)
    }
}

pub struct AStarController<'a> {
    pub actions: &'a ActionSet,
    pub bounds: ConstraintBox,
    pub radius: f64,
}

impl Controller for AStarController<'_> {
    fn decide(&self, s: WorldState, t: Vec2, _: usize) -> Decision {
        astar_decide(s, t, self.radius, self.actions, &self.bounds)
    }
}
