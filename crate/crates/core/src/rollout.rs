//! N-step lookahead rollout with the fitted value function as terminal cost,
//! plus the closed-loop episode simulator shared by every controller.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_models::{mean_disturbance, ActionSet, DisturbanceModel};
use crate::error::{Error, Result};
use crate::geometry::{incremental_cost, step_full, CostParams, Vec2, WorldState};
use crate::value_solver::ValueTable;

/// Axis-aligned bounds applied to both robot and obstacle positions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintBox {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl ConstraintBox {
    pub fn new(lo: Vec2, hi: Vec2) -> Result<Self> {
        let b = ConstraintBox { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn square(side: f64) -> Self {
        ConstraintBox {
            lo: Vec2::ZERO,
            hi: Vec2::new(side, side),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo.x > self.hi.x || self.lo.y > self.hi.y {
            return Err(Error::param("box", "need finite lo <= hi componentwise"));
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.lo.x && p.x <= self.hi.x && p.y >= self.lo.y && p.y <= self.hi.y
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        p.clamp(self.lo, self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    /// Average over disturbance scenarios.
    Expectation,
    /// Replace every disturbance by its mean.
    CertaintyEquivalence,
}

impl RolloutMode {
    pub fn label(self) -> &'static str {
        match self {
            RolloutMode::Expectation => "expectation",
            RolloutMode::CertaintyEquivalence => "ce",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub mode: RolloutMode,
    /// Number of common-random-number scenarios drawn from `W^N`.
    pub scenario_count: usize,
    /// Enumerate the whole `W^N` outcome tree instead of sampling.
    pub exhaustive: bool,
    /// Added once per predicted step whose robot position leaves the box.
    pub infeasibility_penalty: f64,
    pub seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            horizon: 2,
            mode: RolloutMode::Expectation,
            scenario_count: 64,
            exhaustive: false,
            infeasibility_penalty: 1e15,
            seed: 0,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        if self.scenario_count == 0 {
            return Err(Error::param("scenario_count", "must be at least 1"));
        }
        if !(self.infeasibility_penalty > 0.0 && self.infeasibility_penalty.is_finite()) {
            return Err(Error::param("infeasibility_penalty", "must be positive and finite"));
        }
        Ok(())
    }
}

/// A disturbance sequence over the horizon and its weight in the average.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub disturbances: Vec<Vec2>,
    pub weight: f64,
}

/// Derives an independent seed from `seed` and a label.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanResult {
    pub action_index: usize,
    pub action: Vec2,
    pub value: f64,
}

/// Rollout planner bound to a value table and action/disturbance models.
#[derive(Clone, Debug)]
pub struct RolloutPlanner<'a> {
    pub table: &'a ValueTable,
    pub actions: &'a ActionSet,
    pub disturbance: &'a DisturbanceModel,
    pub bounds: Option<ConstraintBox>,
    pub cfg: RolloutConfig,
}

impl<'a> RolloutPlanner<'a> {
    pub fn new(
        table: &'a ValueTable,
        actions: &'a ActionSet,
        disturbance: &'a DisturbanceModel,
        bounds: Option<ConstraintBox>,
        cfg: RolloutConfig,
    ) -> Self {
        RolloutPlanner {
            table,
            actions,
            disturbance,
            bounds,
            cfg,
        }
    }

    fn cost(&self) -> &CostParams {
        &self.table.cost_params
    }

    /// Scenarios used by one planning call; `stream` selects the draw.
    pub fn scenarios(&self, stream: u64) -> Vec<Scenario> {
        let n = self.cfg.horizon;
        match self.cfg.mode {
            RolloutMode::CertaintyEquivalence => vec![Scenario {
                disturbances: vec![mean_disturbance(self.disturbance); n],
                weight: 1.0,
            }],
            RolloutMode::Expectation if self.cfg.exhaustive => self.enumerate_scenarios(),
            RolloutMode::Expectation => self.sample_scenarios(stream),
        }
    }

    fn enumerate_scenarios(&self) -> Vec<Scenario> {
        let support: Vec<(Vec2, f64)> = self.disturbance.iter().filter(|(_, p)| *p > 0.0).collect();
        let mut out = vec![Scenario {
            disturbances: Vec::new(),
            weight: 1.0,
        }];
        for _ in 0..self.cfg.horizon {
            out = out
                .into_iter()
                .flat_map(|s| {
                    support.iter().map(move |&(w, p)| {
                        let mut d = s.disturbances.clone();
                        d.push(w);
                        Scenario {
                            disturbances: d,
                            weight: s.weight * p,
                        }
                    })
                })
                .collect();
        }
        out
    }

    /// `M` draws from `W^N`; identical draws are merged so that a
    /// point-mass model yields exactly one scenario of weight 1.
    fn sample_scenarios(&self, stream: u64) -> Vec<Scenario> {
        let m = self.cfg.scenario_count;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream);
        let dist = WeightedIndex::new(&self.disturbance.probabilities)
            .expect("validated disturbance probabilities");
        let mut draws: Vec<(Vec<usize>, usize)> = Vec::new();
        for _ in 0..m {
            let idx: Vec<usize> = (0..self.cfg.horizon).map(|_| dist.sample(&mut rng)).collect();
            match draws.iter_mut().find(|(d, _)| *d == idx) {
                Some((_, count)) => *count += 1,
                None => draws.push((idx, 1)),
            }
        }
        draws
            .into_iter()
            .map(|(idx, count)| Scenario {
                disturbances: idx.iter().map(|&i| self.disturbance.outcomes[i]).collect(),
                weight: count as f64 / m as f64,
            })
            .collect()
    }

    /// Cost of an open-loop action sequence under a single disturbance sequence.
    pub fn sequence_cost(&self, s: WorldState, t: Vec2, actions: &[Vec2], disturbances: &[Vec2]) -> f64 {
        let mut x = s;
        let mut total = 0.0;
        for (&u, &w) in actions.iter().zip(disturbances) {
            total += incremental_cost(x, t, self.cost());
            x = step_full(x, u, w);
            if let Some(b) = &self.bounds {
                x.h = b.clamp(x.h);
                if !b.contains(x.r) {
                    total += self.cfg.infeasibility_penalty;
                }
            }
        }
        total + self.table.evaluate_full(x, t)
    }

    /// Decodes candidate `c` into action indices, first action most significant.
    fn decode(&self, mut c: usize, out: &mut [usize]) {
        let k = self.actions.len();
        for slot in out.iter_mut().rev() {
            *slot = c % k;
            c /= k;
        }
    }

    pub fn candidate_count(&self) -> usize {
        self.actions.len().pow(self.cfg.horizon as u32)
    }

    /// Expected objective of every candidate sequence, in canonical order.
    pub fn objectives(&self, s: WorldState, t: Vec2, scenarios: &[Scenario]) -> Vec<f64> {
        let n = self.cfg.horizon;
        (0..self.candidate_count())
            .into_par_iter()
            .map_init(
                || (vec![0usize; n], vec![Vec2::ZERO; n]),
                |(idx, seq), c| {
                    self.decode(c, idx);
                    for (slot, &i) in seq.iter_mut().zip(idx.iter()) {
                        *slot = self.actions.actions[i];
                    }
                    scenarios
                        .iter()
                        .map(|sc| sc.weight * self.sequence_cost(s, t, seq, &sc.disturbances))
                        .sum()
                },
            )
            .collect()
    }

    pub fn plan_stream(&self, s: WorldState, t: Vec2, stream: u64) -> PlanResult {
        let (idx, value) = self.best_sequence(s, t, stream);
        PlanResult {
            action_index: idx[0],
            action: self.actions.actions[idx[0]],
            value,
        }
    }

    /// Solves the lookahead problem at `s` and returns the first action.
    pub fn plan(&self, s: WorldState, t: Vec2) -> PlanResult {
        self.plan_stream(s, t, 0)
    }

    /// Argmin action-index sequence and its objective; ties go to the
    /// lexicographically first sequence.
    pub fn best_sequence(&self, s: WorldState, t: Vec2, stream: u64) -> (Vec<usize>, f64) {
        let scenarios = self.scenarios(stream);
        let values = self.objectives(s, t, &scenarios);
        let (best, value) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) });
        let mut idx = vec![0; self.cfg.horizon];
        self.decode(best, &mut idx);
        (idx, value)
    }
}

/// Free-function form of [`RolloutPlanner::plan`].
#[allow(clippy::too_many_arguments)]
pub fn plan(
    s: WorldState,
    t: Vec2,
    table: &ValueTable,
    actions: &ActionSet,
    disturbance: &DisturbanceModel,
    bounds: Option<ConstraintBox>,
    cfg: &RolloutConfig,
) -> (Vec2, f64) {
    let r = RolloutPlanner::new(table, actions, disturbance, bounds, *cfg).plan(s, t);
    (r.action, r.value)
}

/// What a controller applies at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub action: Vec2,
    /// The controller could not satisfy its own constraint and fell back.
    pub fallback: bool,
}

impl From<Vec2> for Decision {
    fn from(action: Vec2) -> Self {
        Decision {
            action,
            fallback: false,
        }
    }
}

/// A state-feedback policy queried once per simulated step.
pub trait Controller: Sync {
    fn decide(&self, s: WorldState, t: Vec2, step: usize) -> Decision;
}

impl Controller for RolloutPlanner<'_> {
    fn decide(&self, s: WorldState, t: Vec2, step: usize) -> Decision {
        self.plan_stream(s, t, step as u64).action.into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub step: usize,
    pub r: Vec2,
    pub h: Vec2,
    /// Action applied at this step (zero on the final row).
    pub u: Vec2,
    /// Disturbance realized at this step (zero on the final row).
    pub w: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub time_to_target: usize,
    pub min_distance: f64,
    pub collided: bool,
    pub timed_out: bool,
    /// Steps at which the controller reported a fallback.
    pub fallbacks: usize,
    pub trajectory: Vec<TrajectoryStep>,
}

/// Closed-loop run: query the controller, draw `w`, step, clamp the obstacle.
///
/// Stops at the first state within the arrival radius or after `max_steps`
/// actions. Collisions are counted but do not end the episode.
#[allow(clippy::too_many_arguments)]
pub fn simulate_episode(
    s0: WorldState,
    t: Vec2,
    controller: &dyn Controller,
    disturbance: &DisturbanceModel,
    cost: &CostParams,
    bounds: Option<ConstraintBox>,
    max_steps: usize,
    seed: u64,
) -> EpisodeResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = WeightedIndex::new(&disturbance.probabilities).expect("validated disturbance probabilities");
    let mut s = s0;
    let mut trajectory = Vec::new();
    let mut min_distance = f64::INFINITY;
    let mut collided = false;
    let mut fallbacks = 0;

    for k in 0..=max_steps {
        let d = s.h.dist(s.r);
        min_distance = min_distance.min(d);
        collided |= d <= cost.radius;

        if s.r.dist(t) <= cost.radius || k == max_steps {
            trajectory.push(TrajectoryStep {
                step: k,
                r: s.r,
                h: s.h,
                u: Vec2::ZERO,
                w: Vec2::ZERO,
            });
            let timed_out = s.r.dist(t) > cost.radius;
            return EpisodeResult {
                time_to_target: k,
                min_distance,
                collided,
                timed_out,
                fallbacks,
                trajectory,
            };
        }

        let decision = controller.decide(s, t, k);
        fallbacks += decision.fallback as usize;
        let w = disturbance.outcomes[dist.sample(&mut rng)];
        trajectory.push(TrajectoryStep {
            step: k,
            r: s.r,
            h: s.h,
            u: decision.action,
            w,
        });
        s = step_full(s, decision.action, w);
        if let Some(b) = &bounds {
            s.h = b.clamp(s.h);
        }
    }
    unreachable!("loop returns at k == max_steps")
}
