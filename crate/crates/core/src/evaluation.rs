//! Monte-Carlo protocol: random instances, per-λ and baseline evaluation,
//! trade-off sweeps and CSV output.
//!
//! Every episode is keyed by `(instance, realization)`; its disturbance seed
//! comes from the instance list, so all planners and λ values in one sweep
//! see the same disturbance sequences.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_models::{ActionSet, DisturbanceModel};
use crate::baselines::{AStarController, CbfController, CbfMode, CbfParams};
use crate::error::{Error, Result};
use crate::geometry::{CostParams, Vec2, WorldState};
use crate::rollout::{derive_seed, simulate_episode, ConstraintBox, Controller, RolloutConfig, RolloutMode, RolloutPlanner};
use crate::table_io::fmt_f64;
use crate::value_solver::ValueTable;

pub use crate::rollout::{EpisodeResult, TrajectoryStep};

/// The λ at which the time/clearance trade-off balances on the reference setup.
pub const REFERENCE_LAMBDA: f64 = 5e-6;

/// CBF tuning selected on the reference setup.
pub const REFERENCE_CBF: CbfParams = CbfParams { alpha: 0.75, d0: 1.0 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub t: Vec2,
    pub r0: Vec2,
    pub h0: Vec2,
    pub seeds: Vec<u64>,
}

impl InstanceSpec {
    pub fn initial_state(&self) -> WorldState {
        WorldState::new(self.h0, self.r0)
    }
}

/// Uniform positions in the box, rejected until `‖r0 − t‖ > 1` and `‖h0 − r0‖ > 1`.
pub fn sample_instances(
    count: usize,
    realizations_per_instance: usize,
    bounds: &ConstraintBox,
    seed: u64,
) -> Result<Vec<InstanceSpec>> {
    if count == 0 {
        return Err(Error::param("instances", "count must be at least 1"));
    }
    if realizations_per_instance == 0 {
        return Err(Error::param("realizations", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| {
        Vec2::new(
            bounds.lo.x + (bounds.hi.x - bounds.lo.x) * rng.random::<f64>(),
            bounds.lo.y + (bounds.hi.y - bounds.lo.y) * rng.random::<f64>(),
        )
    };
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t = point(&mut rng);
        let r0 = point(&mut rng);
        let h0 = point(&mut rng);
        if r0.dist(t) > 1.0 && h0.dist(r0) > 1.0 {
            let seeds = (0..realizations_per_instance).map(|_| rng.random()).collect();
            out.push(InstanceSpec { t, r0, h0, seeds });
        }
    }
    Ok(out)
}

/// Settings shared by every episode of an evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeProtocol {
    pub cost: CostParams,
    pub bounds: ConstraintBox,
    pub max_steps: usize,
}

/// One finished episode with its key.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub instance: usize,
    pub target: Vec2,
    pub realization: usize,
    pub result: EpisodeResult,
}

/// Runs `make(episode_seed)`'s controller on every `(instance, realization)`.
pub fn run_episodes<C, F>(
    instances: &[InstanceSpec],
    w_eval: &DisturbanceModel,
    protocol: &EpisodeProtocol,
    make: F,
) -> Vec<EpisodeRecord>
where
    C: Controller,
    F: Fn(u64) -> C + Sync,
{
    let keys: Vec<(usize, usize)> = instances
        .iter()
        .enumerate()
        .flat_map(|(i, inst)| (0..inst.seeds.len()).map(move |k| (i, k)))
        .collect();
    keys.par_iter()
        .map(|&(i, k)| {
            let inst = &instances[i];
            let seed = inst.seeds[k];
            let controller = make(seed);
            let result = simulate_episode(
                inst.initial_state(),
                inst.t,
                &controller,
                w_eval,
                &protocol.cost,
                Some(protocol.bounds),
                protocol.max_steps,
                seed,
            );
            EpisodeRecord {
                instance: i,
                target: inst.t,
                realization: k,
                result,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeOffPoint {
    pub lambda: Option<f64>,
    pub horizon: Option<usize>,
    pub mode: String,
    pub planner: String,
    pub alpha: Option<f64>,
    pub d0: Option<f64>,
    pub mean_time: f64,
    pub mean_min_distance: f64,
    pub episode_count: usize,
    pub collision_count: usize,
    pub timeout_count: usize,
    pub fallback_count: usize,
}

/// Label fields of a [`TradeOffPoint`], filled before aggregation.
#[derive(Clone, Debug, Default)]
pub struct PointLabel {
    pub lambda: Option<f64>,
    pub horizon: Option<usize>,
    pub mode: String,
    pub planner: String,
    pub alpha: Option<f64>,
    pub d0: Option<f64>,
}

/// Ordered means over the episode list.
pub fn aggregate(label: PointLabel, episodes: &[EpisodeRecord]) -> TradeOffPoint {
    let n = episodes.len();
    let (time_sum, dist_sum) = episodes.iter().fold((0.0, 0.0), |(a, b), e| {
        (a + e.result.time_to_target as f64, b + e.result.min_distance)
    });
    let denom = n.max(1) as f64;
    TradeOffPoint {
        lambda: label.lambda,
        horizon: label.horizon,
        mode: label.mode,
        planner: label.planner,
        alpha: label.alpha,
        d0: label.d0,
        mean_time: time_sum / denom,
        mean_min_distance: dist_sum / denom,
        episode_count: n,
        collision_count: episodes.iter().filter(|e| e.result.collided).count(),
        timeout_count: episodes.iter().filter(|e| e.result.timed_out).count(),
        fallback_count: episodes.iter().map(|e| e.result.fallbacks).sum(),
    }
}

/// Rollout episodes for one table (one λ) and planner configuration.
#[allow(clippy::too_many_arguments)]
pub fn run_rollout_episodes(
    table: &ValueTable,
    actions: &ActionSet,
    planner_disturbance: &DisturbanceModel,
    cfg: &RolloutConfig,
    instances: &[InstanceSpec],
    w_eval: &DisturbanceModel,
    protocol: &EpisodeProtocol,
) -> Vec<EpisodeRecord> {
    run_episodes(instances, w_eval, protocol, |episode_seed| {
        let cfg = RolloutConfig {
            seed: derive_seed(cfg.seed, episode_seed),
            ..*cfg
        };
        RolloutPlanner::new(table, actions, planner_disturbance, Some(protocol.bounds), cfg)
    })
}

/// Mean time to target and mean minimum obstacle distance for one λ.
///
/// The planner predicts with `planner_disturbance` (its belief about the
/// obstacle), while episodes are driven by `w_eval`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_lambda(
    lambda: f64,
    table: &ValueTable,
    actions: &ActionSet,
    planner_disturbance: &DisturbanceModel,
    cfg: &RolloutConfig,
    instances: &[InstanceSpec],
    w_eval: &DisturbanceModel,
    protocol: &EpisodeProtocol,
) -> Result<TradeOffPoint> {
    if table.cost_params.lambda != lambda {
        return Err(Error::TableMismatch(format!(
            "table solved for lambda {} but evaluated at {lambda}",
            table.cost_params.lambda
        )));
    }
    cfg.validate()?;
    let protocol = EpisodeProtocol {
        cost: table.cost_params,
        ..*protocol
    };
    let episodes = run_rollout_episodes(table, actions, planner_disturbance, cfg, instances, w_eval, &protocol);
    Ok(aggregate(
        PointLabel {
            lambda: Some(lambda),
            horizon: Some(cfg.horizon),
            mode: cfg.mode.label().to_string(),
            planner: "rollout".into(),
            ..Default::default()
        },
        &episodes,
    ))
}

/// Points for the Cartesian product of λ, horizon and mode, sorted by λ.
///
/// `table_for(λ)` supplies the solved table for each λ.
#[allow(clippy::too_many_arguments)]
pub fn tradeoff_sweep<F>(
    lambdas: &[f64],
    horizons: &[usize],
    modes: &[RolloutMode],
    mut table_for: F,
    actions: &ActionSet,
    planner_disturbance: &DisturbanceModel,
    base_cfg: &RolloutConfig,
    instances: &[InstanceSpec],
    w_eval: &DisturbanceModel,
    protocol: &EpisodeProtocol,
) -> Result<Vec<TradeOffPoint>>
where
    F: FnMut(f64) -> Result<ValueTable>,
{
    let mut order: Vec<f64> = lambdas.to_vec();
    order.sort_by(f64::total_cmp);
    let mut points = Vec::new();
    for lambda in order {
        let table = table_for(lambda)?;
        for &horizon in horizons {
            for &mode in modes {
                let cfg = RolloutConfig {
                    horizon,
                    mode,
                    ..*base_cfg
                };
                points.push(evaluate_lambda(
                    lambda,
                    &table,
                    actions,
                    planner_disturbance,
                    &cfg,
                    instances,
                    w_eval,
                    protocol,
                )?);
            }
        }
    }
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum BaselineKind {
    Astar,
    Cbf { alpha: f64, d0: f64 },
    CbfCe { alpha: f64, d0: f64 },
}

impl BaselineKind {
    pub fn label(&self) -> &'static str {
        match self {
            BaselineKind::Astar => "astar",
            BaselineKind::Cbf { .. } => "cbf",
            BaselineKind::CbfCe { .. } => "cbf_ce",
        }
    }

    fn cbf(&self) -> Option<(CbfParams, CbfMode)> {
        match *self {
            BaselineKind::Astar => None,
            BaselineKind::Cbf { alpha, d0 } => Some((CbfParams { alpha, d0 }, CbfMode::Expectation)),
            BaselineKind::CbfCe { alpha, d0 } => {
                Some((CbfParams { alpha, d0 }, CbfMode::CertaintyEquivalence))
            }
        }
    }
}

/// Episodes driven by a baseline controller. The CBF variants filter with
/// `cbf_disturbance`, the controller's model of the obstacle.
pub fn run_baseline_episodes(
    kind: &BaselineKind,
    actions: &ActionSet,
    cbf_disturbance: &DisturbanceModel,
    instances: &[InstanceSpec],
    w_eval: &DisturbanceModel,
    protocol: &EpisodeProtocol,
) -> Result<Vec<EpisodeRecord>> {
    Ok(match kind.cbf() {
        None => run_episodes(instances, w_eval, protocol, |_| AStarController {
            actions,
            bounds: protocol.bounds,
            radius: protocol.cost.radius,
        }),
        Some((params, mode)) => {
            params.validate()?;
            run_episodes(instances, w_eval, protocol, |_| CbfController {
                actions,
                disturbance: cbf_disturbance,
                params,
                mode,
            })
        }
    })
}

pub fn evaluate_baseline(
    kind: &BaselineKind,
    actions: &ActionSet,
    cbf_disturbance: &DisturbanceModel,
    instances: &[InstanceSpec],
    w_eval: &DisturbanceModel,
    protocol: &EpisodeProtocol,
) -> Result<TradeOffPoint> {
    let episodes = run_baseline_episodes(kind, actions, cbf_disturbance, instances, w_eval, protocol)?;
    let (alpha, d0) = match kind.cbf() {
        Some((p, _)) => (Some(p.alpha), Some(p.d0)),
        None => (None, None),
    };
    let mode = match kind {
        BaselineKind::CbfCe { .. } => "ce",
        BaselineKind::Cbf { .. } => "expectation",
        BaselineKind::Astar => "",
    };
    Ok(aggregate(
        PointLabel {
            mode: mode.into(),
            planner: kind.label().into(),
            alpha,
            d0,
            ..Default::default()
        },
        &episodes,
    ))
}

pub const EPISODE_CSV_HEADER: &str =
    "episode_id,step,r_x,r_y,h_x,h_y,u_x,u_y,w_x,w_y,dist_to_target,dist_to_obstacle";

pub const TRADEOFF_CSV_HEADER: &str =
    "lambda,horizon,mode,planner,alpha,d0,mean_time,mean_min_distance,episodes,collisions,timeouts";

/// One row per visited state; `episode_id` is the position in `episodes`.
pub fn episode_csv(episodes: &[EpisodeRecord]) -> String {
    let mut out = String::new();
    out.push_str(EPISODE_CSV_HEADER);
    out.push('\n');
    for (id, ep) in episodes.iter().enumerate() {
        let t = ep.target;
        for s in &ep.result.trajectory {
            let _ = writeln!(
                out,
                "{id},{},{},{},{},{},{},{},{},{},{},{}",
                s.step,
                fmt_f64(s.r.x),
                fmt_f64(s.r.y),
                fmt_f64(s.h.x),
                fmt_f64(s.h.y),
                fmt_f64(s.u.x),
                fmt_f64(s.u.y),
                fmt_f64(s.w.x),
                fmt_f64(s.w.y),
                fmt_f64(s.r.dist(t)),
                fmt_f64(s.h.dist(s.r)),
            );
        }
    }
    out
}

fn opt_f(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn tradeoff_csv(points: &[TradeOffPoint]) -> String {
    let mut out = String::new();
    out.push_str(TRADEOFF_CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            opt_f(p.lambda),
            p.horizon.map(|h| h.to_string()).unwrap_or_default(),
            p.mode,
            p.planner,
            opt_f(p.alpha),
            opt_f(p.d0),
            fmt_f64(p.mean_time),
            fmt_f64(p.mean_min_distance),
            p.episode_count,
            p.collision_count,
            p.timeout_count,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_respect_separation_and_seed() {
        let b = ConstraintBox::square(20.0);
        let a = sample_instances(50, 10, &b, 42).unwrap();
        assert_eq!(a.len(), 50);
        for inst in &a {
            assert!(inst.r0.dist(inst.t) > 1.0);
            assert!(inst.h0.dist(inst.r0) > 1.0);
            assert_eq!(inst.seeds.len(), 10);
            for p in [inst.t, inst.r0, inst.h0] {
                assert!(b.contains(p));
            }
        }
        assert_eq!(a, sample_instances(50, 10, &b, 42).unwrap());
        assert_ne!(a, sample_instances(50, 10, &b, 43).unwrap());
        assert!(sample_instances(0, 1, &b, 0).is_err());
    }

    #[test]
    fn reference_constants() {
        assert_eq!(REFERENCE_LAMBDA, 5e-6);
        assert_eq!(REFERENCE_CBF, CbfParams::new(0.75, 1.0).unwrap());
    }

    #[test]
    fn csv_headers() {
        assert_eq!(TRADEOFF_CSV_HEADER.split(',').count(), 11);
        assert_eq!(EPISODE_CSV_HEADER.split(',').count(), 12);
        let p = TradeOffPoint {
            lambda: None,
            horizon: None,
            mode: String::new(),
            planner: "astar".into(),
            alpha: None,
            d0: None,
            mean_time: 3.0,
            mean_min_distance: 2.5,
            episode_count: 2,
            collision_count: 0,
            timeout_count: 1,
            fallback_count: 0,
        };
        let csv = tradeoff_csv(&[p]);
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row, ",,,astar,,,3.0000000000000000e0,2.5000000000000000e0,2,0,1");
    }
}
