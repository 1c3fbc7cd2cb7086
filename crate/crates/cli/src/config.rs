//! JSON run configuration shared by every subcommand.
//!
//! Every section has defaults, so `{}` is a valid (if slow) configuration:
//! the reference grid, `n1 = n2 = 16`, `λ = 5e-6` and the `[0, 20]²` box.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use symplan::action_models::{
    build_action_set, build_disturbance_uniform, build_disturbance_weighted, ActionSet, DisturbanceModel,
};
use symplan::evaluation::{sample_instances, BaselineKind, EpisodeProtocol, InstanceSpec, REFERENCE_LAMBDA};
use symplan::geometry::{CostParams, Vec2};
use symplan::rollout::{ConstraintBox, RolloutConfig, RolloutMode};
use symplan::value_solver::{build_coarse_grid, build_paper_grid, PartitionGrid, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed for sampling, scenario draws and instance generation.
    pub seed: u64,
    #[serde(rename = "box")]
    pub bounds: ConstraintBox,
    pub cost: CostParams,
    pub n1: usize,
    /// Model the value table is solved under.
    pub disturbance: DisturbanceSpec,
    pub grid: GridSpec,
    pub solver: SolverSection,
    pub planner: PlannerSpec,
    pub rollout: RolloutSection,
    pub evaluation: EvaluationSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            bounds: ConstraintBox::square(20.0),
            cost: CostParams {
                lambda: REFERENCE_LAMBDA,
                radius: 1.0,
                epsilon: 1e-8,
            },
            n1: 16,
            disturbance: DisturbanceSpec::Uniform { n2: 16 },
            grid: GridSpec::Reference,
            solver: SolverSection::default(),
            planner: PlannerSpec::Rollout,
            rollout: RolloutSection::default(),
            evaluation: EvaluationSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DisturbanceSpec {
    Uniform {
        n2: usize,
    },
    Weighted {
        n2: usize,
        high_weight: f64,
        low_weight: f64,
    },
    PointMass {
        w: Vec2,
    },
    Explicit {
        outcomes: Vec<Vec2>,
        probabilities: Vec<f64>,
    },
}

impl DisturbanceSpec {
    pub fn build(&self) -> symplan::Result<DisturbanceModel> {
        match self {
            DisturbanceSpec::Uniform { n2 } => build_disturbance_uniform(*n2),
            DisturbanceSpec::Weighted {
                n2,
                high_weight,
                low_weight,
            } => build_disturbance_weighted(*n2, *high_weight, *low_weight),
            DisturbanceSpec::PointMass { w } => Ok(DisturbanceModel::point_mass(*w)),
            DisturbanceSpec::Explicit {
                outcomes,
                probabilities,
            } => {
                let m = DisturbanceModel {
                    outcomes: outcomes.clone(),
                    probabilities: probabilities.clone(),
                };
                m.validate()?;
                Ok(m)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum GridSpec {
    Reference,
    Coarse,
    Uniform {
        d_max: f64,
        n_d: usize,
        e_max: f64,
        n_e: usize,
        n_theta: usize,
    },
    Edges {
        d_edges: Vec<f64>,
        e_edges: Vec<f64>,
        theta_edges: Vec<f64>,
    },
}

impl GridSpec {
    pub fn build(&self) -> symplan::Result<PartitionGrid> {
        match self {
            GridSpec::Reference => Ok(build_paper_grid()),
            GridSpec::Coarse => Ok(build_coarse_grid()),
            GridSpec::Uniform {
                d_max,
                n_d,
                e_max,
                n_e,
                n_theta,
            } => PartitionGrid::uniform(*d_max, *n_d, *e_max, *n_e, *n_theta),
            GridSpec::Edges {
                d_edges,
                e_edges,
                theta_edges,
            } => PartitionGrid::new(d_edges.clone(), e_edges.clone(), theta_edges.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub samples_per_cell: usize,
    pub eps_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            samples_per_cell: d.samples_per_cell,
            eps_tol: d.eps_tol,
            max_iters: d.max_iters,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PlannerSpec {
    Rollout,
    Astar,
    Cbf { alpha: f64, d0: f64 },
    CbfCe { alpha: f64, d0: f64 },
}

impl PlannerSpec {
    pub fn baseline(&self) -> Option<BaselineKind> {
        match *self {
            PlannerSpec::Rollout => None,
            PlannerSpec::Astar => Some(BaselineKind::Astar),
            PlannerSpec::Cbf { alpha, d0 } => Some(BaselineKind::Cbf { alpha, d0 }),
            PlannerSpec::CbfCe { alpha, d0 } => Some(BaselineKind::CbfCe { alpha, d0 }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutSection {
    pub horizon: usize,
    pub mode: RolloutMode,
    pub scenario_count: usize,
    pub exhaustive: bool,
    pub infeasibility_penalty: f64,
}

impl Default for RolloutSection {
    fn default() -> Self {
        let d = RolloutConfig::default();
        RolloutSection {
            horizon: d.horizon,
            mode: d.mode,
            scenario_count: d.scenario_count,
            exhaustive: d.exhaustive,
            infeasibility_penalty: d.infeasibility_penalty,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InstanceSource {
    Random {
        count: usize,
        realizations: usize,
        /// Defaults to the root seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Explicit {
        list: Vec<InstanceSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub instances: InstanceSource,
    pub max_steps: usize,
    /// Model that drives the obstacle in simulation; rollout and CBF
    /// controllers predict with it as well.
    pub disturbance: DisturbanceSpec,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            instances: InstanceSource::Random {
                count: 50,
                realizations: 10,
                seed: None,
            },
            max_steps: 500,
            disturbance: DisturbanceSpec::Weighted {
                n2: 16,
                high_weight: 100.0,
                low_weight: 1.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
    pub horizons: Vec<usize>,
    pub modes: Vec<RolloutMode>,
    pub baselines: Vec<BaselineKind>,
    /// Directory of solved tables keyed by content hash.
    pub cache_dir: Option<PathBuf>,
    /// When false, a table missing from the cache is an error.
    pub solve_missing: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            lambdas: vec![1e-7, 5e-6, 1e-4, 1e-2, 1.0],
            horizons: vec![2],
            modes: vec![RolloutMode::Expectation, RolloutMode::CertaintyEquivalence],
            baselines: vec![
                BaselineKind::Astar,
                BaselineKind::Cbf { alpha: 0.75, d0: 1.0 },
                BaselineKind::CbfCe { alpha: 0.75, d0: 1.0 },
            ],
            cache_dir: None,
            solve_missing: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub table: Option<PathBuf>,
    pub episodes: Option<PathBuf>,
    pub tradeoff: Option<PathBuf>,
}

/// Parses a config, reporting the JSON path of the first offending field.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("config field `{path}`: {}", e.into_inner())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text)
}

fn field<T>(name: &str, r: symplan::Result<T>) -> Result<T> {
    r.map_err(|e| anyhow!("config field `{name}`: {e}"))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        field("box", self.bounds.validate())?;
        field("cost", self.cost.validate())?;
        field("n1", build_action_set(self.n1))?;
        field("disturbance", self.disturbance.build())?;
        field("grid", self.grid.build())?;
        field("evaluation.disturbance", self.evaluation.disturbance.build())?;
        if self.solver.samples_per_cell == 0 {
            bail!("config field `solver.samples_per_cell`: must be at least 1");
        }
        if !(self.solver.eps_tol > 0.0) {
            bail!("config field `solver.eps_tol`: must be positive");
        }
        if self.solver.max_iters == 0 {
            bail!("config field `solver.max_iters`: must be at least 1");
        }
        field("rollout", self.rollout_config().validate())?;
        if self.evaluation.max_steps == 0 {
            bail!("config field `evaluation.max_steps`: must be at least 1");
        }
        if let InstanceSource::Explicit { list } = &self.evaluation.instances {
            for (i, inst) in list.iter().enumerate() {
                if inst.seeds.is_empty() {
                    bail!("config field `evaluation.instances.list[{i}].seeds`: need at least one seed");
                }
                if ![inst.t, inst.r0, inst.h0].iter().all(|p| self.bounds.contains(*p)) {
                    bail!("config field `evaluation.instances.list[{i}]`: positions must lie in the box");
                }
            }
        }
        for (i, &l) in self.sweep.lambdas.iter().enumerate() {
            if !(0.0..=1.0).contains(&l) {
                bail!("config field `sweep.lambdas[{i}]`: must lie in [0, 1]");
            }
        }
        if self.sweep.horizons.contains(&0) {
            bail!("config field `sweep.horizons`: horizons must be positive");
        }
        for b in &self.sweep.baselines {
            if let BaselineKind::Cbf { alpha, d0 } | BaselineKind::CbfCe { alpha, d0 } = *b {
                field("sweep.baselines", symplan::baselines::CbfParams::new(alpha, d0))?;
            }
        }
        Ok(())
    }

    pub fn actions(&self) -> ActionSet {
        build_action_set(self.n1).expect("validated")
    }

    pub fn solver_disturbance(&self) -> DisturbanceModel {
        self.disturbance.build().expect("validated")
    }

    pub fn eval_disturbance(&self) -> DisturbanceModel {
        self.evaluation.disturbance.build().expect("validated")
    }

    pub fn grid(&self) -> PartitionGrid {
        self.grid.build().expect("validated")
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            samples_per_cell: self.solver.samples_per_cell,
            eps_tol: self.solver.eps_tol,
            max_iters: self.solver.max_iters,
            seed: self.seed,
        }
    }

    pub fn rollout_config(&self) -> RolloutConfig {
        let r = &self.rollout;
        RolloutConfig {
            horizon: r.horizon,
            mode: r.mode,
            scenario_count: r.scenario_count,
            exhaustive: r.exhaustive,
            infeasibility_penalty: r.infeasibility_penalty,
            seed: self.seed,
        }
    }

    pub fn cost_with_lambda(&self, lambda: f64) -> CostParams {
        CostParams { lambda, ..self.cost }
    }

    pub fn protocol(&self) -> EpisodeProtocol {
        EpisodeProtocol {
            cost: self.cost,
            bounds: self.bounds,
            max_steps: self.evaluation.max_steps,
        }
    }

    pub fn instances(&self) -> Result<Vec<InstanceSpec>> {
        match &self.evaluation.instances {
            InstanceSource::Random {
                count,
                realizations,
                seed,
            } => field(
                "evaluation.instances",
                sample_instances(*count, *realizations, &self.bounds, seed.unwrap_or(self.seed)),
            ),
            InstanceSource::Explicit { list } => Ok(list.clone()),
        }
    }
}
