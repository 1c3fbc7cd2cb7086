//! Fitted value iteration on the reduced state space.
//!
//! The value function is approximated as piecewise constant over a box
//! partition of `(d, e, θ)`. With indicator features the least-squares
//! parameter update reduces to a per-cell mean of the backed-up values.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_models::{is_radially_symmetric, ActionSet, DisturbanceModel};
use crate::error::{Error, Result};
use crate::geometry::{reduce, reduced_cost, step_reduced, CostParams, ReducedState, Vec2, WorldState};

/// Box partition of `[0, ∞) × [0, ∞) × [0, π]`.
///
/// Cells are half-open `[lo, hi)` along each axis except the last interval,
/// which is closed. Coordinates beyond the last edge clamp into the last cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionGrid {
    pub d_edges: Vec<f64>,
    pub e_edges: Vec<f64>,
    pub theta_edges: Vec<f64>,
}

fn check_edges(name: &'static str, edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::param(name, "need at least two edges"));
    }
    if edges[0] != 0.0 {
        return Err(Error::param(name, "first edge must be 0"));
    }
    if edges.iter().any(|x| !x.is_finite()) {
        return Err(Error::param(name, "edges must be finite"));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param(name, "edges must be strictly increasing"));
    }
    Ok(())
}

#[inline]
fn interval(edges: &[f64], x: f64) -> usize {
    // number of edges <= x, minus one, clamped to a valid interval
    let n = edges.partition_point(|&e| e <= x);
    n.saturating_sub(1).min(edges.len() - 2)
}

impl PartitionGrid {
    pub fn new(d_edges: Vec<f64>, e_edges: Vec<f64>, theta_edges: Vec<f64>) -> Result<Self> {
        let g = PartitionGrid {
            d_edges,
            e_edges,
            theta_edges,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        check_edges("d_edges", &self.d_edges)?;
        check_edges("e_edges", &self.e_edges)?;
        check_edges("theta_edges", &self.theta_edges)?;
        let last = *self.theta_edges.last().unwrap();
        if (last - PI).abs() > 1e-12 {
            return Err(Error::param("theta_edges", "last edge must be π"));
        }
        Ok(())
    }

    /// Evenly spaced edges: `n_d` edges on `[0, d_max]`, `n_e` on `[0, e_max]`,
    /// `n_theta` on `[0, π]`.
    pub fn uniform(d_max: f64, n_d: usize, e_max: f64, n_e: usize, n_theta: usize) -> Result<Self> {
        let lin = |max: f64, n: usize| -> Vec<f64> {
            if n < 2 {
                return vec![0.0];
            }
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        max
                    } else {
                        max * i as f64 / (n - 1) as f64
                    }
                })
                .collect()
        };
        PartitionGrid::new(lin(d_max, n_d), lin(e_max, n_e), lin(PI, n_theta))
    }

    pub fn cells_d(&self) -> usize {
        self.d_edges.len() - 1
    }

    pub fn cells_e(&self) -> usize {
        self.e_edges.len() - 1
    }

    pub fn cells_theta(&self) -> usize {
        self.theta_edges.len() - 1
    }

    pub fn cell_count(&self) -> usize {
        self.cells_d() * self.cells_e() * self.cells_theta()
    }

    /// Flattens per-axis interval indices into a cell index.
    pub fn flat_index(&self, j: usize, l: usize, m: usize) -> usize {
        (j * self.cells_e() + l) * self.cells_theta() + m
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn axis_indices(&self, cell: usize) -> (usize, usize, usize) {
        let m = cell % self.cells_theta();
        let rest = cell / self.cells_theta();
        (rest / self.cells_e(), rest % self.cells_e(), m)
    }

    pub fn cell_index(&self, rs: ReducedState) -> usize {
        self.flat_index(
            interval(&self.d_edges, rs.d),
            interval(&self.e_edges, rs.e),
            interval(&self.theta_edges, rs.theta),
        )
    }

    /// Lower and upper corners of a cell.
    pub fn cell_bounds(&self, cell: usize) -> (ReducedState, ReducedState) {
        let (j, l, m) = self.axis_indices(cell);
        (
            ReducedState::new(self.d_edges[j], self.e_edges[l], self.theta_edges[m]),
            ReducedState::new(self.d_edges[j + 1], self.e_edges[l + 1], self.theta_edges[m + 1]),
        )
    }

    pub fn cell_center(&self, cell: usize) -> ReducedState {
        let (lo, hi) = self.cell_bounds(cell);
        ReducedState::new(
            0.5 * (lo.d + hi.d),
            0.5 * (lo.e + hi.e),
            0.5 * (lo.theta + hi.theta),
        )
    }

    /// Cells whose whole `e` interval lies inside the arrival radius.
    pub fn is_terminal_cell(&self, cell: usize, radius: f64) -> bool {
        let (_, hi) = self.cell_bounds(cell);
        hi.e <= radius
    }
}

/// The 115 × 85 × 26 edge grid: fine spacing below distance 3, 0.5 above, up to 30.
pub fn build_paper_grid() -> PartitionGrid {
    let coarse = (0..54).map(|k| 3.5 + 0.5 * k as f64);
    let d_edges: Vec<f64> = (0..=60).map(|i| i as f64 / 20.0).chain(coarse.clone()).collect();
    let e_edges: Vec<f64> = (0..=30).map(|i| i as f64 / 10.0).chain(coarse).collect();
    let theta_edges: Vec<f64> = (0..=25)
        .map(|i| if i == 25 { PI } else { i as f64 * PI / 25.0 })
        .collect();
    PartitionGrid {
        d_edges,
        e_edges,
        theta_edges,
    }
}

/// Desk-scale grid: 16 × 33 × 8 = 4,224 cells over the same `[0, 30]²` range.
/// No `e` interval is wider than one unit move, so no cell traps its own samples.
pub fn build_coarse_grid() -> PartitionGrid {
    let d_edges = vec![
        0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 13.0, 16.0, 20.0, 25.0, 30.0,
    ];
    let e_edges = (0..=6).map(|i| i as f64 * 0.5).chain((4..=30).map(f64::from)).collect();
    let theta_edges = (0..=8).map(|i| if i == 8 { PI } else { i as f64 * PI / 8.0 }).collect();
    PartitionGrid {
        d_edges,
        e_edges,
        theta_edges,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub samples_per_cell: usize,
    pub eps_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            samples_per_cell: 3,
            eps_tol: 1e-5,
            max_iters: 20,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_cell == 0 {
            return Err(Error::param("samples_per_cell", "must be at least 1"));
        }
        if !(self.eps_tol > 0.0) {
            return Err(Error::param("eps_tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// Piecewise-constant value function over a [`PartitionGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub grid: PartitionGrid,
    pub coefficients: Vec<f64>,
    pub cost_params: CostParams,
    pub n1: usize,
    pub n2: usize,
    pub disturbance: DisturbanceModel,
}

impl ValueTable {
    /// Table with all coefficients zero.
    pub fn zeros(
        grid: PartitionGrid,
        cost_params: CostParams,
        n1: usize,
        n2: usize,
        disturbance: DisturbanceModel,
    ) -> Self {
        let p = grid.cell_count();
        ValueTable {
            grid,
            coefficients: vec![0.0; p],
            cost_params,
            n1,
            n2,
            disturbance,
        }
    }

    pub fn evaluate_reduced(&self, rs: ReducedState) -> f64 {
        self.coefficients[self.grid.cell_index(rs)]
    }

    /// `V(h, r)` for target `t`, through the reduction.
    pub fn evaluate_full(&self, s: WorldState, t: Vec2) -> f64 {
        self.evaluate_reduced(reduce(s, t))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.cost_params.validate()?;
        self.disturbance.validate()?;
        if self.coefficients.len() != self.grid.cell_count() {
            return Err(Error::TableMismatch(format!(
                "{} coefficients for {} cells",
                self.coefficients.len(),
                self.grid.cell_count()
            )));
        }
        if self.coefficients.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::TableMismatch("coefficients must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

pub fn cell_index(grid: &PartitionGrid, rs: ReducedState) -> usize {
    grid.cell_index(rs)
}

pub fn evaluate_reduced(table: &ValueTable, rs: ReducedState) -> f64 {
    table.evaluate_reduced(rs)
}

pub fn evaluate_full(table: &ValueTable, s: WorldState, t: Vec2) -> f64 {
    table.evaluate_full(s, t)
}

/// Stratified samples: per cell, its center followed by `samples_per_cell - 1`
/// uniform points drawn from a stream keyed by `(seed, cell)`.
pub fn generate_samples(grid: &PartitionGrid, cfg: &SolverConfig) -> Vec<ReducedState> {
    let k = cfg.samples_per_cell;
    (0..grid.cell_count())
        .into_par_iter()
        .flat_map_iter(|cell| {
            let (lo, hi) = grid.cell_bounds(cell);
            let mut pts = Vec::with_capacity(k);
            pts.push(grid.cell_center(cell));
            if k > 1 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(cell as u64);
                for _ in 1..k {
                    pts.push(ReducedState::new(
                        rng.random_range(lo.d..hi.d),
                        rng.random_range(lo.e..hi.e),
                        rng.random_range(lo.theta..hi.theta),
                    ));
                }
            }
            pts
        })
        .collect()
}

/// Expected stage-plus-continuation cost of each action at `sample`.
pub fn action_values(
    sample: ReducedState,
    coefficients: &[f64],
    grid: &PartitionGrid,
    cost: &CostParams,
    actions: &ActionSet,
    disturbance: &DisturbanceModel,
) -> Vec<f64> {
    let stage = reduced_cost(sample, cost);
    actions
        .iter()
        .map(|u| {
            let continuation: f64 = disturbance
                .iter()
                .map(|(w, p)| p * coefficients[grid.cell_index(step_reduced(sample, u, w))])
                .sum();
            stage + continuation
        })
        .collect()
}

fn backup(
    sample: ReducedState,
    coefficients: &[f64],
    grid: &PartitionGrid,
    cost: &CostParams,
    actions: &ActionSet,
    disturbance: &DisturbanceModel,
) -> f64 {
    if sample.e <= cost.radius {
        return 0.0;
    }
    let stage = reduced_cost(sample, cost);
    let mut best = f64::INFINITY;
    for u in actions.iter() {
        let mut continuation = 0.0;
        for (w, p) in disturbance.iter() {
            continuation += p * coefficients[grid.cell_index(step_reduced(sample, u, w))];
        }
        let q = stage + continuation;
        if q < best {
            best = q;
        }
    }
    best
}

/// One Bellman backup at `sample` against the current table.
pub fn bellman_backup(sample: ReducedState, table: &ValueTable, actions: &ActionSet) -> f64 {
    backup(
        sample,
        &table.coefficients,
        &table.grid,
        &table.cost_params,
        actions,
        &table.disturbance,
    )
}

/// Least-squares fit of indicator-feature coefficients: per-cell mean of `betas`.
pub fn fit_parameters(
    samples: &[ReducedState],
    betas: &[f64],
    grid: &PartitionGrid,
) -> Result<Vec<f64>> {
    assert_eq!(samples.len(), betas.len(), "one target per sample");
    let p = grid.cell_count();
    let mut sums = vec![0.0; p];
    let mut counts = vec![0usize; p];
    for (s, b) in samples.iter().zip(betas) {
        let i = grid.cell_index(*s);
        sums[i] += b;
        counts[i] += 1;
    }
    sums.iter()
        .zip(&counts)
        .enumerate()
        .map(|(cell, (sum, &n))| {
            if n == 0 {
                Err(Error::EmptyCell { cell })
            } else {
                Ok(sum / n as f64)
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub table: ValueTable,
    /// `‖a_{k+1} − a_k‖_∞` per iteration.
    pub deltas: Vec<f64>,
    pub converged: bool,
}

pub fn solve(
    grid: &PartitionGrid,
    cost: &CostParams,
    actions: &ActionSet,
    disturbance: &DisturbanceModel,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    solve_with_observer(grid, cost, actions, disturbance, cfg, |_, _| {})
}

/// Like [`solve`], calling `observe(k, a_{k+1})` after every parameter update.
pub fn solve_with_observer(
    grid: &PartitionGrid,
    cost: &CostParams,
    actions: &ActionSet,
    disturbance: &DisturbanceModel,
    cfg: &SolverConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<SolveOutcome> {
    grid.validate()?;
    cost.validate()?;
    cfg.validate()?;
    disturbance.validate()?;
    if !is_radially_symmetric(disturbance, 1e-12) {
        log::warn!("disturbance model is not radially symmetric; the reduced solution is approximate");
    }

    let samples = generate_samples(grid, cfg);
    let n2 = disturbance.len().saturating_sub(1) / 2;
    let mut table = ValueTable::zeros(grid.clone(), *cost, actions.n1, n2, disturbance.clone());
    let mut deltas = Vec::new();
    let mut converged = false;

    for k in 0..cfg.max_iters {
        let coeffs = &table.coefficients;
        let betas: Vec<f64> = samples
            .par_iter()
            .map(|&s| backup(s, coeffs, grid, cost, actions, disturbance))
            .collect();
        let next = fit_parameters(&samples, &betas, grid)?;
        let delta = next
            .iter()
            .zip(coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        table.coefficients = next;
        observe(k, &table.coefficients);
        deltas.push(delta);
        log::debug!("fitted VI iteration {k}: delta = {delta:e}");
        if delta <= cfg.eps_tol {
            converged = true;
            break;
        }
    }

    Ok(SolveOutcome {
        table,
        deltas,
        converged,
    })
}
