//! Brute-force checks of the symmetry machinery at desk scale.
//!
//! The discrete world is an `L × L` integer lattice with the target at its
//! center, four-direction unit moves for robot and obstacle, and clamping at
//! the walls. Its value function can be computed exactly by tabular value
//! iteration and compared against the eight box-preserving symmetries and
//! against the reduced-space solver.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::action_models::{build_action_set, build_disturbance_uniform, ActionSet, DisturbanceModel};
use crate::error::{Error, Result};
use crate::geometry::{
    incremental_cost, lift, reduce, step_full, step_reduced, CostParams, ReducedState, Vec2,
    WorldState,
};
use crate::value_solver::{PartitionGrid, ValueTable};

/// Element of the planar rotation group, composed by adding angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RotationAngle {
    pub beta: f64,
}

impl RotationAngle {
    pub const IDENTITY: RotationAngle = RotationAngle { beta: 0.0 };

    pub fn compose(self, o: RotationAngle) -> RotationAngle {
        RotationAngle {
            beta: (self.beta + o.beta).rem_euclid(2.0 * PI),
        }
    }

    pub fn inverse(self) -> RotationAngle {
        RotationAngle { beta: -self.beta }
    }

    /// Action on world states: rotation of both positions about `t`.
    pub fn act_state(self, s: WorldState, t: Vec2) -> WorldState {
        s.rotate_about(t, self.beta)
    }

    /// Action on controls and disturbances: rotation about the origin.
    pub fn act_vec(self, v: Vec2) -> Vec2 {
        v.rotate(self.beta)
    }
}

#[derive(Clone, Debug)]
pub struct DiscreteWorld {
    pub side: usize,
    pub cost: CostParams,
    pub actions: ActionSet,
    pub disturbance: DisturbanceModel,
}

impl DiscreteWorld {
    /// Odd side length so the target sits on a lattice point at the center.
    pub fn new(side: usize, cost: CostParams) -> Result<Self> {
        if side == 0 || side.is_multiple_of(2) {
            return Err(Error::param("side", "must be odd and positive"));
        }
        cost.validate()?;
        Ok(DiscreteWorld {
            side,
            cost,
            actions: build_action_set(2)?,
            disturbance: build_disturbance_uniform(2)?,
        })
    }

    pub fn target(&self) -> Vec2 {
        let c = ((self.side - 1) / 2) as f64;
        Vec2::new(c, c)
    }

    pub fn state_count(&self) -> usize {
        self.side.pow(4)
    }

    fn cells(&self) -> usize {
        self.side * self.side
    }

    fn pos_index(&self, p: Vec2) -> usize {
        p.y as usize * self.side + p.x as usize
    }

    fn pos(&self, i: usize) -> Vec2 {
        Vec2::new((i % self.side) as f64, (i / self.side) as f64)
    }

    pub fn index(&self, s: WorldState) -> usize {
        self.pos_index(s.h) * self.cells() + self.pos_index(s.r)
    }

    pub fn state(&self, i: usize) -> WorldState {
        WorldState::new(self.pos(i / self.cells()), self.pos(i % self.cells()))
    }

    fn clamp(&self, p: Vec2) -> Vec2 {
        let hi = (self.side - 1) as f64;
        p.clamp(Vec2::ZERO, Vec2::new(hi, hi))
    }

    pub fn step(&self, s: WorldState, u: Vec2, w: Vec2) -> WorldState {
        let n = step_full(s, u, w);
        WorldState::new(self.clamp(n.h), self.clamp(n.r))
    }

    pub fn is_terminal(&self, s: WorldState) -> bool {
        s.r.dist(self.target()) <= self.cost.radius
    }
}

/// Exact value per lattice state, indexed by [`DiscreteWorld::index`].
#[derive(Clone, Debug)]
pub struct FullValueTable {
    pub values: Vec<f64>,
    pub sweeps: usize,
    pub final_delta: f64,
}

impl FullValueTable {
    pub fn value(&self, world: &DiscreteWorld, s: WorldState) -> f64 {
        self.values[world.index(s)]
    }
}

fn full_backup(world: &DiscreteWorld, values: &[f64], i: usize) -> f64 {
    let s = world.state(i);
    if world.is_terminal(s) {
        return 0.0;
    }
    let stage = incremental_cost(s, world.target(), &world.cost);
    let mut best = f64::INFINITY;
    for u in world.actions.iter() {
        let mut q = 0.0;
        for (w, p) in world.disturbance.iter() {
            q += p * values[world.index(world.step(s, u, w))];
        }
        best = best.min(q);
    }
    stage + best
}

/// Synchronous value iteration over all lattice states until the sup-norm
/// change drops below `tol`.
pub fn full_value_iteration(world: &DiscreteWorld, tol: f64, max_iters: usize) -> Result<FullValueTable> {
    let n = world.state_count();
    let mut values = vec![0.0; n];
    let mut delta = f64::INFINITY;
    for sweep in 1..=max_iters {
        let next: Vec<f64> = (0..n).into_par_iter().map(|i| full_backup(world, &values, i)).collect();
        delta = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if delta < tol {
            return Ok(FullValueTable {
                values,
                sweeps: sweep,
                final_delta: delta,
            });
        }
    }
    Err(Error::NotConverged {
        iters: max_iters,
        last_delta: delta,
    })
}

/// Largest `|V − TV|` over non-terminal states.
pub fn bellman_residual(world: &DiscreteWorld, table: &FullValueTable) -> f64 {
    (0..world.state_count())
        .map(|i| (full_backup(world, &table.values, i) - table.values[i]).abs())
        .fold(0.0, f64::max)
}

/// The dihedral group of the square acting on offsets from the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxSymmetry {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipX,
    FlipY,
    FlipDiag,
    FlipAntiDiag,
}

impl BoxSymmetry {
    pub const ALL: [BoxSymmetry; 8] = [
        BoxSymmetry::Identity,
        BoxSymmetry::Rot90,
        BoxSymmetry::Rot180,
        BoxSymmetry::Rot270,
        BoxSymmetry::FlipX,
        BoxSymmetry::FlipY,
        BoxSymmetry::FlipDiag,
        BoxSymmetry::FlipAntiDiag,
    ];

    pub fn apply_offset(self, v: Vec2) -> Vec2 {
        let (x, y) = (v.x, v.y);
        let (nx, ny) = match self {
            BoxSymmetry::Identity => (x, y),
            BoxSymmetry::Rot90 => (-y, x),
            BoxSymmetry::Rot180 => (-x, -y),
            BoxSymmetry::Rot270 => (y, -x),
            BoxSymmetry::FlipX => (-x, y),
            BoxSymmetry::FlipY => (x, -y),
            BoxSymmetry::FlipDiag => (y, x),
            BoxSymmetry::FlipAntiDiag => (-y, -x),
        };
        Vec2::new(nx, ny)
    }

    pub fn apply(self, s: WorldState, t: Vec2) -> WorldState {
        WorldState::new(t + self.apply_offset(s.h - t), t + self.apply_offset(s.r - t))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    /// Max `|V(σx) − V(x)|` per symmetry, in [`BoxSymmetry::ALL`] order.
    pub per_symmetry: Vec<f64>,
    pub max_residual: f64,
    /// Max gap between lattice states sharing `(d, e, θ)` that are related by a box symmetry.
    pub max_related_pair_gap: f64,
    /// Same, over all lattice pairs sharing `(d, e, θ)`; reported only, since
    /// the lattice lacks the continuous rotations relating most of them.
    pub max_any_pair_gap: f64,
}

pub fn check_value_symmetry(table: &FullValueTable, world: &DiscreteWorld) -> SymmetryReport {
    let t = world.target();
    let per_symmetry: Vec<f64> = BoxSymmetry::ALL
        .iter()
        .map(|&sym| {
            (0..world.state_count())
                .map(|i| {
                    let s = world.state(i);
                    (table.value(world, sym.apply(s, t)) - table.values[i]).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let max_residual = per_symmetry.iter().copied().fold(0.0, f64::max);

    // bucket states by their rounded reduced coordinates
    let mut keyed: Vec<((i64, i64, i64), usize)> = (0..world.state_count())
        .map(|i| {
            let rs = reduce(world.state(i), t);
            let k = |x: f64| (x * 1e9).round() as i64;
            ((k(rs.d), k(rs.e), k(rs.theta)), i)
        })
        .collect();
    keyed.sort_unstable();
    let mut related = 0.0f64;
    let mut any = 0.0f64;
    for group in keyed.chunk_by(|a, b| a.0 == b.0) {
        for (a, &(_, i)) in group.iter().enumerate() {
            for &(_, j) in &group[a + 1..] {
                let gap = (table.values[i] - table.values[j]).abs();
                any = any.max(gap);
                let (si, sj) = (world.state(i), world.state(j));
                if BoxSymmetry::ALL.iter().any(|sym| sym.apply(si, t) == sj) {
                    related = related.max(gap);
                }
            }
        }
    }
    SymmetryReport {
        per_symmetry,
        max_residual,
        max_related_pair_gap: related,
        max_any_pair_gap: any,
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct GroupAxiomReport {
    pub identity: f64,
    pub composition: f64,
    pub inverse: f64,
}

impl GroupAxiomReport {
    pub fn max(&self) -> f64 {
        self.identity.max(self.composition).max(self.inverse)
    }
}

fn state_gap(a: WorldState, b: WorldState) -> f64 {
    [a.h.x - b.h.x, a.h.y - b.h.y, a.r.x - b.r.x, a.r.y - b.r.y]
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

fn vec_gap(a: Vec2, b: Vec2) -> f64 {
    (a.x - b.x).abs().max((a.y - b.y).abs())
}

/// Identity, composition and inverse axioms of the state action about `t`
/// and of the vector action on controls/disturbances, over all angle pairs.
pub fn check_group_axioms(angles: &[RotationAngle], states: &[WorldState], t: Vec2) -> GroupAxiomReport {
    let mut rep = GroupAxiomReport::default();
    let id = RotationAngle::IDENTITY;
    for &s in states {
        rep.identity = rep.identity.max(state_gap(id.act_state(s, t), s));
        rep.identity = rep.identity.max(vec_gap(id.act_vec(s.h), s.h));
        for &a in angles {
            let back = a.inverse().act_state(a.act_state(s, t), t);
            rep.inverse = rep.inverse.max(state_gap(back, s));
            rep.inverse = rep.inverse.max(vec_gap(a.inverse().act_vec(a.act_vec(s.r)), s.r));
            for &b in angles {
                let sequential = a.act_state(b.act_state(s, t), t);
                let composed = a.compose(b).act_state(s, t);
                rep.composition = rep.composition.max(state_gap(sequential, composed));
                let v = a.act_vec(b.act_vec(s.h - s.r));
                rep.composition = rep.composition.max(vec_gap(v, a.compose(b).act_vec(s.h - s.r)));
            }
        }
    }
    rep
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct InvarianceReport {
    /// `F(φx, χu, ψw)` vs `φ F(x, u, w)`.
    pub dynamics: f64,
    /// `f(φx)` vs `f(x)` for λ ∈ {0, 0.5, 1}.
    pub cost: f64,
    /// `P(ψw)` vs `P(w)` for rotations by multiples of `π/n2`.
    pub probability: f64,
}

impl InvarianceReport {
    pub fn max(&self) -> f64 {
        self.dynamics.max(self.cost).max(self.probability)
    }
}

/// One random draw for the invariance checks.
#[derive(Clone, Copy, Debug)]
pub struct InvarianceSample {
    pub state: WorldState,
    pub u: Vec2,
    pub w: Vec2,
}

pub fn check_invariance_conditions(
    samples: &[InvarianceSample],
    angles: &[RotationAngle],
    t: Vec2,
    cost: &CostParams,
    disturbance: &DisturbanceModel,
    n2: usize,
) -> InvarianceReport {
    let mut rep = InvarianceReport::default();
    for smp in samples {
        for &a in angles {
            let lhs = step_full(a.act_state(smp.state, t), a.act_vec(smp.u), a.act_vec(smp.w));
            let rhs = a.act_state(step_full(smp.state, smp.u, smp.w), t);
            rep.dynamics = rep.dynamics.max(state_gap(lhs, rhs));
            for lambda in [0.0, 0.5, 1.0] {
                let p = CostParams { lambda, ..*cost };
                let c0 = incremental_cost(smp.state, t, &p);
                let c1 = incremental_cost(a.act_state(smp.state, t), t, &p);
                rep.cost = rep.cost.max((c0 - c1).abs());
            }
        }
    }
    for q in 0..2 * n2 {
        let a = RotationAngle {
            beta: q as f64 * PI / n2 as f64,
        };
        for (w, p) in disturbance.iter() {
            let rw = a.act_vec(w);
            let image = disturbance
                .iter()
                .min_by(|x, y| vec_gap(x.0, rw).total_cmp(&vec_gap(y.0, rw)))
                .expect("nonempty disturbance");
            if vec_gap(image.0, rw) > 1e-9 {
                rep.probability = f64::INFINITY;
            } else {
                rep.probability = rep.probability.max((image.1 - p).abs());
            }
        }
    }
    rep
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct MovingFrameReport {
    /// Max distance between `R(β*)(r − t)` and `(‖r − t‖, 0)`.
    pub residual: f64,
    /// Number of samples whose rotated x coordinate is not positive.
    pub cross_section_violations: usize,
    /// Max componentwise error of `reduce(lift(ρ))` against `ρ`.
    pub round_trip: f64,
}

/// Checks a moving-frame implementation on `(r, t)` pairs and the
/// reduce/lift round trip on `reduced` samples.
pub fn check_moving_frame(
    frame: impl Fn(Vec2, Vec2) -> Result<f64>,
    pairs: &[(Vec2, Vec2)],
    reduced: &[ReducedState],
) -> MovingFrameReport {
    let mut rep = MovingFrameReport::default();
    for &(r, t) in pairs {
        let Ok(beta) = frame(r, t) else {
            rep.cross_section_violations += 1;
            continue;
        };
        let rotated = (r - t).rotate(beta);
        let e = (r - t).norm();
        rep.residual = rep.residual.max(rotated.dist(Vec2::new(e, 0.0)));
        if rotated.x <= 0.0 {
            rep.cross_section_violations += 1;
        }
    }
    for &rs in reduced {
        let back = reduce(lift(rs, Vec2::ZERO), Vec2::ZERO);
        let err = (back.d - rs.d)
            .abs()
            .max((back.e - rs.e).abs())
            .max((back.theta - rs.theta).abs());
        rep.round_trip = rep.round_trip.max(err);
    }
    rep
}

/// Max componentwise gap between `step_reduced` and reduce∘step_full∘lift.
pub fn check_reduced_dynamics(samples: &[(ReducedState, Vec2, Vec2)], t: Vec2) -> f64 {
    samples
        .iter()
        .map(|&(rs, u, w)| {
            let direct = step_reduced(rs, u, w);
            let via_full = reduce(step_full(lift(rs, t), u, w), t);
            (direct.d - via_full.d)
                .abs()
                .max((direct.e - via_full.e).abs())
                .max((direct.theta - via_full.theta).abs())
        })
        .fold(0.0, f64::max)
}

/// Grid whose `e` cells are centered on the integers (`[k − ½, k + ½)`),
/// so single-sample cells sit exactly on the target distances reachable on
/// the lattice cross-section. `d` and `θ` get one interval each.
pub fn integer_e_grid(e_max: usize, d_max: f64) -> Result<PartitionGrid> {
    let e_edges: Vec<f64> = std::iter::once(0.0)
        .chain((0..=e_max).map(|k| k as f64 + 0.5))
        .collect();
    PartitionGrid::new(vec![0.0, d_max], e_edges, vec![0.0, PI])
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ReducedVsFullReport {
    /// Max `|W(reduce(x)) − V(x)|` over states whose robot lies on an axis through the target.
    pub cross_section_max: f64,
    pub cross_section_states: usize,
    /// Same over every lattice state; reported only.
    pub all_states_max: f64,
}

pub fn check_reduced_vs_full(table: &FullValueTable, world: &DiscreteWorld, reduced: &ValueTable) -> ReducedVsFullReport {
    let t = world.target();
    let mut rep = ReducedVsFullReport::default();
    for i in 0..world.state_count() {
        let s = world.state(i);
        let gap = (reduced.evaluate_full(s, t) - table.values[i]).abs();
        rep.all_states_max = rep.all_states_max.max(gap);
        let off = s.r - t;
        if off.x == 0.0 || off.y == 0.0 {
            rep.cross_section_max = rep.cross_section_max.max(gap);
            rep.cross_section_states += 1;
        }
    }
    rep
}

/// One line of an oracle summary.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckOutcome {
    pub fn below(name: &'static str, residual: f64, threshold: f64) -> Self {
        CheckOutcome {
            name,
            residual,
            threshold,
            passed: residual < threshold,
        }
    }
}

/// Random inputs for the continuous checks, drawn from one seeded stream.
pub struct OracleSamples {
    pub states: Vec<WorldState>,
    pub targets: Vec<Vec2>,
    pub controls: Vec<(Vec2, Vec2)>,
    pub angles: Vec<RotationAngle>,
    pub reduced: Vec<ReducedState>,
}

impl OracleSamples {
    pub fn draw(count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pt = |rng: &mut ChaCha8Rng| Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let states = (0..count).map(|_| WorldState::new(pt(&mut rng), pt(&mut rng))).collect();
        let targets = (0..count).map(|_| pt(&mut rng)).collect();
        let controls = (0..count)
            .map(|_| {
                let u = Vec2::from_angle(rng.random_range(0.0..2.0 * PI));
                let w = Vec2::from_angle(rng.random_range(0.0..2.0 * PI)) * rng.random_range(0.0..1.0);
                (u, w)
            })
            .collect();
        let angles = (0..16)
            .map(|_| RotationAngle {
                beta: rng.random_range(-2.0 * PI..2.0 * PI),
            })
            .collect();
        let reduced = (0..count)
            .map(|_| {
                ReducedState::new(
                    rng.random_range(1e-6..30.0),
                    rng.random_range(1e-6..30.0),
                    rng.random_range(0.0..PI),
                )
            })
            .collect();
        OracleSamples {
            states,
            targets,
            controls,
            angles,
            reduced,
        }
    }
}

/// Parameters of the lattice world used by [`run_oracle_suite`].
pub fn default_oracle_world() -> Result<DiscreteWorld> {
    DiscreteWorld::new(9, CostParams::new(0.5, 1.0, 0.1)?)
}

/// Runs every oracle check with `frame` as the moving-frame implementation.
pub fn run_oracle_suite(frame: impl Fn(Vec2, Vec2) -> Result<f64>, seed: u64) -> Result<Vec<CheckOutcome>> {
    let samples = OracleSamples::draw(2_000, seed);
    let mut out = Vec::new();

    let pairs: Vec<(Vec2, Vec2)> = samples
        .states
        .iter()
        .zip(&samples.targets)
        .map(|(s, &t)| (s.r, t))
        .collect();
    let frame_rep = check_moving_frame(frame, &pairs, &samples.reduced);
    out.push(CheckOutcome::below("moving_frame_residual", frame_rep.residual, 1e-10));
    out.push(CheckOutcome::below(
        "cross_section_violations",
        frame_rep.cross_section_violations as f64,
        0.5,
    ));
    out.push(CheckOutcome::below("reduce_lift_round_trip", frame_rep.round_trip, 1e-10));

    let axioms = check_group_axioms(&samples.angles, &samples.states[..200], Vec2::new(1.5, -2.0));
    out.push(CheckOutcome::below("group_axioms", axioms.max(), 1e-10));

    let world = default_oracle_world()?;
    let inv_samples: Vec<InvarianceSample> = samples
        .states
        .iter()
        .zip(&samples.controls)
        .map(|(&state, &(u, w))| InvarianceSample { state, u, w })
        .collect();
    let inv = check_invariance_conditions(
        &inv_samples,
        &samples.angles,
        Vec2::new(1.5, -2.0),
        &world.cost,
        &build_disturbance_uniform(16)?,
        16,
    );
    out.push(CheckOutcome::below("dynamics_equivariance", inv.dynamics, 1e-10));
    out.push(CheckOutcome::below("cost_invariance", inv.cost, 1e-10));
    out.push(CheckOutcome::below("disturbance_invariance", inv.probability, 1e-15));

    let dyn_samples: Vec<(ReducedState, Vec2, Vec2)> = samples
        .reduced
        .iter()
        .zip(&samples.controls)
        .map(|(&rs, &(u, w))| (rs, u, w))
        .collect();
    out.push(CheckOutcome::below(
        "reduced_dynamics",
        check_reduced_dynamics(&dyn_samples, Vec2::new(3.0, 4.0)),
        1e-9,
    ));

    let full = full_value_iteration(&world, 1e-12, 10_000)?;
    let sym = check_value_symmetry(&full, &world);
    out.push(CheckOutcome::below("value_symmetry", sym.max_residual, 1e-9));
    out.push(CheckOutcome::below("symmetric_pairs", sym.max_related_pair_gap, 1e-9));
    out.push(CheckOutcome::below("bellman_residual", bellman_residual(&world, &full), 1e-11));

    let cmp = reduced_vs_full_lambda_one(world.side, seed)?;
    out.push(CheckOutcome::below("reduced_vs_full", cmp.cross_section_max, 1e-6));
    Ok(out)
}

/// Solves the λ = 1 lattice world both ways and compares them.
pub fn reduced_vs_full_lambda_one(side: usize, seed: u64) -> Result<ReducedVsFullReport> {
    use crate::value_solver::{solve, SolverConfig};
    let world = DiscreteWorld::new(side, CostParams::new(1.0, 1.0, 0.1)?)?;
    let full = full_value_iteration(&world, 1e-12, 10_000)?;
    let grid = integer_e_grid(2 * side, 2.0 * side as f64)?;
    let cfg = SolverConfig {
        samples_per_cell: 1,
        eps_tol: 1e-12,
        max_iters: 1_000,
        seed,
    };
    let solved = solve(&grid, &world.cost, &world.actions, &world.disturbance, &cfg)?;
    Ok(check_reduced_vs_full(&full, &world, &solved.table))
}
