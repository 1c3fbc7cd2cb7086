//! Path planning around a stochastically moving obstacle.
//!
//! The optimal cost-to-go of the planar robot/obstacle/target problem is
//! invariant under rotations about the target, so it is solved once on the
//! reduced coordinates `(d, e, θ)` by fitted value iteration with a
//! piecewise-constant approximation. The resulting table serves as the
//! terminal penalty of an online rollout planner, which is benchmarked
//! against receding-horizon A* and discrete-time CBF safety filters.

pub mod action_models;
pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod oracle;
pub mod rollout;
pub mod table_io;
pub mod value_solver;

pub use error::{Error, Result};
