//! Finite control and disturbance sets and probability models over them.
//!
//! Both sets share one layout: `2n` unit vectors at angles `qπ/n` for
//! `q = 0..2n`, followed by the zero vector. That order is the tie-break
//! order of every argmin in the crate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Below this magnitude a computed cosine or sine counts as zero.
const SIGN_TOL: f64 = 1e-15;

fn unit_directions_then_zero(n: usize) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = (0..2 * n)
        .map(|q| exact_unit(q as f64 * PI / n as f64, q, n))
        .collect();
    out.push(Vec2::ZERO);
    out
}

/// Unit vector at `qπ/n`, with the axis-aligned multiples of `π/2` made exact.
fn exact_unit(angle: f64, q: usize, n: usize) -> Vec2 {
    // q·π/n is a multiple of π/2 when 2q is divisible by n
    if (2 * q).is_multiple_of(n) {
        match (2 * q / n) % 4 {
            0 => Vec2::new(1.0, 0.0),
            1 => Vec2::new(0.0, 1.0),
            2 => Vec2::new(-1.0, 0.0),
            _ => Vec2::new(0.0, -1.0),
        }
    } else {
        Vec2::from_angle(angle)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    pub n1: usize,
    pub actions: Vec<Vec2>,
}

impl ActionSet {
    pub fn new(n1: usize) -> Result<Self> {
        build_action_set(n1)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Moving actions only (the zero action excluded).
    pub fn unit_moves(&self) -> &[Vec2] {
        &self.actions[..self.actions.len() - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.actions.iter().copied()
    }
}

pub fn build_action_set(n1: usize) -> Result<ActionSet> {
    if n1 == 0 {
        return Err(Error::param("n1", "must be at least 1"));
    }
    Ok(ActionSet {
        n1,
        actions: unit_directions_then_zero(n1),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceModel {
    pub outcomes: Vec<Vec2>,
    pub probabilities: Vec<f64>,
}

impl DisturbanceModel {
    /// Builds a model from arbitrary outcomes and nonnegative weights.
    pub fn from_weights(outcomes: Vec<Vec2>, weights: &[f64]) -> Result<Self> {
        if outcomes.len() != weights.len() || outcomes.is_empty() {
            return Err(Error::param(
                "disturbance",
                "outcomes and weights must be nonempty and of equal length",
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("disturbance", "weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::param("disturbance", "weights sum to zero"));
        }
        Ok(DisturbanceModel {
            outcomes,
            probabilities: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// All mass on a single outcome.
    pub fn point_mass(w: Vec2) -> Self {
        DisturbanceModel {
            outcomes: vec![w],
            probabilities: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        self.outcomes
            .iter()
            .copied()
            .zip(self.probabilities.iter().copied())
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcomes.is_empty() || self.outcomes.len() != self.probabilities.len() {
            return Err(Error::param("disturbance", "outcome/probability length mismatch"));
        }
        if self.probabilities.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::param("disturbance", "negative or non-finite probability"));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param("disturbance", format!("probabilities sum to {total}")));
        }
        if self.outcomes.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("disturbance", "non-finite outcome"));
        }
        Ok(())
    }
}

pub fn build_disturbance_uniform(n2: usize) -> Result<DisturbanceModel> {
    if n2 == 0 {
        return Err(Error::param("n2", "must be at least 1"));
    }
    let outcomes = unit_directions_then_zero(n2);
    let p = 1.0 / outcomes.len() as f64;
    Ok(DisturbanceModel {
        probabilities: vec![p; outcomes.len()],
        outcomes,
    })
}

/// Outcomes strictly inside the positive quadrant get `high_weight`, the
/// rest (including the zero outcome) get `low_weight`; then normalized.
pub fn build_disturbance_weighted(
    n2: usize,
    high_weight: f64,
    low_weight: f64,
) -> Result<DisturbanceModel> {
    if n2 == 0 {
        return Err(Error::param("n2", "must be at least 1"));
    }
    if !(high_weight > 0.0 && low_weight > 0.0) {
        return Err(Error::param("weights", "both weights must be positive"));
    }
    let outcomes = unit_directions_then_zero(n2);
    let weights: Vec<f64> = outcomes
        .iter()
        .map(|w| {
            if w.x > SIGN_TOL && w.y > SIGN_TOL {
                high_weight
            } else {
                low_weight
            }
        })
        .collect();
    DisturbanceModel::from_weights(outcomes, &weights)
}

pub fn mean_disturbance(m: &DisturbanceModel) -> Vec2 {
    m.iter()
        .fold(Vec2::ZERO, |acc, (w, p)| acc + w * p)
}

/// True when every nonzero outcome carries the same probability within `tol`.
pub fn is_radially_symmetric(m: &DisturbanceModel, tol: f64) -> bool {
    let mut directional = m
        .iter()
        .filter(|(w, _)| w.norm() > 0.0)
        .map(|(_, p)| p);
    let Some(first) = directional.next() else {
        return true;
    };
    let (lo, hi) = directional.fold((first, first), |(lo, hi), p| (lo.min(p), hi.max(p)));
    hi - lo <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_set_layout() {
        let u = build_action_set(16).unwrap();
        assert_eq!(u.len(), 33);
        assert_eq!(*u.actions.last().unwrap(), Vec2::ZERO);
        for a in u.unit_moves() {
            assert!((a.norm() - 1.0).abs() <= 1e-15);
        }
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                assert_ne!(u.actions[i], u.actions[j]);
            }
        }

        let u1 = build_action_set(1).unwrap();
        assert_eq!(
            u1.actions,
            vec![Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0), Vec2::ZERO]
        );
        let u2 = build_action_set(2).unwrap();
        assert_eq!(
            u2.actions,
            vec![
                Vec2::new(1.0, 0.0),
                Vec2::new(0.0, 1.0),
                Vec2::new(-1.0, 0.0),
                Vec2::new(0.0, -1.0),
                Vec2::ZERO
            ]
        );
        assert!(build_action_set(0).is_err());
    }

    #[test]
    fn uniform_disturbance() {
        let w = build_disturbance_uniform(16).unwrap();
        assert_eq!(w.len(), 33);
        assert!(w.probabilities.iter().all(|p| *p == 1.0 / 33.0));
        let total: f64 = w.probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let m = mean_disturbance(&w);
        assert!(m.norm() < 1e-15);
        assert!(is_radially_symmetric(&w, 0.0));
        w.validate().unwrap();
    }

    #[test]
    fn weighted_disturbance_counts() {
        let w = build_disturbance_weighted(16, 100.0, 1.0).unwrap();
        let high: Vec<usize> = (0..w.len())
            .filter(|&i| w.probabilities[i] > w.probabilities[32])
            .collect();
        assert_eq!(high, (1..=7).collect::<Vec<_>>());
        assert_eq!(w.probabilities[1], 100.0 / 726.0);
        assert_eq!(w.probabilities[0], 1.0 / 726.0);
        assert_eq!(w.probabilities[8], 1.0 / 726.0);
        assert!(!is_radially_symmetric(&w, 1e-12));

        let m = mean_disturbance(&w);
        assert!(m.x > 0.0 && m.y > 0.0);
        assert!((m.x - m.y).abs() < 1e-12);
    }

    #[test]
    fn equal_weights_are_uniform() {
        let w = build_disturbance_weighted(8, 3.0, 3.0).unwrap();
        let u = build_disturbance_uniform(8).unwrap();
        for (a, b) in w.probabilities.iter().zip(&u.probabilities) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(is_radially_symmetric(&w, 1e-15));
    }

    #[test]
    fn point_mass_mean() {
        let m = DisturbanceModel::point_mass(Vec2::new(1.0, 0.0));
        assert_eq!(mean_disturbance(&m), Vec2::new(1.0, 0.0));
    }

    #[test]
    fn perturbed_probability_breaks_symmetry() {
        let tol = 1e-6;
        let mut w = build_disturbance_uniform(4).unwrap();
        w.probabilities[3] += 2.0 * tol;
        assert!(!is_radially_symmetric(&w, tol));
    }
}
