//! Discrete optimal transport for the quadratic cost
//! `c(x, ξ) = |x - ξ|^2 / 2`, used to realise the gradient map of the
//! Monge-Ampère route.

mod brenier;
mod certificate;
mod entropic;
mod exact;

pub use brenier::{brenier_map, BrenierMap};
pub use certificate::{grid_measures, transport_certificate, TransportOptions, TransportOutcome, MONOTONICITY_PAIRS};
pub use entropic::{
    entropic_schedule, mean_cost, solve_entropic_ot, solve_entropic_ot_refined, solve_entropic_ot_with, EntropicOptions,
    DEFAULT_SCHEDULE, REFINEMENT_SCHEDULE,
};
pub use exact::{solve_exact_ot, EXACT_POINT_LIMIT};

use crate::error::{Error, Result};
use crate::grid::Point;
use serde::Serialize;

pub fn quadratic_cost(a: &Point, b: &Point) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    0.5 * (d0 * d0 + d1 * d1 + d2 * d2)
}

/// Weighted point cloud. Unused trailing coordinates are zero.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty measure".into()));
        }
        if let Some(k) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::NotPositive(format!("weight {k} is {}", weights[k])));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite point coordinate".into()));
        }
        Ok(DiscreteMeasure { points, weights })
    }

    pub fn dirac(p: Point, mass: f64) -> Result<Self> {
        Self::new(vec![p], vec![mass])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub(crate) fn check_masses(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    let (a, b) = (mu.total(), nu.total());
    if (a - b).abs() > 1e-9 * a.max(b) {
        return Err(Error::MassMismatch {
            source_mass: a,
            target_mass: b,
        });
    }
    Ok(())
}

/// Sparse coupling with its quadratic cost.
#[derive(Clone, Debug, Serialize)]
pub struct TransportPlan {
    sources: usize,
    targets: usize,
    /// `(i, j, mass)` sorted by `(i, j)`, masses positive.
    entries: Vec<(usize, usize, f64)>,
    cost: f64,
    epsilon: f64,
    /// Source and target dual potentials for the cost `c`.
    #[serde(skip)]
    duals: (Vec<f64>, Vec<f64>),
    duality_gap: Option<f64>,
}

impl TransportPlan {
    pub(crate) fn from_entries(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        mut entries: Vec<(usize, usize, f64)>,
        epsilon: f64,
        duals: (Vec<f64>, Vec<f64>),
    ) -> Self {
        entries.retain(|e| e.2 > 0.0);
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let cost = entries
            .iter()
            .map(|&(i, j, m)| m * quadratic_cost(&mu.points[i], &nu.points[j]))
            .sum();
        TransportPlan {
            sources: mu.len(),
            targets: nu.len(),
            entries,
            cost,
            epsilon,
            duals,
            duality_gap: None,
        }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn source_potential(&self) -> &[f64] {
        &self.duals.0
    }

    pub fn target_potential(&self) -> &[f64] {
        &self.duals.1
    }

    pub fn duality_gap(&self) -> Option<f64> {
        self.duality_gap
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.sources];
        for &(i, _, m) in &self.entries {
            r[i] += m;
        }
        r
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.targets];
        for &(_, j, m) in &self.entries {
            c[j] += m;
        }
        c
    }

    /// Largest per-point relative marginal violation over both sides.
    pub fn marginal_residual(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let r = self.row_sums();
        let c = self.col_sums();
        let rows = r.iter().zip(mu.weights()).map(|(a, w)| (a - w).abs() / w);
        let cols = c.iter().zip(nu.weights()).map(|(a, w)| (a - w).abs() / w);
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// Quadratic cost re-summed from the entries.
    pub fn recompute_cost(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, m)| m * quadratic_cost(&mu.points()[i], &nu.points()[j]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_weights() {
        assert!(DiscreteMeasure::new(vec![[0.0; 3]], vec![0.0]).is_err());
        assert!(DiscreteMeasure::new(vec![[0.0; 3]], vec![1.0, 2.0]).is_err());
        let a = DiscreteMeasure::dirac([0.0; 3], 1.0).unwrap();
        let b = DiscreteMeasure::dirac([0.0; 3], 2.0).unwrap();
        assert!(matches!(check_masses(&a, &b), Err(Error::MassMismatch { .. })));
    }
}
