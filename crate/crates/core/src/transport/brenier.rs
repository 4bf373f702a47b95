use super::{DiscreteMeasure, TransportPlan};
use crate::error::{Error, Result};
use crate::field::VectorMap;
use crate::grid::{BallGrid, Point};
use std::sync::Arc;

/// Barycentric projection of a plan, one value per source point, with the
/// convex potential `u(x_i) = |x_i|²/2 - f_i` built from the source duals.
#[derive(Clone, Debug)]
pub struct BrenierMap {
    values: Vec<Point>,
    potential: Vec<f64>,
}

impl BrenierMap {
    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn value(&self, i: usize) -> Point {
        self.values[i]
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Place the per-point values on `grid`, where source point `k` sits at
    /// the `k`-th active node.
    pub fn to_vector_map(&self, grid: Arc<BallGrid>) -> Result<VectorMap> {
        let active = grid.active();
        if active.len() != self.values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} map values for {} active nodes",
                self.values.len(),
                active.len()
            )));
        }
        let mut nodal = vec![[f64::NAN; 3]; grid.len()];
        for (&i, v) in active.iter().zip(&self.values) {
            nodal[i as usize] = *v;
        }
        Ok(VectorMap::from_nodal(grid, nodal))
    }
}

pub fn brenier_map(plan: &TransportPlan, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<BrenierMap> {
    if plan.sources != mu.len() || plan.targets != nu.len() {
        return Err(Error::InvalidArgument("plan does not match the measures".into()));
    }
    let mut mass = vec![0.0; mu.len()];
    let mut acc = vec![[0.0; 3]; mu.len()];
    for &(i, j, m) in plan.entries() {
        mass[i] += m;
        let xi = nu.points()[j];
        for d in 0..3 {
            acc[i][d] += m * xi[d];
        }
    }
    let mut values = Vec::with_capacity(mu.len());
    for (i, (a, m)) in acc.iter().zip(&mass).enumerate() {
        if !(*m > 0.0) {
            return Err(Error::ZeroRowMass(i));
        }
        values.push([a[0] / m, a[1] / m, a[2] / m]);
    }
    let potential = match plan.source_potential() {
        f if f.len() == mu.len() => mu
            .points()
            .iter()
            .zip(f)
            .map(|(x, fi)| 0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) - fi)
            .collect(),
        _ => vec![f64::NAN; mu.len()],
    };
    Ok(BrenierMap { values, potential })
}
