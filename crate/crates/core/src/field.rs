//! Nodal scalar fields and vector maps on a [`BallGrid`], with the finite
//! difference operators used throughout the crate.
//!
//! Values are stored for the whole bounding box; exterior nodes hold `NaN`
//! and are never read by a stencil.

use crate::error::{Error, Result};
use crate::grid::{BallGrid, NodeClass, Point};
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<BallGrid>,
    values: Vec<f64>,
    boundary_values: Vec<f64>,
    positive: bool,
}

impl ScalarField {
    /// Sample `f` at every active node and every boundary rule point.
    pub fn from_fn<F>(grid: Arc<BallGrid>, f: F) -> Result<Self>
    where
        F: Fn(&Point) -> f64 + Sync,
    {
        let mut values = vec![f64::NAN; grid.len()];
        let sampled: Vec<f64> = grid
            .active()
            .par_iter()
            .map(|&idx| f(&grid.coords(idx as usize)))
            .collect();
        for (&idx, v) in grid.active().iter().zip(sampled) {
            values[idx as usize] = v;
        }
        let boundary_values: Vec<f64> = grid.boundary().par_iter().map(|b| f(&b.point)).collect();
        Self::assemble(grid, values, boundary_values)
    }

    /// Build from nodal values (box-sized; exterior entries are ignored).
    /// Boundary values are interpolated multilinearly from active nodes.
    pub fn from_nodal(grid: Arc<BallGrid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} nodal values, got {}",
                grid.len(),
                values.len()
            )));
        }
        for (idx, v) in values.iter_mut().enumerate() {
            if !grid.is_active(idx) {
                *v = f64::NAN;
            }
        }
        let boundary_values: Vec<f64> = grid
            .boundary()
            .iter()
            .map(|b| {
                interpolate(&grid, &values, &b.point).unwrap_or_else(|| {
                    let x = grid.coords(b.owner);
                    let g = gradient_at(&grid, &values, b.owner);
                    values[b.owner] + (0..grid.dim()).map(|k| g[k] * (b.point[k] - x[k])).sum::<f64>()
                })
            })
            .collect();
        Self::assemble(grid, values, boundary_values)
    }

    pub fn constant(grid: Arc<BallGrid>, c: f64) -> Result<Self> {
        Self::from_fn(grid, |_| c)
    }

    fn assemble(grid: Arc<BallGrid>, values: Vec<f64>, boundary_values: Vec<f64>) -> Result<Self> {
        let mut positive = true;
        for &idx in grid.active() {
            let v = values[idx as usize];
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite field value at node {:?}",
                    grid.coords(idx as usize)
                )));
            }
            positive &= v > 0.0;
        }
        for v in &boundary_values {
            if !v.is_finite() {
                return Err(Error::InvalidArgument("non-finite boundary value".into()));
            }
            positive &= *v > 0.0;
        }
        Ok(ScalarField {
            grid,
            values,
            boundary_values,
            positive,
        })
    }

    pub fn grid(&self) -> &Arc<BallGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn boundary_values(&self) -> &[f64] {
        &self.boundary_values
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn require_positive(&self) -> Result<()> {
        if self.positive {
            Ok(())
        } else {
            Err(Error::NotPositive(
                "every interior and boundary value must be > 0".into(),
            ))
        }
    }

    pub fn scaled(&self, lambda: f64) -> ScalarField {
        self.map(|v| lambda * v)
    }

    /// Pointwise transform of nodal and boundary values.
    pub fn map<G: Fn(f64) -> f64 + Sync>(&self, g: G) -> ScalarField {
        let values: Vec<f64> = self.values.par_iter().map(|&v| if v.is_nan() { v } else { g(v) }).collect();
        let boundary_values: Vec<f64> = self.boundary_values.iter().map(|&v| g(v)).collect();
        let positive = self.grid.active().iter().all(|&i| values[i as usize] > 0.0)
            && boundary_values.iter().all(|&v| v > 0.0);
        ScalarField {
            grid: self.grid.clone(),
            values,
            boundary_values,
            positive,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grid
            .active()
            .iter()
            .map(|&i| self.values[i as usize].abs())
            .fold(0.0, f64::max)
    }
}

/// Multilinear interpolation over the enclosing cell; `None` when any
/// corner is inactive.
pub fn interpolate(grid: &BallGrid, values: &[f64], p: &Point) -> Option<f64> {
    let dim = grid.dim();
    let h = grid.h();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for k in 0..dim {
        let t = p[k] / h + grid.half() as f64;
        let i = t.floor().clamp(0.0, (grid.side() - 2) as f64);
        base[k] = i as usize;
        frac[k] = (t - i).clamp(0.0, 1.0);
    }
    if dim == 2 {
        base[2] = grid.half();
    }
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for corner in 0..(1usize << dim) {
        let mut m = base;
        let mut w = 1.0;
        for k in 0..dim {
            if corner >> k & 1 == 1 {
                m[k] += 1;
                w *= frac[k];
            } else {
                w *= 1.0 - frac[k];
            }
        }
        let idx = grid.index_of(&m);
        if !grid.is_active(idx) {
            return None;
        }
        acc += w * values[idx];
        wsum += w;
    }
    Some(acc / wsum)
}

/// A map from the grid nodes into `R^n`, optionally with exact values at
/// the boundary rule points.
#[derive(Clone, Debug)]
pub struct VectorMap {
    grid: Arc<BallGrid>,
    values: Vec<Point>,
    boundary_values: Option<Vec<Point>>,
}

impl VectorMap {
    pub fn from_fn<F>(grid: Arc<BallGrid>, f: F) -> Self
    where
        F: Fn(&Point) -> Point + Sync,
    {
        let mut values = vec![[f64::NAN; 3]; grid.len()];
        let sampled: Vec<Point> = grid
            .active()
            .par_iter()
            .map(|&idx| f(&grid.coords(idx as usize)))
            .collect();
        for (&idx, v) in grid.active().iter().zip(sampled) {
            values[idx as usize] = v;
        }
        let boundary = grid.boundary().iter().map(|b| f(&b.point)).collect();
        VectorMap {
            grid,
            values,
            boundary_values: Some(boundary),
        }
    }

    /// Build from box-sized nodal vectors; exterior entries are ignored.
    pub fn from_nodal(grid: Arc<BallGrid>, mut values: Vec<Point>) -> Self {
        assert_eq!(values.len(), grid.len());
        for (idx, v) in values.iter_mut().enumerate() {
            if !grid.is_active(idx) {
                *v = [f64::NAN; 3];
            }
        }
        VectorMap {
            grid,
            values,
            boundary_values: None,
        }
    }

    pub fn grid(&self) -> &Arc<BallGrid> {
        &self.grid
    }

    pub fn value(&self, idx: usize) -> Point {
        self.values[idx]
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    /// Component `k` as a box-sized scalar array.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }

    /// Value at boundary rule point `b`: exact when supplied, otherwise
    /// interpolated from the nodes.
    pub fn boundary_value(&self, b: usize) -> Point {
        if let Some(bv) = &self.boundary_values {
            return bv[b];
        }
        let bp = &self.grid.boundary()[b];
        let dim = self.grid.dim();
        let mut out = [0.0; 3];
        match (0..dim)
            .map(|k| interpolate_component(&self.grid, &self.values, k, &bp.point))
            .collect::<Option<Vec<f64>>>()
        {
            Some(v) => out[..dim].copy_from_slice(&v),
            None => {
                let x = self.grid.coords(bp.owner);
                let j = self.jacobian_at(bp.owner);
                for (i, o) in out.iter_mut().enumerate().take(dim) {
                    *o = self.values[bp.owner][i]
                        + (0..dim).map(|k| j[i][k] * (bp.point[k] - x[k])).sum::<f64>();
                }
            }
        }
        out
    }

    /// Largest Euclidean norm over active nodes, optionally restricted to
    /// interior nodes.
    pub fn max_norm(&self, interior_only: bool) -> f64 {
        let dim = self.grid.dim();
        self.grid
            .active()
            .iter()
            .filter(|&&i| !interior_only || self.grid.class(i as usize) == NodeClass::Interior)
            .map(|&i| crate::grid::norm(&self.values[i as usize], dim))
            .fold(0.0, f64::max)
    }

    /// Jacobian `J[i][k] = d v_i / d x_k` at a node.
    pub fn jacobian_at(&self, idx: usize) -> [[f64; 3]; 3] {
        let dim = self.grid.dim();
        let mut j = [[0.0; 3]; 3];
        for k in 0..dim {
            let (lo, hi, denom) = stencil(&self.grid, idx, k);
            for (i, row) in j.iter_mut().enumerate().take(dim) {
                row[k] = apply_stencil(idx, &lo, &hi, denom, |n| self.values[n][i]);
            }
        }
        j
    }
}

fn interpolate_component(grid: &BallGrid, values: &[Point], k: usize, p: &Point) -> Option<f64> {
    let dim = grid.dim();
    let h = grid.h();
    let mut base = [grid.half(); 3];
    let mut frac = [0.0; 3];
    for a in 0..dim {
        let t = p[a] / h + grid.half() as f64;
        let i = t.floor().clamp(0.0, (grid.side() - 2) as f64);
        base[a] = i as usize;
        frac[a] = (t - i).clamp(0.0, 1.0);
    }
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for corner in 0..(1usize << dim) {
        let mut m = base;
        let mut w = 1.0;
        for a in 0..dim {
            if corner >> a & 1 == 1 {
                m[a] += 1;
                w *= frac[a];
            } else {
                w *= 1.0 - frac[a];
            }
        }
        let idx = grid.index_of(&m);
        if !grid.is_active(idx) {
            return None;
        }
        acc += w * values[idx][k];
        wsum += w;
    }
    Some(acc / wsum)
}

/// Stencil for the first derivative along `axis` at `idx`: the node offsets
/// with coefficients, as `(nodes, coefficients, denominator)`.
///
/// Centred where both neighbours are active, second-order one-sided where
/// two neighbours on one side are, first order otherwise.
type Taps = [(usize, f64); 3];

fn stencil(grid: &BallGrid, idx: usize, axis: usize) -> (Taps, usize, f64) {
    let h = grid.h();
    let fwd = grid.active_neighbor(idx, axis, 1);
    let bwd = grid.active_neighbor(idx, axis, -1);
    match (bwd, fwd) {
        (Some(b), Some(f)) => ([(f, 1.0), (b, -1.0), (idx, 0.0)], 2, 2.0 * h),
        (None, Some(f)) => match grid.active_neighbor(idx, axis, 2) {
            Some(f2) => ([(idx, -3.0), (f, 4.0), (f2, -1.0)], 3, 2.0 * h),
            None => ([(f, 1.0), (idx, -1.0), (idx, 0.0)], 2, h),
        },
        (Some(b), None) => match grid.active_neighbor(idx, axis, -2) {
            Some(b2) => ([(idx, 3.0), (b, -4.0), (b2, 1.0)], 3, 2.0 * h),
            None => ([(idx, 1.0), (b, -1.0), (idx, 0.0)], 2, h),
        },
        (None, None) => ([(idx, 0.0); 3], 0, 1.0),
    }
}

/// Weights sum to zero, so differences from the centre value are taken
/// first; constant data then differentiates to exactly zero.
fn apply_stencil<G: Fn(usize) -> f64>(centre: usize, taps: &Taps, count: &usize, denom: f64, g: G) -> f64 {
    let g0 = g(centre);
    let mut s = 0.0;
    for &(n, c) in taps.iter().take(*count) {
        if c != 0.0 && n != centre {
            s += c * (g(n) - g0);
        }
    }
    s / denom
}

/// Accuracy order of the first-derivative stencil used at a node (the
/// minimum over axes): 2 for centred or one-sided second order, 1 or 0 for
/// degenerate neighbourhoods.
pub fn stencil_order(grid: &BallGrid, idx: usize) -> u8 {
    let mut order = 2;
    for axis in 0..grid.dim() {
        let (_, count, denom) = stencil(grid, idx, axis);
        let o = if count == 0 {
            0
        } else if denom == grid.h() {
            1
        } else {
            2
        };
        order = order.min(o);
    }
    order
}

/// Finite-difference partial derivative of box-sized nodal values.
pub fn partial(grid: &BallGrid, values: &[f64], idx: usize, axis: usize) -> f64 {
    let (taps, count, denom) = stencil(grid, idx, axis);
    apply_stencil(idx, &taps, &count, denom, |n| values[n])
}

pub fn gradient_at(grid: &BallGrid, values: &[f64], idx: usize) -> Point {
    let mut g = [0.0; 3];
    for (k, gk) in g.iter_mut().enumerate().take(grid.dim()) {
        *gk = partial(grid, values, idx, k);
    }
    g
}

pub fn gradient(f: &ScalarField) -> VectorMap {
    let grid = f.grid().clone();
    let mut values = vec![[f64::NAN; 3]; grid.len()];
    let g: Vec<Point> = grid
        .active()
        .par_iter()
        .map(|&idx| gradient_at(&grid, f.values(), idx as usize))
        .collect();
    for (&idx, v) in grid.active().iter().zip(g) {
        values[idx as usize] = v;
    }
    VectorMap {
        grid,
        values,
        boundary_values: None,
    }
}

/// Discrete divergence at every active node (box-sized, `NaN` elsewhere).
pub fn divergence(v: &VectorMap) -> Vec<f64> {
    let grid = v.grid();
    let mut out = vec![f64::NAN; grid.len()];
    let d: Vec<f64> = grid
        .active()
        .par_iter()
        .map(|&idx| {
            let j = v.jacobian_at(idx as usize);
            (0..grid.dim()).map(|k| j[k][k]).sum()
        })
        .collect();
    for (&idx, x) in grid.active().iter().zip(d) {
        out[idx as usize] = x;
    }
    out
}

/// Centred second differences at a node whose full 3^n neighbourhood is
/// active; `None` otherwise.
pub fn hessian_at(grid: &BallGrid, values: &[f64], idx: usize) -> Option<[[f64; 3]; 3]> {
    let dim = grid.dim();
    let h2 = grid.h() * grid.h();
    let mut hess = [[0.0; 3]; 3];
    let u0 = values[idx];
    for k in 0..dim {
        let p = grid.active_neighbor(idx, k, 1)?;
        let m = grid.active_neighbor(idx, k, -1)?;
        hess[k][k] = (values[p] - 2.0 * u0 + values[m]) / h2;
        for l in (k + 1)..dim {
            let pp = grid.active_neighbor(p, l, 1)?;
            let pm = grid.active_neighbor(p, l, -1)?;
            let mp = grid.active_neighbor(m, l, 1)?;
            let mm = grid.active_neighbor(m, l, -1)?;
            let v = (values[pp] - values[pm] - values[mp] + values[mm]) / (4.0 * h2);
            hess[k][l] = v;
            hess[l][k] = v;
        }
    }
    Some(hess)
}

/// Centred gradient at a node with both neighbours active along every axis.
pub fn centered_gradient_at(grid: &BallGrid, values: &[f64], idx: usize) -> Option<Point> {
    let mut g = [0.0; 3];
    for (k, gk) in g.iter_mut().enumerate().take(grid.dim()) {
        let p = grid.active_neighbor(idx, k, 1)?;
        let m = grid.active_neighbor(idx, k, -1)?;
        *gk = (values[p] - values[m]) / (2.0 * grid.h());
    }
    Some(g)
}
