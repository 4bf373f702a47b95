//! Cartesian discretization of the closed unit ball in two or three
//! dimensions.
//!
//! Nodes sit at `x = (i - half) h` on a box that covers the ball with two
//! spare layers. Every node owns the cube of side `h` centred on it. A node is
//! `Interior` when `|x| < 1 - h` (its cube then lies inside the ball),
//! `BoundaryBand` when its cube still meets the closed ball, and `Exterior`
//! otherwise. Cell volumes in the band are the exact clipped volumes: closed
//! form in 2D, a z-integral of the exact disk/rectangle area in 3D.

use crate::error::{Error, Result};
use crate::numerics::{gauss_integrate, gl12};
use serde::Serialize;
use std::f64::consts::PI;

pub type Point = [f64; 3];

pub const H_MIN: f64 = 1.0 / 256.0;
pub const H_MAX: f64 = 1.0 / 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NodeClass {
    Interior,
    BoundaryBand,
    Exterior,
}

/// One node of the boundary rule on the unit sphere.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub point: Point,
    pub weight: f64,
    /// Active node whose cell contains (or is nearest to) the point.
    pub owner: usize,
}

#[derive(Clone, Debug)]
pub struct BallGrid {
    dim: usize,
    h: f64,
    half: usize,
    side: usize,
    strides: [usize; 3],
    class: Vec<NodeClass>,
    active: Vec<u32>,
    cell_volume: Vec<f64>,
    boundary: Vec<BoundaryPoint>,
}

/// Closed-form volume of the unit ball in `R^n` for `n` in 1..=4.
pub fn unit_ball_volume(n: usize) -> Result<f64> {
    match n {
        1 => Ok(2.0),
        2 => Ok(PI),
        3 => Ok(4.0 * PI / 3.0),
        4 => Ok(PI * PI / 2.0),
        _ => Err(Error::UnsupportedDimension {
            got: n,
            supported: "1, 2, 3, 4",
        }),
    }
}

/// Measure of the unit sphere, `n |B_1^n|`.
pub fn unit_sphere_measure(n: usize) -> Result<f64> {
    Ok(n as f64 * unit_ball_volume(n)?)
}

impl BallGrid {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(Error::UnsupportedDimension {
                got: n,
                supported: "2, 3",
            });
        }
        let slack = 1e-12;
        if !h.is_finite() || h < H_MIN * (1.0 - slack) || h > H_MAX * (1.0 + slack) {
            return Err(Error::UnsupportedResolution(h));
        }
        let half = (1.0 / h - 1e-9).ceil() as usize + 2;
        let side = 2 * half + 1;
        let strides = if n == 2 {
            [side, 1, 0]
        } else {
            [side * side, side, 1]
        };
        let len = side.pow(n as u32);
        let mut grid = BallGrid {
            dim: n,
            h,
            half,
            side,
            strides,
            class: vec![NodeClass::Exterior; len],
            active: Vec::new(),
            cell_volume: Vec::new(),
            boundary: Vec::new(),
        };
        grid.classify();
        grid.build_boundary_rule();
        Ok(grid)
    }

    fn classify(&mut self) {
        let h = self.h;
        let full = h.powi(self.dim as i32);
        for idx in 0..self.class.len() {
            let x = self.coords(idx);
            let r = norm(&x, self.dim);
            let (lo, hi) = self.cell_box(idx);
            let mut near2 = 0.0;
            for k in 0..self.dim {
                let c = 0.0f64.clamp(lo[k], hi[k]);
                near2 += c * c;
            }
            if near2 >= 1.0 {
                continue;
            }
            if r < 1.0 - h {
                self.class[idx] = NodeClass::Interior;
                self.active.push(idx as u32);
                self.cell_volume.push(full);
            } else {
                let v = match self.dim {
                    2 => disk_rect_area(1.0, lo[0], hi[0], lo[1], hi[1]),
                    _ => ball_box_volume(&lo, &hi),
                };
                if v > 0.0 || r <= 1.0 {
                    self.class[idx] = NodeClass::BoundaryBand;
                    self.active.push(idx as u32);
                    self.cell_volume.push(v);
                }
            }
        }
    }

    fn build_boundary_rule(&mut self) {
        let h = self.h;
        let mut pts = Vec::new();
        if self.dim == 2 {
            let m = 4 * (2.0 * PI / h).ceil() as usize;
            let w = 2.0 * PI / m as f64;
            for k in 0..m {
                let t = (k as f64 + 0.5) * w;
                pts.push(([t.cos(), t.sin(), 0.0], w));
            }
        } else {
            // Equal-area rule: the sphere's area element is dz dphi.
            let nz = 2 * (2.0 / h).ceil() as usize;
            let nphi = 2 * (2.0 * PI / h).ceil() as usize;
            let dz = 2.0 / nz as f64;
            let dphi = 2.0 * PI / nphi as f64;
            for i in 0..nz {
                let z = -1.0 + (i as f64 + 0.5) * dz;
                let rho = (1.0 - z * z).sqrt();
                for j in 0..nphi {
                    let p = (j as f64 + 0.5) * dphi;
                    pts.push(([rho * p.cos(), rho * p.sin(), z], dz * dphi));
                }
            }
        }
        self.boundary = pts
            .into_iter()
            .map(|(point, weight)| BoundaryPoint {
                point,
                weight,
                owner: self.owner_of(&point),
            })
            .collect();
    }

    fn owner_of(&self, p: &Point) -> usize {
        let idx = self.node_near(p);
        if self.is_active(idx) {
            return idx;
        }
        let mut best = idx;
        let mut best_d = f64::INFINITY;
        let base = self.multi(idx);
        let offsets: &[isize] = &[-1, 0, 1];
        let mut visit = |m: [usize; 3]| {
            let j = self.index_of(&m);
            if self.is_active(j) {
                let d = dist2(&self.coords(j), p, self.dim);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
        };
        for &a in offsets {
            for &b in offsets {
                let cs: &[isize] = if self.dim == 3 { offsets } else { &[0] };
                for &c in cs {
                    let m = [
                        (base[0] as isize + a) as usize,
                        (base[1] as isize + b) as usize,
                        (base[2] as isize + c) as usize,
                    ];
                    visit(m);
                }
            }
        }
        best
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Nodes per axis.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Index offset of the origin along each axis.
    pub fn half(&self) -> usize {
        self.half
    }

    /// Total number of nodes in the bounding box (including exterior ones).
    pub fn len(&self) -> usize {
        self.class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class.is_empty()
    }

    pub fn class(&self, idx: usize) -> NodeClass {
        self.class[idx]
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.class[idx] != NodeClass::Exterior
    }

    /// Box indices of all non-exterior nodes, ascending.
    pub fn active(&self) -> &[u32] {
        &self.active
    }

    /// Volume of each active cell inside the ball (parallel to [`active`]).
    ///
    /// [`active`]: BallGrid::active
    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volume
    }

    pub fn boundary(&self) -> &[BoundaryPoint] {
        &self.boundary
    }

    pub fn multi(&self, idx: usize) -> [usize; 3] {
        match self.dim {
            2 => [idx / self.side, idx % self.side, self.half],
            _ => [
                idx / self.strides[0],
                (idx / self.side) % self.side,
                idx % self.side,
            ],
        }
    }

    pub fn index_of(&self, m: &[usize; 3]) -> usize {
        (0..self.dim).map(|k| m[k] * self.strides[k]).sum()
    }

    pub fn coord_of_index(&self, i: usize) -> f64 {
        (i as f64 - self.half as f64) * self.h
    }

    pub fn coords(&self, idx: usize) -> Point {
        let m = self.multi(idx);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = self.coord_of_index(m[k]);
        }
        x
    }

    pub fn cell_box(&self, idx: usize) -> (Point, Point) {
        let x = self.coords(idx);
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..self.dim {
            lo[k] = x[k] - 0.5 * self.h;
            hi[k] = x[k] + 0.5 * self.h;
        }
        (lo, hi)
    }

    /// Neighbour `step` nodes away along `axis`, if it is inside the box.
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> Option<usize> {
        let m = self.multi(idx);
        let j = m[axis] as isize + step;
        if j < 0 || j >= self.side as isize {
            return None;
        }
        Some((idx as isize + step * self.strides[axis] as isize) as usize)
    }

    /// Active neighbour, if any.
    pub fn active_neighbor(&self, idx: usize, axis: usize, step: isize) -> Option<usize> {
        self.neighbor(idx, axis, step).filter(|&j| self.is_active(j))
    }

    /// Node nearest to `p` (clamped to the box).
    pub fn node_near(&self, p: &Point) -> usize {
        let mut m = [self.half; 3];
        for k in 0..self.dim {
            let i = (p[k] / self.h).round() + self.half as f64;
            m[k] = i.clamp(0.0, (self.side - 1) as f64) as usize;
        }
        self.index_of(&m)
    }

    /// Quadrature volume of the discretized ball.
    pub fn interior_volume(&self) -> f64 {
        crate::numerics::det_sum(self.cell_volume.len(), |k| self.cell_volume[k])
    }

    /// Sum of the boundary rule weights.
    pub fn boundary_measure(&self) -> f64 {
        crate::numerics::det_sum(self.boundary.len(), |k| self.boundary[k].weight)
    }

    /// Exact area of the face between node `idx` and its `+axis` neighbour that
    /// lies inside the closed ball.
    pub fn face_aperture(&self, idx: usize, axis: usize) -> f64 {
        let x = self.coords(idx);
        let c = x[axis] + 0.5 * self.h;
        let hh = 0.5 * self.h;
        let rest = 1.0 - c * c;
        if rest <= 0.0 {
            return 0.0;
        }
        let r = rest.sqrt();
        match self.dim {
            2 => {
                let o = 1 - axis;
                let (a, b) = (x[o] - hh, x[o] + hh);
                (b.min(r) - a.max(-r)).max(0.0)
            }
            _ => {
                let (p, q) = match axis {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                disk_rect_area(r, x[p] - hh, x[p] + hh, x[q] - hh, x[q] + hh)
            }
        }
    }

    /// Relative error of the discrete ball volume.
    pub fn volume_error(&self) -> f64 {
        let exact = unit_ball_volume(self.dim).expect("dim validated");
        (self.interior_volume() - exact).abs() / exact
    }
}

pub fn norm(x: &Point, dim: usize) -> f64 {
    x[..dim].iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &Point, b: &Point, dim: usize) -> f64 {
    (0..dim).map(|k| a[k] * b[k]).sum()
}

fn dist2(a: &Point, b: &Point, dim: usize) -> f64 {
    (0..dim).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Exact area of `{x^2 + y^2 <= r^2} ∩ [x0, x1] × [y0, y1]`.
pub fn disk_rect_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    if r <= 0.0 || y0 >= y1 {
        return 0.0;
    }
    let a = x0.max(-r);
    let b = x1.min(r);
    if a >= b {
        return 0.0;
    }
    let r2 = r * r;
    let mut buf = [0.0f64; 6];
    buf[0] = a;
    buf[1] = b;
    let mut count = 2;
    for y in [y0, y1] {
        if y.abs() < r {
            let u = (r2 - y * y).sqrt();
            for c in [-u, u] {
                if c > a && c < b {
                    buf[count] = c;
                    count += 1;
                }
            }
        }
    }
    let cuts = &mut buf[..count];
    cuts.sort_by(|p, q| p.total_cmp(q));
    let prim = |u: f64| {
        let u = u.clamp(-r, r);
        0.5 * (u * (r2 - u * u).max(0.0).sqrt() + r2 * (u / r).clamp(-1.0, 1.0).asin())
    };
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p {
            continue;
        }
        let m = 0.5 * (p + q);
        let s = (r2 - m * m).max(0.0).sqrt();
        let upper_is_arc = s < y1;
        let lower_is_arc = -s > y0;
        let top = if upper_is_arc { s } else { y1 };
        let bot = if lower_is_arc { -s } else { y0 };
        if top <= bot {
            continue;
        }
        let arc = prim(q) - prim(p);
        let up = if upper_is_arc { arc } else { y1 * (q - p) };
        let lo = if lower_is_arc { -arc } else { y0 * (q - p) };
        area += up - lo;
    }
    area
}

/// Volume of the unit ball inside an axis-aligned box, by integrating the
/// exact disk/rectangle area over z. The z-range is split wherever the slice
/// radius crosses an edge or corner distance, and each piece is integrated
/// after a smoothstep substitution that removes the square-root endpoint
/// behaviour.
pub fn ball_box_volume(lo: &Point, hi: &Point) -> f64 {
    let za = lo[2].max(-1.0);
    let zb = hi[2].min(1.0);
    if za >= zb {
        return 0.0;
    }
    let mut far2: f64 = 0.0;
    for k in 0..3 {
        far2 += lo[k].abs().max(hi[k].abs()).powi(2);
    }
    if far2 <= 1.0 {
        return (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
    }
    let mut cuts = vec![za, zb];
    let mut radii = vec![lo[0].abs(), hi[0].abs(), lo[1].abs(), hi[1].abs()];
    for x in [lo[0], hi[0]] {
        for y in [lo[1], hi[1]] {
            radii.push((x * x + y * y).sqrt());
        }
    }
    radii.push(0.0);
    for d in radii {
        if d < 1.0 {
            let z = (1.0 - d * d).sqrt();
            for c in [-z, z] {
                if c > za && c < zb {
                    cuts.push(c);
                }
            }
        }
    }
    cuts.sort_by(|p, q| p.total_cmp(q));
    let rule = gl12();
    let slice = |z: f64| disk_rect_area((1.0 - z * z).max(0.0).sqrt(), lo[0], hi[0], lo[1], hi[1]);
    let mut vol = 0.0;
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p {
            continue;
        }
        let len = q - p;
        vol += gauss_integrate(rule, 0.0, 1.0, |t| {
            let s = t * t * (3.0 - 2.0 * t);
            let ds = 6.0 * t * (1.0 - t);
            slice(p + len * s) * len * ds
        });
    }
    vol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_dimension_and_resolution() {
        assert!(matches!(
            BallGrid::new(4, 1.0 / 16.0),
            Err(Error::UnsupportedDimension { .. })
        ));
        assert!(matches!(
            BallGrid::new(2, 0.5),
            Err(Error::UnsupportedResolution(_))
        ));
        assert!(matches!(
            BallGrid::new(2, 1.0 / 512.0),
            Err(Error::UnsupportedResolution(_))
        ));
    }

    #[test]
    fn unit_ball_volumes() {
        assert_eq!(unit_ball_volume(1).unwrap(), 2.0);
        assert_relative_eq!(unit_ball_volume(2).unwrap(), PI);
        assert_relative_eq!(unit_ball_volume(3).unwrap(), 4.0 * PI / 3.0);
        assert!(unit_ball_volume(5).is_err());
    }

    #[test]
    fn disk_rect_area_matches_known_pieces() {
        assert_relative_eq!(disk_rect_area(1.0, -2.0, 2.0, -2.0, 2.0), PI, max_relative = 1e-14);
        assert_relative_eq!(disk_rect_area(1.0, 0.0, 2.0, 0.0, 2.0), PI / 4.0, max_relative = 1e-14);
        assert_relative_eq!(disk_rect_area(1.0, -0.5, 0.5, -0.5, 0.5), 1.0, max_relative = 1e-14);
        // half-disk strip: x in [0, 1], all y
        assert_relative_eq!(disk_rect_area(2.0, 0.0, 5.0, -5.0, 5.0), 2.0 * PI, max_relative = 1e-14);
        assert_eq!(disk_rect_area(1.0, 1.0, 2.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn ball_box_volume_octant_and_slab() {
        let v = ball_box_volume(&[0.0, 0.0, 0.0], &[2.0, 2.0, 2.0]);
        assert_relative_eq!(v, PI / 6.0, max_relative = 1e-12);
        // cap of height 0.5: pi h^2 (3 - h)/3
        let cap = ball_box_volume(&[-2.0, -2.0, 0.5], &[2.0, 2.0, 2.0]);
        assert_relative_eq!(cap, PI * 0.25 * 2.5 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn grid_volume_2d_within_two_percent() {
        let g = BallGrid::new(2, 1.0 / 64.0).unwrap();
        assert!((g.interior_volume() - PI).abs() / PI < 0.02);
        assert!((g.boundary_measure() - 2.0 * PI).abs() / (2.0 * PI) < 0.01);
    }

    #[test]
    fn grid_volume_3d_within_three_percent() {
        let g = BallGrid::new(3, 1.0 / 32.0).unwrap();
        let v = 4.0 * PI / 3.0;
        assert!((g.interior_volume() - v).abs() / v < 0.03);
        let h = g.h();
        assert!((g.boundary_measure() - 4.0 * PI).abs() / (4.0 * PI) <= 10.0 * h * h);
    }

    #[test]
    fn classification_invariants() {
        for n in [2, 3] {
            let g = BallGrid::new(n, 1.0 / 16.0).unwrap();
            let h = g.h();
            for idx in 0..g.len() {
                let r = norm(&g.coords(idx), n);
                match g.class(idx) {
                    NodeClass::Interior => assert!(1.0 - r > h),
                    NodeClass::Exterior => assert!(r > 1.0),
                    NodeClass::BoundaryBand => assert!(1.0 - r <= h),
                }
            }
            for bp in g.boundary() {
                assert!(bp.weight > 0.0);
                assert!(g.is_active(bp.owner));
            }
        }
    }

    #[test]
    fn deterministic_construction() {
        let a = BallGrid::new(2, 1.0 / 20.0).unwrap();
        let b = BallGrid::new(2, 1.0 / 20.0).unwrap();
        assert_eq!(a.active(), b.active());
        assert_eq!(a.interior_volume().to_bits(), b.interior_volume().to_bits());
    }
}
