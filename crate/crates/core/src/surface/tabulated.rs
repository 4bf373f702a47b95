//! Surfaces given as a tabulated chart `s,t,x,y,z` on a full tensor grid.
//! Only area and boundary length are supported; curvature would need second
//! derivatives the table does not carry.

use super::{cross, norm, V3};
use crate::error::{Error, Result};
use serde::Deserialize;
use std::io::Read;
use std::path::Path;

/// Relative distance under which two opposite edges are treated as a seam.
const SEAM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Deserialize)]
struct Row {
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedSurface {
    rows: usize,
    cols: usize,
    /// Row-major in `s`, then `t`.
    points: Vec<V3>,
}

impl TabulatedSurface {
    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<Row>() {
            let r = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if ![r.s, r.t, r.x, r.y, r.z].iter().all(|v| v.is_finite()) {
                return Err(Error::Parse("non-finite value in chart table".into()));
            }
            rows.push(r);
        }
        let mut ss: Vec<f64> = rows.iter().map(|r| r.s).collect();
        let mut ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
        ss.sort_by(f64::total_cmp);
        ss.dedup();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        if ss.len() < 2 || ts.len() < 2 || ss.len() * ts.len() != rows.len() {
            return Err(Error::InvalidGeometry(format!(
                "chart table is not a full grid: {} rows for {} x {} parameters",
                rows.len(),
                ss.len(),
                ts.len()
            )));
        }
        let mut points = vec![[f64::NAN; 3]; rows.len()];
        for r in &rows {
            let i = ss.binary_search_by(|v| v.total_cmp(&r.s)).expect("s present");
            let j = ts.binary_search_by(|v| v.total_cmp(&r.t)).expect("t present");
            let k = i * ts.len() + j;
            if !points[k][0].is_nan() {
                return Err(Error::InvalidGeometry(format!("duplicate parameter ({}, {})", r.s, r.t)));
            }
            points[k] = [r.x, r.y, r.z];
        }
        Ok(TabulatedSurface {
            rows: ss.len(),
            cols: ts.len(),
            points,
        })
    }

    fn at(&self, i: usize, j: usize) -> &V3 {
        &self.points[i * self.cols + j]
    }

    /// Sum over grid quads, each split into two triangles.
    pub fn surface_area(&self) -> f64 {
        let mut area = 0.0;
        for i in 0..self.rows - 1 {
            for j in 0..self.cols - 1 {
                let (a, b, c, d) = (self.at(i, j), self.at(i + 1, j), self.at(i + 1, j + 1), self.at(i, j + 1));
                area += triangle(a, b, c) + triangle(a, c, d);
            }
        }
        area
    }

    fn polyline(&self, pts: impl Iterator<Item = V3>) -> f64 {
        let pts: Vec<V3> = pts.collect();
        pts.windows(2)
            .map(|w| norm(&[w[1][0] - w[0][0], w[1][1] - w[0][1], w[1][2] - w[0][2]]))
            .sum()
    }

    fn diameter_scale(&self) -> f64 {
        self.points.iter().map(norm).fold(1.0, f64::max)
    }

    fn edges_coincide(&self, a: &[V3], b: &[V3]) -> bool {
        let tol = SEAM_TOLERANCE * self.diameter_scale();
        a.iter().zip(b).all(|(p, q)| norm(&[p[0] - q[0], p[1] - q[1], p[2] - q[2]]) <= tol)
    }

    /// Perimeter of the four grid edges; a pair of coinciding opposite edges
    /// is a seam and does not count. Collapsed edges (poles) contribute zero.
    pub fn boundary_length(&self) -> f64 {
        let s0: Vec<V3> = (0..self.cols).map(|j| *self.at(0, j)).collect();
        let s1: Vec<V3> = (0..self.cols).map(|j| *self.at(self.rows - 1, j)).collect();
        let t0: Vec<V3> = (0..self.rows).map(|i| *self.at(i, 0)).collect();
        let t1: Vec<V3> = (0..self.rows).map(|i| *self.at(i, self.cols - 1)).collect();
        let mut total = 0.0;
        if !self.edges_coincide(&s0, &s1) {
            total += self.polyline(s0.into_iter()) + self.polyline(s1.into_iter());
        }
        if !self.edges_coincide(&t0, &t1) {
            total += self.polyline(t0.into_iter()) + self.polyline(t1.into_iter());
        }
        total
    }
}

fn triangle(a: &V3, b: &V3, c: &V3) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    0.5 * norm(&cross(&u, &v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::fmt::Write;

    fn catenoid_table(ns: usize, nt: usize) -> String {
        let mut out = String::from("s,t,x,y,z\n");
        for i in 0..=ns {
            let s = -1.0 + 2.0 * i as f64 / ns as f64;
            for j in 0..=nt {
                let t = 2.0 * PI * j as f64 / nt as f64;
                writeln!(out, "{s},{t},{},{},{s}", s.cosh() * t.cos(), s.cosh() * t.sin()).unwrap();
            }
        }
        out
    }

    #[test]
    fn tabulated_catenoid_converges_to_closed_form() {
        let exact_area = 2.0 * PI * (1.0 + 1f64.sinh() * 1f64.cosh());
        let exact_len = 4.0 * PI * 1f64.cosh();
        let coarse = TabulatedSurface::from_reader(catenoid_table(40, 80).as_bytes()).unwrap();
        let fine = TabulatedSurface::from_reader(catenoid_table(80, 160).as_bytes()).unwrap();
        let e1 = (coarse.surface_area() - exact_area).abs();
        let e2 = (fine.surface_area() - exact_area).abs();
        assert!(e2 < e1 / 3.0 && e2 < 1e-2);
        assert!((fine.boundary_length() - exact_len).abs() < 1e-2);
    }

    #[test]
    fn flat_square() {
        let t = TabulatedSurface::from_reader("s,t,x,y,z\n0,0,0,0,0\n0,1,0,1,0\n1,0,1,0,0\n1,1,1,1,0\n".as_bytes())
            .unwrap();
        assert!((t.surface_area() - 1.0).abs() < 1e-15);
        assert!((t.boundary_length() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn incomplete_grid_is_rejected() {
        let r = TabulatedSurface::from_reader("s,t,x,y,z\n0,0,0,0,0\n0,1,0,1,0\n1,0,1,0,0\n".as_bytes());
        assert!(matches!(r, Err(Error::InvalidGeometry(_))));
        assert!(TabulatedSurface::from_reader("s,t,x\n0,0,0\n".as_bytes()).is_err());
    }
}
