//! Isoperimetric deficit of polygons and closed triangle meshes.

use crate::error::{Error, Result};
use crate::functionals::sobolev_constant;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub enum Region {
    /// Closed polygon; the last vertex connects back to the first.
    Polygon(Vec<[f64; 2]>),
    Mesh {
        vertices: Vec<[f64; 3]>,
        faces: Vec<[usize; 3]>,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct IsoperimetricReport {
    pub dim: usize,
    pub volume: f64,
    pub perimeter: f64,
    pub deficit: f64,
}

impl Region {
    pub fn square() -> Self {
        Region::Polygon(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    }

    /// Regular polygon inscribed in the unit circle.
    pub fn regular_polygon(edges: usize) -> Self {
        Region::Polygon(
            (0..edges)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / edges as f64;
                    [t.cos(), t.sin()]
                })
                .collect(),
        )
    }

    pub fn unit_cube() -> Self {
        let vertices = (0..8)
            .map(|k| [(k & 1) as f64, (k >> 1 & 1) as f64, (k >> 2 & 1) as f64])
            .collect();
        let faces = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        Region::Mesh { vertices, faces }
    }

    /// Named shapes: `square`, `disk` (4096-gon), `disk:N`, `cube`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "square" => Ok(Self::square()),
            "disk" => Ok(Self::regular_polygon(4096)),
            "cube" => Ok(Self::unit_cube()),
            _ => {
                if let Some(n) = name.strip_prefix("disk:") {
                    let edges: usize = n
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad edge count in {name:?}")))?;
                    if edges < 3 {
                        return Err(Error::InvalidGeometry("a polygon needs at least 3 edges".into()));
                    }
                    return Ok(Self::regular_polygon(edges));
                }
                Err(Error::Unknown {
                    kind: "shape",
                    name: name.to_string(),
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Polygon(_) => 2,
            Region::Mesh { .. } => 3,
        }
    }

    pub fn deficit(&self) -> Result<IsoperimetricReport> {
        self.validate()?;
        let (volume, perimeter) = match self {
            Region::Polygon(v) => polygon_measures(v),
            Region::Mesh { vertices, faces } => mesh_measures(vertices, faces),
        };
        let n = self.dim();
        let deficit = perimeter - sobolev_constant(n) * volume.powf((n as f64 - 1.0) / n as f64);
        Ok(IsoperimetricReport {
            dim: n,
            volume,
            perimeter,
            deficit,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Region::Polygon(v) => validate_polygon(v),
            Region::Mesh { vertices, faces } => validate_mesh(vertices, faces),
        }
    }
}

/// Shoelace area (absolute) and exact edge-length sum.
fn polygon_measures(v: &[[f64; 2]]) -> (f64, f64) {
    let m = v.len();
    let mut area = 0.0;
    let mut perim = 0.0;
    for k in 0..m {
        let a = v[k];
        let b = v[(k + 1) % m];
        area += a[0] * b[1] - a[1] * b[0];
        perim += (b[0] - a[0]).hypot(b[1] - a[1]);
    }
    (0.5 * area.abs(), perim)
}

fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Enclosed volume by the divergence theorem (absolute) and facet area sum.
fn mesh_measures(vertices: &[[f64; 3]], faces: &[[usize; 3]]) -> (f64, f64) {
    let mut vol = 0.0;
    let mut area = 0.0;
    for f in faces {
        let (a, b, c) = (&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
        vol += dot3(a, &cross3(b, c)) / 6.0;
        let nrm = cross3(&sub3(b, a), &sub3(c, a));
        area += 0.5 * dot3(&nrm, &nrm).sqrt();
    }
    (vol.abs(), area)
}

fn orient(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: &[f64; 2], b: &[f64; 2], p: &[f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2], d: &[f64; 2]) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

fn validate_polygon(v: &[[f64; 2]]) -> Result<()> {
    let m = v.len();
    if m < 3 {
        return Err(Error::InvalidGeometry("a polygon needs at least 3 vertices".into()));
    }
    if v.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidGeometry("non-finite vertex".into()));
    }
    for i in 0..m {
        let (a, b) = (&v[i], &v[(i + 1) % m]);
        if a == b {
            return Err(Error::InvalidGeometry(format!("repeated vertex at index {i}")));
        }
        // Sweep on x-extent keeps the check cheap for large, convex inputs.
        let (lo, hi) = (a[0].min(b[0]), a[0].max(b[0]));
        for j in (i + 2)..m {
            if i == 0 && j == m - 1 {
                continue;
            }
            let (c, d) = (&v[j], &v[(j + 1) % m]);
            if c[0].max(d[0]) < lo || c[0].min(d[0]) > hi {
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return Err(Error::InvalidGeometry(format!("edges {i} and {j} intersect")));
            }
        }
    }
    Ok(())
}

fn segment_hits_triangle(p: &[f64; 3], q: &[f64; 3], t: [&[f64; 3]; 3]) -> bool {
    let e1 = sub3(t[1], t[0]);
    let e2 = sub3(t[2], t[0]);
    let dir = sub3(q, p);
    let pv = cross3(&dir, &e2);
    let det = dot3(&e1, &pv);
    if det.abs() < 1e-14 {
        return false;
    }
    let inv = 1.0 / det;
    let tv = sub3(p, t[0]);
    let u = dot3(&tv, &pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let qv = cross3(&tv, &e1);
    let v = dot3(&dir, &qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let s = dot3(&e2, &qv) * inv;
    (0.0..=1.0).contains(&s)
}

fn validate_mesh(vertices: &[[f64; 3]], faces: &[[usize; 3]]) -> Result<()> {
    if faces.len() < 4 {
        return Err(Error::InvalidGeometry("a closed mesh needs at least 4 faces".into()));
    }
    let mut edges: HashMap<(usize, usize), i32> = HashMap::new();
    for (k, f) in faces.iter().enumerate() {
        if f.iter().any(|&i| i >= vertices.len()) {
            return Err(Error::InvalidGeometry(format!("face {k} references a missing vertex")));
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(Error::InvalidGeometry(format!("face {k} is degenerate")));
        }
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            let key = (a.min(b), a.max(b));
            *edges.entry(key).or_insert(0) += if a < b { 1 } else { -1 };
        }
    }
    // Each edge must be traversed once in each direction.
    let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
    for f in faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    for (key, c) in &counts {
        if *c != 2 || edges[key] != 0 {
            return Err(Error::InvalidGeometry(format!(
                "mesh is not watertight and consistently oriented at edge {key:?}"
            )));
        }
    }
    // Pairwise test for faces that share no vertex.
    if faces.len() <= 4096 {
        for (i, f) in faces.iter().enumerate() {
            let tf = [&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]];
            for g in &faces[i + 1..] {
                if f.iter().any(|a| g.contains(a)) {
                    continue;
                }
                let tg = [&vertices[g[0]], &vertices[g[1]], &vertices[g[2]]];
                let hit = (0..3).any(|e| segment_hits_triangle(tf[e], tf[(e + 1) % 3], tg))
                    || (0..3).any(|e| segment_hits_triangle(tg[e], tg[(e + 1) % 3], tf));
                if hit {
                    return Err(Error::InvalidGeometry("mesh self-intersects".into()));
                }
            }
        }
    }
    Ok(())
}

/// Parse a polygon: one `x y` (or `x,y`) vertex per line; `#` starts a comment.
pub fn parse_polygon(text: &str) -> Result<Region> {
    let mut pts = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
        if nums.len() != 2 {
            return Err(Error::Parse(format!("line {}: expected 2 coordinates", ln + 1)));
        }
        pts.push([nums[0], nums[1]]);
    }
    Ok(Region::Polygon(pts))
}

/// Parse an ASCII OFF mesh. Polygonal faces are fan-triangulated.
pub fn parse_off(text: &str) -> Result<Region> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace());
    let header = tokens.next().ok_or_else(|| Error::Parse("empty OFF file".into()))?;
    let mut first = None;
    if header != "OFF" {
        if let Some(rest) = header.strip_prefix("OFF") {
            first = Some(rest.to_string());
        } else {
            return Err(Error::Parse("missing OFF header".into()));
        }
    }
    let mut next_num = |what: &str| -> Result<f64> {
        let tok = match first.take().filter(|s| !s.is_empty()) {
            Some(s) => s,
            None => tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of file reading {what}")))?
                .to_string(),
        };
        tok.parse::<f64>().map_err(|_| Error::Parse(format!("bad {what}: {tok:?}")))
    };
    let nv = next_num("vertex count")? as usize;
    let nf = next_num("face count")? as usize;
    let _ne = next_num("edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        vertices.push([next_num("coordinate")?, next_num("coordinate")?, next_num("coordinate")?]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let k = next_num("face size")? as usize;
        if k < 3 {
            return Err(Error::Parse("face with fewer than 3 vertices".into()));
        }
        let idx: Vec<usize> = (0..k)
            .map(|_| next_num("vertex index").map(|v| v as usize))
            .collect::<Result<_>>()?;
        for t in 1..k - 1 {
            faces.push([idx[0], idx[t], idx[t + 1]]);
        }
    }
    Ok(Region::Mesh { vertices, faces })
}
