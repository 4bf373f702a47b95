//! Parametric surfaces in R³ with analytic charts.
//!
//! Every chart maps a parameter rectangle `[s0, s1] x [t0, t1]` into R³ and
//! supplies first and second derivatives in closed form. Integrals use tensor
//! Gauss-Legendre panels, so they converge spectrally for analytic charts.
//! The unit normal is `x_s x x_t / |x_s x x_t|` and the mean curvature is
//! `H = div ν = -g^{ij} <x_ij, ν>`, which is `2/r` on a sphere with outward
//! normal.

mod inequality;
mod levelset;
mod tabulated;
mod variation;

pub use inequality::{
    field_corpus, michael_simon_deficit, michael_simon_terms, minimal_isoperimetric_check, surface_corpus,
    MichaelSimonTerms, SOBOLEV_CONSTANT_2,
};
pub use levelset::{
    defining_function_invariance, levelset_parametric_agreement, mean_curvature_levelset, InvarianceReport,
    LevelSetSurface, ScalarJet,
};
pub use tabulated::TabulatedSurface;
pub use variation::{first_variation_check, FirstVariation, VectorField, VARIATION_STEP};

use crate::error::{Error, Result};
use crate::numerics::{det_sum, det_sum_n, gauss_legendre};
use std::f64::consts::PI;

pub type V3 = [f64; 3];
pub type M3 = [[f64; 3]; 3];

/// Smallest admissible metric determinant at a quadrature node.
pub const METRIC_FLOOR: f64 = 1e-10;
/// Allowed gap between stored and chart-computed mean curvature.
pub const CURVATURE_CONSISTENCY: f64 = 1e-10;

pub(crate) fn dot(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &V3, b: &V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: &V3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn mat_vec(m: &M3, v: &V3) -> V3 {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

pub(crate) fn transpose(m: &M3) -> M3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

pub(crate) fn mat_mul(a: &M3, b: &M3) -> M3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// Closed-form chart families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Chart {
    /// Flat disk in the plane x₃ = 0, polar chart.
    Disk { radius: f64 },
    /// Flat annulus `inner <= |x| <= outer` in x₃ = 0.
    Annulus { inner: f64, outer: f64 },
    /// Catenoid band `x₁² + x₂² = cosh²x₃`, `|x₃| <= half_height`.
    Catenoid { half_height: f64 },
    /// Helicoid band `(s cos t, s sin t, t)`, `s ∈ [0, radius]`, `t ∈ [0, height]`.
    Helicoid { radius: f64, height: f64 },
    /// Spherical cap of polar angle `angle` around the north pole.
    Cap { radius: f64, angle: f64 },
    /// Closed sphere; the chart poles are not boundary.
    Sphere { radius: f64 },
    /// Graph `x₃ = (x₁² - x₂²)/4` over the unit disk.
    Graph,
}

impl Chart {
    /// Registry lookup. `r` is the radius-like parameter, `band` the height.
    pub fn parse(name: &str, r: Option<f64>, band: Option<f64>) -> Result<Self> {
        let chart = match name {
            "disk" | "plane" => Chart::Disk { radius: r.unwrap_or(1.0) },
            "annulus" => Chart::Annulus {
                inner: band.unwrap_or(0.5),
                outer: r.unwrap_or(1.0),
            },
            "catenoid" => Chart::Catenoid {
                half_height: band.unwrap_or(1.0),
            },
            "helicoid" => Chart::Helicoid {
                radius: r.unwrap_or(1.0),
                height: band.unwrap_or(2.0 * PI),
            },
            "cap" => Chart::Cap {
                radius: r.unwrap_or(1.0),
                angle: band.unwrap_or(PI / 3.0),
            },
            "sphere" => Chart::Sphere { radius: r.unwrap_or(1.0) },
            "graph" | "saddle" => Chart::Graph,
            _ => {
                return Err(Error::Unknown {
                    kind: "surface",
                    name: name.to_string(),
                })
            }
        };
        chart.validate()?;
        Ok(chart)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Chart::Disk { radius } | Chart::Sphere { radius } => radius > 0.0,
            Chart::Annulus { inner, outer } => inner > 0.0 && outer > inner,
            Chart::Catenoid { half_height } => half_height > 0.0,
            Chart::Helicoid { radius, height } => radius > 0.0 && height > 0.0,
            Chart::Cap { radius, angle } => radius > 0.0 && angle > 0.0 && angle < PI,
            Chart::Graph => true,
        };
        if ok && self.params().iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidGeometry(format!("invalid chart parameters {self:?}")))
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            Chart::Disk { radius } | Chart::Sphere { radius } => vec![radius],
            Chart::Annulus { inner, outer } => vec![inner, outer],
            Chart::Catenoid { half_height } => vec![half_height],
            Chart::Helicoid { radius, height } => vec![radius, height],
            Chart::Cap { radius, angle } => vec![radius, angle],
            Chart::Graph => vec![],
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Chart::Disk { radius } => format!("disk-r{radius}"),
            Chart::Annulus { inner, outer } => format!("annulus-{inner}-{outer}"),
            Chart::Catenoid { half_height } => format!("catenoid-h{half_height}"),
            Chart::Helicoid { radius, height } => format!("helicoid-r{radius}-h{height:.4}"),
            Chart::Cap { radius, angle } => format!("cap-r{radius}-a{angle:.4}"),
            Chart::Sphere { radius } => format!("sphere-r{radius}"),
            Chart::Graph => "graph".to_string(),
        }
    }

    pub fn domain(&self) -> ParameterDomain {
        let (s, t, boundary) = match *self {
            Chart::Disk { radius } => ([0.0, radius], [0.0, 2.0 * PI], [false, true, false, false]),
            Chart::Annulus { inner, outer } => ([inner, outer], [0.0, 2.0 * PI], [true, true, false, false]),
            Chart::Catenoid { half_height } => {
                ([-half_height, half_height], [0.0, 2.0 * PI], [true, true, false, false])
            }
            Chart::Helicoid { radius, height } => ([0.0, radius], [0.0, height], [true; 4]),
            Chart::Cap { angle, .. } => ([0.0, angle], [0.0, 2.0 * PI], [false, true, false, false]),
            Chart::Sphere { .. } => ([0.0, PI], [0.0, 2.0 * PI], [false; 4]),
            Chart::Graph => ([0.0, 1.0], [0.0, 2.0 * PI], [false, true, false, false]),
        };
        ParameterDomain { s, t, boundary }
    }

    pub fn is_minimal(&self) -> bool {
        matches!(
            self,
            Chart::Disk { .. } | Chart::Annulus { .. } | Chart::Catenoid { .. } | Chart::Helicoid { .. }
        )
    }

    /// Chart value and derivatives up to order two.
    pub fn jet(&self, s: f64, t: f64) -> ChartJet {
        let (sn, c) = t.sin_cos();
        match *self {
            Chart::Disk { .. } | Chart::Annulus { .. } => ChartJet {
                x: [s * c, s * sn, 0.0],
                xs: [c, sn, 0.0],
                xt: [-s * sn, s * c, 0.0],
                xss: [0.0; 3],
                xst: [-sn, c, 0.0],
                xtt: [-s * c, -s * sn, 0.0],
            },
            Chart::Catenoid { .. } => {
                let (ch, sh) = (s.cosh(), s.sinh());
                ChartJet {
                    x: [ch * c, ch * sn, s],
                    xs: [sh * c, sh * sn, 1.0],
                    xt: [-ch * sn, ch * c, 0.0],
                    xss: [ch * c, ch * sn, 0.0],
                    xst: [-sh * sn, sh * c, 0.0],
                    xtt: [-ch * c, -ch * sn, 0.0],
                }
            }
            Chart::Helicoid { .. } => ChartJet {
                x: [s * c, s * sn, t],
                xs: [c, sn, 0.0],
                xt: [-s * sn, s * c, 1.0],
                xss: [0.0; 3],
                xst: [-sn, c, 0.0],
                xtt: [-s * c, -s * sn, 0.0],
            },
            Chart::Cap { radius: r, .. } | Chart::Sphere { radius: r } => {
                let (sp, cp) = s.sin_cos();
                ChartJet {
                    x: [r * sp * c, r * sp * sn, r * cp],
                    xs: [r * cp * c, r * cp * sn, -r * sp],
                    xt: [-r * sp * sn, r * sp * c, 0.0],
                    xss: [-r * sp * c, -r * sp * sn, -r * cp],
                    xst: [-r * cp * sn, r * cp * c, 0.0],
                    xtt: [-r * sp * c, -r * sp * sn, 0.0],
                }
            }
            Chart::Graph => {
                let (s2, c2) = (2.0 * t).sin_cos();
                ChartJet {
                    x: [s * c, s * sn, 0.25 * s * s * c2],
                    xs: [c, sn, 0.5 * s * c2],
                    xt: [-s * sn, s * c, -0.5 * s * s * s2],
                    xss: [0.0, 0.0, 0.5 * c2],
                    xst: [-sn, c, -s * s2],
                    xtt: [-s * c, -s * sn, -s * s * c2],
                }
            }
        }
    }

    /// Mean curvature in closed form, oriented by `x_s x x_t`.
    pub fn analytic_mean_curvature(&self, s: f64, t: f64) -> f64 {
        match *self {
            Chart::Cap { radius, .. } | Chart::Sphere { radius } => 2.0 / radius,
            Chart::Graph => {
                // (x₁² - x₂²) / (8 W³) with W² = 1 + |x|²/4, upward normal
                let w2 = 1.0 + 0.25 * s * s;
                s * s * (2.0 * t).cos() / (8.0 * w2 * w2.sqrt())
            }
            _ => 0.0,
        }
    }

    /// A function positive in the interior and zero on every boundary edge,
    /// in reference coordinates.
    pub fn boundary_bump(&self) -> ScalarJet {
        let rho2 = |x: &V3| x[0] * x[0] + x[1] * x[1];
        match *self {
            Chart::Disk { radius } => {
                let r2 = radius * radius;
                ScalarJet::new("disk-bump", move |x| {
                    (r2 - rho2(x), [-2.0 * x[0], -2.0 * x[1], 0.0], diag(-2.0, -2.0, 0.0))
                })
            }
            Chart::Graph => ScalarJet::new("graph-bump", move |x| {
                (1.0 - rho2(x), [-2.0 * x[0], -2.0 * x[1], 0.0], diag(-2.0, -2.0, 0.0))
            }),
            Chart::Annulus { inner, outer } => {
                let (a2, b2) = (inner * inner, outer * outer);
                ScalarJet::new("annulus-bump", move |x| {
                    // p(ρ²) = (ρ² - a²)(b² - ρ²)
                    let q = rho2(x);
                    let p = (q - a2) * (b2 - q);
                    let dp = a2 + b2 - 2.0 * q;
                    let g = [2.0 * x[0] * dp, 2.0 * x[1] * dp, 0.0];
                    let mut h = [[0.0; 3]; 3];
                    for i in 0..2 {
                        for j in 0..2 {
                            h[i][j] = -8.0 * x[i] * x[j] + if i == j { 2.0 * dp } else { 0.0 };
                        }
                    }
                    (p, g, h)
                })
            }
            Chart::Catenoid { half_height } => {
                let b2 = half_height * half_height;
                ScalarJet::new("catenoid-bump", move |x| {
                    (b2 - x[2] * x[2], [0.0, 0.0, -2.0 * x[2]], diag(0.0, 0.0, -2.0))
                })
            }
            Chart::Helicoid { radius, height } => {
                let r2 = radius * radius;
                ScalarJet::new("helicoid-bump", move |x| {
                    // p(ρ²) q(x₃) with p = ρ²(R² - ρ²), q = x₃(height - x₃)
                    let r = rho2(x);
                    let p = r * (r2 - r);
                    let dp = r2 - 2.0 * r;
                    let q = x[2] * (height - x[2]);
                    let dq = height - 2.0 * x[2];
                    let gp = [2.0 * x[0] * dp, 2.0 * x[1] * dp, 0.0];
                    let mut h = [[0.0; 3]; 3];
                    for i in 0..2 {
                        for j in 0..2 {
                            h[i][j] = q * (-8.0 * x[i] * x[j] + if i == j { 2.0 * dp } else { 0.0 });
                        }
                        h[i][2] = gp[i] * dq;
                        h[2][i] = gp[i] * dq;
                    }
                    h[2][2] = -2.0 * p;
                    (p * q, [gp[0] * q, gp[1] * q, p * dq], h)
                })
            }
            Chart::Cap { radius, angle } => {
                let z0 = radius * angle.cos();
                ScalarJet::new("cap-bump", move |x| (x[2] - z0, [0.0, 0.0, 1.0], [[0.0; 3]; 3]))
            }
            Chart::Sphere { .. } => ScalarJet::new("one", |_| (1.0, [0.0; 3], [[0.0; 3]; 3])),
        }
    }
}

pub(crate) fn diag(a: f64, b: f64, c: f64) -> M3 {
    [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartJet {
    pub x: V3,
    pub xs: V3,
    pub xt: V3,
    pub xss: V3,
    pub xst: V3,
    pub xtt: V3,
}

/// Parameter rectangle. `boundary` flags the edges `s = s0, s = s1, t = t0,
/// t = t1` that belong to ∂Σ; the others are seams or chart poles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParameterDomain {
    pub s: [f64; 2],
    pub t: [f64; 2],
    pub boundary: [bool; 4],
}

/// Rotation followed by translation, `x ↦ R x + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidMotion {
    pub rotation: M3,
    pub translation: V3,
}

impl RigidMotion {
    pub fn identity() -> Self {
        RigidMotion {
            rotation: diag(1.0, 1.0, 1.0),
            translation: [0.0; 3],
        }
    }

    /// Rodrigues rotation about `axis` (normalized here) by `angle`.
    pub fn from_axis_angle(axis: V3, angle: f64, translation: V3) -> Self {
        let n = norm(&axis);
        let k = [axis[0] / n, axis[1] / n, axis[2] / n];
        let (s, c) = angle.sin_cos();
        let mut r = [[0.0; 3]; 3];
        let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = c * if i == j { 1.0 } else { 0.0 } + s * kx[i][j] + (1.0 - c) * k[i] * k[j];
            }
        }
        RigidMotion {
            rotation: r,
            translation,
        }
    }

    pub fn apply(&self, x: &V3) -> V3 {
        let y = mat_vec(&self.rotation, x);
        [y[0] + self.translation[0], y[1] + self.translation[1], y[2] + self.translation[2]]
    }

    pub fn apply_vector(&self, v: &V3) -> V3 {
        mat_vec(&self.rotation, v)
    }

    pub fn inverse_apply(&self, y: &V3) -> V3 {
        let d = [y[0] - self.translation[0], y[1] - self.translation[1], y[2] - self.translation[2]];
        mat_vec(&transpose(&self.rotation), &d)
    }

    pub fn compose(&self, after: &RigidMotion) -> RigidMotion {
        RigidMotion {
            rotation: mat_mul(&after.rotation, &self.rotation),
            translation: after.apply(&self.translation),
        }
    }
}

/// Tensor Gauss rule: `order` points per panel, `panels` panels per direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Quadrature {
    pub order: usize,
    pub panels_s: usize,
    pub panels_t: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            order: 12,
            panels_s: 4,
            panels_t: 8,
        }
    }
}

impl Quadrature {
    pub fn doubled(self) -> Self {
        Quadrature {
            panels_s: 2 * self.panels_s,
            panels_t: 2 * self.panels_t,
            ..self
        }
    }
}

/// Composite Gauss nodes and weights on `[a, b]`.
fn composite(a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.0.len());
    for p in 0..panels {
        let lo = a + p as f64 * width;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            out.push((lo + 0.5 * width * (x + 1.0), 0.5 * width * w));
        }
    }
    out
}

/// Geometry of the surface at one parameter point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointGeometry {
    pub s: f64,
    pub t: f64,
    pub jet: ChartJet,
    /// Metric coefficients `E, F, G`.
    pub metric: [f64; 3],
    pub metric_det: f64,
    pub normal: V3,
    /// Mean curvature from the second fundamental form of the chart.
    pub chart_curvature: f64,
    /// Stored closed-form mean curvature.
    pub mean_curvature: f64,
}

impl PointGeometry {
    pub fn area_element(&self) -> f64 {
        self.metric_det.sqrt()
    }

    /// `|∇^Σ f|²` from the chart derivatives `(f_s, f_t)`.
    pub fn gradient_norm_sq(&self, fs: f64, ft: f64) -> f64 {
        let [e, f, g] = self.metric;
        ((g * fs * fs - 2.0 * f * fs * ft + e * ft * ft) / self.metric_det).max(0.0)
    }

    /// Surface divergence of a vector field with ambient Jacobian `dv`.
    pub fn divergence(&self, dv: &M3) -> f64 {
        let [e, f, g] = self.metric;
        let a = mat_vec(dv, &self.jet.xs);
        let b = mat_vec(dv, &self.jet.xt);
        (g * dot(&self.jet.xs, &a) - f * (dot(&self.jet.xs, &b) + dot(&self.jet.xt, &a)) + e * dot(&self.jet.xt, &b))
            / self.metric_det
    }
}

/// A boundary quadrature node: parameter point and line-element weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNode {
    pub s: f64,
    pub t: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricSurface {
    chart: Chart,
    motion: RigidMotion,
    quadrature: Quadrature,
}

impl ParametricSurface {
    pub fn new(chart: Chart) -> Self {
        ParametricSurface {
            chart,
            motion: RigidMotion::identity(),
            quadrature: Quadrature::default(),
        }
    }

    pub fn from_name(name: &str, r: Option<f64>, band: Option<f64>) -> Result<Self> {
        Ok(Self::new(Chart::parse(name, r, band)?))
    }

    pub fn with_quadrature(mut self, q: Quadrature) -> Self {
        assert!(q.order >= 1 && q.panels_s >= 1 && q.panels_t >= 1);
        self.quadrature = q;
        self
    }

    pub fn transformed(mut self, m: &RigidMotion) -> Self {
        self.motion = self.motion.compose(m);
        self
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn motion(&self) -> &RigidMotion {
        &self.motion
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn domain(&self) -> ParameterDomain {
        self.chart.domain()
    }

    pub fn name(&self) -> String {
        self.chart.name()
    }

    /// Chart jet after the rigid motion.
    pub fn jet(&self, s: f64, t: f64) -> ChartJet {
        let r = self.chart.jet(s, t);
        let m = &self.motion;
        ChartJet {
            x: m.apply(&r.x),
            xs: m.apply_vector(&r.xs),
            xt: m.apply_vector(&r.xt),
            xss: m.apply_vector(&r.xss),
            xst: m.apply_vector(&r.xst),
            xtt: m.apply_vector(&r.xtt),
        }
    }

    pub fn geometry(&self, s: f64, t: f64) -> PointGeometry {
        let jet = self.jet(s, t);
        let e = dot(&jet.xs, &jet.xs);
        let f = dot(&jet.xs, &jet.xt);
        let g = dot(&jet.xt, &jet.xt);
        let n = cross(&jet.xs, &jet.xt);
        let len = norm(&n);
        let normal = [n[0] / len, n[1] / len, n[2] / len];
        // the cross product norm is less cancellation-prone than EG - F²
        let det = len * len;
        let l = dot(&jet.xss, &normal);
        let mm = dot(&jet.xst, &normal);
        let nn = dot(&jet.xtt, &normal);
        PointGeometry {
            s,
            t,
            jet,
            metric: [e, f, g],
            metric_det: det,
            normal,
            chart_curvature: -(g * l - 2.0 * f * mm + e * nn) / det,
            mean_curvature: self.chart.analytic_mean_curvature(s, t),
        }
    }

    /// Interior quadrature nodes `(s, t, parameter weight)` in a fixed order.
    pub fn nodes(&self) -> Vec<(f64, f64, f64)> {
        let q = self.quadrature;
        let rule = gauss_legendre(q.order);
        let d = self.domain();
        let ss = composite(d.s[0], d.s[1], q.panels_s, &rule);
        let ts = composite(d.t[0], d.t[1], q.panels_t, &rule);
        let mut out = Vec::with_capacity(ss.len() * ts.len());
        for &(s, ws) in &ss {
            for &(t, wt) in &ts {
                out.push((s, t, ws * wt));
            }
        }
        out
    }

    /// Boundary quadrature nodes over the flagged edges, weights including
    /// the line element.
    pub fn boundary_nodes(&self) -> Vec<BoundaryNode> {
        let q = self.quadrature;
        let rule = gauss_legendre(q.order);
        let d = self.domain();
        let mut out = Vec::new();
        for (edge, &flag) in d.boundary.iter().enumerate() {
            if !flag {
                continue;
            }
            if edge < 2 {
                let s = d.s[edge];
                for (t, w) in composite(d.t[0], d.t[1], q.panels_t, &rule) {
                    let j = self.jet(s, t);
                    out.push(BoundaryNode {
                        s,
                        t,
                        weight: w * norm(&j.xt),
                    });
                }
            } else {
                let t = d.t[edge - 2];
                for (s, w) in composite(d.s[0], d.s[1], q.panels_s, &rule) {
                    let j = self.jet(s, t);
                    out.push(BoundaryNode {
                        s,
                        t,
                        weight: w * norm(&j.xs),
                    });
                }
            }
        }
        out
    }

    /// Checks the immersion and curvature self-consistency invariants at
    /// every quadrature node. Returns `(min det, max curvature gap)`.
    pub fn validate(&self) -> Result<(f64, f64)> {
        let nodes = self.nodes();
        let mut min_det = f64::INFINITY;
        let mut max_gap = 0.0f64;
        for &(s, t, _) in &nodes {
            let g = self.geometry(s, t);
            min_det = min_det.min(g.metric_det);
            max_gap = max_gap.max((g.chart_curvature - g.mean_curvature).abs());
        }
        if !(min_det >= METRIC_FLOOR) {
            return Err(Error::DegenerateMetric(min_det));
        }
        if !(max_gap <= CURVATURE_CONSISTENCY) {
            return Err(Error::InvalidGeometry(format!(
                "stored mean curvature differs from the chart by {max_gap:e}"
            )));
        }
        Ok((min_det, max_gap))
    }

    /// `∫_Σ g dA` where `g` sees the full point geometry.
    pub fn integrate<G>(&self, g: G) -> Result<f64>
    where
        G: Fn(&PointGeometry) -> f64 + Sync,
    {
        Ok(self.integrate_n::<1, _>(|p| [g(p)])?[0])
    }

    /// Several surface integrals in one pass with a fixed reduction order.
    pub fn integrate_n<const N: usize, G>(&self, g: G) -> Result<[f64; N]>
    where
        G: Fn(&PointGeometry) -> [f64; N] + Sync,
    {
        self.validate()?;
        let nodes = self.nodes();
        Ok(det_sum_n::<N, _>(nodes.len(), |k| {
            let (s, t, w) = nodes[k];
            let p = self.geometry(s, t);
            let scale = w * p.area_element();
            g(&p).map(|v| v * scale)
        }))
    }

    pub fn surface_area(&self) -> Result<f64> {
        self.integrate(|_| 1.0)
    }

    pub fn surface_integral(&self, f: &SurfaceField) -> Result<f64> {
        self.integrate(|p| f.value(self, p))
    }

    /// `∫_∂Σ g ds` over the flagged edges.
    pub fn boundary_integrate<G>(&self, g: G) -> Result<f64>
    where
        G: Fn(&PointGeometry) -> f64 + Sync,
    {
        self.validate()?;
        let nodes = self.boundary_nodes();
        Ok(det_sum(nodes.len(), |k| {
            let b = nodes[k];
            b.weight * g(&self.geometry(b.s, b.t))
        }))
    }

    pub fn boundary_length(&self) -> Result<f64> {
        self.boundary_integrate(|_| 1.0)
    }

    pub fn boundary_integral(&self, f: &SurfaceField) -> Result<f64> {
        self.boundary_integrate(|p| f.value(self, p))
    }

    /// `sup |H|` over the quadrature nodes.
    pub fn sup_mean_curvature(&self) -> f64 {
        self.nodes()
            .iter()
            .map(|&(s, t, _)| {
                let g = self.geometry(s, t);
                g.mean_curvature.abs().max(g.chart_curvature.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Boundary bump of [`Chart::boundary_bump`] in ambient coordinates.
    pub fn boundary_bump(&self) -> ScalarJet {
        self.chart.boundary_bump().pulled_back(self.motion)
    }
}

/// Positive functions on Σ. They are defined through the chart and the
/// reference (unmoved) embedding, so rigid motions leave them unchanged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurfaceField {
    Constant(f64),
    /// `2 - σ²` with `σ` the normalized first chart parameter.
    Bump,
    /// `exp(x₁ / 2)` in reference coordinates.
    Aniso,
}

impl SurfaceField {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "const1" | "const" => Ok(SurfaceField::Constant(1.0)),
            "bump" | "bump1" => Ok(SurfaceField::Bump),
            "aniso" => Ok(SurfaceField::Aniso),
            _ => name
                .strip_prefix("const")
                .and_then(|c| c.parse::<f64>().ok())
                .filter(|c| *c > 0.0 && c.is_finite())
                .map(SurfaceField::Constant)
                .ok_or_else(|| Error::Unknown {
                    kind: "surface field",
                    name: name.to_string(),
                }),
        }
    }

    pub fn name(&self) -> String {
        match self {
            SurfaceField::Constant(c) if *c == 1.0 => "const1".to_string(),
            SurfaceField::Constant(c) => format!("const{c}"),
            SurfaceField::Bump => "bump".to_string(),
            SurfaceField::Aniso => "aniso".to_string(),
        }
    }

    /// Value and chart derivatives `(g, g_s, g_t)`.
    pub fn jet(&self, surface: &ParametricSurface, s: f64, t: f64) -> (f64, f64, f64) {
        match *self {
            SurfaceField::Constant(c) => (c, 0.0, 0.0),
            SurfaceField::Bump => {
                let d = surface.domain();
                let width = d.s[1] - d.s[0];
                let sigma = (s - d.s[0]) / width;
                (2.0 - sigma * sigma, -2.0 * sigma / width, 0.0)
            }
            SurfaceField::Aniso => {
                let r = surface.chart().jet(s, t);
                let g = (0.5 * r.x[0]).exp();
                (g, 0.5 * g * r.xs[0], 0.5 * g * r.xt[0])
            }
        }
    }

    pub fn value(&self, surface: &ParametricSurface, p: &PointGeometry) -> f64 {
        self.jet(surface, p.s, p.t).0
    }

    /// `|∇^Σ f|` at a point.
    pub fn gradient_norm(&self, surface: &ParametricSurface, p: &PointGeometry) -> f64 {
        let (_, fs, ft) = self.jet(surface, p.s, p.t);
        p.gradient_norm_sq(fs, ft).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catenoid(h: f64) -> ParametricSurface {
        ParametricSurface::new(Chart::Catenoid { half_height: h })
    }

    #[test]
    fn catenoid_band_closed_forms() {
        let s = catenoid(1.0);
        let (sh, ch) = (1f64.sinh(), 1f64.cosh());
        assert!((s.surface_area().unwrap() - 2.0 * PI * (1.0 + sh * ch)).abs() < 1e-8);
        assert!((s.boundary_length().unwrap() - 4.0 * PI * ch).abs() < 1e-8);
    }

    #[test]
    fn flat_disk_and_helicoid_areas() {
        let d = ParametricSurface::new(Chart::Disk { radius: 1.0 });
        assert!((d.surface_area().unwrap() - PI).abs() < 1e-12);
        assert!((d.boundary_length().unwrap() - 2.0 * PI).abs() < 1e-12);
        let h = ParametricSurface::from_name("helicoid", None, None).unwrap();
        let exact = PI * (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln());
        assert!((h.surface_area().unwrap() - exact).abs() < 1e-10);
        // axis 2π, helix 2π√2, two radial segments of length 1
        let edges = 2.0 * PI + 2.0 * PI * 2f64.sqrt() + 2.0;
        assert!((h.boundary_length().unwrap() - edges).abs() < 1e-10);
    }

    #[test]
    fn stored_curvature_matches_second_fundamental_form() {
        for (_, s) in surface_corpus() {
            let (det, gap) = s.validate().unwrap();
            assert!(det >= METRIC_FLOOR && gap <= CURVATURE_CONSISTENCY);
        }
        let sphere = ParametricSurface::new(Chart::Sphere { radius: 2.0 });
        let g = sphere.geometry(0.7, 1.3);
        assert!((g.chart_curvature - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_panels_is_converged() {
        for (_, s) in surface_corpus() {
            let a = s.surface_area().unwrap();
            let b = s.clone().with_quadrature(s.quadrature().doubled()).surface_area().unwrap();
            assert!((a - b).abs() <= 1e-8, "{}: {a} vs {b}", s.name());
        }
    }

    #[test]
    fn sphere_area() {
        let s = ParametricSurface::new(Chart::Sphere { radius: 2.0 });
        assert!((s.surface_area().unwrap() - 16.0 * PI).abs() < 1e-10);
        assert_eq!(s.boundary_length().unwrap(), 0.0);
    }

    #[test]
    fn rigid_motion_preserves_integrals() {
        let m = RigidMotion::from_axis_angle([1.0, 2.0, -0.5], 0.83, [0.3, -1.2, 2.0]);
        for (_, s) in surface_corpus() {
            let moved = s.clone().transformed(&m);
            for f in field_corpus() {
                let a = s.surface_integral(&f).unwrap();
                let b = moved.surface_integral(&f).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
                let a = s.boundary_integral(&f).unwrap();
                let b = moved.boundary_integral(&f).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
            let p = moved.geometry(0.4, 0.9);
            let q = s.geometry(0.4, 0.9);
            assert!((p.chart_curvature - q.chart_curvature).abs() < 1e-10);
        }
    }

    #[test]
    fn surface_gradient_of_bump_on_disk_is_radial_derivative() {
        let d = ParametricSurface::new(Chart::Disk { radius: 1.0 });
        let p = d.geometry(0.6, 2.0);
        // f = 2 - r² so |∇f| = 2r
        assert!((SurfaceField::Bump.gradient_norm(&d, &p) - 1.2).abs() < 1e-14);
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(Chart::parse("torus", None, None).is_err());
        assert!(Chart::parse("cap", None, Some(4.0)).is_err());
        assert!(SurfaceField::parse("const-1").is_err());
        assert_eq!(SurfaceField::parse("const2.5").unwrap(), SurfaceField::Constant(2.5));
    }
}
