//! Surfaces given as zero sets `w = 0` and the level-set mean curvature
//! `H = Δw/|∇w| - D²w(∇w, ∇w)/|∇w|³`.

use super::{dot, mat_mul, mat_vec, transpose, ParametricSurface, RigidMotion, M3, V3};
use crate::error::{Error, Result};
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// Locus tolerance on `|w|`.
pub const LOCUS_TOLERANCE: f64 = 1e-8;
/// Smallest admissible `|∇w|`.
pub const GRADIENT_FLOOR: f64 = 1e-10;
/// Agreement required between two defining functions or two formulas.
pub const AGREEMENT_TOLERANCE: f64 = 1e-8;
/// Locus points sampled by [`defining_function_invariance`].
pub const INVARIANCE_SAMPLES: usize = 20;

type JetFn = dyn Fn(&V3) -> (f64, V3, M3) + Send + Sync;

/// A scalar function on R³ with analytic gradient and Hessian.
#[derive(Clone)]
pub struct ScalarJet {
    name: String,
    f: Arc<JetFn>,
}

impl std::fmt::Debug for ScalarJet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarJet({})", self.name)
    }
}

impl ScalarJet {
    pub fn new<F>(name: &str, f: F) -> Self
    where
        F: Fn(&V3) -> (f64, V3, M3) + Send + Sync + 'static,
    {
        ScalarJet {
            name: name.to_string(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &V3) -> (f64, V3, M3) {
        (self.f)(x)
    }

    pub fn constant(c: f64) -> Self {
        ScalarJet::new(&format!("{c}"), move |_| (c, [0.0; 3], [[0.0; 3]; 3]))
    }

    /// `1 + x₁²/4`.
    pub fn quadratic_multiplier() -> Self {
        ScalarJet::new("1+x1^2/4", |x| {
            let mut h = [[0.0; 3]; 3];
            h[0][0] = 0.5;
            (1.0 + 0.25 * x[0] * x[0], [0.5 * x[0], 0.0, 0.0], h)
        })
    }

    /// `exp(x₁)`.
    pub fn exp_multiplier() -> Self {
        ScalarJet::new("exp(x1)", |x| {
            let e = x[0].exp();
            let mut h = [[0.0; 3]; 3];
            h[0][0] = e;
            (e, [e, 0.0, 0.0], h)
        })
    }

    /// `x ↦ self(m⁻¹ x)`, the function carried along by the motion `m`.
    pub fn pulled_back(&self, m: RigidMotion) -> Self {
        let inner = self.f.clone();
        let r = m.rotation;
        let rt = transpose(&r);
        ScalarJet {
            name: self.name.clone(),
            f: Arc::new(move |x| {
                let (v, g, h) = inner(&m.inverse_apply(x));
                (v, mat_vec(&r, &g), mat_mul(&mat_mul(&r, &h), &rt))
            }),
        }
    }

    /// Product `m·w` with the product rule for both derivative orders.
    pub fn times(&self, m: &ScalarJet) -> Self {
        let (a, b) = (self.f.clone(), m.f.clone());
        ScalarJet {
            name: format!("({})*({})", m.name, self.name),
            f: Arc::new(move |x| {
                let (w, gw, hw) = a(x);
                let (m, gm, hm) = b(x);
                let g = [m * gw[0] + w * gm[0], m * gw[1] + w * gm[1], m * gw[2] + w * gm[2]];
                let mut h = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        h[i][j] = m * hw[i][j] + gm[i] * gw[j] + gw[i] * gm[j] + w * hm[i][j];
                    }
                }
                (m * w, g, h)
            }),
        }
    }
}

type SamplerFn = dyn Fn(f64, f64) -> V3 + Send + Sync;

/// Zero set of a defining function, with a sampler that maps `[0,1]²` onto a
/// compact piece of the locus.
#[derive(Clone)]
pub struct LevelSetSurface {
    w: ScalarJet,
    sampler: Arc<SamplerFn>,
}

impl std::fmt::Debug for LevelSetSurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LevelSetSurface({})", self.w.name)
    }
}

impl LevelSetSurface {
    pub fn new<S>(w: ScalarJet, sampler: S) -> Self
    where
        S: Fn(f64, f64) -> V3 + Send + Sync + 'static,
    {
        LevelSetSurface {
            w,
            sampler: Arc::new(sampler),
        }
    }

    /// `|x|² - r²`.
    pub fn sphere(r: f64) -> Self {
        let w = ScalarJet::new("sphere", move |x| {
            (dot(x, x) - r * r, [2.0 * x[0], 2.0 * x[1], 2.0 * x[2]], super::diag(2.0, 2.0, 2.0))
        });
        LevelSetSurface::new(w, move |u, v| {
            let z = 1.0 - 2.0 * u;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * PI * v;
            [r * rho * phi.cos(), r * rho * phi.sin(), r * z]
        })
    }

    /// `x₃`.
    pub fn plane() -> Self {
        let w = ScalarJet::new("plane", |x| (x[2], [0.0, 0.0, 1.0], [[0.0; 3]; 3]));
        LevelSetSurface::new(w, |u, v| [2.0 * u - 1.0, 2.0 * v - 1.0, 0.0])
    }

    /// `x₁² + x₂² - cosh²x₃`, sampled on `|x₃| <= 1`.
    pub fn catenoid() -> Self {
        let w = ScalarJet::new("catenoid", |x| {
            let (ch, sh) = (x[2].cosh(), x[2].sinh());
            (
                x[0] * x[0] + x[1] * x[1] - ch * ch,
                [2.0 * x[0], 2.0 * x[1], -2.0 * sh * ch],
                super::diag(2.0, 2.0, -2.0 * (2.0 * x[2]).cosh()),
            )
        });
        LevelSetSurface::new(w, |u, v| {
            let z = 2.0 * u - 1.0;
            let phi = 2.0 * PI * v;
            [z.cosh() * phi.cos(), z.cosh() * phi.sin(), z]
        })
    }

    /// `x₁ sin x₃ - x₂ cos x₃`, sampled on `|s| <= 1`, one turn.
    pub fn helicoid() -> Self {
        let w = ScalarJet::new("helicoid", |x| {
            let (sn, c) = x[2].sin_cos();
            let mut h = [[0.0; 3]; 3];
            h[0][2] = c;
            h[2][0] = c;
            h[1][2] = sn;
            h[2][1] = sn;
            h[2][2] = -x[0] * sn + x[1] * c;
            (x[0] * sn - x[1] * c, [sn, -c, x[0] * c + x[1] * sn], h)
        });
        LevelSetSurface::new(w, |u, v| {
            let s = 2.0 * u - 1.0;
            let t = 2.0 * PI * v;
            [s * t.cos(), s * t.sin(), t]
        })
    }

    /// `x₃ - (x₁² - x₂²)/4`, sampled over the unit disk.
    pub fn graph() -> Self {
        let w = ScalarJet::new("graph", |x| {
            (
                x[2] - 0.25 * (x[0] * x[0] - x[1] * x[1]),
                [-0.5 * x[0], 0.5 * x[1], 1.0],
                super::diag(-0.5, 0.5, 0.0),
            )
        });
        LevelSetSurface::new(w, |u, v| {
            let (s, t) = (u.sqrt(), 2.0 * PI * v);
            let (x, y) = (s * t.cos(), s * t.sin());
            [x, y, 0.25 * (x * x - y * y)]
        })
    }

    pub fn name(&self) -> &str {
        self.w.name()
    }

    pub fn defining_function(&self) -> &ScalarJet {
        &self.w
    }

    /// Same locus with defining function `m·w`.
    pub fn rescaled(&self, m: &ScalarJet) -> Self {
        LevelSetSurface {
            w: self.w.times(m),
            sampler: self.sampler.clone(),
        }
    }

    /// `count` deterministic locus points from a rank-1 lattice.
    pub fn sample_points(&self, count: usize) -> Vec<V3> {
        let golden = 0.5 * (5f64.sqrt() - 1.0);
        (0..count)
            .map(|k| {
                let u = (k as f64 + 0.5) / count as f64;
                let v = (k as f64 * golden).fract();
                (self.sampler)(u, v)
            })
            .collect()
    }
}

/// Level-set mean curvature at a point of the locus.
pub fn mean_curvature_levelset(surface: &LevelSetSurface, point: &V3) -> Result<f64> {
    let (w, g, h) = surface.w.eval(point);
    if !(w.abs() <= LOCUS_TOLERANCE) {
        return Err(Error::OffLocus(w));
    }
    let gn = dot(&g, &g).sqrt();
    if !(gn > GRADIENT_FLOOR) {
        return Err(Error::DegenerateGradient(gn));
    }
    let lap = h[0][0] + h[1][1] + h[2][2];
    let hgg = dot(&g, &mat_vec(&h, &g));
    Ok(lap / gn - hgg / (gn * gn * gn))
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub surface: String,
    pub multiplier: String,
    pub points: usize,
    pub max_difference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares `H` from `w` and from `m·w` at [`INVARIANCE_SAMPLES`] locus
/// points.
pub fn defining_function_invariance(surface: &LevelSetSurface, multiplier: &ScalarJet) -> Result<InvarianceReport> {
    let scaled = surface.rescaled(multiplier);
    let points = surface.sample_points(INVARIANCE_SAMPLES);
    let mut max_difference = 0.0f64;
    for p in &points {
        let (m, _, _) = multiplier.eval(p);
        if !(m > 0.0) {
            return Err(Error::NotPositive(format!("multiplier {} at {p:?}", multiplier.name())));
        }
        let a = mean_curvature_levelset(surface, p)?;
        let b = mean_curvature_levelset(&scaled, p)?;
        max_difference = max_difference.max((a - b).abs());
    }
    Ok(InvarianceReport {
        surface: surface.name().to_string(),
        multiplier: multiplier.name().to_string(),
        points: points.len(),
        max_difference,
        tolerance: AGREEMENT_TOLERANCE,
        pass: max_difference <= AGREEMENT_TOLERANCE,
    })
}

/// Largest gap between the chart formula and the level-set formula at
/// `count` parameter points of `param`, after aligning the two normals.
pub fn levelset_parametric_agreement(param: &ParametricSurface, level: &LevelSetSurface, count: usize) -> Result<f64> {
    let d = param.domain();
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut worst = 0.0f64;
    for k in 0..count {
        let u = (k as f64 + 0.5) / count as f64;
        let v = (k as f64 * golden).fract();
        let s = d.s[0] + u * (d.s[1] - d.s[0]);
        let t = d.t[0] + v * (d.t[1] - d.t[0]);
        let g = param.geometry(s, t);
        let hl = mean_curvature_levelset(level, &g.jet.x)?;
        let (_, grad, _) = level.w.eval(&g.jet.x);
        let sign = if dot(&grad, &g.normal) >= 0.0 { 1.0 } else { -1.0 };
        worst = worst.max((sign * g.chart_curvature - hl).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::Chart;

    #[test]
    fn sphere_curvature_is_two_over_r() {
        let s = LevelSetSurface::sphere(2.0);
        for p in s.sample_points(10) {
            assert!((mean_curvature_levelset(&s, &p).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn catenoid_and_plane_are_minimal() {
        let c = LevelSetSurface::catenoid();
        let ch = 1f64.cosh();
        assert!(mean_curvature_levelset(&c, &[ch, 0.0, 1.0]).unwrap().abs() < 1e-10);
        let p = LevelSetSurface::plane();
        assert_eq!(mean_curvature_levelset(&p, &[0.3, -0.2, 0.0]).unwrap(), 0.0);
        let h = LevelSetSurface::helicoid();
        for x in h.sample_points(20) {
            assert!(mean_curvature_levelset(&h, &x).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn preconditions_are_enforced() {
        let s = LevelSetSurface::sphere(1.0);
        assert!(matches!(mean_curvature_levelset(&s, &[0.0, 0.0, 1.1]), Err(Error::OffLocus(_))));
        let cone = LevelSetSurface::new(
            ScalarJet::new("square", |x| (x[2] * x[2], [0.0, 0.0, 2.0 * x[2]], super::super::diag(0.0, 0.0, 2.0))),
            |u, v| [u, v, 0.0],
        );
        assert!(matches!(
            mean_curvature_levelset(&cone, &[0.1, 0.1, 0.0]),
            Err(Error::DegenerateGradient(_))
        ));
    }

    #[test]
    fn defining_function_does_not_matter() {
        let cases = [
            (LevelSetSurface::sphere(1.5), ScalarJet::constant(2.0)),
            (LevelSetSurface::sphere(1.5), ScalarJet::quadratic_multiplier()),
            (LevelSetSurface::plane(), ScalarJet::exp_multiplier()),
            (LevelSetSurface::catenoid(), ScalarJet::quadratic_multiplier()),
            (LevelSetSurface::helicoid(), ScalarJet::exp_multiplier()),
        ];
        for (s, m) in &cases {
            let r = defining_function_invariance(s, m).unwrap();
            assert!(r.pass, "{r:?}");
            assert_eq!(r.points, INVARIANCE_SAMPLES);
        }
    }

    #[test]
    fn two_curvature_formulas_agree() {
        let sphere = ParametricSurface::new(Chart::Sphere { radius: 2.0 });
        assert!(levelset_parametric_agreement(&sphere, &LevelSetSurface::sphere(2.0), 50).unwrap() < 1e-8);
        let cat = ParametricSurface::new(Chart::Catenoid { half_height: 1.0 });
        assert!(levelset_parametric_agreement(&cat, &LevelSetSurface::catenoid(), 50).unwrap() < 1e-8);
        let hel = ParametricSurface::new(Chart::Helicoid {
            radius: 1.0,
            height: 2.0 * PI,
        });
        assert!(levelset_parametric_agreement(&hel, &LevelSetSurface::helicoid(), 50).unwrap() < 1e-8);
        let graph = ParametricSurface::new(Chart::Graph);
        assert!(levelset_parametric_agreement(&graph, &LevelSetSurface::graph(), 50).unwrap() < 1e-8);
    }

    #[test]
    fn pullback_follows_the_motion() {
        let m = RigidMotion::from_axis_angle([0.0, 1.0, 1.0], 0.4, [1.0, 0.0, -2.0]);
        let w = LevelSetSurface::sphere(1.0).defining_function().pulled_back(m);
        let p = m.apply(&[0.6, 0.0, 0.8]);
        let (v, g, _) = w.eval(&p);
        assert!(v.abs() < 1e-14);
        let expected = m.apply_vector(&[1.2, 0.0, 1.6]);
        for i in 0..3 {
            assert!((g[i] - expected[i]).abs() < 1e-14);
        }
    }
}
