//! First variation of area: `d/ds |(id + sV)(Σ)|` at `s = 0` against
//! `∫_Σ H <V, ν>` for fields vanishing on ∂Σ.

use super::{cross, dot, mat_vec, norm, ParametricSurface, ScalarJet, M3, V3};
use crate::error::{Error, Result};
use crate::numerics::det_sum_n;
use serde::Serialize;
use std::sync::Arc;

/// Central difference step.
pub const VARIATION_STEP: f64 = 1e-4;
/// Relative gap allowed between the difference quotient and the integral.
pub const VARIATION_TOLERANCE: f64 = 1e-4;
/// `|V|` allowed at boundary quadrature nodes.
pub const BOUNDARY_VANISHING: f64 = 1e-10;

type FieldFn = dyn Fn(&V3) -> (V3, M3) + Send + Sync;

/// Vector field on R³ with its Jacobian `DV[i][j] = ∂_j V_i`.
#[derive(Clone)]
pub struct VectorField {
    name: String,
    f: Arc<FieldFn>,
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VectorField({})", self.name)
    }
}

impl VectorField {
    pub fn new<F>(name: &str, f: F) -> Self
    where
        F: Fn(&V3) -> (V3, M3) + Send + Sync + 'static,
    {
        VectorField {
            name: name.to_string(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &V3) -> (V3, M3) {
        (self.f)(x)
    }

    /// `η(x)·a(x)` for a linear field `a(x) = A x`.
    fn bump_times_linear(name: &str, eta: ScalarJet, a: M3) -> Self {
        VectorField::new(name, move |x| {
            let (e, ge, _) = eta.eval(x);
            let ax = mat_vec(&a, x);
            let mut dv = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    dv[i][j] = ax[i] * ge[j] + e * a[i][j];
                }
            }
            ([e * ax[0], e * ax[1], e * ax[2]], dv)
        })
    }

    /// `η(x)·x` with `η` the surface's boundary bump.
    pub fn radial_bump(surface: &ParametricSurface) -> Self {
        Self::bump_times_linear("radial-bump", surface.boundary_bump(), super::diag(1.0, 1.0, 1.0))
    }

    /// `η(x)·(e₃ x x)`, tangential on surfaces of revolution about the x₃ axis.
    pub fn rotation_bump(surface: &ParametricSurface) -> Self {
        let a = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        Self::bump_times_linear("rotation-bump", surface.boundary_bump(), a)
    }

    /// Constant field; does not vanish on any boundary.
    pub fn constant(v: V3) -> Self {
        VectorField::new("constant", move |_| (v, [[0.0; 3]; 3]))
    }

    pub fn parse(name: &str, surface: &ParametricSurface) -> Result<Self> {
        match name {
            "radial-bump" => Ok(Self::radial_bump(surface)),
            "rotation-bump" => Ok(Self::rotation_bump(surface)),
            "translation" => Ok(Self::constant([0.0, 0.0, 1.0])),
            _ => Err(Error::Unknown {
                kind: "vector field",
                name: name.to_string(),
            }),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FirstVariation {
    pub surface: String,
    pub field: String,
    /// Central difference of the deformed area.
    pub derivative: f64,
    /// `∫_Σ H <V, ν>`.
    pub integral: f64,
    /// `∫_Σ |DV|`, the magnitude the gap is measured against. It bounds the
    /// derivative and stays positive for tangential fields.
    pub scale: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares the derivative of area along `V` with the curvature integral.
pub fn first_variation_check(surface: &ParametricSurface, v: &VectorField) -> Result<FirstVariation> {
    surface.validate()?;
    let worst = surface
        .boundary_nodes()
        .iter()
        .map(|b| norm(&v.eval(&surface.jet(b.s, b.t).x).0))
        .fold(0.0, f64::max);
    if !(worst <= BOUNDARY_VANISHING) {
        return Err(Error::NonVanishingBoundary(worst));
    }
    let nodes = surface.nodes();
    let eps = VARIATION_STEP;
    let [plus, minus, integral, scale] = det_sum_n::<4, _>(nodes.len(), |k| {
        let (s, t, w) = nodes[k];
        let p = surface.geometry(s, t);
        let (val, dv) = v.eval(&p.jet.x);
        let a = mat_vec(&dv, &p.jet.xs);
        let b = mat_vec(&dv, &p.jet.xt);
        let deformed = |e: f64| {
            let xs = [p.jet.xs[0] + e * a[0], p.jet.xs[1] + e * a[1], p.jet.xs[2] + e * a[2]];
            let xt = [p.jet.xt[0] + e * b[0], p.jet.xt[1] + e * b[1], p.jet.xt[2] + e * b[2]];
            norm(&cross(&xs, &xt))
        };
        let da = w * p.area_element();
        [
            w * deformed(eps),
            w * deformed(-eps),
            da * p.mean_curvature * dot(&val, &p.normal),
            da * dv.iter().flatten().map(|d| d * d).sum::<f64>().sqrt(),
        ]
    });
    let derivative = (plus - minus) / (2.0 * eps);
    let gap = (derivative - integral).abs();
    let relative_gap = gap / scale.max(integral.abs()).max(f64::MIN_POSITIVE);
    Ok(FirstVariation {
        surface: surface.name(),
        field: v.name().to_string(),
        derivative,
        integral,
        scale,
        gap,
        relative_gap,
        tolerance: VARIATION_TOLERANCE,
        pass: relative_gap <= VARIATION_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{Chart, RigidMotion};
    use std::f64::consts::PI;

    #[test]
    fn sphere_cap_radial_variation_matches_curvature_integral() {
        let cap = ParametricSurface::new(Chart::Cap {
            radius: 1.5,
            angle: PI / 3.0,
        });
        let r = first_variation_check(&cap, &VectorField::radial_bump(&cap)).unwrap();
        assert!(r.derivative > 0.0 && r.integral > 0.0);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn tangential_variation_is_stationary() {
        let cap = ParametricSurface::new(Chart::Cap {
            radius: 1.0,
            angle: PI / 2.0,
        });
        let r = first_variation_check(&cap, &VectorField::rotation_bump(&cap)).unwrap();
        assert!(r.integral.abs() < 1e-14);
        assert!(r.derivative.abs() < 1e-9 * r.scale, "{r:?}");
    }

    #[test]
    fn minimal_surfaces_are_critical() {
        for chart in [
            Chart::Catenoid { half_height: 1.0 },
            Chart::Helicoid {
                radius: 1.0,
                height: 2.0 * PI,
            },
            Chart::Annulus { inner: 0.5, outer: 1.0 },
        ] {
            let s = ParametricSurface::new(chart);
            let r = first_variation_check(&s, &VectorField::radial_bump(&s)).unwrap();
            // the difference quotient carries an O(ε²) truncation error
            assert!(r.pass && r.derivative.abs() < 1e-5 * r.scale, "{r:?}");
        }
    }

    #[test]
    fn graph_variation_with_moved_chart() {
        let m = RigidMotion::from_axis_angle([1.0, 1.0, 0.0], 0.3, [0.0, 0.5, 0.0]);
        let g = ParametricSurface::new(Chart::Graph).transformed(&m);
        let r = first_variation_check(&g, &VectorField::radial_bump(&g)).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn boundary_must_be_fixed() {
        let s = ParametricSurface::new(Chart::Catenoid { half_height: 1.0 });
        assert!(matches!(
            first_variation_check(&s, &VectorField::constant([0.0, 0.0, 1.0])),
            Err(Error::NonVanishingBoundary(_))
        ));
    }
}
