//! Sobolev inequality on a surface with the curvature term, and the
//! isoperimetric inequality on minimal surfaces.

use super::{Chart, ParametricSurface, SurfaceField};
use crate::certificate::{Certificate, Environment, ProofPath, Stage};
use crate::error::{Error, Result};
use serde::Serialize;
use std::f64::consts::PI;

/// `n |B_1^n|^{1/n}` for `n = 2`, i.e. `2√π`.
pub const SOBOLEV_CONSTANT_2: f64 = 3.544_907_701_811_032;
/// Roundoff-level slack on the deficit, relative to the left-hand side.
pub const DEFICIT_TOLERANCE: f64 = 1e-6;
/// Minimality gate on `sup |H|`.
pub const MINIMALITY_GATE: f64 = 1e-8;

/// Fixed surface corpus.
pub fn surface_corpus() -> Vec<(String, ParametricSurface)> {
    let charts = [
        Chart::Disk { radius: 1.0 },
        Chart::Annulus { inner: 0.5, outer: 1.0 },
        Chart::Catenoid { half_height: 0.5 },
        Chart::Catenoid { half_height: 1.0 },
        Chart::Catenoid { half_height: 1.5 },
        Chart::Helicoid {
            radius: 1.0,
            height: 2.0 * PI,
        },
        Chart::Helicoid { radius: 2.0, height: PI },
        Chart::Cap {
            radius: 1.0,
            angle: PI / 3.0,
        },
        Chart::Cap {
            radius: 1.0,
            angle: PI / 2.0,
        },
        Chart::Cap {
            radius: 2.0,
            angle: 2.0 * PI / 3.0,
        },
        Chart::Graph,
    ];
    charts
        .into_iter()
        .map(|c| (c.name(), ParametricSurface::new(c)))
        .collect()
}

/// Fixed field corpus; every member is positive on every corpus surface.
pub fn field_corpus() -> Vec<SurfaceField> {
    vec![
        SurfaceField::Constant(1.0),
        SurfaceField::Constant(2.5),
        SurfaceField::Bump,
        SurfaceField::Aniso,
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MichaelSimonTerms {
    /// `∫_Σ √(|∇^Σ f|² + f² H²)`.
    pub gradient_curvature: f64,
    /// `∫_∂Σ f`.
    pub boundary: f64,
    /// `∫_Σ f²`.
    pub l2_squared: f64,
    pub lhs: f64,
    /// `2√π (∫_Σ f²)^{1/2}`.
    pub rhs: f64,
    pub deficit: f64,
    pub min_f: f64,
    pub area: f64,
}

/// Evaluates both sides of the inequality.
pub fn michael_simon_terms(surface: &ParametricSurface, f: &SurfaceField) -> Result<MichaelSimonTerms> {
    let nodes = surface.nodes();
    let min_f = nodes
        .iter()
        .map(|&(s, t, _)| f.jet(surface, s, t).0)
        .chain(surface.boundary_nodes().iter().map(|b| f.jet(surface, b.s, b.t).0))
        .fold(f64::INFINITY, f64::min);
    if !(min_f > 0.0) {
        return Err(Error::NotPositive(format!("{} on {} (min {min_f:e})", f.name(), surface.name())));
    }
    let [gradient_curvature, l2_squared, area] = surface.integrate_n::<3, _>(|p| {
        let (v, fs, ft) = f.jet(surface, p.s, p.t);
        let h = p.mean_curvature;
        [(p.gradient_norm_sq(fs, ft) + v * v * h * h).sqrt(), v * v, 1.0]
    })?;
    let boundary = surface.boundary_integral(f)?;
    let lhs = gradient_curvature + boundary;
    let rhs = SOBOLEV_CONSTANT_2 * l2_squared.sqrt();
    Ok(MichaelSimonTerms {
        gradient_curvature,
        boundary,
        l2_squared,
        lhs,
        rhs,
        deficit: lhs - rhs,
        min_f,
        area,
    })
}

/// Certificate for `∫_Σ √(|∇^Σ f|² + f²H²) + ∫_∂Σ f >= 2√π (∫_Σ f²)^{1/2}`.
pub fn michael_simon_deficit(surface: &ParametricSurface, f: &SurfaceField) -> Result<Certificate> {
    let (min_det, curvature_gap) = surface.validate()?;
    let terms = michael_simon_terms(surface, f)?;
    let q = surface.quadrature();
    let item = format!("{}/{}", surface.name(), f.name());
    let mut cert = Certificate::new(
        ProofPath::MichaelSimon,
        Environment::new(2, 1.0 / (q.order * q.panels_s.max(q.panels_t)) as f64, &item, 0, 1.0),
    );
    cert.push(
        Stage::new("immersion", "det(g) >= 1e-10 and H = -g^{ij} <x_ij, ν> at every node")
            .value("min_metric_det", min_det)
            .value("curvature_gap", curvature_gap)
            .value("area", terms.area)
            .tolerance(super::CURVATURE_CONSISTENCY)
            .pass(true),
    );
    cert.push(
        Stage::new("positivity", "f > 0 on Σ")
            .value("min_f", terms.min_f)
            .pass(terms.min_f > 0.0),
    );
    cert.push(
        Stage::new("terms", "lhs = ∫_Σ √(|∇^Σ f|² + f² H²) + ∫_∂Σ f, rhs = 2√π (∫_Σ f²)^{1/2}")
            .value("gradient_curvature", terms.gradient_curvature)
            .value("boundary", terms.boundary)
            .value("l2_squared", terms.l2_squared)
            .value("lhs", terms.lhs)
            .value("rhs", terms.rhs)
            .pass(terms.lhs.is_finite() && terms.rhs.is_finite()),
    );
    let tol = DEFICIT_TOLERANCE * terms.lhs;
    cert.push(
        Stage::new("sobolev_deficit", "lhs - 2√π (∫_Σ f²)^{1/2} >= 0")
            .value("deficit", terms.deficit)
            .value("relative_deficit", terms.deficit / terms.lhs)
            .tolerance(tol)
            .pass(terms.deficit >= -tol),
    );
    Ok(cert)
}

/// `|∂Σ| - 2√π |Σ|^{1/2}` on a minimal surface.
pub fn minimal_isoperimetric_check(surface: &ParametricSurface) -> Result<f64> {
    surface.validate()?;
    let sup = surface.sup_mean_curvature();
    if !(sup <= MINIMALITY_GATE) {
        return Err(Error::NotMinimal(sup));
    }
    Ok(surface.boundary_length()? - SOBOLEV_CONSTANT_2 * surface.surface_area()?.sqrt())
}
