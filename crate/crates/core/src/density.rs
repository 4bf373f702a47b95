//! The clamped densities `ρ_j(s) = 1 / (c_j √max{1 - s, 1/j})` on the unit
//! ball of R³, their normalizers `c_j` and the constants
//! `α_j = sup_{z ∈ [0,1)} ∫_{-√(1-z²)}^{√(1-z²)} ρ_j(z² + y²) dy`.

use crate::certificate::{Certificate, Environment, ProofPath, Stage};
use crate::error::{Error, Result};
use crate::numerics::integrate_adaptive;
use crate::surface::{michael_simon_terms, ParametricSurface, SurfaceField};
use serde::Serialize;
use std::f64::consts::PI;

pub const J_MAX: u64 = 1_000_000;
/// Relative tolerance of every 1D quadrature here.
pub const QUADRATURE_TOLERANCE: f64 = 1e-12;
/// Points of the initial scan for the sup over `z`.
pub const ALPHA_SCAN: usize = 512;
/// `j` values checked by [`alpha_chain_check`].
pub const CHAIN_J: [u64; 4] = [1, 10, 100, 1000];
/// Slack on the chain inequality, relative to its right-hand side.
pub const CHAIN_TOLERANCE: f64 = 1e-6;
/// Allowed relative gap between `2 α_j^{-1/2}` at `j = 1000` and `2√π`.
pub const LIMIT_TOLERANCE: f64 = 0.01;

fn check_j(j: u64) -> Result<()> {
    if (1..=J_MAX).contains(&j) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("j = {j} outside [1, {J_MAX}]")))
    }
}

/// Radius where the clamp switches on, `√(1 - 1/j)`.
fn clamp_radius(j: u64) -> f64 {
    (1.0 - 1.0 / j as f64).sqrt()
}

/// `∫_{B̄₁³} 1/√max{1 - |ξ|², 1/j} dξ` as a radial integral split at the clamp.
pub fn compute_c(j: u64, n: usize) -> Result<f64> {
    check_j(j)?;
    if n != 2 {
        return Err(Error::UnsupportedDimension { got: n, supported: "2" });
    }
    let rc = clamp_radius(j);
    let sj = (j as f64).sqrt();
    let inner = integrate_adaptive(|r| r * r / (1.0 - r * r).sqrt(), 0.0, rc, QUADRATURE_TOLERANCE);
    let outer = integrate_adaptive(|r| sj * r * r, rc, 1.0, QUADRATURE_TOLERANCE);
    Ok(4.0 * PI * (inner + outer))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityFamily {
    pub j: u64,
    pub n: usize,
    pub c: f64,
    pub alpha: f64,
    /// Maximizing `z` of the slice integral.
    pub alpha_at: f64,
}

impl DensityFamily {
    pub fn new(j: u64) -> Result<Self> {
        let c = compute_c(j, 2)?;
        let mut fam = DensityFamily {
            j,
            n: 2,
            c,
            alpha: f64::NAN,
            alpha_at: f64::NAN,
        };
        let (z, a) = compute_alpha(&fam);
        fam.alpha = a;
        fam.alpha_at = z;
        Ok(fam)
    }

    pub fn pi_over_c(&self) -> f64 {
        PI / self.c
    }

    /// `∫_{B̄₁³} ρ_j(|ξ|²) dξ`, which is 1 by construction of `c_j`.
    pub fn normalization(&self) -> f64 {
        let rc = clamp_radius(self.j);
        let f = |r: f64| 4.0 * PI * r * r * rho(r * r, self);
        integrate_adaptive(f, 0.0, rc, QUADRATURE_TOLERANCE) + integrate_adaptive(f, rc, 1.0, QUADRATURE_TOLERANCE)
    }

    /// `∫_{-√(1-z²)}^{√(1-z²)} ρ_j(z² + y²) dy`, split at the clamp.
    pub fn slice_integral(&self, z: f64) -> f64 {
        let a2 = (1.0 - z * z).max(0.0);
        let a = a2.sqrt();
        let yk2 = a2 - 1.0 / self.j as f64;
        let f = |y: f64| rho(z * z + y * y, self);
        if yk2 <= 0.0 {
            return 2.0 * integrate_adaptive(f, 0.0, a, QUADRATURE_TOLERANCE);
        }
        let yk = yk2.sqrt();
        2.0 * (integrate_adaptive(f, 0.0, yk, QUADRATURE_TOLERANCE) + integrate_adaptive(f, yk, a, QUADRATURE_TOLERANCE))
    }
}

/// `ρ_j(s)`.
pub fn rho(s: f64, family: &DensityFamily) -> f64 {
    1.0 / (family.c * (1.0 - s).max(1.0 / family.j as f64).sqrt())
}

/// `(argmax, α_j)` by a uniform scan of `[0, 1)` and golden-section search
/// in the bracket around the best scan point.
pub fn compute_alpha(family: &DensityFamily) -> (f64, f64) {
    let step = 1.0 / ALPHA_SCAN as f64;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..ALPHA_SCAN {
        let v = family.slice_integral(i as f64 * step);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = (best_i as f64 - 1.0).max(0.0) * step;
    let mut hi = ((best_i + 1) as f64 * step).min(1.0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (family.slice_integral(x1), family.slice_integral(x2));
    while hi - lo > 1e-12 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = family.slice_integral(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = family.slice_integral(x1);
        }
    }
    // the endpoint z = 0 is often the maximizer; keep the best value seen
    let (z, v) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if v >= best {
        (z, v)
    } else {
        (best_i as f64 * step, best)
    }
}

/// Parses `1,10,100` or `1-20` or a single value.
pub fn parse_j_list(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::Parse(format!("invalid j list '{spec}'"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once('-') {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            check_j(a)?;
            check_j(b)?;
            out.extend(a..=b);
        } else {
            let j: u64 = part.parse().map_err(|_| bad())?;
            check_j(j)?;
            out.push(j);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Certificate for `2 α_j^{-1/2} (∫_Σ f²)^{1/2} <= ∫_∂Σ f + ∫_Σ √(|∇^Σ f|² + f²H²)`
/// at each `j` of [`CHAIN_J`].
pub fn alpha_chain_check(surface: &ParametricSurface, f: &SurfaceField) -> Result<Certificate> {
    alpha_chain_check_with(surface, f, &CHAIN_J)
}

pub fn alpha_chain_check_with(surface: &ParametricSurface, f: &SurfaceField, js: &[u64]) -> Result<Certificate> {
    let terms = michael_simon_terms(surface, f)?;
    let item = format!("{}/{}", surface.name(), f.name());
    let mut cert = Certificate::new(ProofPath::AlphaChain, Environment::new(2, 0.0, &item, 0, 1.0));
    let rhs = terms.lhs;
    let norm = terms.l2_squared.sqrt();
    let mut last = None;
    for &j in js {
        let fam = DensityFamily::new(j)?;
        let constant = 2.0 / fam.alpha.sqrt();
        let lhs = constant * norm;
        let tol = CHAIN_TOLERANCE * rhs;
        cert.push(
            Stage::new(
                &format!("alpha_j{j}"),
                "2 α_j^{-1/2} (∫_Σ f²)^{1/2} <= ∫_∂Σ f + ∫_Σ √(|∇^Σ f|² + f²H²)",
            )
            .value("alpha", fam.alpha)
            .value("c", fam.c)
            .value("pi_over_c", fam.pi_over_c())
            .value("constant", constant)
            .value("lhs", lhs)
            .value("rhs", rhs)
            .value("slack", rhs - lhs)
            .value("implied_by_sobolev", if fam.alpha >= 1.0 / PI { 1.0 } else { 0.0 })
            .tolerance(tol)
            .pass(lhs <= rhs + tol && fam.alpha <= fam.pi_over_c() * (1.0 + 1e-12)),
        );
        last = Some(fam);
    }
    if let Some(fam) = last.filter(|f| f.j >= 1000) {
        let constant = 2.0 / fam.alpha.sqrt();
        let sharp = 2.0 * PI.sqrt();
        let bound_constant = 2.0 * (fam.c / PI).sqrt();
        let gap = (constant - sharp).abs() / sharp;
        cert.push(
            Stage::new("limit", "2 α_j^{-1/2} -> 2√π, with α_j <= π/c_j and c_j -> π²")
                .value("j", fam.j as f64)
                .value("constant", constant)
                .value("sharp_constant", sharp)
                .value("relative_gap", gap)
                .value("bound_constant", bound_constant)
                .value("bound_relative_gap", (bound_constant - sharp).abs() / sharp)
                .tolerance(LIMIT_TOLERANCE)
                .pass(gap <= LIMIT_TOLERANCE),
        );
    }
    Ok(cert)
}

/// Least-squares slope of `log |π/c_j - 1/π|` against `log j`. Logged only:
/// no reference rate exists, the clamp width suggests about -1/2.
pub fn observed_rate(families: &[DensityFamily]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = families
        .iter()
        .map(|f| ((f.j as f64).ln(), (f.pi_over_c() - 1.0 / PI).abs().ln()))
        .filter(|p| p.1.is_finite())
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::Chart;

    #[test]
    fn bound_approaches_limit_at_negative_rate() {
        let fams: Vec<_> = CHAIN_J.iter().map(|&j| DensityFamily::new(j).unwrap()).collect();
        let rate = observed_rate(&fams).unwrap();
        assert!((-1.0..-0.25).contains(&rate), "{rate}");
        assert!(observed_rate(&fams[..1]).is_none());
    }

    /// Closed form of the radial integral, used as an independent oracle.
    fn c_closed(j: u64) -> f64 {
        let rc = clamp_radius(j);
        let inner = 0.5 * (rc.asin() - rc * (1.0 - rc * rc).sqrt());
        let outer = (j as f64).sqrt() * (1.0 - rc * rc * rc) / 3.0;
        4.0 * PI * (inner + outer)
    }

    /// Closed form of the slice integral: `asin(y_k/a)` on the unclamped
    /// part, `√j (a - y_k)` on the clamped part.
    fn slice_closed(fam: &DensityFamily, z: f64) -> f64 {
        let a = (1.0 - z * z).sqrt();
        let yk = (a * a - 1.0 / fam.j as f64).max(0.0).sqrt();
        2.0 / fam.c * ((yk / a).asin() + (fam.j as f64).sqrt() * (a - yk))
    }

    #[test]
    fn c_one_is_ball_volume() {
        assert!((compute_c(1, 2).unwrap() - 4.0 * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn c_matches_closed_form() {
        for j in [1, 2, 10, 100, 1000, 100_000, 1_000_000] {
            let c = compute_c(j, 2).unwrap();
            assert!((c - c_closed(j)).abs() <= 1e-8 * c, "j = {j}");
        }
    }

    #[test]
    fn c_is_increasing_and_approaches_pi_squared() {
        let mut prev = 0.0;
        for j in 1..=100 {
            let c = compute_c(j, 2).unwrap();
            assert!(c >= prev);
            prev = c;
        }
        let c = compute_c(1000, 2).unwrap();
        assert!((c - PI * PI).abs() / (PI * PI) <= 0.05);
    }

    #[test]
    fn alpha_one_is_three_over_two_pi() {
        let f = DensityFamily::new(1).unwrap();
        assert!((f.alpha - 1.5 / PI).abs() < 1e-10);
        assert!(f.alpha_at < 1e-6);
    }

    #[test]
    fn slice_integral_matches_closed_form() {
        let fam = DensityFamily::new(100).unwrap();
        for z in [0.0, 0.3, 0.7, 0.99, 0.999] {
            assert!((fam.slice_integral(z) - slice_closed(&fam, z)).abs() < 1e-10);
        }
    }

    #[test]
    fn alpha_respects_bound_and_normalization() {
        for j in [1, 10, 100, 1000, 10_000] {
            let f = DensityFamily::new(j).unwrap();
            assert!(f.alpha > 0.0 && f.alpha <= f.pi_over_c() * (1.0 + 1e-12), "{f:?}");
            assert!((f.normalization() - 1.0).abs() < 1e-6);
            // reproducible to 1e-8 from a different starting point
            let (_, again) = compute_alpha(&f);
            assert!((again - f.alpha).abs() < 1e-8);
        }
    }

    #[test]
    fn rho_shape() {
        let f = DensityFamily::new(100).unwrap();
        assert!((rho(1.5, &f) - 10.0 / f.c).abs() < 1e-14);
        assert!((rho(0.0, &f) - 1.0 / f.c).abs() < 1e-14);
        let mut prev = 0.0;
        for k in 0..=200 {
            let v = rho(k as f64 / 100.0, &f);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn j_lists() {
        assert_eq!(parse_j_list("1,10, 100").unwrap(), vec![1, 10, 100]);
        assert_eq!(parse_j_list("3-5").unwrap(), vec![3, 4, 5]);
        assert!(parse_j_list("0").is_err());
        assert!(parse_j_list("2000000").is_err());
        assert!(parse_j_list("x").is_err());
    }

    #[test]
    fn chain_on_disk_and_catenoid() {
        let d = ParametricSurface::new(Chart::Disk { radius: 1.0 });
        let c = alpha_chain_check(&d, &SurfaceField::Constant(1.0)).unwrap();
        assert!(c.pass, "{}", c.to_json());
        let cat = ParametricSurface::new(Chart::Catenoid { half_height: 1.0 });
        let c = alpha_chain_check(&cat, &SurfaceField::Constant(1.0)).unwrap();
        assert!(c.pass);
        let slack: Vec<f64> = CHAIN_J
            .iter()
            .map(|j| c.value(&format!("alpha_j{j}"), "slack").unwrap())
            .collect();
        assert!(slack.windows(2).all(|w| w[0] >= w[1]), "{slack:?}");
    }
}
