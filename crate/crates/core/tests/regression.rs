//! Frozen values at stated resolutions and closed-form oracles across modules.

use sobolev_lab::abp::{abp_certificate, AbpOptions};
use sobolev_lab::corpus::Builtin;
use sobolev_lab::field::ScalarField;
use sobolev_lab::functionals::{normalize_for_transport, sobolev_deficit};
use sobolev_lab::grid::BallGrid;
use sobolev_lab::knothe::{knothe_certificate, CertificateOptions};
use sobolev_lab::surface::{
    michael_simon_terms, minimal_isoperimetric_check, Chart, ParametricSurface, SurfaceField,
};
use sobolev_lab::transport::{transport_certificate, TransportOptions};
use std::f64::consts::PI;
use std::sync::Arc;

fn grid(n: usize, h: f64) -> Arc<BallGrid> {
    Arc::new(BallGrid::new(n, h).unwrap())
}

fn close(got: f64, frozen: f64, rel: f64) -> bool {
    (got - frozen).abs() <= rel * frozen.abs()
}

#[test]
fn bump_deficit_at_fine_grid() {
    let r = sobolev_deficit(&Builtin::Bump1.field(grid(2, 1.0 / 256.0)).unwrap()).unwrap();
    // Continuum: 10π/3 - 2π√(7/3).
    let exact = 10.0 * PI / 3.0 - 2.0 * PI * (7.0f64 / 3.0).sqrt();
    assert!((r.deficit - exact).abs() <= 1e-4, "{} vs {exact}", r.deficit);
    assert!(close(r.deficit, 0.874_270_390_0, 1e-8), "{}", r.deficit);
}

#[test]
fn knothe_bump_has_positive_slack() {
    let (f, _) = normalize_for_transport(&Builtin::Bump1.field(grid(2, 1.0 / 128.0)).unwrap()).unwrap();
    let (cert, _) = knothe_certificate(&f, &CertificateOptions::default()).unwrap();
    assert!(cert.pass, "{}", cert.to_json());
    let slack = cert.value("integrated-chain", "slack").unwrap();
    assert!(slack > 0.0);
    assert!(close(slack, 0.572_384_696_4, 1e-8), "{slack}");
}

#[test]
fn knothe_aniso_determinant_on_interior_quantile() {
    let (f, _) = normalize_for_transport(&Builtin::Aniso.field(grid(2, 1.0 / 128.0)).unwrap()).unwrap();
    let (cert, _) = knothe_certificate(&f, &CertificateOptions::default()).unwrap();
    assert!(cert.pass, "{:?}", cert.failed_stages());
    let q90 = cert.value("determinant-identity", "q90_relative_error").unwrap();
    assert!(q90 <= 0.05, "{q90}");
}

#[test]
fn abp_bump_coverage_at_fine_grid() {
    let out = abp_certificate(&Builtin::Bump1.field(grid(2, 1.0 / 128.0)).unwrap(), &AbpOptions::default()).unwrap();
    assert!(out.certificate.pass, "{:?}", out.certificate.failed_stages());
    let cov = out.certificate.value("coverage", "coverage").unwrap();
    assert!(cov >= 0.98);
    assert!(close(cov, 0.991_412_973_8, 1e-8), "{cov}");
}

/// For f = c(2 - r²) with ∫f² = π the radial CDF match gives
/// `R(r)² = (6/7)(2r² - r⁴ + r⁶/6)`.
#[test]
fn transport_map_of_radial_density_is_radial() {
    let g = grid(2, 1.0 / 16.0);
    let out = transport_certificate(&Builtin::Bump1.field(g.clone()).unwrap(), &TransportOptions::default()).unwrap();
    assert!(out.certificate.pass, "{:?}", out.certificate.failed_stages());
    let (mut tangential, mut radial, mut oracle) = (0.0, 0.0, 0.0);
    for &i in g.active() {
        let x = g.coords(i as usize);
        let r = x[0].hypot(x[1]);
        if r < 1e-12 {
            continue;
        }
        let y = out.map.value(i as usize);
        let along = (y[0] * x[0] + y[1] * x[1]) / r;
        tangential += (y[0] * x[1] - y[1] * x[0]).abs() / r;
        radial += (along - r).abs();
        // Boundary-layer nodes carry clipped cell weights; compare inside.
        if r < 0.9 {
            let big_r = ((6.0 / 7.0) * (2.0 * r * r - r.powi(4) + r.powi(6) / 6.0)).sqrt();
            oracle += (along - big_r).abs();
        }
    }
    assert!(tangential <= 0.02 * radial, "tangential {tangential} vs radial {radial}");
    assert!(oracle <= 0.02 * radial, "oracle gap {oracle} vs radial {radial}");
}

fn terms(chart: Chart, f: SurfaceField) -> sobolev_lab::surface::MichaelSimonTerms {
    michael_simon_terms(&ParametricSurface::new(chart), &f).unwrap()
}

#[test]
fn surface_closed_forms() {
    // Flat disk: equality.
    assert!(terms(Chart::Disk { radius: 1.0 }, SurfaceField::Constant(1.0)).deficit.abs() <= 1e-10);
    // Annulus 1/2 < r < 1: 3π - π√3.
    let t = terms(Chart::Annulus { inner: 0.5, outer: 1.0 }, SurfaceField::Constant(1.0));
    assert!((t.deficit - (3.0 * PI - PI * 3f64.sqrt())).abs() <= 1e-10, "{t:?}");
    // Caps with f = 1: ∫H = 2·area/r, so deficit = |∂Σ| + 2·area/r - 2√(π·area).
    for (r, a) in [(1.0, PI / 3.0), (1.0, PI / 2.0), (2.0, 2.0 * PI / 3.0)] {
        let t = terms(Chart::Cap { radius: r, angle: a }, SurfaceField::Constant(1.0));
        let area = 2.0 * PI * r * r * (1.0 - f64::cos(a));
        let exact = 2.0 * PI * r * a.sin() + 2.0 * area / r - 2.0 * (PI * area).sqrt();
        assert!((t.deficit - exact).abs() <= 1e-8 * exact, "r={r} a={a}: {} vs {exact}", t.deficit);
        assert!(t.deficit > 0.0);
    }
}

#[test]
fn surface_quadrature_values() {
    let t = terms(Chart::Graph, SurfaceField::Constant(1.0));
    assert!(close(t.deficit, 0.297_312_113_393, 1e-9), "{}", t.deficit);
    let helicoid = ParametricSurface::new(Chart::Helicoid {
        radius: 1.0,
        height: 2.0 * PI,
    });
    let d = minimal_isoperimetric_check(&helicoid).unwrap();
    assert!(close(d, 7.649_174_498_567, 1e-9), "{d}");
}

/// The flat unit disk and the 2-ball grid evaluate the same boundary plus
/// gradient term for the same function.
#[test]
fn flat_disk_matches_grid_functional() {
    let disk = ParametricSurface::new(Chart::Disk { radius: 1.0 });
    for h in [1.0 / 32.0, 1.0 / 64.0] {
        let g = grid(2, h);
        let pairs = [
            (SurfaceField::Constant(1.0), Builtin::Const1.field(g.clone()).unwrap()),
            (SurfaceField::Bump, Builtin::Bump1.field(g.clone()).unwrap()),
            (SurfaceField::Aniso, ScalarField::from_fn(g.clone(), |x| (0.5 * x[0]).exp()).unwrap()),
        ];
        for (sf, gf) in pairs {
            let s = michael_simon_terms(&disk, &sf).unwrap();
            let e = sobolev_deficit(&gf).unwrap();
            assert!((s.lhs - e.lhs).abs() <= 10.0 * h, "{} h={h}: {} vs {}", sf.name(), s.lhs, e.lhs);
        }
    }
    let s = michael_simon_terms(&disk, &SurfaceField::Bump).unwrap();
    assert!((s.lhs - 10.0 * PI / 3.0).abs() <= 1e-8, "{}", s.lhs);
}
