//! Invariants checked as properties over randomized inputs.

use proptest::prelude::*;
use sobolev_lab::abp::{assemble_neumann, contact_set, gradient_image, solve_neumann, AbpSolution};
use sobolev_lab::corpus::Builtin;
use sobolev_lab::density::{rho, DensityFamily};
use sobolev_lab::field::{divergence, ScalarField, VectorMap};
use sobolev_lab::functionals::{
    abp_normalization_residual, integrate_nodes, normalize_for_abp, normalize_for_transport, sobolev_deficit,
    sobolev_exponent,
};
use sobolev_lab::grid::{BallGrid, Point};
use sobolev_lab::isoperimetric::parse_polygon;
use sobolev_lab::knothe::monotone_rearrange_1d;
use sobolev_lab::numerics::det_sum;
use sobolev_lab::surface::{field_corpus, michael_simon_terms, Chart, ParametricSurface, RigidMotion};
use sobolev_lab::transport::{solve_exact_ot, DiscreteMeasure};
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

fn grid(n: usize, h: f64) -> Arc<BallGrid> {
    Arc::new(BallGrid::new(n, h).unwrap())
}

fn grid_2d_64() -> Arc<BallGrid> {
    static G: OnceLock<Arc<BallGrid>> = OnceLock::new();
    G.get_or_init(|| grid(2, 1.0 / 64.0)).clone()
}

/// `|∫_B div V - ∫_∂B ⟨V, x⟩|` for an analytic field sampled on the grid.
fn divergence_gap<F: Fn(&Point) -> Point + Sync>(g: &Arc<BallGrid>, v: F) -> f64 {
    let map = VectorMap::from_fn(g.clone(), &v);
    let div = divergence(&map);
    let interior = integrate_nodes(g, |i| div[i]);
    let b = g.boundary();
    let n = g.dim();
    let flux = det_sum(b.len(), |k| {
        let p = &b[k].point;
        let w = v(p);
        b[k].weight * (0..n).map(|a| w[a] * p[a]).sum::<f64>()
    });
    (interior - flux).abs()
}

#[test]
fn divergence_theorem_for_analytic_fields() {
    type Field = fn(&Point) -> Point;
    // (field, sup |DV| over the ball)
    let fields: [(Field, f64); 5] = [
        (|x| *x, 1.0),
        (|x| [-x[1], x[0], 0.0], 1.0),
        (|x| [x[0] * x[0], x[0] * x[1], 0.0], 2.0),
        (|x| [x[1].sin(), x[0].cos(), x[2]], 1.0),
        (|x| [(x[0] + x[1]).exp(), 0.0, x[2] * x[0]], 2.0 * 2f64.sqrt().exp()),
    ];
    for n in [2, 3] {
        for h in [1.0 / 16.0, 1.0 / 32.0] {
            let g = grid(n, h);
            for (k, (v, sup)) in fields.iter().enumerate() {
                let gap = divergence_gap(&g, v);
                assert!(gap <= 10.0 * h * sup, "field {k}, n = {n}, h = {h}: gap {gap}");
            }
        }
    }
}

#[test]
fn deficit_sign_is_scale_invariant_at_listed_scales() {
    let g = grid_2d_64();
    for b in Builtin::ALL {
        let f = b.field(g.clone()).unwrap();
        let base = sobolev_deficit(&f).unwrap();
        for lambda in [0.1, 1.0, 10.0] {
            let r = sobolev_deficit(&f.scaled(lambda)).unwrap();
            // Constants sit at deficit zero up to roundoff, where the sign is noise.
            if base.relative_deficit().abs() > 1e-9 {
                assert_eq!(r.status, base.status);
            }
            assert!((r.deficit - lambda * base.deficit).abs() <= 1e-10 * lambda * base.lhs);
        }
    }
}

fn builtin() -> impl Strategy<Value = Builtin> {
    prop::sample::select(Builtin::ALL.to_vec())
}

fn rotated(b: Builtin, g: &Arc<BallGrid>, theta: f64) -> ScalarField {
    let (s, c) = theta.sin_cos();
    ScalarField::from_fn(g.clone(), move |x| b.eval(&[c * x[0] + s * x[1], -s * x[0] + c * x[1], 0.0])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn functionals_are_homogeneous(b in builtin(), lambda in 0.05f64..20.0) {
        let g = grid_2d_64();
        let f = b.field(g.clone()).unwrap();
        let (r0, r1) = (sobolev_deficit(&f).unwrap(), sobolev_deficit(&f.scaled(lambda)).unwrap());
        let q = sobolev_exponent(2);
        prop_assert!((r1.grad_l1 - lambda * r0.grad_l1).abs() <= 1e-12 * lambda * r0.grad_l1.max(1.0));
        prop_assert!((r1.boundary_l1 - lambda * r0.boundary_l1).abs() <= 1e-12 * lambda * r0.boundary_l1);
        prop_assert!((r1.lq_norm - lambda.powf(q) * r0.lq_norm).abs() <= 1e-12 * lambda.powf(q) * r0.lq_norm);
        prop_assert!((r1.deficit - lambda * r0.deficit).abs() <= 1e-10 * lambda * r0.lhs);
        if r0.relative_deficit().abs() > 1e-9 {
            prop_assert_eq!(r1.deficit.signum(), r0.deficit.signum());
        }
    }

    #[test]
    fn deficit_is_rotation_invariant(b in builtin(), theta in 0.0f64..(2.0 * PI)) {
        let g = grid_2d_64();
        let h = g.h();
        let r0 = sobolev_deficit(&rotated(b, &g, 0.0)).unwrap();
        let r1 = sobolev_deficit(&rotated(b, &g, theta)).unwrap();
        prop_assert!((r1.deficit - r0.deficit).abs() <= 10.0 * h * r0.lhs,
            "{}: {} vs {}", b.name(), r1.deficit, r0.deficit);
    }

    #[test]
    fn normalizations_are_idempotent(b in builtin(), scale in 0.2f64..5.0) {
        let g = grid(2, 1.0 / 32.0);
        let f = b.field(g).unwrap().scaled(scale);
        let (t, _) = normalize_for_transport(&f).unwrap();
        let (t2, lambda) = normalize_for_transport(&t).unwrap();
        prop_assert!((lambda - 1.0).abs() <= 1e-12);
        prop_assert!(t.values().iter().zip(t2.values()).all(|(a, b)| a.is_nan() && b.is_nan() || (a - b).abs() <= 1e-12 * a.abs()));
        let (a, _) = normalize_for_abp(&f).unwrap();
        prop_assert!(abp_normalization_residual(&a) <= 10.0 / 32.0);
        let (_, mu) = normalize_for_abp(&a).unwrap();
        prop_assert!((mu - 1.0).abs() <= 1e-12);
    }

    /// Convex polygons inscribed in an ellipse: nonnegative deficit, linear
    /// in the scale.
    #[test]
    fn polygon_deficit_is_nonnegative_and_one_homogeneous(
        mut angles in prop::collection::vec(0.0f64..(2.0 * PI), 3..40),
        a in 0.2f64..3.0,
        b in 0.2f64..3.0,
        s in 0.1f64..10.0,
    ) {
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|x, y| (*x - *y).abs() < 1e-3);
        prop_assume!(angles.len() >= 3);
        let text = |k: f64| angles.iter().map(|t| format!("{} {}\n", k * a * t.cos(), k * b * t.sin())).collect::<String>();
        let Ok(p) = parse_polygon(&text(1.0)) else { return Ok(()); };
        let d = p.deficit().unwrap().deficit;
        prop_assert!(d >= -1e-12);
        let ds = parse_polygon(&text(s)).unwrap().deficit().unwrap().deficit;
        prop_assert!((ds - s * d).abs() <= 1e-9 * s * d.max(1.0));
    }

    /// The exact plan reproduces marginals and costs no more than the
    /// independent coupling.
    #[test]
    fn exact_plan_beats_product_coupling(
        src in prop::collection::vec(((-1.0f64..1.0), (-1.0f64..1.0), (0.1f64..2.0)), 1..25),
        tgt in prop::collection::vec(((-1.0f64..1.0), (-1.0f64..1.0), (0.1f64..2.0)), 1..25),
    ) {
        let measure = |v: &[(f64, f64, f64)], total: f64| {
            let s: f64 = v.iter().map(|p| p.2).sum();
            DiscreteMeasure::new(v.iter().map(|p| [p.0, p.1, 0.0]).collect(), v.iter().map(|p| p.2 * total / s).collect()).unwrap()
        };
        let (mu, nu) = (measure(&src, 1.0), measure(&tgt, 1.0));
        let plan = solve_exact_ot(&mu, &nu).unwrap();
        prop_assert!(plan.marginal_residual(&mu, &nu) <= 1e-10);
        let mut product = 0.0;
        for (x, a) in mu.points().iter().zip(mu.weights()) {
            for (y, b) in nu.points().iter().zip(nu.weights()) {
                product += a * b * 0.5 * ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2));
            }
        }
        prop_assert!(plan.cost() <= product + 1e-12);
    }

    #[test]
    fn rearrangement_is_monotone_and_onto(
        density in prop::collection::vec(0.0f64..5.0, 2..60),
        a in -2.0f64..0.0,
        len in 0.1f64..3.0,
    ) {
        prop_assume!(density.iter().sum::<f64>() > 1e-3);
        let knots: Vec<f64> = (0..density.len()).map(|i| i as f64 / (density.len() - 1) as f64).collect();
        let t = monotone_rearrange_1d(&knots, &density, (a, a + len)).unwrap();
        prop_assert!(t.is_nondecreasing());
        prop_assert!((t.eval(1.0) - (a + len)).abs() <= 1e-12 * (1.0 + a.abs() + len));
        prop_assert!((t.eval(0.0) - a).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn surface_functionals_are_rigid_motion_invariant(
        axis in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        angle in 0.0f64..(2.0 * PI),
        shift in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        chart in prop::sample::select(vec![
            Chart::Catenoid { half_height: 1.0 },
            Chart::Helicoid { radius: 1.0, height: 2.0 * PI },
            Chart::Cap { radius: 1.0, angle: PI / 3.0 },
            Chart::Graph,
        ]),
    ) {
        prop_assume!(axis.0.abs() + axis.1.abs() + axis.2.abs() > 1e-3);
        let m = RigidMotion::from_axis_angle([axis.0, axis.1, axis.2], angle, [shift.0, shift.1, shift.2]);
        let s0 = ParametricSurface::new(chart.clone());
        let s1 = ParametricSurface::new(chart).transformed(&m);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(1.0);
        prop_assert!(close(s0.surface_area().unwrap(), s1.surface_area().unwrap()));
        prop_assert!(close(s0.boundary_length().unwrap(), s1.boundary_length().unwrap()));
        for f in field_corpus() {
            let (t0, t1) = (michael_simon_terms(&s0, &f).unwrap(), michael_simon_terms(&s1, &f).unwrap());
            prop_assert!(close(t0.lhs, t1.lhs) && close(t0.rhs, t1.rhs), "{}: {:?} vs {:?}", f.name(), t0, t1);
        }
    }

    #[test]
    fn density_family_invariants(j in 1u64..200_000, k in 1u64..200_000) {
        let f = DensityFamily::new(j).unwrap();
        prop_assert!(f.alpha <= f.pi_over_c() * (1.0 + 1e-12));
        prop_assert!((f.normalization() - 1.0).abs() <= 1e-6);
        let g = DensityFamily::new(k).unwrap();
        if j < k {
            prop_assert!(f.c < g.c);
        }
        let samples: Vec<f64> = (0..=200).map(|i| rho(i as f64 / 200.0, &f)).collect();
        prop_assert!(samples.windows(2).all(|w| w[1] >= w[0]), "rho_j must not decrease in s");
    }
}

fn abp_solution() -> &'static AbpSolution {
    static S: OnceLock<AbpSolution> = OnceLock::new();
    S.get_or_init(|| {
        let f = Builtin::Bump1.field(grid(2, 1.0 / 32.0)).unwrap();
        solve_neumann(&assemble_neumann(&f).unwrap()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn coverage_is_nonincreasing_in_delta(d1 in 0.0f64..0.2, d2 in 0.0f64..0.2) {
        let sol = abp_solution();
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let (a, b) = (contact_set(sol, lo), contact_set(sol, hi));
        prop_assert!(b.mask().iter().zip(a.mask()).all(|(&x, &y)| !x || y), "contact sets not nested");
        prop_assert!(gradient_image(sol, &b).coverage() <= gradient_image(sol, &a).coverage() + 1e-15);
    }
}
