use super::{brenier_map, mean_cost, solve_entropic_ot, solve_exact_ot, DiscreteMeasure, TransportPlan};
use crate::certificate::{Certificate, Environment, ProofPath, Stage};
use crate::error::Result;
use crate::field::{ScalarField, VectorMap};
use crate::functionals::{normalize_for_transport, sobolev_exponent};
use crate::grid::{dot, BallGrid, NodeClass};
use crate::knothe::{integrated_chain_stage, pushforward_stage};
use crate::numerics::{det, min_sym_eigen, sorted_quantile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Pairs sampled by the monotonicity check.
pub const MONOTONICITY_PAIRS: usize = 10_000;

#[derive(Clone, Debug)]
pub struct TransportOptions {
    pub corpus_item: String,
    pub seed: u64,
    pub tol_scale: f64,
    /// Final ε in units of the mean pairwise cost. The barycentric map of
    /// an entropic plan is contracted by roughly `√ε`; at 0.01 this alone
    /// exceeds the pushforward tolerance for strongly anisotropic densities.
    pub epsilon_factor: f64,
    /// Use the network simplex instead of the entropic solver.
    pub exact: bool,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            corpus_item: "custom".into(),
            seed: 0,
            tol_scale: 1.0,
            epsilon_factor: 0.003,
            exact: false,
        }
    }
}

/// Source `f^{n/(n-1)} vol` and target `vol` on the active nodes of the
/// grid of `f`, the target rescaled to the source mass.
pub fn grid_measures(f: &ScalarField) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let grid = f.grid();
    let q = sobolev_exponent(grid.dim());
    let points: Vec<_> = grid.active().iter().map(|&i| grid.coords(i as usize)).collect();
    let vol = grid.cell_volumes();
    let src: Vec<f64> = grid
        .active()
        .iter()
        .zip(vol)
        .map(|(&i, v)| v * f.value(i as usize).powf(q))
        .collect();
    let (ms, mv): (f64, f64) = (src.iter().sum(), vol.iter().sum());
    let tgt = vol.iter().map(|v| v * ms / mv).collect();
    Ok((DiscreteMeasure::new(points.clone(), src)?, DiscreteMeasure::new(points, tgt)?))
}

pub struct TransportOutcome {
    pub certificate: Certificate,
    pub plan: TransportPlan,
    /// Barycentric map on the grid of the normalised input.
    pub map: VectorMap,
    pub normalized: ScalarField,
}

fn interior_node(grid: &BallGrid, i: usize) -> bool {
    let h = grid.h();
    grid.class(i) == NodeClass::Interior && crate::grid::norm(&grid.coords(i), grid.dim()) <= 1.0 - 2.0 * h
}

pub fn transport_certificate(f: &ScalarField, opts: &TransportOptions) -> Result<TransportOutcome> {
    let (fnorm, lambda) = normalize_for_transport(f)?;
    let grid = fnorm.grid().clone();
    let n = grid.dim();
    let h = grid.h();
    let ts = opts.tol_scale;
    let q = sobolev_exponent(n);
    let fv = fnorm.values();
    let mut cert = Certificate::new(
        ProofPath::Transport,
        Environment::new(n, h, &opts.corpus_item, opts.seed, ts),
    );

    let (mu, nu) = grid_measures(&fnorm)?;
    let plan = if opts.exact {
        solve_exact_ot(&mu, &nu)?
    } else {
        solve_entropic_ot(&mu, &nu, opts.epsilon_factor * mean_cost(&mu, &nu))?
    };
    let residual = plan.marginal_residual(&mu, &nu);
    let tol_marg = 1e-8 * ts;
    let mut solver = Stage::new(
        "solver",
        "π minimises ½∫|x - ξ|² dπ among couplings with marginals μ = f^{n/(n-1)} dx and ν = dξ",
    )
    .value("cost", plan.cost())
    .value("epsilon", plan.epsilon())
    .value("marginal_residual", residual)
    .value("lambda", lambda)
    .value("points", mu.len() as f64)
    .tolerance(tol_marg)
    .pass(residual <= tol_marg);
    if let Some(gap) = plan.duality_gap() {
        solver = solver.value("duality_gap", gap);
    }
    cert.push(solver);

    let bm = brenier_map(&plan, &mu, &nu)?;
    let phi = bm.to_vector_map(grid.clone())?;

    struct NodeData {
        interior: bool,
        asym: f64,
        min_eig: f64,
        det_sym: f64,
        trace: f64,
        rho: f64,
    }
    let nodes: Vec<NodeData> = grid
        .active()
        .par_iter()
        .map(|&idx| {
            let i = idx as usize;
            let j = phi.jacobian_at(i);
            let mut s = [[0.0; 3]; 3];
            let mut asym: f64 = 0.0;
            let mut size: f64 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s[a][b] = 0.5 * (j[a][b] + j[b][a]);
                    asym = asym.max((j[a][b] - j[b][a]).abs());
                    size = size.max(j[a][b].abs());
                }
            }
            NodeData {
                interior: interior_node(&grid, i),
                asym: if size > 0.0 { asym / size } else { 0.0 },
                min_eig: min_sym_eigen(&s, n),
                det_sym: det(&s, n),
                trace: (0..n).map(|a| j[a][a]).sum(),
                rho: fv[i].powf(q),
            }
        })
        .collect();
    let interior: Vec<&NodeData> = nodes.iter().filter(|d| d.interior).collect();

    // Finite differences of a gradient map are symmetric up to O(h²)
    // truncation; asymmetry is relative to the largest entry of DΦ.
    let mut asym: Vec<f64> = interior.iter().map(|d| d.asym).collect();
    asym.sort_by(f64::total_cmp);
    let asym_median = sorted_quantile(&asym, 0.5);
    let tol_sym = h * ts;
    cert.push(
        Stage::new("symmetry", "DΦ = D²u is symmetric")
            .stats(asym.clone())
            .value("median_asymmetry", asym_median)
            .value("q90_asymmetry", sorted_quantile(&asym, 0.9))
            .tolerance(tol_sym)
            .pass(asym_median <= tol_sym),
    );

    let eig: Vec<f64> = interior.iter().map(|d| d.min_eig).collect();
    let eig_min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol_eig = h * ts;
    let mut det_rel: Vec<f64> = interior.iter().map(|d| (d.det_sym / d.rho - 1.0).abs()).collect();
    det_rel.sort_by(f64::total_cmp);
    cert.push(
        Stage::new(
            "eigenvalues",
            "the eigenvalues of the symmetric part of DΦ(x) are nonnegative",
        )
        .stats(eig)
        .value("min_eigenvalue", eig_min)
        .value("median_relative_determinant_error", sorted_quantile(&det_rel, 0.5))
        .tolerance(tol_eig)
        .pass(eig_min >= -tol_eig)
        .note("determinant error is diagnostic; det DΦ = f^{n/(n-1)} is certified weakly by the pushforward stage"),
    );

    cert.push(pushforward_stage(&grid, fv, q, |i| phi.value(i), opts.seed, ts));

    // The barycentric projection lies in the convex hull of the target
    // nodes, whose band nodes may sit just outside the ball.
    let max_norm = phi.max_norm(false);
    let hull = nu.points().iter().map(|p| crate::grid::norm(p, n)).fold(0.0, f64::max);
    let tol_range = hull + 1e-12 * ts;
    cert.push(
        Stage::new("range", "Φ maps the ball into the closed unit ball")
            .value("max_norm", max_norm)
            .value("target_hull_radius", hull)
            .tolerance(tol_range)
            .pass(max_norm <= tol_range),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pts = mu.points();
    let mut worst = f64::INFINITY;
    let mut products = Vec::with_capacity(MONOTONICITY_PAIRS);
    for _ in 0..MONOTONICITY_PAIRS {
        let a = rng.gen_range(0..pts.len());
        let b = rng.gen_range(0..pts.len());
        let (ya, yb) = (bm.value(a), bm.value(b));
        let dy = [ya[0] - yb[0], ya[1] - yb[1], ya[2] - yb[2]];
        let dx = [pts[a][0] - pts[b][0], pts[a][1] - pts[b][1], pts[a][2] - pts[b][2]];
        let p = dot(&dy, &dx, n);
        worst = worst.min(p);
        products.push(p);
    }
    let tol_mono = 1e-6 * 4.0 * ts;
    cert.push(
        Stage::new("monotonicity", "⟨Φ(x) - Φ(y), x - y⟩ ≥ 0")
            .stats(products)
            .value("min_product", worst)
            .value("pairs", MONOTONICITY_PAIRS as f64)
            .tolerance(tol_mono)
            .pass(worst >= -tol_mono),
    );

    cert.push(integrated_chain_stage(
        &fnorm,
        &phi,
        |k| (nodes[k].det_sym.max(0.0), nodes[k].trace),
        ts,
    ));
    Ok(TransportOutcome {
        certificate: cert,
        plan,
        map: phi,
        normalized: fnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Builtin;
    use std::sync::Arc;

    #[test]
    fn constant_density_gives_near_identity() {
        let g = Arc::new(BallGrid::new(2, 1.0 / 8.0).unwrap());
        let f = Builtin::Const1.field(g.clone()).unwrap();
        let out = transport_certificate(&f, &TransportOptions::default()).unwrap();
        assert!(out.certificate.pass, "{}", out.certificate.to_json());
        let exact = transport_certificate(
            &f,
            &TransportOptions {
                exact: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(exact.plan.cost() < 1e-12);
        for &i in g.active() {
            let x = g.coords(i as usize);
            let y = exact.map.value(i as usize);
            assert!((x[0] - y[0]).abs() + (x[1] - y[1]).abs() < 1e-9);
        }
    }
}
