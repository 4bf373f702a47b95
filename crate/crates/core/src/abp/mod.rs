//! The linear Neumann problem `div(f ∇u) = n f^{n/(n-1)} - |∇f|` with
//! `⟨∇u, x⟩ = 1` on the sphere, its contact set and the gradient-image
//! certificate.
//!
//! The discretisation is a cut-cell finite-volume scheme: node `P` owns its
//! grid cell intersected with the ball, interior faces carry the flux
//! `f_face (u_Q - u_P) / h` times the exact face aperture, and the boundary
//! part of the cell carries the datum `f_P · 1` times its exact measure
//! `S_P`. `S_P` is obtained from the discrete divergence identity for the
//! field `x`, so `u = |x|²/2` solves the `f = 1` system to roundoff.

mod certificate;
mod contact;

pub use certificate::{abp_certificate, coarsen, coverage_tolerance, richardson_estimate, AbpOptions, AbpOutcome, Richardson};
pub use contact::{contact_set, contact_set_with, gradient_image, ContactSet, GradientImage};

use crate::error::{Error, Result};
use crate::field::{centered_gradient_at, gradient_at, hessian_at, ScalarField};
use crate::functionals::{abp_normalization_residual, boundary_integrate, integrate_nodes, normalize_for_abp, sobolev_exponent};
use crate::grid::{norm, BallGrid, Point};
use crate::numerics::{det_sum, REDUCTION_CHUNK};
use rayon::prelude::*;
use std::sync::Arc;

/// Default relative residual of the conjugate gradient solve.
pub const SOLVER_TOLERANCE: f64 = 1e-10;
/// Largest residual the solution invariant admits.
pub const RESIDUAL_LIMIT: f64 = 1e-8;
const MAX_ITERATIONS: usize = 200_000;
const NO_ROW: u32 = u32::MAX;

/// Relative ABP normalisation residual above which the input is rescaled.
const NORMALIZED_SLACK: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct NeumannProblem {
    f: ScalarField,
    rhs: ScalarField,
    lambda: f64,
    compatibility: f64,
    /// Box index to unknown index, `NO_ROW` off the active set.
    row_of: Vec<u32>,
    row_ptr: Vec<u32>,
    cols: Vec<u32>,
    weights: Vec<f64>,
    diag: Vec<f64>,
    load: Vec<f64>,
    boundary_flux_total: f64,
}

impl NeumannProblem {
    pub fn grid(&self) -> &Arc<BallGrid> {
        self.f.grid()
    }

    /// The normalised coefficient.
    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn rhs(&self) -> &ScalarField {
        &self.rhs
    }

    /// Scale applied to the input (1 when it was already normalised).
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The Neumann datum `⟨∇u, x⟩` on the sphere.
    pub fn boundary_flux(&self) -> f64 {
        1.0
    }

    /// `|∫ rhs - ∫_∂ f| / ∫_∂ f` with the crate quadratures.
    pub fn compatibility(&self) -> f64 {
        self.compatibility
    }

    /// Net load of the assembled system relative to the total boundary
    /// flux. It is removed by projection before solving.
    pub fn discrete_defect(&self) -> f64 {
        det_sum(self.load.len(), |k| self.load[k]).abs() / self.boundary_flux_total
    }

    pub fn unknowns(&self) -> usize {
        self.diag.len()
    }

    fn row_times(&self, k: usize, x: &[f64]) -> f64 {
        let mut s = self.diag[k] * x[k];
        for e in self.row_ptr[k] as usize..self.row_ptr[k + 1] as usize {
            s -= self.weights[e] * x[self.cols[e] as usize];
        }
        s
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(k, o)| *o = self.row_times(k, x));
    }
}

/// Assemble the finite-volume system, normalising `f` first when needed.
pub fn assemble_neumann(f: &ScalarField) -> Result<NeumannProblem> {
    f.require_positive()?;
    let (f, lambda) = if abp_normalization_residual(f) > NORMALIZED_SLACK {
        normalize_for_abp(f)?
    } else {
        (f.clone(), 1.0)
    };
    let grid = f.grid().clone();
    let n = grid.dim();
    let h = grid.h();
    let q = sobolev_exponent(n);
    let fv = f.values();

    let mut rhs_v = vec![f64::NAN; grid.len()];
    let rows: Vec<f64> = grid
        .active()
        .par_iter()
        .map(|&i| {
            let i = i as usize;
            n as f64 * fv[i].powf(q) - norm(&gradient_at(&grid, fv, i), n)
        })
        .collect();
    for (&i, r) in grid.active().iter().zip(&rows) {
        rhs_v[i as usize] = *r;
    }
    let rhs = ScalarField::from_nodal(grid.clone(), rhs_v)?;

    let bd = boundary_integrate(&f);
    let int_rhs = integrate_nodes(&grid, |i| rhs.value(i));
    let compatibility = (int_rhs - bd).abs() / bd;
    let tol = 10.0 * h;
    if !(compatibility <= tol) {
        return Err(Error::Incompatible {
            residual: compatibility,
            tolerance: tol,
        });
    }

    let mut row_of = vec![NO_ROW; grid.len()];
    for (k, &i) in grid.active().iter().enumerate() {
        row_of[i as usize] = k as u32;
    }
    let vol = grid.cell_volumes();
    struct Row {
        cols: Vec<u32>,
        weights: Vec<f64>,
        diag: f64,
        load: f64,
        flux: f64,
    }
    let assembled: Vec<Row> = grid
        .active()
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let i = i as usize;
            let x = grid.coords(i);
            let mut row = Row {
                cols: Vec::with_capacity(2 * n),
                weights: Vec::with_capacity(2 * n),
                diag: 0.0,
                load: 0.0,
                flux: 0.0,
            };
            // S_P = n V_P - Σ_faces ⟨x_face, ν⟩ A_face.
            let mut sphere = n as f64 * vol[k];
            for axis in 0..n {
                for step in [-1isize, 1] {
                    let Some(j) = grid.neighbor(i, axis, step) else { continue };
                    let aperture = if step > 0 {
                        grid.face_aperture(i, axis)
                    } else {
                        grid.face_aperture(j, axis)
                    };
                    if aperture <= 0.0 {
                        continue;
                    }
                    sphere -= step as f64 * (x[axis] + 0.5 * step as f64 * h) * aperture;
                    if row_of[j] == NO_ROW {
                        continue;
                    }
                    let w = 0.5 * (fv[i] + fv[j]) * aperture / h;
                    row.cols.push(row_of[j]);
                    row.weights.push(w);
                    row.diag += w;
                }
            }
            row.flux = fv[i] * sphere;
            row.load = row.flux - rhs.value(i) * vol[k];
            row
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(assembled.len() + 1);
    row_ptr.push(0u32);
    let (mut cols, mut weights) = (Vec::new(), Vec::new());
    let mut diag = Vec::with_capacity(assembled.len());
    let mut load = Vec::with_capacity(assembled.len());
    for r in &assembled {
        cols.extend_from_slice(&r.cols);
        weights.extend_from_slice(&r.weights);
        row_ptr.push(cols.len() as u32);
        diag.push(r.diag);
        load.push(r.load);
    }
    let boundary_flux_total = det_sum(assembled.len(), |k| assembled[k].flux.abs());
    Ok(NeumannProblem {
        f,
        rhs,
        lambda,
        compatibility,
        row_of,
        row_ptr,
        cols,
        weights,
        diag,
        load,
        boundary_flux_total,
    })
}

#[derive(Clone, Debug)]
pub struct AbpSolution {
    u: ScalarField,
    residual: f64,
    iterations: usize,
    residual_history: Vec<f64>,
    /// Per active node: centred gradient where both neighbours exist along
    /// every axis, the boundary-aware stencil otherwise.
    gradient: Vec<Point>,
    /// Per active node; `None` without a full `3^n` neighbourhood.
    hessian: Vec<Option<[[f64; 3]; 3]>>,
    hessian_sup: f64,
    hessian_slack: f64,
    contact: ContactSet,
}

impl AbpSolution {
    pub fn grid(&self) -> &Arc<BallGrid> {
        self.u.grid()
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    /// Final relative residual `‖b - Lu‖ / ‖b‖` of the projected system.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Relative residual after every iteration.
    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    /// Gradient at the `k`-th active node.
    pub fn gradient(&self, k: usize) -> Point {
        self.gradient[k]
    }

    pub fn hessian(&self, k: usize) -> Option<[[f64; 3]; 3]> {
        self.hessian[k]
    }

    /// Largest Hessian spectral radius over nodes with a full neighbourhood.
    pub fn hessian_sup(&self) -> f64 {
        self.hessian_sup
    }

    /// Default Hessian slack `2 h sup|D²u|`.
    pub fn hessian_slack(&self) -> f64 {
        self.hessian_slack
    }

    /// Contact set at the default slacks: `h/2` on the gradient and
    /// [`hessian_slack`](Self::hessian_slack) on the Hessian.
    pub fn contact(&self) -> &ContactSet {
        &self.contact
    }

    /// Per active node membership in the default contact set.
    pub fn contact_mask(&self) -> &[bool] {
        self.contact.mask()
    }
}

pub fn solve_neumann(problem: &NeumannProblem) -> Result<AbpSolution> {
    solve_neumann_from(problem, None, SOLVER_TOLERANCE)
}

/// Jacobi-preconditioned conjugate gradients on the singular system with
/// the constant mode projected out of every residual, followed by the gauge
/// `u(0) = 0`. `initial` is indexed by active node.
pub fn solve_neumann_from(problem: &NeumannProblem, initial: Option<&[f64]>, tolerance: f64) -> Result<AbpSolution> {
    let m = problem.unknowns();
    let grid = problem.grid().clone();
    if let Some(x0) = initial {
        if x0.len() != m {
            return Err(Error::InvalidArgument(format!("initial iterate has {} entries for {m} unknowns", x0.len())));
        }
    }
    let dot = |a: &[f64], b: &[f64]| det_sum(a.len(), |k| a[k] * b[k]);
    let project = |v: &mut [f64]| {
        let mean = det_sum(v.len(), |k| v[k]) / v.len() as f64;
        v.par_iter_mut().for_each(|x| *x -= mean);
    };

    let mut b = problem.load.clone();
    project(&mut b);
    let bnorm = dot(&b, &b).sqrt();
    let mut x = initial.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; m]);
    project(&mut x);
    let mut ax = vec![0.0; m];
    problem.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    project(&mut r);
    let inv_diag: Vec<f64> = problem.diag.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    // A constant in z or p only shifts x by a constant, which the gauge
    // removes, and r·z is blind to it while r stays mean-free.
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    let mut rel = if bnorm > 0.0 { dot(&r, &r).sqrt() / bnorm } else { 0.0 };
    let mut it = 0;
    let mut ap = vec![0.0; m];
    while rel > tolerance {
        if it >= MAX_ITERATIONS || !rel.is_finite() {
            return Err(Error::NoConvergence {
                what: "Neumann conjugate gradient",
                iterations: it,
                residual: rel,
            });
        }
        let pap: f64 = ap
            .par_chunks_mut(REDUCTION_CHUNK)
            .enumerate()
            .map(|(c, out)| {
                let lo = c * REDUCTION_CHUNK;
                let mut s = 0.0;
                for (o, v) in out.iter_mut().enumerate() {
                    *v = problem.row_times(lo + o, &p);
                    s += *v * p[lo + o];
                }
                s
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        let alpha = rz / pap;
        // Roundoff slowly feeds the constant mode of r.
        let reproject = it % 64 == 63;
        let sums: Vec<[f64; 2]> = x
            .par_chunks_mut(REDUCTION_CHUNK)
            .zip(r.par_chunks_mut(REDUCTION_CHUNK))
            .zip(z.par_chunks_mut(REDUCTION_CHUNK))
            .enumerate()
            .map(|(c, ((xc, rc), zc))| {
                let lo = c * REDUCTION_CHUNK;
                let mut s = [0.0; 2];
                for o in 0..xc.len() {
                    let k = lo + o;
                    xc[o] += alpha * p[k];
                    rc[o] -= alpha * ap[k];
                    zc[o] = inv_diag[k] * rc[o];
                    s[0] += rc[o] * zc[o];
                    s[1] += rc[o] * rc[o];
                }
                s
            })
            .collect();
        let (mut rz_new, mut rr) = (0.0, 0.0);
        for s in &sums {
            rz_new += s[0];
            rr += s[1];
        }
        if reproject {
            project(&mut r);
            z.par_iter_mut().zip(&r).zip(&inv_diag).for_each(|((z, r), d)| *z = r * d);
            rz_new = dot(&r, &z);
            rr = dot(&r, &r);
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        it += 1;
        rel = rr.sqrt() / bnorm;
        history.push(rel);
    }
    // True residual, not the recursively updated one.
    problem.apply(&x, &mut ax);
    let mut res: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    project(&mut res);
    let residual = if bnorm > 0.0 { dot(&res, &res).sqrt() / bnorm } else { 0.0 };

    let origin = grid.node_near(&[0.0; 3]);
    let shift = x[problem.row_of[origin] as usize];
    let mut values = vec![f64::NAN; grid.len()];
    for (&i, xv) in grid.active().iter().zip(&x) {
        values[i as usize] = xv - shift;
    }
    values[origin] = 0.0;
    let u = ScalarField::from_nodal(grid.clone(), values)?;
    let uv = u.values();
    let n = grid.dim();
    let derivs: Vec<(Point, Option<[[f64; 3]; 3]>)> = grid
        .active()
        .par_iter()
        .map(|&i| {
            let i = i as usize;
            let g = centered_gradient_at(&grid, uv, i).unwrap_or_else(|| gradient_at(&grid, uv, i));
            (g, hessian_at(&grid, uv, i))
        })
        .collect();
    let (gradient, hessian): (Vec<_>, Vec<_>) = derivs.into_iter().unzip();
    let hessian_sup = hessian
        .iter()
        .flatten()
        .map(|hm| spectral_radius(hm, n))
        .fold(0.0, f64::max);
    let mut sol = AbpSolution {
        u,
        residual,
        iterations: it,
        residual_history: history,
        gradient,
        hessian,
        hessian_sup,
        hessian_slack: 2.0 * grid.h() * hessian_sup,
        contact: ContactSet::empty(),
    };
    sol.contact = contact_set(&sol, 0.5 * grid.h());
    Ok(sol)
}

fn spectral_radius(m: &[[f64; 3]; 3], n: usize) -> f64 {
    use crate::numerics::{sym_eigen2, sym_eigen3};
    match n {
        2 => {
            let e = sym_eigen2(m[0][0], m[0][1], m[1][1]);
            e[0].abs().max(e[1].abs())
        }
        _ => {
            let e = sym_eigen3(m);
            e[0].abs().max(e[2].abs())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Builtin;
    use crate::grid::unit_sphere_measure;

    fn grid(n: usize, h: f64) -> Arc<BallGrid> {
        Arc::new(BallGrid::new(n, h).unwrap())
    }

    #[test]
    fn constant_rhs_matches_sphere_measure() {
        for n in [2, 3] {
            let g = grid(n, if n == 2 { 1.0 / 32.0 } else { 1.0 / 16.0 });
            let p = assemble_neumann(&Builtin::Const1.field(g.clone()).unwrap()).unwrap();
            assert_eq!(p.lambda(), 1.0);
            for &i in g.active() {
                assert_eq!(p.rhs().value(i as usize), n as f64);
            }
            let sphere = unit_sphere_measure(n).unwrap();
            let int = integrate_nodes(&g, |i| p.rhs().value(i));
            assert!((int - sphere).abs() / sphere < 10.0 * g.h());
            // The assembled boundary measure is exact for the cut cells.
            assert!(p.discrete_defect() < 1e-12, "{}", p.discrete_defect());
        }
    }

    #[test]
    fn quadratic_is_the_discrete_solution_for_constant_f() {
        for (n, h) in [(2, 1.0 / 32.0), (3, 1.0 / 16.0)] {
            let g = grid(n, h);
            let p = assemble_neumann(&Builtin::Const1.field(g.clone()).unwrap()).unwrap();
            let sol = solve_neumann(&p).unwrap();
            assert!(sol.residual() <= RESIDUAL_LIMIT);
            let origin = g.node_near(&[0.0; 3]);
            assert_eq!(sol.u().value(origin), 0.0);
            let mut err: f64 = 0.0;
            for &i in g.active() {
                let x = g.coords(i as usize);
                err = err.max((sol.u().value(i as usize) - 0.5 * norm(&x, n).powi(2)).abs());
            }
            assert!(err < 1e-8, "n = {n}: {err}");
        }
    }

    #[test]
    fn bump_is_compatible_after_normalization() {
        let g = grid(2, 1.0 / 32.0);
        let p = assemble_neumann(&Builtin::Bump1.field(g.clone()).unwrap()).unwrap();
        assert!(p.lambda() != 1.0);
        assert!(p.compatibility() <= 10.0 * g.h());
        assert!(p.discrete_defect() <= 10.0 * g.h());
    }

    #[test]
    fn constant_in_initial_iterate_is_irrelevant() {
        let g = grid(2, 1.0 / 16.0);
        let p = assemble_neumann(&Builtin::Gauss.field(g.clone()).unwrap()).unwrap();
        let m = p.unknowns();
        let a = solve_neumann_from(&p, Some(&vec![0.0; m]), SOLVER_TOLERANCE).unwrap();
        let b = solve_neumann_from(&p, Some(&vec![3.5; m]), SOLVER_TOLERANCE).unwrap();
        for &i in g.active() {
            let i = i as usize;
            assert!((a.u().value(i) - b.u().value(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let g = grid(2, 1.0 / 16.0);
        let p = assemble_neumann(&Builtin::Aniso.field(g.clone()).unwrap()).unwrap();
        let a = solve_neumann(&p).unwrap();
        let b = solve_neumann(&p).unwrap();
        assert_eq!(a.iterations(), b.iterations());
        for &i in g.active() {
            assert_eq!(a.u().value(i as usize).to_bits(), b.u().value(i as usize).to_bits());
        }
    }
}
