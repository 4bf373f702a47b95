use super::AbpSolution;
use crate::grid::{norm, Point};
use crate::numerics::{det_sum, min_sym_eigen};
use rayon::prelude::*;
use std::sync::atomic::{AtomicU64, Ordering};

/// Nodes where `|∇u| < 1 - gradient_slack` and the smallest Hessian
/// eigenvalue is `≥ -hessian_slack`. Nodes without a full `3^n`
/// neighbourhood have no Hessian and are never in the set.
#[derive(Clone, Debug)]
pub struct ContactSet {
    mask: Vec<bool>,
    measure: f64,
    count: usize,
    gradient_slack: f64,
    hessian_slack: f64,
}

impl ContactSet {
    pub(super) fn empty() -> Self {
        ContactSet {
            mask: Vec::new(),
            measure: 0.0,
            count: 0,
            gradient_slack: 0.0,
            hessian_slack: 0.0,
        }
    }

    /// Membership per active node.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, k: usize) -> bool {
        self.mask[k]
    }

    /// `|A|` by cell quadrature.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn gradient_slack(&self) -> f64 {
        self.gradient_slack
    }

    pub fn hessian_slack(&self) -> f64 {
        self.hessian_slack
    }
}

/// Contact set with gradient slack `delta ∈ [0, 0.1]` and the solution's
/// default Hessian slack. Keeping the Hessian slack fixed makes the sets
/// nested in `delta`; a shared slack would loosen one condition while
/// tightening the other.
pub fn contact_set(sol: &AbpSolution, delta: f64) -> ContactSet {
    contact_set_with(sol, delta, sol.hessian_slack())
}

pub fn contact_set_with(sol: &AbpSolution, gradient_slack: f64, hessian_slack: f64) -> ContactSet {
    let grid = sol.grid();
    let n = grid.dim();
    let mask: Vec<bool> = (0..grid.active().len())
        .into_par_iter()
        .map(|k| match sol.hessian(k) {
            Some(hm) => norm(&sol.gradient(k), n) < 1.0 - gradient_slack && min_sym_eigen(&hm, n) >= -hessian_slack,
            None => false,
        })
        .collect();
    let vol = grid.cell_volumes();
    let measure = det_sum(mask.len(), |k| if mask[k] { vol[k] } else { 0.0 });
    let count = mask.iter().filter(|&&m| m).count();
    ContactSet {
        mask,
        measure,
        count,
        gradient_slack,
        hessian_slack,
    }
}

/// Rasterised image `∇u(A)` on a target grid of spacing `h/2`.
#[derive(Clone, Debug)]
pub struct GradientImage {
    target_h: f64,
    hit_cells: usize,
    ball_cells: usize,
    hit_ball_cells: usize,
}

impl GradientImage {
    pub fn target_h(&self) -> f64 {
        self.target_h
    }

    /// `|Φ(A)|`: hit cells times the cell volume.
    pub fn measure(&self, dim: usize) -> f64 {
        self.hit_cells as f64 * self.target_h.powi(dim as i32)
    }

    /// Fraction of target cells centred in the open unit ball that are hit.
    pub fn coverage(&self) -> f64 {
        self.hit_ball_cells as f64 / self.ball_cells as f64
    }

    pub fn hit_cells(&self) -> usize {
        self.hit_cells
    }

    pub fn ball_cells(&self) -> usize {
        self.ball_cells
    }
}

/// Each contact node owns its grid cell. Cell corners are mapped by the
/// average gradient of the `2^n` nodes sharing the corner (a first order
/// Taylor step from the owner when one is inactive), so neighbouring images
/// share corners. Every cell is split into `n!` Kuhn simplices whose images
/// are rasterised by cell-centre inclusion: neither an over- nor an
/// under-approximation, with an error confined to cells cut by the image
/// boundary.
pub fn gradient_image(sol: &AbpSolution, contact: &ContactSet) -> GradientImage {
    let grid = sol.grid();
    let n = grid.dim();
    let h = grid.h();
    let ht = 0.5 * h;
    let inner = (1.0 / ht - 1e-9).ceil() as usize;
    let pad = (0.25 / ht).ceil() as usize;
    let half = inner + pad;
    let side = 2 * half;
    let cells = side.pow(n as u32);
    let bits: Vec<AtomicU64> = (0..cells.div_ceil(64)).map(|_| AtomicU64::new(0)).collect();

    let mut row_of = vec![u32::MAX; grid.len()];
    for (k, &i) in grid.active().iter().enumerate() {
        row_of[i as usize] = k as u32;
    }
    let perms: &[&[usize]] = if n == 2 {
        &[&[0, 1], &[1, 0]]
    } else {
        &[&[0, 1, 2], &[0, 2, 1], &[1, 0, 2], &[1, 2, 0], &[2, 0, 1], &[2, 1, 0]]
    };
    let center = |i: usize| (i as f64 - half as f64 + 0.5) * ht;

    (0..grid.active().len()).into_par_iter().filter(|&k| contact.contains(k)).for_each(|k| {
        let node = grid.active()[k] as usize;
        let g0 = sol.gradient(k);
        let hm = sol.hessian(k).expect("contact nodes have a Hessian");
        let mut corner_img = [[0.0; 3]; 8];
        for (c, img) in corner_img.iter_mut().enumerate().take(1 << n) {
            let sign = |a: usize| if c >> a & 1 == 1 { 1isize } else { -1 };
            let mut acc = [0.0; 3];
            let mut complete = true;
            for t in 0..(1usize << n) {
                let mut j = Some(node);
                for a in 0..n {
                    if t >> a & 1 == 1 {
                        j = j.and_then(|j| grid.neighbor(j, a, sign(a)));
                    }
                }
                match j.map(|j| row_of[j]) {
                    Some(r) if r != u32::MAX => {
                        let g = sol.gradient(r as usize);
                        for d in 0..n {
                            acc[d] += g[d];
                        }
                    }
                    _ => {
                        complete = false;
                        break;
                    }
                }
            }
            if complete {
                for d in 0..n {
                    img[d] = acc[d] / (1usize << n) as f64;
                }
            } else {
                for d in 0..n {
                    img[d] = g0[d] + (0..n).map(|e| hm[d][e] * 0.5 * h * sign(e) as f64).sum::<f64>();
                }
            }
        }
        for perm in perms {
            let mut verts = [[0.0; 3]; 4];
            let mut mask = 0usize;
            verts[0] = corner_img[0];
            for (m, &a) in perm.iter().enumerate() {
                mask |= 1 << a;
                verts[m + 1] = corner_img[mask];
            }
            rasterize(&verts[..=n], n, ht, half, side, &center, &bits);
        }
    });

    let mut hit_cells = 0;
    let mut ball_cells = 0;
    let mut hit_ball_cells = 0;
    let mut m = [0usize; 3];
    for cell in 0..cells {
        let mut rest = cell;
        for a in (0..n).rev() {
            m[a] = rest % side;
            rest /= side;
        }
        let hit = bits[cell / 64].load(Ordering::Relaxed) >> (cell % 64) & 1 == 1;
        let r2: f64 = (0..n).map(|a| center(m[a]).powi(2)).sum();
        let in_ball = r2 < 1.0;
        hit_cells += hit as usize;
        ball_cells += in_ball as usize;
        hit_ball_cells += (hit && in_ball) as usize;
    }
    GradientImage {
        target_h: ht,
        hit_cells,
        ball_cells,
        hit_ball_cells,
    }
}

/// Mark target cells whose centre lies in the closed simplex `verts`.
fn rasterize<C: Fn(usize) -> f64>(
    verts: &[Point],
    n: usize,
    ht: f64,
    half: usize,
    side: usize,
    center: &C,
    bits: &[AtomicU64],
) {
    // Barycentric coordinates through the inverse edge matrix.
    let mut e = [[0.0; 3]; 3];
    for r in 0..n {
        for (c, v) in verts[1..].iter().enumerate() {
            e[r][c] = v[r] - verts[0][r];
        }
    }
    let d = crate::numerics::det(&e, n);
    let scale = (0..n).map(|r| (0..n).map(|c| e[r][c].abs()).fold(0.0, f64::max)).product::<f64>();
    if !(d.abs() > 1e-14 * scale.max(1e-300)) {
        return;
    }
    let inv = invert(&e, n, d);
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..n {
        let (mn, mx) = verts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), v| (mn.min(v[a]), mx.max(v[a])));
        let to_idx = |y: f64| y / ht + half as f64 - 0.5;
        let l = to_idx(mn).ceil().max(0.0);
        let u = to_idx(mx).floor().min(side as f64 - 1.0);
        if l > u {
            return;
        }
        lo[a] = l as usize;
        hi[a] = u as usize;
    }
    if n == 2 {
        lo[2] = 0;
        hi[2] = 0;
    }
    let eps = 1e-12;
    for i in lo[0]..=hi[0] {
        for j in lo[1]..=hi[1] {
            for l in lo[2]..=hi[2] {
                let idx = [i, j, l];
                let mut p = [0.0; 3];
                for a in 0..n {
                    p[a] = center(idx[a]) - verts[0][a];
                }
                let mut inside = true;
                let mut sum = 0.0;
                for r in 0..n {
                    let lam: f64 = (0..n).map(|c| inv[r][c] * p[c]).sum();
                    sum += lam;
                    inside &= lam >= -eps;
                }
                if inside && sum <= 1.0 + eps {
                    let cell = (0..n).fold(0, |acc, a| acc * side + idx[a]);
                    bits[cell / 64].fetch_or(1 << (cell % 64), Ordering::Relaxed);
                }
            }
        }
    }
}

fn invert(m: &[[f64; 3]; 3], n: usize, d: f64) -> [[f64; 3]; 3] {
    let mut inv = [[0.0; 3]; 3];
    if n == 2 {
        inv[0][0] = m[1][1] / d;
        inv[0][1] = -m[0][1] / d;
        inv[1][0] = -m[1][0] / d;
        inv[1][1] = m[0][0] / d;
    } else {
        for r in 0..3 {
            for c in 0..3 {
                let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
                let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
                inv[r][c] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / d;
            }
        }
    }
    inv
}

#[cfg(test)]
pub(crate) fn target_cells(grid: &crate::grid::BallGrid) -> usize {
    let ht = 0.5 * grid.h();
    let inner = (1.0 / ht - 1e-9).ceil() as usize;
    let pad = (0.25 / ht).ceil() as usize;
    (2 * (inner + pad)).pow(grid.dim() as u32)
}

#[cfg(test)]
mod tests {
    use super::super::{assemble_neumann, solve_neumann};
    use super::*;
    use crate::corpus::Builtin;
    use crate::grid::BallGrid;
    use std::sync::Arc;

    #[test]
    fn inverse_is_exact_for_small_matrices() {
        let m = [[2.0, 1.0, 0.5], [0.0, 3.0, 1.0], [1.0, 0.0, 4.0]];
        let d = crate::numerics::det(&m, 3);
        let inv = invert(&m, 3, d);
        for r in 0..3 {
            for c in 0..3 {
                let v: f64 = (0..3).map(|k| m[r][k] * inv[k][c]).sum();
                assert!((v - if r == c { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_density_contact_and_image() {
        let g = Arc::new(BallGrid::new(2, 1.0 / 32.0).unwrap());
        let sol = solve_neumann(&assemble_neumann(&Builtin::Const1.field(g.clone()).unwrap()).unwrap()).unwrap();
        let a = contact_set(&sol, 0.0);
        // Every node with a full neighbourhood strictly inside the sphere.
        for (k, &i) in g.active().iter().enumerate() {
            let x = g.coords(i as usize);
            let expect = sol.hessian(k).is_some() && norm(&x, 2) < 1.0 - 1e-9;
            assert_eq!(a.contains(k), expect, "{x:?}");
        }
        let img = gradient_image(&sol, &a);
        // Φ is the identity, so the image is the union of contact cells.
        let cells = a.count() as f64 * g.h() * g.h();
        assert!((img.measure(2) - cells).abs() <= 1e-12);
        assert!(img.coverage() > 0.9);
        assert!(target_cells(&g) >= img.ball_cells());
    }

    #[test]
    fn contact_sets_are_nested() {
        let g = Arc::new(BallGrid::new(2, 1.0 / 16.0).unwrap());
        let sol = solve_neumann(&assemble_neumann(&Builtin::Aniso.field(g.clone()).unwrap()).unwrap()).unwrap();
        let a0 = contact_set(&sol, 0.0);
        let a1 = contact_set(&sol, 0.01);
        for k in 0..g.active().len() {
            assert!(!a1.contains(k) || a0.contains(k));
        }
        assert!(a1.measure() <= a0.measure());
        assert!(gradient_image(&sol, &a1).coverage() <= gradient_image(&sol, &a0).coverage());
    }
}
