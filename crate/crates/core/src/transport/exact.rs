//! Exact transport by the primal network simplex on the complete bipartite
//! graph, with an artificial root and a strongly feasible spanning tree.

use super::{check_masses, quadratic_cost, DiscreteMeasure, TransportPlan};
use crate::error::{Error, Result};

/// Largest instance (points per side) accepted by the exact solver.
pub const EXACT_POINT_LIMIT: usize = 4096;

const NONE: usize = usize::MAX;

struct Simplex<'a> {
    m: usize,
    k: usize,
    root: usize,
    src: &'a [crate::grid::Point],
    tgt: &'a [crate::grid::Point],
    art: f64,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// Tree arc of a node points from the node to its parent.
    up: Vec<bool>,
    flow: Vec<f64>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    pot: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn real_arcs(&self) -> usize {
        self.m * self.k
    }

    fn ends(&self, arc: usize) -> (usize, usize) {
        let r = self.real_arcs();
        if arc < r {
            (arc / self.k, self.m + arc % self.k)
        } else if arc < r + self.m {
            (arc - r, self.root)
        } else {
            (self.root, self.m + (arc - r - self.m))
        }
    }

    fn cost(&self, arc: usize) -> f64 {
        if arc < self.real_arcs() {
            quadratic_cost(&self.src[arc / self.k], &self.tgt[arc % self.k])
        } else {
            self.art
        }
    }

    fn reduced_cost(&self, arc: usize) -> f64 {
        let (s, t) = self.ends(arc);
        self.cost(arc) + self.pot[s] - self.pot[t]
    }

    fn remove_child(&mut self, parent: usize, child: usize) {
        let list = &mut self.children[parent];
        let pos = list.iter().position(|&c| c == child).expect("tree is consistent");
        list.swap_remove(pos);
    }

    /// Block-search pricing from `start`; returns the most negative arc of
    /// the first block that has one.
    fn price(&self, start: &mut usize, block: usize, eps: f64) -> Option<(usize, f64)> {
        let total = self.real_arcs();
        let mut best = NONE;
        let mut best_rc = -eps;
        let mut scanned = 0;
        let mut in_block = 0;
        let mut a = *start;
        while scanned < total {
            let rc = self.reduced_cost(a);
            if rc < best_rc {
                best_rc = rc;
                best = a;
            }
            a += 1;
            if a == total {
                a = 0;
            }
            scanned += 1;
            in_block += 1;
            if in_block == block {
                if best != NONE {
                    *start = a;
                    return Some((best, best_rc));
                }
                in_block = 0;
            }
        }
        *start = a;
        (best != NONE).then_some((best, best_rc))
    }

    fn pivot(&mut self, e: usize, rc: f64) {
        let (s, t) = self.ends(e);
        let (mut a, mut b) = (s, t);
        while a != b {
            if self.depth[a] > self.depth[b] {
                a = self.parent[a];
            } else if self.depth[b] > self.depth[a] {
                b = self.parent[b];
            } else {
                a = self.parent[a];
                b = self.parent[b];
            }
        }
        let join = a;

        // Strongly feasible leaving rule: strict on the first path, weak on
        // the second.
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut side = 0;
        let mut u = s;
        while u != join {
            if self.up[u] && self.flow[u] < delta {
                delta = self.flow[u];
                u_out = u;
                side = 1;
            }
            u = self.parent[u];
        }
        u = t;
        while u != join {
            if !self.up[u] && self.flow[u] <= delta {
                delta = self.flow[u];
                u_out = u;
                side = 2;
            }
            u = self.parent[u];
        }
        debug_assert!(u_out != NONE);

        if delta > 0.0 {
            u = s;
            while u != join {
                if self.up[u] {
                    self.flow[u] -= delta;
                } else {
                    self.flow[u] += delta;
                }
                u = self.parent[u];
            }
            u = t;
            while u != join {
                if self.up[u] {
                    self.flow[u] += delta;
                } else {
                    self.flow[u] -= delta;
                }
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if side == 1 { (s, t) } else { (t, s) };
        let mut path = vec![u_in];
        let mut w = u_in;
        while w != u_out {
            w = self.parent[w];
            path.push(w);
        }
        let saved: Vec<(usize, bool, f64)> = path.iter().map(|&w| (self.pred[w], self.up[w], self.flow[w])).collect();
        let old_parent = self.parent[u_out];
        self.remove_child(old_parent, u_out);
        for i in (1..path.len()).rev() {
            let (w, c) = (path[i], path[i - 1]);
            self.remove_child(w, c);
            self.parent[w] = c;
            self.pred[w] = saved[i - 1].0;
            self.up[w] = !saved[i - 1].1;
            self.flow[w] = saved[i - 1].2;
            self.children[c].push(w);
        }
        self.parent[u_in] = v_in;
        self.pred[u_in] = e;
        self.up[u_in] = u_in == s;
        self.flow[u_in] = delta;
        self.children[v_in].push(u_in);

        let shift = if u_in == s { -rc } else { rc };
        let mut stack = vec![u_in];
        while let Some(v) = stack.pop() {
            self.depth[v] = self.depth[self.parent[v]] + 1;
            self.pot[v] += shift;
            stack.extend_from_slice(&self.children[v]);
        }
    }

    fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.parent.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend_from_slice(&self.children[v]);
        }
        order
    }

    /// Recompute potentials from the tree to remove accumulated drift.
    fn refresh_potentials(&mut self) {
        let order = self.preorder();
        self.pot[self.root] = 0.0;
        for &v in &order[1..] {
            let c = self.cost(self.pred[v]);
            let p = self.pot[self.parent[v]];
            self.pot[v] = if self.up[v] { p - c } else { p + c };
        }
    }

    /// Recompute tree flows from the supplies, leaves first.
    fn refresh_flows(&mut self, supply: &[f64]) {
        let order = self.preorder();
        let mut excess = supply.to_vec();
        for &v in order[1..].iter().rev() {
            let x = if self.up[v] { excess[v] } else { -excess[v] };
            self.flow[v] = x.max(0.0);
            let p = self.parent[v];
            excess[p] += excess[v];
        }
    }
}

/// Optimal plan for the quadratic cost, with dual certificate.
pub fn solve_exact_ot(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TransportPlan> {
    for m in [mu, nu] {
        if m.len() > EXACT_POINT_LIMIT {
            return Err(Error::InstanceTooLarge {
                points: m.len(),
                limit: EXACT_POINT_LIMIT,
            });
        }
    }
    check_masses(mu, nu)?;
    let (m, k) = (mu.len(), nu.len());
    let root = m + k;
    let total = mu.total();
    let scale = total / nu.total();
    let mut supply = Vec::with_capacity(root + 1);
    supply.extend_from_slice(mu.weights());
    supply.extend(nu.weights().iter().map(|w| -w * scale));
    supply.push(0.0);

    // Any i -> R -> j route can be shortcut by i -> j, so twice the
    // artificial cost only needs to exceed the largest real cost.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in mu.points().iter().chain(nu.points()) {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let cmax = quadratic_cost(&lo, &hi);
    let art = cmax + 1.0;

    let nodes = root + 1;
    let mut sx = Simplex {
        m,
        k,
        root,
        src: mu.points(),
        tgt: nu.points(),
        art,
        parent: vec![root; nodes],
        pred: vec![NONE; nodes],
        up: vec![false; nodes],
        flow: vec![0.0; nodes],
        children: vec![Vec::new(); nodes],
        depth: vec![1; nodes],
        pot: vec![0.0; nodes],
    };
    sx.parent[root] = NONE;
    sx.depth[root] = 0;
    sx.children[root] = (0..root).collect();
    let r = m * k;
    for i in 0..m {
        sx.pred[i] = r + i;
        sx.up[i] = true;
        sx.flow[i] = supply[i];
        sx.pot[i] = -art;
    }
    for j in 0..k {
        sx.pred[m + j] = r + m + j;
        sx.up[m + j] = false;
        sx.flow[m + j] = -supply[m + j];
        sx.pot[m + j] = art;
    }

    let block = ((r as f64).sqrt().ceil() as usize).max(16).min(r.max(1));
    let eps = 1e-12 * art;
    let max_pivots = 200 * (m + k) * ((m + k) as f64).log2().ceil().max(1.0) as usize + 10_000;
    let mut start = 0;
    let mut pivots = 0;
    loop {
        match sx.price(&mut start, block, eps) {
            Some((e, rc)) => {
                sx.pivot(e, rc);
                pivots += 1;
                if pivots % 4096 == 0 {
                    sx.refresh_potentials();
                }
                if pivots > max_pivots {
                    return Err(Error::NoConvergence {
                        what: "network simplex",
                        iterations: pivots,
                        residual: rc,
                    });
                }
            }
            None => {
                // Confirm optimality against drift-free potentials.
                sx.refresh_potentials();
                if sx.price(&mut start, block, eps).is_none() {
                    break;
                }
            }
        }
    }
    sx.refresh_flows(&supply);

    let mut entries = Vec::new();
    let mut artificial = 0.0;
    for v in 0..root {
        let a = sx.pred[v];
        if a < r {
            let (s, t) = sx.ends(a);
            entries.push((s, t - m, sx.flow[v]));
        } else {
            artificial += sx.flow[v];
        }
    }
    if artificial > 1e-9 * total {
        return Err(Error::NoConvergence {
            what: "network simplex (artificial flow remains)",
            iterations: pivots,
            residual: artificial,
        });
    }

    // Dual certificate: u from the tree, v made feasible by a min-plus pass.
    let u: Vec<f64> = (0..m).map(|i| -sx.pot[i]).collect();
    let v: Vec<f64> = (0..k)
        .map(|j| {
            (0..m)
                .map(|i| quadratic_cost(&mu.points()[i], &nu.points()[j]) - u[i])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let dual: f64 = mu.weights().iter().zip(&u).map(|(w, x)| w * x).sum::<f64>()
        + nu.weights().iter().zip(&v).map(|(w, x)| w * scale * x).sum::<f64>();
    let mut plan = TransportPlan::from_entries(mu, nu, entries, 0.0, (u, v));
    let gap = plan.cost() - dual;
    plan.duality_gap = Some(gap);
    let allowed = 1e-9 * plan.cost() + 1e-12 * total * art;
    if gap > allowed {
        return Err(Error::NoConvergence {
            what: "network simplex (duality gap)",
            iterations: pivots,
            residual: gap,
        });
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn measure(points: &[[f64; 2]], weights: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(points.iter().map(|p| [p[0], p[1], 0.0]).collect(), weights.to_vec()).unwrap()
    }

    #[test]
    fn identical_single_points() {
        let a = measure(&[[0.3, 0.2]], &[1.0]);
        let p = solve_exact_ot(&a, &a).unwrap();
        assert_eq!(p.cost(), 0.0);
        assert_eq!(p.entries(), &[(0, 0, 1.0)]);
    }

    #[test]
    fn forced_coupling() {
        let a = measure(&[[0.0, 0.0]], &[1.0]);
        let b = measure(&[[1.0, 0.0]], &[1.0]);
        assert!((solve_exact_ot(&a, &b).unwrap().cost() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_point_matching_against_enumeration() {
        let (a, b) = (0.3, 0.8);
        let mu = measure(&[[-a, 0.0], [a, 0.0]], &[0.5, 0.5]);
        let nu = measure(&[[-b, 0.0], [b, 0.0]], &[0.5, 0.5]);
        let straight = 0.5 * 0.5 * (a - b) * (a - b) * 2.0;
        let crossed = 0.5 * 0.5 * (a + b) * (a + b) * 2.0;
        let p = solve_exact_ot(&mu, &nu).unwrap();
        assert!((p.cost() - straight.min(crossed)).abs() < 1e-15);
        assert!(p.entries().iter().all(|&(i, j, _)| i == j));
    }

    #[test]
    fn random_instances_certify_and_match_brute_force() {
        // Permutation instances: the LP optimum is attained at a permutation.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for size in [3usize, 5, 7] {
            let pts = |rng: &mut ChaCha8Rng| -> Vec<[f64; 2]> {
                (0..size).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()
            };
            let xs = pts(&mut rng);
            let ys = pts(&mut rng);
            let w = vec![1.0 / size as f64; size];
            let p = solve_exact_ot(&measure(&xs, &w), &measure(&ys, &w)).unwrap();
            let mut perm: Vec<usize> = (0..size).collect();
            let mut best = f64::INFINITY;
            permute(&mut perm, 0, &mut |pm| {
                let c: f64 = (0..size)
                    .map(|i| {
                        let d0 = xs[i][0] - ys[pm[i]][0];
                        let d1 = xs[i][1] - ys[pm[i]][1];
                        0.5 * (d0 * d0 + d1 * d1) / size as f64
                    })
                    .sum();
                best = best.min(c);
            });
            assert!((p.cost() - best).abs() < 1e-12, "{} vs {}", p.cost(), best);
            assert!(p.duality_gap().unwrap().abs() < 1e-12);
        }
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn unequal_weights_reproduce_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 60;
        let pts: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0]).collect();
        let mut wa: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let mut wb: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let (sa, sb): (f64, f64) = (wa.iter().sum(), wb.iter().sum());
        wa.iter_mut().for_each(|w| *w /= sa);
        wb.iter_mut().for_each(|w| *w /= sb);
        let mu = DiscreteMeasure::new(pts.clone(), wa).unwrap();
        let nu = DiscreteMeasure::new(pts.iter().map(|p| [p[1], -p[0], 0.0]).collect(), wb).unwrap();
        let p = solve_exact_ot(&mu, &nu).unwrap();
        assert!(p.marginal_residual(&mu, &nu) < 1e-10);
        assert!(p.duality_gap().unwrap() <= 1e-9 * p.cost());
    }

    #[test]
    fn rejects_large_and_mismatched() {
        let big = DiscreteMeasure::new(vec![[0.0; 3]; EXACT_POINT_LIMIT + 1], vec![1.0; EXACT_POINT_LIMIT + 1]).unwrap();
        let one = DiscreteMeasure::dirac([0.0; 3], 1.0).unwrap();
        assert!(matches!(solve_exact_ot(&big, &one), Err(Error::InstanceTooLarge { .. })));
        let two = DiscreteMeasure::dirac([0.0; 3], 2.0).unwrap();
        assert!(matches!(solve_exact_ot(&one, &two), Err(Error::MassMismatch { .. })));
    }
}
