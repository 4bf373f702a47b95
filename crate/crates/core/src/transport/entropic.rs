//! Entropy-regularised transport by log-domain scaling iterations with
//! ε-scaling warm starts and adaptive over-relaxation.

use super::{check_masses, quadratic_cost, DiscreteMeasure, TransportPlan};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Relative ε schedule, in units of the mean pairwise cost.
pub const DEFAULT_SCHEDULE: [f64; 5] = [1.0, 0.3, 0.1, 0.03, 0.01];

/// Continuation of [`DEFAULT_SCHEDULE`] used by [`solve_entropic_ot_refined`].
pub const REFINEMENT_SCHEDULE: [f64; 2] = [0.003, 0.001];

#[derive(Clone, Debug)]
pub struct EntropicOptions {
    /// Row marginal residual required at the final ε.
    pub tolerance: f64,
    /// Looser residual accepted at intermediate ε; they only warm start.
    pub warm_tolerance: f64,
    /// Iteration cap per ε stage.
    pub max_iterations: usize,
    /// Iteration cap per refinement stage, which may give up.
    pub refinement_iterations: usize,
}

impl Default for EntropicOptions {
    fn default() -> Self {
        EntropicOptions {
            tolerance: 1e-8,
            warm_tolerance: 1e-4,
            max_iterations: 50_000,
            refinement_iterations: 2_000,
        }
    }
}

/// `Σ μ_i ν_j c(x_i, ξ_j) / (|μ| |ν|)`, floored so that ε stays positive
/// when all points coincide.
pub fn mean_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let s: f64 = mu
        .points()
        .iter()
        .zip(mu.weights())
        .map(|(x, a)| {
            a * nu
                .points()
                .iter()
                .zip(nu.weights())
                .map(|(y, b)| b * quadratic_cost(x, y))
                .sum::<f64>()
        })
        .sum();
    (s / (mu.total() * nu.total())).max(1e-12)
}

/// Absolute ε values of the default schedule for this instance.
pub fn entropic_schedule(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<f64> {
    let scale = mean_cost(mu, nu);
    DEFAULT_SCHEDULE.iter().map(|r| r * scale).collect()
}

/// Entropic plan at `epsilon`, warm started through the default schedule
/// entries above it.
pub fn solve_entropic_ot(mu: &DiscreteMeasure, nu: &DiscreteMeasure, epsilon: f64) -> Result<TransportPlan> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut eps: Vec<f64> = entropic_schedule(mu, nu).into_iter().filter(|&e| e > epsilon).collect();
    eps.push(epsilon);
    solve_entropic_ot_with(mu, nu, &eps, &EntropicOptions::default())
}

/// Runs the scaling iterations through `schedule` (decreasing ε) and returns
/// the plan at its last entry.
pub fn solve_entropic_ot_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    schedule: &[f64],
    opts: &EntropicOptions,
) -> Result<TransportPlan> {
    let Some(&last) = schedule.last() else {
        return Err(Error::InvalidArgument("empty epsilon schedule".into()));
    };
    let mut s = Scaling::new(mu, nu)?;
    for (k, &eps) in schedule.iter().enumerate() {
        let tol = if k + 1 == schedule.len() {
            opts.tolerance
        } else {
            opts.warm_tolerance.max(opts.tolerance)
        };
        s.run(eps, tol, opts.max_iterations)?;
    }
    Ok(s.plan(mu, nu, last))
}

/// Default schedule to its final ε, then the [`REFINEMENT_SCHEDULE`] stages
/// in order for as long as each converges within
/// `opts.refinement_iterations`. Returns the plan at the smallest converged ε.
///
/// Below the grid scale the kernel couples neighbouring points by factors
/// like `exp(-h²/2ε)`, and scaling iterations on near-identical measures can
/// stall there; the fallback keeps the result deterministic.
pub fn solve_entropic_ot_refined(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    opts: &EntropicOptions,
) -> Result<TransportPlan> {
    let scale = mean_cost(mu, nu);
    let mut s = Scaling::new(mu, nu)?;
    for (k, r) in DEFAULT_SCHEDULE.iter().enumerate() {
        let tol = if k + 1 == DEFAULT_SCHEDULE.len() {
            opts.tolerance
        } else {
            opts.warm_tolerance.max(opts.tolerance)
        };
        s.run(r * scale, tol, opts.max_iterations)?;
    }
    let mut eps = DEFAULT_SCHEDULE[DEFAULT_SCHEDULE.len() - 1] * scale;
    for r in REFINEMENT_SCHEDULE {
        let saved = (s.f.clone(), s.g.clone());
        if s.run(r * scale, opts.tolerance, opts.refinement_iterations).is_err() {
            (s.f, s.g) = saved;
            break;
        }
        eps = r * scale;
    }
    Ok(s.plan(mu, nu, eps))
}

/// Terms more than this far below the maximum are dropped; each is below
/// e^-40 of the largest, far under the marginal tolerance.
const LSE_CUTOFF: f64 = 40.0;

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = it
        .map(|a| a - m)
        .filter(|&d| d > -LSE_CUTOFF)
        .map(f64::exp)
        .sum();
    m + s.ln()
}

/// Dual state of the scaling iterations. Between stages the columns are
/// exact for the last ε run.
struct Scaling {
    m: usize,
    k: usize,
    /// Row-major cost and its transpose, so both half steps stream rows.
    cost: Vec<f64>,
    cost_t: Vec<f64>,
    log_mu: Vec<f64>,
    log_nu: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    /// μ = ν; the duals are kept equal.
    symmetric: bool,
}

impl Scaling {
    fn new(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        check_masses(mu, nu)?;
        let (m, k) = (mu.len(), nu.len());
        // Weights equal to rounding count as identical; the symmetric
        // iteration then reproduces ν to the same relative accuracy.
        let symmetric = mu.points() == nu.points()
            && mu
                .weights()
                .iter()
                .zip(nu.weights())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.max(*b));
        let cost: Vec<f64> = (0..m * k)
            .into_par_iter()
            .map(|a| quadratic_cost(&mu.points()[a / k], &nu.points()[a % k]))
            .collect();
        let cost_t = (0..m * k).into_par_iter().map(|a| cost[(a % m) * k + a / m]).collect();
        Ok(Scaling {
            m,
            k,
            cost,
            cost_t,
            log_mu: mu.weights().iter().map(|w| w.ln()).collect(),
            log_nu: if symmetric { mu } else { nu }.weights().iter().map(|w| w.ln()).collect(),
            f: vec![0.0; m],
            g: vec![0.0; k],
            symmetric,
        })
    }

    fn row_update(&self, g: &[f64], eps: f64) -> Vec<f64> {
        let k = self.k;
        (0..self.m)
            .into_par_iter()
            .map(|i| {
                let row = &self.cost[i * k..(i + 1) * k];
                -eps * log_sum_exp((0..k).map(|j| (g[j] - row[j]) / eps + self.log_nu[j]))
            })
            .collect()
    }

    fn col_update(&self, f: &[f64], eps: f64) -> Vec<f64> {
        let m = self.m;
        (0..self.k)
            .into_par_iter()
            .map(|j| {
                let col = &self.cost_t[j * m..(j + 1) * m];
                -eps * log_sum_exp((0..m).map(|i| (f[i] - col[i]) / eps + self.log_mu[i]))
            })
            .collect()
    }

    /// Row marginal error of `(f, g)`, given the exact row update of `g`.
    fn row_error(f: &[f64], f_exact: &[f64], eps: f64) -> f64 {
        f.iter()
            .zip(f_exact)
            .map(|(a, b)| ((a - b) / eps).exp_m1().abs())
            .fold(0.0, f64::max)
    }

    fn relax(old: &mut [f64], new: &[f64], omega: f64) {
        for (o, n) in old.iter_mut().zip(new) {
            *o += omega * (n - *o);
        }
    }

    /// Iterate at `eps` until the row residual is at most `tol` with exact
    /// columns.
    fn run(&mut self, eps: f64, tol: f64, max_iterations: usize) -> Result<()> {
        if self.symmetric {
            return self.run_symmetric(eps, tol, max_iterations);
        }
        // Over-relaxation factor from the contraction rate of the first
        // plain iterations; plain steps again after any blow-up.
        let mut omega = 1.0;
        let mut estimating = true;
        let mut history: Vec<f64> = Vec::new();
        let mut best = f64::INFINITY;
        let mut last_plain = false;
        let mut residual = f64::INFINITY;
        for iteration in 1..=max_iterations {
            let f_exact = self.row_update(&self.g, eps);
            residual = Self::row_error(&self.f, &f_exact, eps);
            if !residual.is_finite() || residual > 100.0 * best {
                omega = 1.0;
                estimating = false;
            }
            best = best.min(residual);
            if last_plain && residual <= tol {
                return Ok(());
            }
            if estimating {
                history.push(residual);
                if history.len() == 20 {
                    let theta = (history[19] / history[9]).powf(0.1);
                    if theta > 0.0 && theta < 1.0 {
                        omega = (2.0 / (1.0 + (1.0 - theta).sqrt())).min(1.95);
                    }
                    estimating = false;
                }
            }
            Self::relax(&mut self.f, &f_exact, omega);
            let g_exact = self.col_update(&self.f, eps);
            if omega == 1.0 {
                self.g = g_exact;
                last_plain = true;
                continue;
            }
            // Relaxed states have inexact columns; test the plain completion
            // every few iterations.
            if iteration % 10 == 0 {
                let check = Self::row_error(&self.f, &self.row_update(&g_exact, eps), eps);
                if check <= tol {
                    self.g = g_exact;
                    return Ok(());
                }
            }
            Self::relax(&mut self.g, &g_exact, omega);
            last_plain = false;
        }
        Err(Error::NoConvergence {
            what: "entropic scaling iterations",
            iterations: max_iterations,
            residual,
        })
    }

    /// Averaged self-update `f ← (f + T f)/2` for identical marginals. The
    /// state `(f, f)` has equal row and column errors, and fixing `f = g`
    /// removes the weakly coupled gauge modes that stall alternating
    /// updates at small ε.
    fn run_symmetric(&mut self, eps: f64, tol: f64, max_iterations: usize) -> Result<()> {
        let mut residual = f64::INFINITY;
        for _ in 0..max_iterations {
            let f_exact = self.row_update(&self.f, eps);
            residual = Self::row_error(&self.f, &f_exact, eps);
            if residual <= tol {
                self.g = self.f.clone();
                return Ok(());
            }
            Self::relax(&mut self.f, &f_exact, 0.5);
        }
        Err(Error::NoConvergence {
            what: "symmetric entropic scaling iterations",
            iterations: max_iterations,
            residual,
        })
    }

    /// Plan of the current duals; entries below e^-50 of `μ_i ν_j` are
    /// dropped.
    fn plan(self, mu: &DiscreteMeasure, nu: &DiscreteMeasure, eps: f64) -> TransportPlan {
        let k = self.k;
        let rows: Vec<Vec<(usize, usize, f64)>> = (0..self.m)
            .into_par_iter()
            .map(|i| {
                let row = &self.cost[i * k..(i + 1) * k];
                (0..k)
                    .filter_map(|j| {
                        let a = (self.f[i] + self.g[j] - row[j]) / eps;
                        (a > -50.0).then(|| (i, j, (a + self.log_mu[i] + self.log_nu[j]).exp()))
                    })
                    .collect()
            })
            .collect();
        let entries = rows.into_iter().flatten().collect();
        TransportPlan::from_entries(mu, nu, entries, eps, (self.f, self.g))
    }
}
