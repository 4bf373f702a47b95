//! Knothe rearrangement of `f^{n/(n-1)} dx` onto Lebesgue measure on the
//! ball, built by matching conditional CDFs coordinate by coordinate in the
//! fixed order `x1`, `x2 | x1`, `x3 | x1, x2`.
//!
//! Along every fiber the conditional density is `w_p(x) * a(x)` where
//! `w_p = (r^2 - x^2)^{p/2}` is the cross-section measure of the remaining
//! `p` coordinates and `a` is the cross-section average of the density,
//! taken piecewise linear between grid knots. The weight is integrated
//! exactly, so a constant density is rearranged onto the identity.

use crate::certificate::{Certificate, Environment, ProofPath, Stage};
use crate::error::{Error, Result};
use crate::field::{gradient_at, ScalarField, VectorMap};
use crate::functionals::{boundary_integrate, grad_l1, integrate_nodes, normalize_for_transport, sobolev_exponent};
use crate::grid::{dot, norm, unit_ball_volume, BallGrid, NodeClass, Point};
use crate::numerics::{det, det_sum, sorted_quantile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

/// Fibers lighter than this fraction of the heaviest fiber on the same level
/// are mapped by linear chord scaling.
pub const LIGHT_FIBER_RATIO: f64 = 1e-12;

pub const CHORD_WEIGHTING_NOTE: &str =
    "conditional densities are taken with respect to chord length (Lebesgue measure on each fiber)";

/// Normalised CDF of `(1 - v^2)^{p/2}` on `[-1, 1]` for `p` in 0..=2.
pub fn target_cdf(p: usize, v: f64) -> f64 {
    let v = v.clamp(-1.0, 1.0);
    match p {
        0 => 0.5 * (v + 1.0),
        1 => (v * (1.0 - v * v).max(0.0).sqrt() + v.asin() + 0.5 * PI) / PI,
        _ => (v - v * v * v / 3.0 + 2.0 / 3.0) * 0.75,
    }
}

pub fn target_pdf(p: usize, v: f64) -> f64 {
    if v.abs() >= 1.0 {
        return if p == 0 { 0.5 } else { 0.0 };
    }
    match p {
        0 => 0.5,
        1 => 2.0 * (1.0 - v * v).sqrt() / PI,
        _ => 0.75 * (1.0 - v * v),
    }
}

/// Inverse of [`target_cdf`] by safeguarded Newton iteration.
pub fn inverse_target_cdf(p: usize, s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    if p == 0 {
        return 2.0 * s - 1.0;
    }
    if s <= 0.0 {
        return -1.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let mut v = 2.0 * s - 1.0;
    for _ in 0..200 {
        let r = target_cdf(p, v) - s;
        if r > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let d = target_pdf(p, v);
        let mut next = if d > 1e-300 { v - r / d } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - v).abs() <= 1e-16 || hi - lo <= 1e-16 {
            return next;
        }
        v = next;
    }
    v
}

/// `(int_a^b w, int_a^b x w)` for `w = (r^2 - x^2)^{p/2}`, `|a|, |b| <= r`.
fn weight_moments(p: usize, r: f64, a: f64, b: f64) -> (f64, f64) {
    match p {
        0 => (b - a, 0.5 * (b * b - a * a)),
        1 => {
            let s = |x: f64| (r * r - x * x).max(0.0).sqrt();
            let m0 = |x: f64| 0.5 * (x * s(x) + r * r * (x / r).clamp(-1.0, 1.0).asin());
            let m1 = |x: f64| -(s(x).powi(3)) / 3.0;
            (m0(b) - m0(a), m1(b) - m1(a))
        }
        _ => {
            let r2 = r * r;
            let m0 = |x: f64| r2 * x - x * x * x / 3.0;
            let m1 = |x: f64| 0.5 * r2 * x * x - 0.25 * x.powi(4);
            (m0(b) - m0(a), m1(b) - m1(a))
        }
    }
}

/// Measure of the unit `p`-ball for `p` in 0..=2.
fn unit_cross_section(p: usize) -> f64 {
    match p {
        0 => 1.0,
        1 => 2.0,
        _ => PI,
    }
}

/// One conditional fiber `(-r, r)` with piecewise-linear cross-section
/// average.
#[derive(Clone, Debug)]
pub struct Fiber {
    p: usize,
    radius: f64,
    knots: Vec<f64>,
    avg: Vec<f64>,
    cumulative: Vec<f64>,
    mass: f64,
    light: bool,
}

impl Fiber {
    /// `xs` are the interior knots (strictly inside, ascending) and `avg`
    /// the cross-section averages there. Endpoint values are extrapolated
    /// linearly and clamped to within a factor two of the nearest knot.
    pub fn new(p: usize, radius: f64, xs: &[f64], avg: &[f64]) -> Fiber {
        debug_assert_eq!(xs.len(), avg.len());
        let m = xs.len();
        let mut knots = Vec::with_capacity(m + 2);
        let mut vals = Vec::with_capacity(m + 2);
        let extrapolate = |x0: f64, g0: f64, x1: f64, g1: f64, at: f64| {
            let raw = if (x1 - x0).abs() > 0.0 { g0 + (g1 - g0) * (at - x0) / (x1 - x0) } else { g0 };
            raw.clamp(0.5 * g0, 2.0 * g0)
        };
        if m == 0 {
            return Fiber {
                p,
                radius,
                knots: vec![-radius, radius],
                avg: vec![0.0, 0.0],
                cumulative: vec![0.0, 0.0],
                mass: 0.0,
                light: true,
            };
        }
        knots.push(-radius);
        vals.push(if m >= 2 { extrapolate(xs[0], avg[0], xs[1], avg[1], -radius) } else { avg[0] });
        knots.extend_from_slice(xs);
        vals.extend_from_slice(avg);
        knots.push(radius);
        vals.push(if m >= 2 {
            extrapolate(xs[m - 1], avg[m - 1], xs[m - 2], avg[m - 2], radius)
        } else {
            avg[0]
        });
        let mut cumulative = Vec::with_capacity(knots.len());
        cumulative.push(0.0);
        let mut acc = 0.0;
        for s in 0..knots.len() - 1 {
            acc += segment_integral(p, radius, knots[s], knots[s + 1], vals[s], vals[s + 1], knots[s + 1]);
            cumulative.push(acc);
        }
        Fiber {
            p,
            radius,
            knots,
            avg: vals,
            cumulative,
            mass: acc,
            light: !(acc > 0.0),
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_light(&self) -> bool {
        self.light
    }

    fn mark_light(&mut self) {
        self.light = true;
    }

    /// Unnormalised cumulative mass up to `x`.
    pub fn cumulative(&self, x: f64) -> f64 {
        if x <= -self.radius {
            return 0.0;
        }
        if x >= self.radius {
            return self.mass;
        }
        let s = match self.knots.binary_search_by(|k| k.partial_cmp(&x).expect("finite knots")) {
            Ok(i) => return self.cumulative[i],
            Err(i) => i - 1,
        };
        self.cumulative[s]
            + segment_integral(
                self.p,
                self.radius,
                self.knots[s],
                self.knots[s + 1],
                self.avg[s],
                self.avg[s + 1],
                x,
            )
    }

    /// Image of `x` on the target fiber of radius `target_radius`.
    pub fn map(&self, x: f64, target_radius: f64) -> f64 {
        if self.light {
            if self.radius <= 0.0 {
                return 0.0;
            }
            return target_radius * (x / self.radius).clamp(-1.0, 1.0);
        }
        let s = self.cumulative(x) / self.mass;
        target_radius * inverse_target_cdf(self.p, s)
    }
}

/// `int_a^x g w` with `g` linear through `(a, ga)`, `(b, gb)`.
fn segment_integral(p: usize, r: f64, a: f64, b: f64, ga: f64, gb: f64, x: f64) -> f64 {
    let (w0, w1) = weight_moments(p, r, a, x);
    let slope = if b > a { (gb - ga) / (b - a) } else { 0.0 };
    (ga * w0 + slope * (w1 - a * w0)).max(0.0)
}

/// Monotone 1D function given by values at sorted knots, linearly
/// interpolated.
#[derive(Clone, Debug)]
pub struct MonotoneTable {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl MonotoneTable {
    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0] {
            return self.values[0];
        }
        if x >= k[k.len() - 1] {
            return self.values[k.len() - 1];
        }
        let i = k.partition_point(|&t| t <= x) - 1;
        let t = (x - k[i]) / (k[i + 1] - k[i]);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }
}

/// Rearrange a sampled density on sorted `knots` onto the uniform measure on
/// `(a, b)`: `T` satisfies `SourceCDF(s) = (T(s) - a) / (b - a)` at every
/// knot, with the source CDF by the trapezoid rule.
pub fn monotone_rearrange_1d(knots: &[f64], density: &[f64], target: (f64, f64)) -> Result<MonotoneTable> {
    if knots.len() != density.len() || knots.len() < 2 {
        return Err(Error::InvalidArgument("need at least two knots with one density value each".into()));
    }
    if knots.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("knots must be strictly increasing".into()));
    }
    if density.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
        return Err(Error::NotPositive("density must be finite and nonnegative".into()));
    }
    let mut cdf = vec![0.0; knots.len()];
    for i in 1..knots.len() {
        cdf[i] = cdf[i - 1] + 0.5 * (density[i] + density[i - 1]) * (knots[i] - knots[i - 1]);
    }
    let total = cdf[knots.len() - 1];
    if !(total > 0.0) {
        return Err(Error::DegenerateIntegral("source density has zero mass"));
    }
    let (a, b) = target;
    let values = cdf.iter().map(|c| a + (b - a) * (c / total)).collect();
    Ok(MonotoneTable {
        knots: knots.to_vec(),
        values,
    })
}

#[derive(Clone, Debug)]
pub struct KnotheMap {
    grid: Arc<BallGrid>,
    phi1: MonotoneTable,
    map: VectorMap,
    light_fibers: usize,
    fibers: usize,
}

impl KnotheMap {
    pub fn grid(&self) -> &Arc<BallGrid> {
        &self.grid
    }

    pub fn phi1(&self) -> &MonotoneTable {
        &self.phi1
    }

    pub fn map(&self) -> &VectorMap {
        &self.map
    }

    pub fn light_fibers(&self) -> usize {
        self.light_fibers
    }

    pub fn fibers(&self) -> usize {
        self.fibers
    }
}

/// Coordinates of the interior knots along a fiber of radius `r`.
fn interior(coords: &[f64], r: f64) -> std::ops::Range<usize> {
    let lo = coords.partition_point(|&c| c <= -r);
    let hi = coords.partition_point(|&c| c < r);
    lo..hi.max(lo)
}

fn mark_light_fibers(fibers: &mut [Option<Fiber>]) -> usize {
    let max = fibers.iter().flatten().map(|f| f.mass()).fold(0.0, f64::max);
    let mut light = 0;
    for f in fibers.iter_mut().flatten() {
        if f.mass() < LIGHT_FIBER_RATIO * max {
            f.mark_light();
        }
        light += f.is_light() as usize;
    }
    light
}

/// Build the Knothe map of a transport-normalised positive field.
pub fn build_knothe_map(f: &ScalarField) -> Result<KnotheMap> {
    f.require_positive()?;
    let grid = f.grid().clone();
    let n = grid.dim();
    let q = sobolev_exponent(n);
    let mass = integrate_nodes(&grid, |i| f.value(i).powf(q));
    let target = unit_ball_volume(n)?;
    if (mass - target).abs() > 0.01 * target {
        return Err(Error::NotNormalized {
            expected: target,
            actual: mass,
        });
    }
    let side = grid.side();
    let coords: Vec<f64> = (0..side).map(|i| grid.coord_of_index(i)).collect();
    let rho = |m: [usize; 3]| f.value(grid.index_of(&m)).powf(q);

    // Innermost fibers along x3 (n = 3 only).
    let mut fibers3: Vec<Option<Fiber>> = Vec::new();
    if n == 3 {
        fibers3 = (0..side * side)
            .into_par_iter()
            .map(|ij| {
                let (i, j) = (ij / side, ij % side);
                let r2 = 1.0 - coords[i] * coords[i] - coords[j] * coords[j];
                if r2 <= 0.0 {
                    return None;
                }
                let r = r2.sqrt();
                let range = interior(&coords, r);
                let avg: Vec<f64> = range.clone().map(|k| rho([i, j, k])).collect();
                Some(Fiber::new(0, r, &coords[range], &avg))
            })
            .collect();
    }
    let light3 = mark_light_fibers(&mut fibers3);

    // Fibers along x2 for each x1.
    let mut fibers2: Vec<Option<Fiber>> = (0..side)
        .into_par_iter()
        .map(|i| {
            let r2 = 1.0 - coords[i] * coords[i];
            if r2 <= 0.0 {
                return None;
            }
            let r = r2.sqrt();
            let range = interior(&coords, r);
            let avg: Vec<f64> = range
                .clone()
                .map(|j| {
                    if n == 2 {
                        rho([i, j, 0])
                    } else {
                        let chord = 2.0 * (r2 - coords[j] * coords[j]).max(0.0).sqrt();
                        let m = fibers3[i * side + j].as_ref().map_or(0.0, |fb| fb.mass());
                        if chord > 0.0 {
                            m / chord
                        } else {
                            0.0
                        }
                    }
                })
                .collect();
            Some(Fiber::new(n - 2, r, &coords[range], &avg))
        })
        .collect();
    let light2 = mark_light_fibers(&mut fibers2);

    // x1 marginal.
    let p1 = n - 1;
    let range = interior(&coords, 1.0);
    let avg1: Vec<f64> = range
        .clone()
        .map(|i| {
            let section = unit_cross_section(p1) * (1.0 - coords[i] * coords[i]).powf(p1 as f64 / 2.0);
            let m = fibers2[i].as_ref().map_or(0.0, |fb| fb.mass());
            if section > 0.0 {
                m / section
            } else {
                0.0
            }
        })
        .collect();
    let fiber1 = Fiber::new(p1, 1.0, &coords[range], &avg1);
    if fiber1.is_light() {
        return Err(Error::DegenerateIntegral("x1 marginal has zero mass"));
    }

    let phi1: Vec<f64> = coords.iter().map(|&c| fiber1.map(c, 1.0)).collect();
    let phi12: Vec<[f64; 2]> = (0..side * side)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / side, ij % side);
            let rt = (1.0 - phi1[i] * phi1[i]).max(0.0).sqrt();
            let p2 = fibers2[i].as_ref().map_or(0.0, |fb| fb.map(coords[j], rt));
            [phi1[i], p2]
        })
        .collect();

    let mut values = vec![[f64::NAN; 3]; grid.len()];
    let computed: Vec<Point> = grid
        .active()
        .par_iter()
        .map(|&idx| {
            let m = grid.multi(idx as usize);
            let [a, b] = phi12[m[0] * side + m[1]];
            let c = if n == 3 {
                let rt = (1.0 - a * a - b * b).max(0.0).sqrt();
                fibers3[m[0] * side + m[1]].as_ref().map_or(0.0, |fb| fb.map(coords[m[2]], rt))
            } else {
                0.0
            };
            [a, b, c]
        })
        .collect();
    for (&idx, v) in grid.active().iter().zip(computed) {
        values[idx as usize] = v;
    }
    let inner = interior(&coords, 1.0);
    let table = MonotoneTable {
        knots: coords[inner.clone()].to_vec(),
        values: phi1[inner].to_vec(),
    };
    let fibers = 1 + fibers2.iter().flatten().count() + fibers3.iter().flatten().count();
    Ok(KnotheMap {
        map: VectorMap::from_nodal(grid.clone(), values),
        grid,
        phi1: table,
        light_fibers: light2 + light3,
        fibers,
    })
}

/// Tolerance and seed settings shared by the certificate builders.
#[derive(Clone, Debug)]
pub struct CertificateOptions {
    pub corpus_item: String,
    pub seed: u64,
    pub tol_scale: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            corpus_item: "custom".into(),
            seed: 0,
            tol_scale: 1.0,
        }
    }
}

/// Test functions for the weak pushforward identity: `(name, sup_B |g|, g)`.
pub(crate) type TestFn = (String, f64, Box<dyn Fn(&Point) -> f64 + Sync>);

pub(crate) fn pushforward_tests(n: usize, seed: u64, random: usize) -> Vec<TestFn> {
    let mut tests: Vec<TestFn> = vec![
        ("1".into(), 1.0, Box::new(|_: &Point| 1.0)),
        ("xi1".into(), 1.0, Box::new(|x: &Point| x[0])),
        ("xi2".into(), 1.0, Box::new(|x: &Point| x[1])),
        ("|xi|^2".into(), 1.0, Box::new(|x: &Point| x[0] * x[0] + x[1] * x[1] + x[2] * x[2])),
        ("xi1*xi2".into(), 0.5, Box::new(|x: &Point| x[0] * x[1])),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..random {
        let mut a = [0.0; 3];
        for ak in a.iter_mut().take(n) {
            *ak = rng.gen_range(-3.0..3.0);
        }
        let b: f64 = rng.gen_range(0.0..2.0 * PI);
        tests.push((
            format!("cos#{k}"),
            1.0,
            Box::new(move |x: &Point| (a[0] * x[0] + a[1] * x[1] + a[2] * x[2] + b).cos()),
        ));
    }
    tests
}

/// Certify properties (i)-(ii) and the integrated Sobolev chain for the
/// Knothe map of `f` (normalised internally).
pub fn knothe_certificate(f: &ScalarField, opts: &CertificateOptions) -> Result<(Certificate, KnotheMap)> {
    let (fnorm, lambda) = normalize_for_transport(f)?;
    let km = build_knothe_map(&fnorm)?;
    let grid = km.grid().clone();
    let n = grid.dim();
    let h = grid.h();
    let ts = opts.tol_scale;
    let q = sobolev_exponent(n);
    let mut cert = Certificate::new(
        ProofPath::Knothe,
        Environment::new(n, h, &opts.corpus_item, opts.seed, ts),
    );
    let phi = km.map();
    let fv = fnorm.values();

    struct NodeData {
        interior: bool,
        diag_min: f64,
        upper_max: f64,
        det_tri: f64,
        det_full: f64,
        trace: f64,
        rho: f64,
    }
    let nodes: Vec<NodeData> = grid
        .active()
        .par_iter()
        .map(|&idx| {
            let i = idx as usize;
            let j = phi.jacobian_at(i);
            let mut diag_min = f64::INFINITY;
            let mut det_tri = 1.0;
            let mut trace = 0.0;
            let mut upper_max: f64 = 0.0;
            for k in 0..n {
                diag_min = diag_min.min(j[k][k]);
                det_tri *= j[k][k];
                trace += j[k][k];
                for l in (k + 1)..n {
                    upper_max = upper_max.max(j[k][l].abs());
                }
            }
            NodeData {
                interior: grid.class(i) == NodeClass::Interior,
                diag_min,
                upper_max,
                det_tri,
                det_full: det(&j, n),
                trace,
                rho: fv[i].powf(q),
            }
        })
        .collect();
    let interior: Vec<&NodeData> = nodes.iter().filter(|d| d.interior).collect();
    let sup_rho = interior.iter().map(|d| d.rho).fold(0.0, f64::max);

    // Monotonicity of the triangular diagonal.
    let tol_diag = 10.0 * h * sup_rho * ts;
    let diag: Vec<f64> = interior.iter().map(|d| d.diag_min).collect();
    let diag_min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    cert.push(
        Stage::new(
            "diagonal-nonnegativity",
            "the differential DΦ is triangular with nonnegative diagonal entries",
        )
        .stats(diag)
        .value("min_diagonal", diag_min)
        .value("lambda", lambda)
        .tolerance(tol_diag)
        .pass(diag_min >= -tol_diag)
        .note(CHORD_WEIGHTING_NOTE),
    );

    // Above-diagonal entries vanish identically: φ_k ignores x_l for l > k.
    let upper = nodes.iter().map(|d| d.upper_max).fold(0.0, f64::max);
    cert.push(
        Stage::new("triangularity", "Φ(x1, x2) = (φ1(x1), φ2(x1, x2))")
            .stats(nodes.iter().map(|d| d.upper_max).collect())
            .value("max_upper_entry", upper)
            .tolerance(0.0)
            .pass(upper == 0.0),
    );

    // Determinant identity, product of the diagonal against f^{n/(n-1)}.
    let mut rel: Vec<f64> = interior.iter().map(|d| (d.det_tri / d.rho - 1.0).abs()).collect();
    let mut rel_full: Vec<f64> = interior.iter().map(|d| (d.det_full / d.rho - 1.0).abs()).collect();
    rel.sort_by(f64::total_cmp);
    rel_full.sort_by(f64::total_cmp);
    let median = sorted_quantile(&rel, 0.5);
    let tol_det = 0.05 * (128.0 * h) * ts;
    cert.push(
        Stage::new("determinant-identity", "det DΦ(x) = f(x)^{n/(n-1)}")
            .stats(rel.clone())
            .value("median_relative_error", median)
            .value("q90_relative_error", sorted_quantile(&rel, 0.9))
            .value("median_relative_error_full_determinant", sorted_quantile(&rel_full, 0.5))
            .tolerance(tol_det)
            .pass(median <= tol_det),
    );

    // Range.
    let max_norm = phi.max_norm(false);
    let tol_range = 1.0 + 10.0 * h * ts;
    cert.push(
        Stage::new("range", "Φ maps the ball into the closed unit ball")
            .value("max_norm", max_norm)
            .tolerance(tol_range)
            .pass(max_norm <= tol_range),
    );

    // Node-wise AM-GM on the diagonal.
    let gaps: Vec<f64> = interior
        .iter()
        .filter(|d| d.diag_min >= 0.0)
        .map(|d| d.trace - n as f64 * d.det_tri.max(0.0).powf(1.0 / n as f64))
        .collect();
    let gap_min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let tr_max = interior.iter().map(|d| d.trace.abs()).fold(0.0, f64::max);
    let tol_amgm = 1e-12 * tr_max.max(1.0) * ts;
    cert.push(
        Stage::new("am-gm", "n f^{1/(n-1)} = n (det DΦ)^{1/n} ≤ tr(DΦ) = div Φ")
            .stats(gaps)
            .value("min_gap", gap_min)
            .tolerance(tol_amgm)
            .pass(gap_min >= -tol_amgm),
    );

    cert.push(pushforward_stage(&grid, fv, q, |i| phi.value(i), opts.seed, ts));
    cert.push(integrated_chain_stage(&fnorm, phi, |i| {
        let d = &nodes[i];
        (d.det_tri.max(0.0), d.trace)
    }, ts));
    Ok((cert, km))
}

/// Weak form of `det DΦ = f^{n/(n-1)}`: `Σ vol ρ g(Φ) ≈ ∫_B g`.
pub(crate) fn pushforward_stage<M>(grid: &BallGrid, fv: &[f64], q: f64, map: M, seed: u64, ts: f64) -> Stage
where
    M: Fn(usize) -> Point + Sync,
{
    let n = grid.dim();
    let ball = unit_ball_volume(n).expect("dim validated");
    let mut stage = Stage::new(
        "pushforward",
        "∫ g(Φ(x)) f(x)^{n/(n-1)} dx = ∫_B g(ξ) dξ for test functions g",
    );
    let mut worst: f64 = 0.0;
    for (name, sup, g) in pushforward_tests(n, seed, 10) {
        let lhs = integrate_nodes(grid, |i| fv[i].powf(q) * g(&map(i)));
        let rhs = integrate_nodes(grid, |i| g(&grid.coords(i)));
        let err = (lhs - rhs).abs() / (sup * ball);
        worst = worst.max(err);
        stage = stage.value(&format!("error[{name}]"), err);
    }
    let tol = 0.02 * ts;
    stage.value("max_error", worst).tolerance(tol).pass(worst <= tol)
}

/// Integrated chain
/// `n∫f^q ≤ ∫ f div Φ ≤ ∫ div(fΦ) + ∫|∇f| = ∫_∂ f⟨Φ,x⟩ + ∫|∇f| ≤ ∫_∂ f + ∫|∇f|`.
///
/// `jac(k)` returns `(det DΦ, tr DΦ)` for the `k`-th active node.
pub(crate) fn integrated_chain_stage<J>(f: &ScalarField, phi: &VectorMap, jac: J, ts: f64) -> Stage
where
    J: Fn(usize) -> (f64, f64) + Sync,
{
    let grid = f.grid();
    let n = grid.dim();
    let h = grid.h();
    let q = sobolev_exponent(n);
    let fv = f.values();
    let active = grid.active();
    let vol = grid.cell_volumes();
    // f Φ as nodal components for the discrete divergence.
    let comps: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut c = vec![f64::NAN; grid.len()];
            for &i in active {
                c[i as usize] = fv[i as usize] * phi.value(i as usize)[k];
            }
            c
        })
        .collect();
    let sums = crate::numerics::det_sum_n::<6, _>(active.len(), |k| {
        let i = active[k] as usize;
        let (dt, tr) = jac(k);
        let div_f_phi: f64 = (0..n).map(|a| crate::field::partial(grid, &comps[a], i, a)).sum();
        let band = grid.class(i) == NodeClass::BoundaryBand;
        [
            vol[k] * n as f64 * fv[i].powf(q),
            vol[k] * n as f64 * fv[i] * dt.powf(1.0 / n as f64),
            vol[k] * fv[i] * tr,
            vol[k] * div_f_phi,
            vol[k] * norm(&gradient_at(grid, fv, i), n),
            if band { vol[k] * fv[i] * tr } else { 0.0 },
        ]
    });
    let [i0, i1, i2, div_int, grad, band] = sums;
    let bpts = grid.boundary();
    let bv = f.boundary_values();
    let flux = det_sum(bpts.len(), |k| bpts[k].weight * bv[k] * dot(&phi.boundary_value(k), &bpts[k].point, n));
    let bd = boundary_integrate(f);
    debug_assert!((grad - grad_l1(f)).abs() <= 1e-9 * grad.max(1.0));
    let i3 = div_int + grad;
    let i3b = flux + grad;
    let i4 = bd + grad;
    let tol = 10.0 * h * i4 * ts;
    Stage::new(
        "integrated-chain",
        "n ∫ f^{n/(n-1)} ≤ ∫_{∂B} f ⟨Φ, x⟩ + ∫ |∇f| ≤ ∫_{∂B} f + ∫ |∇f|",
    )
    .value("n_int_f_q", i0)
    .value("n_int_f_det_1_over_n", i1)
    .value("int_f_div_phi", i2)
    .value("int_div_f_phi_plus_grad", i3)
    .value("boundary_flux_plus_grad", i3b)
    .value("divergence_theorem_gap", (i3 - i3b).abs())
    .value("boundary_plus_grad", i4)
    .value("band_contribution_f_div_phi", band)
    .value("slack", i4 - i0)
    .tolerance(tol)
    .pass(i0 <= i4 + tol && i3b <= i4 + tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, h: f64) -> Arc<BallGrid> {
        Arc::new(BallGrid::new(n, h).unwrap())
    }

    #[test]
    fn target_cdfs_are_inverted() {
        for p in 0..3 {
            assert!(target_cdf(p, -1.0).abs() < 1e-15);
            assert!((target_cdf(p, 1.0) - 1.0).abs() < 1e-15);
            for k in 0..=20 {
                let s = k as f64 / 20.0;
                let v = inverse_target_cdf(p, s);
                assert!((target_cdf(p, v) - s).abs() < 1e-13, "p={p} s={s}");
            }
        }
    }

    #[test]
    fn weight_moments_match_quadrature() {
        for p in 0..3 {
            let r = 0.8;
            let (a, b) = (-0.7, 0.3);
            let w = |x: f64| (r * r - x * x).powf(p as f64 / 2.0);
            let i0 = crate::numerics::integrate_adaptive(w, a, b, 1e-13);
            let i1 = crate::numerics::integrate_adaptive(|x| x * w(x), a, b, 1e-13);
            let (m0, m1) = weight_moments(p, r, a, b);
            assert!((m0 - i0).abs() < 1e-12 && (m1 - i1).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_rearrangement_is_identity() {
        let knots: Vec<f64> = (0..=40).map(|k| -1.0 + k as f64 / 20.0).collect();
        let t = monotone_rearrange_1d(&knots, &vec![1.0; 41], (-1.0, 1.0)).unwrap();
        for (k, v) in knots.iter().zip(&t.values) {
            assert!((k - v).abs() < 1e-14);
        }
    }

    #[test]
    fn half_supported_density() {
        // 2 * 1_{(0,1)} on (-1, 1): T(s) = 2s - 1 on (0, 1).
        let knots: Vec<f64> = (0..=2000).map(|k| -1.0 + k as f64 / 1000.0).collect();
        let dens: Vec<f64> = knots.iter().map(|&s| if s > 0.0 { 2.0 } else { 0.0 }).collect();
        let t = monotone_rearrange_1d(&knots, &dens, (-1.0, 1.0)).unwrap();
        for s in [0.1, 0.5, 0.9] {
            assert!((t.eval(s) - (2.0 * s - 1.0)).abs() < 2e-3);
        }
        assert_eq!(*t.values.last().unwrap(), 1.0);
        assert!(t.is_nondecreasing());
        assert!(monotone_rearrange_1d(&knots, &vec![0.0; knots.len()], (-1.0, 1.0)).is_err());
    }

    #[test]
    fn constant_density_gives_identity() {
        for n in [2, 3] {
            let g = grid(n, 1.0 / 16.0);
            let f = ScalarField::constant(g.clone(), 1.0).unwrap();
            let (f, _) = normalize_for_transport(&f).unwrap();
            let km = build_knothe_map(&f).unwrap();
            for &i in g.active() {
                let x = g.coords(i as usize);
                if norm(&x, n) < 1.0 {
                    let y = km.map().value(i as usize);
                    for k in 0..n {
                        assert!((x[k] - y[k]).abs() < 1e-9, "{x:?} -> {y:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn half_disk_concentration_moves_mass_left() {
        let g = grid(2, 1.0 / 64.0);
        // f^2 ≈ 2 * 1_{x1 > 0}, kept positive.
        let f = ScalarField::from_fn(g, |x| {
            let s = 1.0 / (1.0 + (-60.0 * x[0]).exp());
            (1e-4 + 2.0 * s).sqrt()
        })
        .unwrap();
        let (f, _) = normalize_for_transport(&f).unwrap();
        let km = build_knothe_map(&f).unwrap();
        for s in [0.2, 0.5, 0.8] {
            assert!(km.phi1().eval(s) < s);
        }
        assert!(km.phi1().is_nondecreasing());
    }

    #[test]
    fn rejects_unnormalized() {
        let g = grid(2, 1.0 / 16.0);
        let f = ScalarField::constant(g, 3.0).unwrap();
        assert!(matches!(build_knothe_map(&f), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn certificate_for_constant_passes() {
        let g = grid(2, 1.0 / 32.0);
        let f = ScalarField::constant(g, 1.0).unwrap();
        let (cert, _) = knothe_certificate(&f, &CertificateOptions::default()).unwrap();
        assert!(cert.pass, "{}", cert.to_json());
    }
}
