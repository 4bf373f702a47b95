//! Small numerical kernels shared across the crate: deterministic parallel
//! reductions, Gauss-Legendre rules, adaptive Gauss-Kronrod integration and
//! closed-form symmetric eigenvalues.

use rayon::prelude::*;
use std::sync::OnceLock;

/// Items per reduction chunk. Partial sums are formed per chunk and combined
/// in chunk order, so results do not depend on the thread count.
pub const REDUCTION_CHUNK: usize = 4096;

/// Sum `term(k)` for `k in 0..len` with a fixed reduction tree.
pub fn det_sum<F>(len: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = len.div_ceil(REDUCTION_CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(len);
            let mut s = 0.0;
            for k in lo..hi {
                s += term(k);
            }
            s
        })
        .collect();
    partials.iter().sum()
}

/// Like [`det_sum`] for several accumulators at once.
pub fn det_sum_n<const N: usize, F>(len: usize, term: F) -> [f64; N]
where
    F: Fn(usize) -> [f64; N] + Sync,
{
    let chunks = len.div_ceil(REDUCTION_CHUNK);
    let partials: Vec<[f64; N]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(len);
            let mut s = [0.0; N];
            for k in lo..hi {
                let t = term(k);
                for (a, b) in s.iter_mut().zip(t) {
                    *a += b;
                }
            }
            s
        })
        .collect();
    let mut out = [0.0; N];
    for p in partials {
        for (a, b) in out.iter_mut().zip(p) {
            *a += b;
        }
    }
    out
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached 12-point rule used by the cell clipping code.
pub(crate) fn gl12() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(12))
}

/// Fixed-order Gauss-Legendre integral of `f` over `[a, b]`.
pub fn gauss_integrate<F: Fn(f64) -> f64>(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64, f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

const GK_XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = GK_WK[7] * fc;
    let mut gauss = GK_WG[3] * fc;
    for j in 0..7 {
        let dx = h * GK_XK[j];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WK[j] * s;
        if j % 2 == 1 {
            gauss += GK_WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of a piece that is smooth in the
/// interior of `[a, b]`. Subdivision is depth-first and deterministic.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (whole, _) = gk15(&f, a, b);
    let abs_floor = 1e-15 * whole.abs().max(1e-300);
    adapt(&f, a, b, rel_tol, abs_floor, whole, 0)
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel: f64, floor: f64, est: f64, depth: u32) -> f64 {
    let (val, err) = gk15(f, a, b);
    let _ = est;
    if depth >= 48 || err <= (rel * val.abs()).max(floor) {
        return val;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, rel, floor * 0.5, val, depth + 1) + adapt(f, m, b, rel, floor * 0.5, val, depth + 1)
}

/// Eigenvalues of a symmetric 2x2 matrix in ascending order.
pub fn sym_eigen2(a: f64, b: f64, d: f64) -> [f64; 2] {
    let m = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    [m - r, m + r]
}

/// Eigenvalues of a symmetric 3x3 matrix in ascending order (trigonometric
/// closed form).
pub fn sym_eigen3(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 <= 1e-300 {
        let mut e = [m[0][0], m[1][1], m[2][2]];
        e.sort_by(|a, b| a.total_cmp(b));
        return e;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (0.5 * det_b).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e_max = q + 2.0 * p * phi.cos();
    let e_min = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e_mid = 3.0 * q - e_max - e_min;
    [e_min, e_mid, e_max]
}

/// Smallest eigenvalue of the symmetric part of a `dim x dim` matrix.
pub fn min_sym_eigen(m: &[[f64; 3]; 3], dim: usize) -> f64 {
    let s = |i: usize, j: usize| 0.5 * (m[i][j] + m[j][i]);
    match dim {
        2 => sym_eigen2(s(0, 0), s(0, 1), s(1, 1))[0],
        _ => {
            let mut sm = [[0.0; 3]; 3];
            for (i, row) in sm.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = s(i, j);
                }
            }
            sym_eigen3(&sm)[0]
        }
    }
}

pub fn det(m: &[[f64; 3]; 3], dim: usize) -> f64 {
    match dim {
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

/// Min, median and max of a sample. `NaN`s are ignored; empty input yields
/// `None`.
pub fn min_median_max(values: &mut Vec<f64>) -> Option<(f64, f64, f64)> {
    values.retain(|v| !v.is_nan());
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    Some((values[0], median, values[n - 1]))
}

/// Linear-interpolated quantile of already sorted data.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(6);
        let v = gauss_integrate(&rule, 0.0, 2.0, |x| x.powi(11));
        assert_relative_eq!(v, 2f64.powi(12) / 12.0, max_relative = 1e-13);
        assert_relative_eq!(rule.1.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_steepness() {
        // int_0^{1-1e-8} 1/sqrt(1-x^2) = asin(1-1e-8)
        let b = 1.0 - 1e-8;
        let v = integrate_adaptive(|x| 1.0 / (1.0 - x * x).sqrt(), 0.0, b, 1e-12);
        assert_relative_eq!(v, b.asin(), max_relative = 1e-10);
    }

    #[test]
    fn eigen3_matches_diagonal_and_rotated() {
        let m = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]];
        let e = sym_eigen3(&m);
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e[2], 5.0, epsilon = 1e-12);
        let e2 = sym_eigen2(2.0, 1.0, 2.0);
        assert_relative_eq!(e2[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn det_sum_is_order_fixed() {
        let a = det_sum(100_000, |k| (k as f64).sin());
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| det_sum(100_000, |k| (k as f64).sin()));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
