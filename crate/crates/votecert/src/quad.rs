use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Gauss-Legendre nodes/weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence from the Chebyshev initial guess.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let m = n.div_ceil(2);
    let mut full: Vec<(f64, f64)> = Vec::with_capacity(n);
    for i in 0..m {
        // i-th largest positive root; the middle root of odd n lands at 0.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p_n = if n == 1 { x } else { p1 };
            let p_nm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p_n - p_nm1) / (x * x - 1.0);
            let dx = p_n / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        if x.abs() < 1e-14 {
            x = 0.0;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        if x == 0.0 {
            full.push((0.0, w));
        } else {
            full.push((-x, w));
            full.push((x, w));
        }
    }
    full.sort_by(|a, b| a.0.total_cmp(&b.0));
    debug_assert_eq!(full.len(), n);
    full
}

/// Nodes/weights for integrating over [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

fn gl64() -> &'static Vec<(f64, f64)> {
    static GL: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(64))
}

fn gl16() -> &'static Vec<(f64, f64)> {
    static GL: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(16))
}

/// Fixed-order panel integral of f over [a, b] with cached 64-node rule.
pub fn integrate_gl64(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for &(x, w) in gl64() {
        acc += w * f(mid + half * x);
    }
    half * acc
}

fn panel16(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for &(x, w) in gl16() {
        acc += w * f(mid + half * x);
    }
    half * acc
}

/// Adaptive Gauss-Legendre to absolute tolerance: 16-node panels, halved
/// until the whole-vs-halves discrepancy is below tol.
pub fn adaptive_gl(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let left = panel16(f, a, mid);
        let right = panel16(f, mid, b);
        let sum = left + right;
        if (sum - whole).abs() <= tol || depth >= 48 {
            return sum;
        }
        recurse(f, a, mid, left, 0.5 * tol, depth + 1) + recurse(f, mid, b, right, 0.5 * tol, depth + 1)
    }
    let whole = panel16(&f, a, b);
    recurse(&f, a, b, whole, tol, 0)
}

/// Largest Gauss-Hermite order whose weight recurrence stays in f64 range.
pub const MAX_HERMITE_ORDER: usize = 192;

/// Gauss-Hermite nodes/weights for weight e^{-x^2} (physicists' convention):
/// eigenvalues of the Jacobi matrix by Sturm-count bisection, weights from
/// the orthonormal-polynomial Christoffel sum.
pub fn gauss_hermite(n: usize) -> Result<Vec<(f64, f64)>> {
    if n == 0 || n > MAX_HERMITE_ORDER {
        return Err(Error::Domain(format!(
            "Gauss-Hermite order {n} outside 1..={MAX_HERMITE_ORDER}"
        )));
    }
    // Off-diagonals b_k = sqrt(k/2), k = 1..n-1; diagonal zero.
    let b: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let radius = 2.0 * b.last().copied().unwrap_or(0.0) + 1.0;

    // Sturm count: eigenvalues below lambda, from the signs of the LDL
    // pivots of T - lambda*I. A vanishing pivot is treated as negative
    // (standard substitution), so exact eigenvalue hits count consistently.
    let count_below = |lambda: f64| -> usize {
        let mut d = -lambda;
        if d.abs() < 1e-300 {
            d = -1e-300;
        }
        let mut count = if d < 0.0 { 1 } else { 0 };
        for &bk in &b {
            d = -lambda - bk * bk / d;
            if d.abs() < 1e-300 {
                d = -1e-300;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };

    let mut nodes = vec![0.0f64; n];
    for (i, node) in nodes.iter_mut().enumerate().take(n / 2) {
        let mut lo = -radius;
        let mut hi = radius;
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) > i {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        *node = 0.5 * (lo + hi);
    }
    // Symmetric spectrum: mirror the lower half; middle node exactly 0.
    for i in 0..n / 2 {
        nodes[n - 1 - i] = -nodes[i];
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }

    let quarter_pi = std::f64::consts::PI.powf(-0.25);
    let mut out = Vec::with_capacity(n);
    for &x in &nodes {
        // Christoffel number: 1 / sum of squared orthonormal values.
        let mut pk_m1 = 0.0;
        let mut pk = quarter_pi;
        let mut sum = pk * pk;
        for k in 0..(n - 1) {
            let kf = k as f64;
            let next = x * (2.0 / (kf + 1.0)).sqrt() * pk - (kf / (kf + 1.0)).sqrt() * pk_m1;
            pk_m1 = pk;
            pk = next;
            sum += pk * pk;
        }
        out.push((x, 1.0 / sum));
    }
    Ok(out)
}

fn gh128() -> &'static Vec<(f64, f64)> {
    static GH: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    GH.get_or_init(|| gauss_hermite(128).expect("order 128 within range"))
}

/// E[h(Z)] for standard normal Z via the cached 128-node Hermite rule.
pub fn normal_expectation_gh128(h: impl Fn(f64) -> f64) -> f64 {
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut acc = 0.0;
    for &(x, w) in gh128() {
        acc += w * h(sqrt2 * x);
    }
    acc * inv_sqrt_pi
}
