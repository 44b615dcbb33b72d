use crate::poly::Poly;

/// Union of the [0,1] roots of `p` and of every derivative of `p`, sorted.
///
/// Built from the deepest (linear) derivative upward: the accumulated points
/// of all deeper levels bracket every monotone piece of the current level, so
/// each root is either an interior sign change (bisected here) or coincides
/// with a bracket point found at a deeper level. This covers roots of even
/// multiplicity, which produce no sign change of their own.
pub(crate) fn derivative_chain_roots(p: &Poly) -> Vec<f64> {
    let mut chain = vec![p.clone()];
    while chain.last().unwrap().degree() > 1 {
        let d = chain.last().unwrap().derivative();
        chain.push(d);
    }
    let mut pts: Vec<f64> = Vec::new();
    for level in chain.iter().rev() {
        if level.degree() == 0 {
            continue;
        }
        let mut brackets = Vec::with_capacity(pts.len() + 2);
        brackets.push(0.0);
        brackets.extend(pts.iter().copied());
        brackets.push(1.0);
        brackets.sort_by(f64::total_cmp);
        brackets.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
        let mut found = Vec::new();
        for w in brackets.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (level.eval(a), level.eval(b));
            if fa == 0.0 {
                found.push(a);
            }
            if fb == 0.0 && (b - 1.0).abs() < 1e-300 {
                found.push(b);
            }
            if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
                found.push(bisect(level, a, b, fa < 0.0));
            }
        }
        pts.extend(found);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
    }
    pts
}

fn bisect(p: &Poly, mut lo: f64, mut hi: f64, neg_lo: bool) -> f64 {
    for _ in 0..110 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = p.eval(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Certified minimum of `p` over [0,1]: evaluate at the endpoints and at
/// every derivative-chain root (a superset of all interior critical points).
pub(crate) fn min_on_unit(p: &Poly) -> (f64, f64) {
    let mut best = (p.eval(0.0), 0.0);
    let v1 = p.eval(1.0);
    if v1 < best.0 {
        best = (v1, 1.0);
    }
    for x in derivative_chain_roots(p) {
        let v = p.eval(x);
        if v < best.0 {
            best = (v, x);
        }
    }
    best
}

/// Candidate points (endpoints plus critical points) where `p` comes within
/// `slack` of its minimum over [0,1], sorted and deduplicated. Used to
/// recover the true tangency set of a near-touching residual.
pub(crate) fn near_minimal_points(p: &Poly, slack: f64) -> Vec<f64> {
    let mut cands: Vec<f64> = vec![0.0, 1.0];
    cands.extend(derivative_chain_roots(p));
    let m = cands
        .iter()
        .map(|&x| p.eval(x))
        .fold(f64::INFINITY, f64::min);
    let mut pts: Vec<f64> = cands
        .into_iter()
        .filter(|&x| p.eval(x) <= m + slack)
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    pts
}
