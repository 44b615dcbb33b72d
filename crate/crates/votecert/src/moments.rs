use crate::error::{Error, Result};
use crate::law::{is_feasible, MomentPair};
use crate::poly::majority_coeffs_exact;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Per-policy correctness bits: N examples by K repeats, entries in {0,1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessMatrix {
    pub policy_id: String,
    pub example_ids: Vec<String>,
    pub bits: Vec<Vec<u8>>,
}

impl CorrectnessMatrix {
    pub fn new(policy_id: String, example_ids: Vec<String>, bits: Vec<Vec<u8>>) -> Result<Self> {
        if example_ids.len() != bits.len() {
            return Err(Error::Domain(format!(
                "{} example ids but {} bit rows",
                example_ids.len(),
                bits.len()
            )));
        }
        if bits.is_empty() {
            return Err(Error::Domain("correctness matrix is empty".into()));
        }
        let k = bits[0].len();
        if k == 0 {
            return Err(Error::Domain("zero repeats per example".into()));
        }
        for (row, id) in bits.iter().zip(&example_ids) {
            if row.len() != k {
                return Err(Error::Domain(format!(
                    "example {id} has {} repeats, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|&b| b > 1) {
                return Err(Error::Domain(format!("example {id} has non-binary entry")));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for id in &example_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Domain(format!("duplicate example id {id}")));
            }
        }
        Ok(CorrectnessMatrix {
            policy_id,
            example_ids,
            bits,
        })
    }

    pub fn n_examples(&self) -> usize {
        self.bits.len()
    }

    pub fn k_repeats(&self) -> usize {
        self.bits[0].len()
    }
}

/// The three observable probabilities from the first two calls per example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    pub p11: f64,
    pub p_disagree: f64,
    pub p00: f64,
    pub n_examples: usize,
}

/// Only the first two repeats enter the pair table; later repeats feed the
/// subvote estimators.
pub fn pair_table(matrix: &CorrectnessMatrix) -> Result<PairTable> {
    if matrix.k_repeats() < 2 {
        return Err(Error::Domain(
            "pair table needs at least two repeats per example".into(),
        ));
    }
    let n = matrix.n_examples();
    let mut c11 = 0usize;
    let mut c00 = 0usize;
    for row in &matrix.bits {
        match (row[0], row[1]) {
            (1, 1) => c11 += 1,
            (0, 0) => c00 += 1,
            _ => {}
        }
    }
    let nf = n as f64;
    Ok(PairTable {
        p11: c11 as f64 / nf,
        p_disagree: (n - c11 - c00) as f64 / nf,
        p00: c00 as f64 / nf,
        n_examples: n,
    })
}

/// Moment estimate carrying both the raw pair and its feasible projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub raw_mu: f64,
    pub raw_nu: f64,
    /// Raw correlation; None when mu is 0 or 1.
    pub rho_raw: Option<f64>,
    pub feasible: bool,
    pub clamped: MomentPair,
}

pub fn moments_from_pairs(table: &PairTable) -> MomentEstimate {
    let mu = table.p11 + 0.5 * table.p_disagree;
    let nu = table.p11;
    moment_estimate(mu, nu)
}

fn moment_estimate(mu: f64, nu: f64) -> MomentEstimate {
    let rho_raw = if mu > 0.0 && mu < 1.0 {
        Some((nu - mu * mu) / (mu * (1.0 - mu)))
    } else {
        None
    };
    let feasible = is_feasible(mu, nu);
    MomentEstimate {
        raw_mu: mu,
        raw_nu: nu,
        rho_raw,
        feasible,
        clamped: clamp_feasible(mu, nu),
    }
}

/// Euclidean projection of a raw (mu, nu) pair onto the feasible set
/// {0 <= mu <= 1, mu^2 <= nu <= mu}.
///
/// The set is convex with boundary = parabola arc nu = mu^2 plus the chord
/// nu = mu; the projection is the closest of: the point itself (feasible),
/// the chord projection, and the parabola-arc critical points.
pub fn clamp_feasible(mu: f64, nu: f64) -> MomentPair {
    if is_feasible(mu, nu) {
        return MomentPair::new(mu, nu).expect("feasible by check");
    }
    let mut best: Option<(f64, (f64, f64))> = None;
    let mut consider = |m: f64, v: f64| {
        if !is_feasible(m, v) {
            return;
        }
        let d = (m - mu).powi(2) + (v - nu).powi(2);
        let better = match best {
            None => true,
            // Lexicographic tie-break keeps the result deterministic.
            Some((bd, (bm, bv))) => d < bd - 0.0 || (d == bd && (m, v) < (bm, bv)),
        };
        if better {
            best = Some((d, (m, v)));
        }
    };

    // Chord nu = mu between (0,0) and (1,1).
    let t_line = ((mu + nu) * 0.5).clamp(0.0, 1.0);
    consider(t_line, t_line);

    // Parabola arc (t, t^2): critical points of squared distance solve
    // 2t^3 + (1 - 2 nu) t - mu = 0; scan for sign changes then bisect.
    let g = |t: f64| 2.0 * t.powi(3) + (1.0 - 2.0 * nu) * t - mu;
    let mut prev_t = 0.0;
    let mut prev_g = g(0.0);
    const SCAN: usize = 128;
    for i in 1..=SCAN {
        let t = i as f64 / SCAN as f64;
        let gt = g(t);
        if prev_g == 0.0 {
            consider(prev_t, prev_t * prev_t);
        } else if prev_g * gt < 0.0 {
            let (mut lo, mut hi) = (prev_t, t);
            let neg_lo = prev_g < 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (gm < 0.0) == neg_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            consider(root, root * root);
        }
        prev_t = t;
        prev_g = gt;
    }
    consider(0.0, 0.0);
    consider(1.0, 1.0);

    let (_, (m, v)) = best.expect("corners are always feasible");
    // Snap float dust so the constructor's exact check accepts the point.
    let m = m.clamp(0.0, 1.0);
    let v = v.clamp(m * m, m);
    MomentPair::new(m, v).expect("projected point feasible")
}

/// Deterministic pairwise summation for reproducible example averages.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

fn pairwise_mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Exact-in-f64 binomial coefficients (values below 2^53 for n <= 50 or so;
/// larger arguments round but keep ~1e-15 relative accuracy).
fn binom_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Mean over examples of the probability that a uniformly drawn m-subset of
/// the K repeats carries a strict majority of correct calls (hypergeometric
/// tail in the per-example correct count).
pub fn empirical_vote(matrix: &CorrectnessMatrix, m: usize) -> Result<f64> {
    let k = matrix.k_repeats();
    if m % 2 == 0 {
        return Err(Error::Domain(format!("subvote size {m} must be odd")));
    }
    if m > k {
        return Err(Error::Domain(format!(
            "subvote size {m} exceeds {k} repeats"
        )));
    }
    let per_example: Vec<f64> = matrix
        .bits
        .iter()
        .map(|row| {
            let c = row.iter().map(|&b| b as usize).sum::<usize>();
            if m == 1 {
                return c as f64 / k as f64;
            }
            let need = m / 2 + 1;
            let denom = binom_f64(k, m);
            let mut p = 0.0;
            for j in need..=m.min(c) {
                if m - j <= k - c {
                    p += binom_f64(c, j) * binom_f64(k - c, m - j) / denom;
                }
            }
            p
        })
        .collect();
    Ok(pairwise_mean(&per_example))
}

/// Randomized mixture over policies: component drawn independently per call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<(String, f64)>,
}

impl MixtureSpec {
    pub fn new(components: Vec<(String, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        if components.iter().any(|&(_, w)| w < 0.0 || !w.is_finite()) {
            return Err(Error::Domain("mixture weights must be nonnegative".into()));
        }
        let total: f64 = components.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(MixtureSpec { components })
    }
}

/// Resolve the mixture's component matrices and check example alignment.
fn align<'a>(
    matrices: &'a [CorrectnessMatrix],
    spec: &MixtureSpec,
) -> Result<Vec<(&'a CorrectnessMatrix, f64)>> {
    let by_id: HashMap<&str, &CorrectnessMatrix> = matrices
        .iter()
        .map(|m| (m.policy_id.as_str(), m))
        .collect();
    let mut picked = Vec::with_capacity(spec.components.len());
    for (id, w) in &spec.components {
        let m = by_id.get(id.as_str()).ok_or_else(|| {
            Error::Domain(format!("mixture component {id} has no correctness matrix"))
        })?;
        picked.push((*m, *w));
    }
    let first = picked[0].0;
    for &(m, _) in &picked[1..] {
        if m.example_ids != first.example_ids {
            return Err(Error::Domain(format!(
                "matrices for {} and {} are not aligned on example ids",
                first.policy_id, m.policy_id
            )));
        }
    }
    Ok(picked)
}

/// Unbiased within-policy estimator of q^d: falling factorial
/// c(c-1)...(c-d+1) / (K(K-1)...(K-d+1)).
fn falling_ratio(c: usize, k: usize, d: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..d {
        if i >= k {
            return 0.0;
        }
        if i >= c {
            return 0.0;
        }
        acc *= (c - i) as f64 / (k - i) as f64;
    }
    acc
}

/// Unbiased mixture moments: per example, q_mix = sum_k w_k q_k estimated by
/// plug-in proportions (already unbiased) and q_mix^2 by falling-factorial
/// squares within a policy and cross-products across policies.
pub fn mixture_moments(
    matrices: &[CorrectnessMatrix],
    spec: &MixtureSpec,
) -> Result<MomentEstimate> {
    let picked = align(matrices, spec)?;
    for (m, _) in &picked {
        if m.k_repeats() < 2 {
            return Err(Error::Domain(format!(
                "policy {} needs at least 2 repeats for unbiased second moments",
                m.policy_id
            )));
        }
    }
    let n = picked[0].0.n_examples();
    let mut mu_terms = Vec::with_capacity(n);
    let mut nu_terms = Vec::with_capacity(n);
    for e in 0..n {
        let stats: Vec<(usize, usize, f64)> = picked
            .iter()
            .map(|&(m, w)| {
                let c = m.bits[e].iter().map(|&b| b as usize).sum::<usize>();
                (c, m.k_repeats(), w)
            })
            .collect();
        let mu_e: f64 = stats
            .iter()
            .map(|&(c, k, w)| w * c as f64 / k as f64)
            .sum();
        let mut nu_e = 0.0;
        for (i, &(ci, ki, wi)) in stats.iter().enumerate() {
            nu_e += wi * wi * falling_ratio(ci, ki, 2);
            for &(cj, kj, wj) in stats.iter().skip(i + 1) {
                nu_e += 2.0 * wi * wj * (ci as f64 / ki as f64) * (cj as f64 / kj as f64);
            }
        }
        mu_terms.push(mu_e);
        nu_terms.push(nu_e);
    }
    Ok(moment_estimate(
        pairwise_mean(&mu_terms),
        pairwise_mean(&nu_terms),
    ))
}

/// Compositions of `total` into `parts` nonnegative cells, lexicographic.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            let mut v = Vec::with_capacity(parts);
            v.push(first);
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

fn multinomial_f64(total: usize, parts: &[usize]) -> f64 {
    let mut acc = 1.0;
    let mut rem = total;
    for &p in parts {
        acc *= binom_f64(rem, p);
        rem -= p;
    }
    acc
}

/// Unbiased estimate of the m-call mixture majority accuracy
/// E[P_(m-1)/2(Q_mix)], via the multinomial expansion of Q_mix^d into
/// per-policy falling-factorial terms.
pub fn mixture_vote(
    matrices: &[CorrectnessMatrix],
    spec: &MixtureSpec,
    m: usize,
) -> Result<f64> {
    if m % 2 == 0 {
        return Err(Error::Domain(format!("subvote size {m} must be odd")));
    }
    let picked = align(matrices, spec)?;
    let n_index = (m - 1) / 2;
    let coeffs = majority_coeffs_exact(n_index)?;
    let degree = coeffs.len() - 1;
    for (mat, _) in &picked {
        if degree > mat.k_repeats() {
            return Err(Error::Domain(format!(
                "objective degree {degree} exceeds {} repeats of policy {}",
                mat.k_repeats(),
                mat.policy_id
            )));
        }
    }
    let n = picked[0].0.n_examples();
    let parts = picked.len();
    // Precompute composition lists per degree.
    let comps: Vec<Vec<Vec<usize>>> = (0..=degree).map(|d| compositions(d, parts)).collect();
    let mut terms = Vec::with_capacity(n);
    for e in 0..n {
        let stats: Vec<(usize, usize, f64)> = picked
            .iter()
            .map(|&(mat, w)| {
                let c = mat.bits[e].iter().map(|&b| b as usize).sum::<usize>();
                (c, mat.k_repeats(), w)
            })
            .collect();
        let mut value = 0.0;
        for (d, &coef) in coeffs.iter().enumerate() {
            if coef == 0 {
                continue;
            }
            let mut moment_d = 0.0;
            for alpha in &comps[d] {
                let mut term = multinomial_f64(d, alpha);
                for (idx, &a) in alpha.iter().enumerate() {
                    if a == 0 {
                        continue;
                    }
                    let (c, k, w) = stats[idx];
                    term *= w.powi(a as i32) * falling_ratio(c, k, a);
                    if term == 0.0 {
                        break;
                    }
                }
                moment_d += term;
            }
            value += coef as f64 * moment_d;
        }
        terms.push(value);
    }
    Ok(pairwise_mean(&terms))
}

/// Single-policy unbiased moment estimate from the first two repeats,
/// exposed for the degenerate-mixture identity.
pub fn single_policy_moments(matrix: &CorrectnessMatrix) -> Result<MomentEstimate> {
    Ok(moments_from_pairs(&pair_table(matrix)?))
}
