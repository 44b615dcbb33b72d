//! Point completions of the identified set.
//!
//! A moment pair (mu, nu) pins down a whole set of latent laws; these two
//! fits pick canonical members. The maximum-entropy completion tilts the
//! uniform density by a quadratic exponential; the latent-difficulty
//! Gaussian-probit completion pushes a normal ability/difficulty model
//! through the probit link. Both induce full vote-accuracy curves and an
//! infinite-budget endpoint.

use crate::error::{Error, Result};
use crate::law::MomentPair;
use crate::normal::{bvn_equal, phi, phi_density, phi_inv};
use crate::poly::majority_poly;
use crate::quad::{adaptive_gl, gauss_legendre_on, normal_expectation_gh128};
use serde::{Deserialize, Serialize};

/// Quadratic-exponential tilt `f(q) = exp(lambda x + kappa x^2 - psi)` with
/// `x = q - 1/2`, the entropy-maximizing density with the target moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxEntParams {
    pub lambda: f64,
    pub kappa: f64,
    /// Log-partition value normalizing the density.
    pub psi: f64,
    pub theta: MomentPair,
}

impl MaxEntParams {
    pub fn density(&self, q: f64) -> f64 {
        let x = q - 0.5;
        (self.lambda * x + self.kappa * x * x - self.psi).exp()
    }
}

/// Gaussian ability/difficulty probit law: Q = Phi(eta - gamma Z) with
/// Z standard normal; equivalently threshold t and equicorrelation r.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdgpParams {
    pub eta: f64,
    pub gamma: f64,
    pub t: f64,
    pub r: f64,
}

/// Vote-accuracy curve induced by a fitted completion: one value per
/// requested budget index n (budget 2n+1 calls), plus the infinite-budget
/// endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionCurve {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub endpoint: f64,
}

/// Shared quadrature for the maximum-entropy fit: 64-node Gauss-Legendre on
/// each half of [0,1]. The split puts a panel boundary exactly at 1/2, which
/// the endpoint integral needs anyway.
fn split_nodes() -> Vec<(f64, f64)> {
    let mut nodes = gauss_legendre_on(64, 0.0, 0.5);
    nodes.extend(gauss_legendre_on(64, 0.5, 1.0));
    nodes
}

/// Log-partition via log-sum-exp over the fixed nodes.
fn log_partition(nodes: &[(f64, f64)], lambda: f64, kappa: f64) -> f64 {
    let s = |q: f64| {
        let x = q - 0.5;
        lambda * x + kappa * x * x
    };
    let m = nodes.iter().map(|&(q, _)| s(q)).fold(f64::MIN, f64::max);
    let sum: f64 = nodes.iter().map(|&(q, w)| w * (s(q) - m).exp()).sum();
    m + sum.ln()
}

/// First and second centered-feature moments E[x], E[x^2] of the tilted
/// density, plus the raw fourth-moment pieces the Newton Hessian needs.
fn tilted_feature_moments(
    nodes: &[(f64, f64)],
    lambda: f64,
    kappa: f64,
    psi: f64,
) -> (f64, f64, f64, f64) {
    let (mut m1, mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0, 0.0);
    for &(q, w) in nodes {
        let x = q - 0.5;
        let f = w * (lambda * x + kappa * x * x - psi).exp();
        m1 += f * x;
        m2 += f * x * x;
        m3 += f * x * x * x;
        m4 += f * x * x * x * x;
    }
    (m1, m2, m3, m4)
}

const MAXENT_GRAD_TOL: f64 = 1e-10;

/// Fit the maximum-entropy completion by safeguarded Newton descent on the
/// dual objective J(lambda, kappa) = psi - lambda b1 - kappa b2 with target
/// features b1 = mu - 1/2, b2 = nu - mu + 1/4. J is strictly convex and
/// coercive for interior targets, so Newton with backtracking converges from
/// the origin.
pub fn maxent_fit(theta: &MomentPair) -> Result<MaxEntParams> {
    let (mu, nu) = (theta.mu(), theta.nu());
    if !(mu > 0.0 && mu < 1.0 && nu > mu * mu && nu < mu) {
        return Err(Error::Domain(format!(
            "maximum-entropy fit needs a strictly interior moment pair, got ({mu}, {nu})"
        )));
    }
    let nodes = split_nodes();
    let b1 = mu - 0.5;
    let b2 = nu - mu + 0.25;
    let (mut lambda, mut kappa) = (0.0f64, 0.0f64);
    let mut psi = log_partition(&nodes, lambda, kappa);
    let mut j = psi - lambda * b1 - kappa * b2;
    for _ in 0..200 {
        let (e1, e2, e3, e4) = tilted_feature_moments(&nodes, lambda, kappa, psi);
        let g = [e1 - b1, e2 - b2];
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if norm <= MAXENT_GRAD_TOL {
            return Ok(MaxEntParams {
                lambda,
                kappa,
                psi,
                theta: *theta,
            });
        }
        // Hessian of J is the covariance of the features (x, x^2).
        let h11 = e2 - e1 * e1;
        let h12 = e3 - e1 * e2;
        let h22 = e4 - e2 * e2;
        let det = h11 * h22 - h12 * h12;
        if !(det > 1e-300) {
            return Err(Error::NonConvergence {
                what: "singular Hessian in maximum-entropy fit".into(),
                norm,
            });
        }
        let dl = -(h22 * g[0] - h12 * g[1]) / det;
        let dk = -(h11 * g[1] - h12 * g[0]) / det;
        // Backtracking: halve until J decreases. Inside the quadratic
        // convergence zone the decrease per step falls below float
        // resolution of J, so small gradients take the full step untested.
        if norm < 1e-6 {
            lambda += dl;
            kappa += dk;
            psi = log_partition(&nodes, lambda, kappa);
            j = psi - lambda * b1 - kappa * b2;
            continue;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let (nl, nk) = (lambda + step * dl, kappa + step * dk);
            let npsi = log_partition(&nodes, nl, nk);
            let nj = npsi - nl * b1 - nk * b2;
            if nj < j {
                lambda = nl;
                kappa = nk;
                psi = npsi;
                j = nj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                what: "backtracking stalled in maximum-entropy fit".into(),
                norm,
            });
        }
    }
    let (e1, e2, _, _) = tilted_feature_moments(&nodes, lambda, kappa, psi);
    let norm = ((e1 - b1).powi(2) + (e2 - b2).powi(2)).sqrt();
    Err(Error::NonConvergence {
        what: "maximum-entropy fit did not reach gradient tolerance".into(),
        norm,
    })
}

/// Vote curve of a fitted maximum-entropy density. The endpoint is the mass
/// above 1/2, integrated on the upper quadrature panel.
pub fn maxent_curve(params: &MaxEntParams, indices: &[usize]) -> Result<CompletionCurve> {
    let nodes = split_nodes();
    let mut values = Vec::with_capacity(indices.len());
    for &n in indices {
        let p = majority_poly(n)?;
        let v: f64 = nodes
            .iter()
            .map(|&(q, w)| w * params.density(q) * p.eval(q))
            .sum();
        values.push(v);
    }
    let endpoint: f64 = gauss_legendre_on(64, 0.5, 1.0)
        .iter()
        .map(|&(q, w)| w * params.density(q))
        .sum();
    Ok(CompletionCurve {
        indices: indices.to_vec(),
        values,
        endpoint,
    })
}

/// Parameters for an explicitly chosen tilt, with the partition constant and
/// implied moments computed rather than fitted.
pub(crate) fn maxent_params_from_tilt(lambda: f64, kappa: f64) -> MaxEntParams {
    let nodes = split_nodes();
    let psi = log_partition(&nodes, lambda, kappa);
    let (e1, e2, _, _) = tilted_feature_moments(&nodes, lambda, kappa, psi);
    let mu = (0.5 + e1).clamp(0.0, 1.0);
    let nu = (e2 + mu - 0.25).clamp(mu * mu, mu);
    MaxEntParams {
        lambda,
        kappa,
        psi,
        theta: MomentPair::new(mu, nu).expect("tilted moments are feasible"),
    }
}

/// Parameters for an explicitly chosen threshold and spread.
pub(crate) fn ldgp_params_from(eta: f64, gamma: f64) -> LdgpParams {
    let r = gamma * gamma / (1.0 + gamma * gamma);
    let t = eta / (1.0 + gamma * gamma).sqrt();
    LdgpParams { eta, gamma, t, r }
}

/// Fit the latent-difficulty Gaussian-probit completion: the threshold comes
/// straight from the mean, and the equicorrelation is bisected against the
/// equal-threshold bivariate normal probability, which is strictly
/// increasing in r.
pub fn ldgp_fit(theta: &MomentPair) -> Result<LdgpParams> {
    let (mu, nu) = (theta.mu(), theta.nu());
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(format!(
            "probit completion needs 0 < mu < 1, got {mu}"
        )));
    }
    if nu >= mu {
        return Err(Error::Domain(
            "nu = mu is the two-point boundary law; the probit family has no \
             finite parameters there"
                .into(),
        ));
    }
    let t = phi_inv(mu)?;
    // Variance at float-dust scale is the r = 0 boundary; the bisection
    // would only return an r of the same dust magnitude.
    let r = if nu - mu * mu <= 1e-14 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0 - 1e-14);
        // bvn_equal(t, lo) = mu^2 <= nu and bvn_equal(t, hi) ~ mu > nu.
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if bvn_equal(t, mid)? < nu {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let gamma = (r / (1.0 - r)).sqrt();
    let eta = t / (1.0 - r).sqrt();
    Ok(LdgpParams { eta, gamma, t, r })
}

/// E[h(eta - gamma Z)] under standard normal Z. Moderate gamma uses fixed
/// Gauss-Hermite; large gamma makes the integrand transition sharply on the
/// Z scale, where adaptive panels on a wide truncation are more reliable.
fn ldgp_expect(params: &LdgpParams, h: impl Fn(f64) -> f64) -> f64 {
    if params.gamma <= 1.5 {
        normal_expectation_gh128(|z| h(params.eta - params.gamma * z))
    } else {
        let f = |z: f64| phi_density(z) * h(params.eta - params.gamma * z);
        adaptive_gl(&f, -13.0, 13.0, 1e-12)
    }
}

/// Vote curve of a fitted probit completion; the endpoint is the mass of
/// examples with latent accuracy above 1/2, which is Phi(eta/gamma) for a
/// spread model and a step in mu otherwise.
pub fn ldgp_curve(params: &LdgpParams, indices: &[usize]) -> Result<CompletionCurve> {
    let mut values = Vec::with_capacity(indices.len());
    for &n in indices {
        let p = majority_poly(n)?;
        values.push(ldgp_expect(params, |u| p.eval(phi(u))));
    }
    let endpoint = if params.gamma > 0.0 {
        phi(params.eta / params.gamma)
    } else if params.t > 0.0 {
        1.0
    } else if params.t == 0.0 {
        0.5
    } else {
        0.0
    };
    Ok(CompletionCurve {
        indices: indices.to_vec(),
        values,
        endpoint,
    })
}
