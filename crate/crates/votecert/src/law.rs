use crate::error::{Error, Result};
use crate::poly::majority_poly;
use serde::{Deserialize, Serialize};

/// Atom-merge tolerance: limiting constructions produce near-duplicate atoms.
const MERGE_TOL: f64 = 1e-12;
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Finitely supported latent law on [0,1], canonicalized: atoms sorted by
/// location, near-duplicates merged, zero weights dropped, weights sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLaw {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteLaw {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Domain("discrete law needs at least one atom".into()));
        }
        for &(q, w) in &atoms {
            if !(0.0..=1.0).contains(&q) || !q.is_finite() {
                return Err(Error::Domain(format!("atom location {q} outside [0,1]")));
            }
            if w < -MERGE_TOL || !w.is_finite() {
                return Err(Error::Domain(format!("negative atom weight {w}")));
            }
        }
        let total: f64 = atoms.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Domain(format!(
                "atom weights sum to {total}, expected 1"
            )));
        }
        let mut sorted = atoms;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Merge runs of near-equal locations at the weight centroid.
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (q, w) in sorted {
            match merged.last_mut() {
                Some((q0, w0)) if (q - *q0).abs() <= MERGE_TOL => {
                    let wt = *w0 + w;
                    if wt > 0.0 {
                        *q0 = (*q0 * *w0 + q * w) / wt;
                    }
                    *w0 = wt;
                }
                _ => merged.push((q, w)),
            }
        }
        merged.retain(|&(_, w)| w > 0.0);
        if merged.is_empty() {
            return Err(Error::Domain("all atom weights are zero".into()));
        }
        Ok(DiscreteLaw { atoms: merged })
    }

    pub fn point(q: f64) -> Result<Self> {
        DiscreteLaw::new(vec![(q, 1.0)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn moments(&self) -> (f64, f64) {
        let mu = self.atoms.iter().map(|&(q, w)| w * q).sum();
        let nu = self.atoms.iter().map(|&(q, w)| w * q * q).sum();
        (mu, nu)
    }

    pub fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(q, w)| w * f(q)).sum()
    }
}

/// Majority accuracy of the law at an odd budget of 2n+1 calls.
pub fn law_vote_accuracy(law: &DiscreteLaw, n: usize) -> Result<f64> {
    let p = majority_poly(n)?;
    Ok(law.mean_of(|q| p.eval(q)))
}

/// Infinite-budget limit: mass strictly above 1/2 plus half the mass at 1/2.
/// Locations within 1e-12 of 1/2 count as exactly at the threshold.
pub fn law_endpoint(law: &DiscreteLaw) -> f64 {
    let mut v = 0.0;
    for &(q, w) in law.atoms() {
        if (q - 0.5).abs() <= 1e-12 {
            v += 0.5 * w;
        } else if q > 0.5 {
            v += w;
        }
    }
    v
}

/// First two moments (mu, nu) of a latent law on [0,1].
///
/// Feasibility is exact: 0 <= mu <= 1 and mu^2 <= nu <= mu.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    mu: f64,
    nu: f64,
}

impl MomentPair {
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) || !mu.is_finite() || !nu.is_finite() {
            return Err(Error::Infeasible { mu, nu });
        }
        if nu < mu * mu || nu > mu {
            return Err(Error::Infeasible { mu, nu });
        }
        Ok(MomentPair { mu, nu })
    }

    /// Construct from mean and same-example correlation rho in [0,1].
    pub fn from_mu_rho(mu: f64, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Domain(format!("rho={rho} outside [0,1]")));
        }
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::Domain(format!("mu={mu} outside [0,1]")));
        }
        // The analytic value is feasible for every (mu, rho) in the square;
        // snap the float dust so the exact check accepts it.
        let nu = (mu * mu + rho * mu * (1.0 - mu)).clamp(mu * mu, mu);
        MomentPair::new(mu, nu)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Same-example correlation; undefined at mu = 0 or 1.
    pub fn rho(&self) -> Option<f64> {
        if self.mu <= 0.0 || self.mu >= 1.0 {
            None
        } else {
            Some((self.nu - self.mu * self.mu) / (self.mu * (1.0 - self.mu)))
        }
    }

    /// Variance of the latent probability: nu - mu^2 >= 0.
    pub fn variance(&self) -> f64 {
        self.nu - self.mu * self.mu
    }
}

/// Exact feasibility test for a raw (mu, nu) pair.
pub fn is_feasible(mu: f64, nu: f64) -> bool {
    (0.0..=1.0).contains(&mu) && nu >= mu * mu && nu <= mu
}
