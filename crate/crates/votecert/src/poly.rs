use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense univariate polynomial in monomial form, ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl From<Vec<f64>> for Poly {
    fn from(coeffs: Vec<f64>) -> Self {
        Poly::new(coeffs)
    }
}

impl From<Poly> for Vec<f64> {
    fn from(p: Poly) -> Self {
        p.coeffs
    }
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![0.0] }
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1 && *self.coeffs.last().unwrap() == 0.0 {
            self.coeffs.pop();
        }
        if self.coeffs.is_empty() {
            self.coeffs.push(0.0);
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Compensated Horner evaluation on monomial coefficients.
    ///
    /// Majority polynomials have alternating coefficients up to ~2.4e25, so
    /// plain Horner loses up to ~9 digits through cancellation. The
    /// error-free transformation variant (TwoProd/TwoSum running error term)
    /// keeps results near correctly rounded while staying deterministic,
    /// which certificate residual checks rely on.
    pub fn eval(&self, x: f64) -> f64 {
        let mut s = *self.coeffs.last().unwrap();
        let mut err = 0.0;
        for &c in self.coeffs.iter().rev().skip(1) {
            // TwoProd: p + pe == s * x exactly.
            let p = s * x;
            let pe = s.mul_add(x, -p);
            // TwoSum: t + se == p + c exactly.
            let t = p + c;
            let bb = t - p;
            let se = (p - (t - bb)) + (c - bb);
            s = t;
            err = err * x + (pe + se);
        }
        s + err
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        Poly::new(coeffs)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = vec![0.0; n];
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c = self.coeffs.get(k).copied().unwrap_or(0.0)
                + other.coeffs.get(k).copied().unwrap_or(0.0);
        }
        Poly::new(coeffs)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }
}

/// Strict-majority success polynomial for an odd budget of `2n+1` calls.
#[derive(Debug, Clone)]
pub struct VotePolynomial {
    pub n: usize,
    pub poly: Poly,
}

impl VotePolynomial {
    pub fn budget(&self) -> usize {
        2 * self.n + 1
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.poly.eval(q)
    }
}

pub const MAX_BUDGET_INDEX: usize = 30;

/// Pascal-triangle binomial table in i128, rows `0..=n`.
fn binomial_table(n: usize) -> Vec<Vec<i128>> {
    let mut rows: Vec<Vec<i128>> = Vec::with_capacity(n + 1);
    for r in 0..=n {
        let mut row = vec![1i128; r + 1];
        for k in 1..r {
            row[k] = rows[r - 1][k - 1] + rows[r - 1][k];
        }
        rows.push(row);
    }
    rows
}

/// Exact monomial coefficients of P_n as integers.
///
/// P_n(q) = sum_{l=n+1}^{2n+1} C(2n+1,l) q^l (1-q)^{2n+1-l}; expanding the
/// (1-q) powers gives integer coefficients up to ~2.4e25 at n=30, so the
/// accumulation is done in i128 before any float conversion.
pub fn majority_coeffs_exact(n: usize) -> Result<Vec<i128>> {
    if n > MAX_BUDGET_INDEX {
        return Err(Error::BudgetRange { n });
    }
    let b = 2 * n + 1;
    let binom = binomial_table(b);
    let mut coeffs = vec![0i128; b + 1];
    for l in (n + 1)..=b {
        let c_l = binom[b][l];
        for j in 0..=(b - l) {
            let k = l + j;
            let sign = if j % 2 == 0 { 1i128 } else { -1i128 };
            coeffs[k] += sign * c_l * binom[b - l][j];
        }
    }
    Ok(coeffs)
}

pub fn majority_poly(n: usize) -> Result<VotePolynomial> {
    let exact = majority_coeffs_exact(n)?;
    let poly = Poly::new(exact.iter().map(|&c| c as f64).collect());
    Ok(VotePolynomial { n, poly })
}

/// Vote-gain objective P_{n_hi} - P_{n_lo}, differenced exactly in integers.
pub fn gain_poly(n_hi: usize, n_lo: usize) -> Result<Poly> {
    if n_hi <= n_lo {
        return Err(Error::Domain(format!(
            "gain objective needs n_hi > n_lo, got ({n_hi}, {n_lo})"
        )));
    }
    let hi = majority_coeffs_exact(n_hi)?;
    let lo = majority_coeffs_exact(n_lo)?;
    let mut out = hi;
    for (k, &c) in lo.iter().enumerate() {
        out[k] -= c;
    }
    Ok(Poly::new(out.iter().map(|&c| c as f64).collect()))
}

/// Fair-tie even-vote accuracy: P(Bin(2n,q) > n) + 0.5 * P(Bin(2n,q) = n).
///
/// Contract: equals P_{n-1}(q) for every q (the boundary terms cancel).
pub fn even_majority(n: usize, q: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("even vote count must be >= 2".into()));
    }
    if n > MAX_BUDGET_INDEX {
        return Err(Error::BudgetRange { n });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("q={q} outside [0,1]")));
    }
    let m = 2 * n;
    let binom = binomial_table(m);
    // Direct binomial mass; powers kept separate to avoid loop-carried error.
    let mass = |j: usize| binom[m][j] as f64 * q.powi(j as i32) * (1.0 - q).powi((m - j) as i32);
    let mut above = 0.0;
    for j in (n + 1)..=m {
        above += mass(j);
    }
    Ok(above + 0.5 * mass(n))
}
