//! Finite-sample layer: sampling variability around the estimated moment
//! pair, confidence regions in moment space, and their projection through
//! the structural interval maps.
//!
//! Each example contributes one observation X_i = ((B1+B2)/2, B1*B2) whose
//! population mean is exactly (mu, nu). A Wald ellipse around the sample
//! mean, intersected with the feasible moment cone, projects through the
//! budget-n interval map to a hull that accounts for estimation error on
//! top of the structural ambiguity.

use crate::closed::{endpoint_interval, three_vote_interval};
use crate::error::{Error, Result};
use crate::law::{is_feasible, MomentPair};
use crate::moments::{clamp_feasible, moments_from_pairs, pair_table, CorrectnessMatrix, MomentEstimate};
use crate::normal::chi2_2_quantile;
use crate::program::{optimize_1d, sharp_interval, PolyObjective, Sense, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Per-dataset two-call summary: raw and clamped moments, the sample
/// covariance of the X_i, and delta-method standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoCallStats {
    pub estimate: MomentEstimate,
    /// Sample covariance of X_i (denominator N-1).
    pub sigma: [[f64; 2]; 2],
    pub n_examples: usize,
    pub se_mu: f64,
    pub se_nu: f64,
    /// None when the raw mean is 0 or 1, where the correlation is undefined.
    pub se_rho: Option<f64>,
}

/// Mean and covariance of the per-example two-call statistics.
pub fn two_call_stats(matrix: &CorrectnessMatrix) -> Result<TwoCallStats> {
    if matrix.k_repeats() < 2 {
        return Err(Error::Domain(
            "two-call statistics need at least 2 repeats per example".into(),
        ));
    }
    let n = matrix.n_examples();
    if n < 2 {
        return Err(Error::Domain(
            "two-call statistics need at least 2 examples".into(),
        ));
    }
    let estimate = moments_from_pairs(&pair_table(matrix)?);
    let (mu, nu) = (estimate.raw_mu, estimate.raw_nu);
    let mut sigma = [[0.0f64; 2]; 2];
    for row in &matrix.bits {
        let (b1, b2) = (row[0] as f64, row[1] as f64);
        let d = [0.5 * (b1 + b2) - mu, b1 * b2 - nu];
        for i in 0..2 {
            for j in 0..2 {
                sigma[i][j] += d[i] * d[j];
            }
        }
    }
    for r in &mut sigma {
        for v in r.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    let nf = n as f64;
    let se_mu = (sigma[0][0] / nf).sqrt();
    let se_nu = (sigma[1][1] / nf).sqrt();
    let se_rho = if mu > 0.0 && mu < 1.0 {
        // Delta method on rho = (nu - mu^2) / (mu (1 - mu)).
        let v = mu * (1.0 - mu);
        let g = [
            (-2.0 * mu * v - (nu - mu * mu) * (1.0 - 2.0 * mu)) / (v * v),
            1.0 / v,
        ];
        let var = g[0] * (g[0] * sigma[0][0] + g[1] * sigma[0][1])
            + g[1] * (g[0] * sigma[1][0] + g[1] * sigma[1][1]);
        Some((var.max(0.0) / nf).sqrt())
    } else {
        None
    };
    Ok(TwoCallStats {
        estimate,
        sigma,
        n_examples: n,
        se_mu,
        se_nu,
        se_rho,
    })
}

/// Eigendecomposition of a symmetric 2x2 matrix: ((l1, v1), (l2, v2)) with
/// l1 >= l2 and orthonormal eigenvectors.
fn eig_sym2(m: &[[f64; 2]; 2]) -> ((f64, [f64; 2]), (f64, [f64; 2])) {
    let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
    let tr = a + c;
    let disc = (((a - c) * 0.5).powi(2) + b * b).sqrt();
    let l1 = 0.5 * tr + disc;
    let l2 = 0.5 * tr - disc;
    let v1 = if b.abs() > 1e-300 {
        let v = [l1 - c, b];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / n, v[1] / n]
    } else if a >= c {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let v2 = [-v1[1], v1[0]];
    ((l1, v1), (l2, v2))
}

/// Feasible Wald confidence region for the moment pair: the set of feasible
/// theta whose Mahalanobis distance from the raw estimate is within the
/// chi-squared(2) quantile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaldRegion {
    pub stats: TwoCallStats,
    pub alpha: f64,
    pub chi2_quantile: f64,
    pub pseudo_inverse_used: bool,
    /// Covariance is exactly zero: the region degenerates to the clamped
    /// point estimate.
    pub point_region: bool,
    inv: [[f64; 2]; 2],
    sqrt_sigma: [[f64; 2]; 2],
}

const COND_LIMIT: f64 = 1e12;

/// Build the region: a plain inverse of the covariance when well
/// conditioned, a Moore-Penrose pseudo-inverse with singular values below
/// 1e-12 of the largest treated as zero otherwise.
pub fn wald_region(stats: &TwoCallStats, alpha: f64) -> Result<WaldRegion> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 0.5]")));
    }
    let chi2 = chi2_2_quantile(alpha)?;
    let s = &stats.sigma;
    let ((l1, v1), (l2, v2)) = eig_sym2(s);
    let mut inv = [[0.0f64; 2]; 2];
    let mut sqrt_sigma = [[0.0f64; 2]; 2];
    let pseudo;
    let point_region = l1 <= 0.0;
    if !point_region {
        let cond_ok = l2 > 0.0 && l1 / l2 <= COND_LIMIT;
        pseudo = !cond_ok;
        for (l, v) in [(l1, v1), (l2, v2)] {
            let li = if cond_ok || l > 1e-12 * l1 {
                1.0 / l
            } else {
                0.0
            };
            let ls = l.max(0.0).sqrt();
            for i in 0..2 {
                for j in 0..2 {
                    inv[i][j] += li * v[i] * v[j];
                    sqrt_sigma[i][j] += ls * v[i] * v[j];
                }
            }
        }
    } else {
        pseudo = true;
    }
    Ok(WaldRegion {
        stats: stats.clone(),
        alpha,
        chi2_quantile: chi2,
        pseudo_inverse_used: pseudo,
        point_region,
        inv,
        sqrt_sigma,
    })
}

impl WaldRegion {
    pub fn center(&self) -> (f64, f64) {
        (self.stats.estimate.raw_mu, self.stats.estimate.raw_nu)
    }

    /// Scaled Mahalanobis statistic N (theta - theta_hat)' Sigma^+ (theta - theta_hat).
    pub fn quadform(&self, mu: f64, nu: f64) -> f64 {
        let (cm, cn) = self.center();
        let d = [mu - cm, nu - cn];
        let q = d[0] * (self.inv[0][0] * d[0] + self.inv[0][1] * d[1])
            + d[1] * (self.inv[1][0] * d[0] + self.inv[1][1] * d[1]);
        self.stats.n_examples as f64 * q
    }

    /// Deterministic membership: feasibility plus the Wald inequality.
    pub fn contains(&self, mu: f64, nu: f64) -> bool {
        if !is_feasible(mu, nu) {
            return false;
        }
        if self.point_region {
            let c = self.stats.estimate.clamped;
            return (mu - c.mu()).abs() <= 1e-12 && (nu - c.nu()).abs() <= 1e-12;
        }
        self.quadform(mu, nu) <= self.chi2_quantile
    }

    /// Axis-aligned bounding box of the ellipse, clipped to the unit square.
    fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let (cm, cn) = self.center();
        let scale = (self.chi2_quantile / self.stats.n_examples as f64).sqrt();
        let rm = scale * self.stats.sigma[0][0].max(0.0).sqrt();
        let rn = scale * self.stats.sigma[1][1].max(0.0).sqrt();
        (
            (cm - rm).max(0.0),
            (cm + rm).min(1.0),
            (cn - rn).max(0.0),
            (cn + rn).min(1.0),
        )
    }
}

/// Which interval map a hull projects through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BudgetTag {
    /// Odd budget 2n+1 via its structural interval.
    Odd(usize),
    /// Infinite-budget endpoint interval.
    Endpoint,
}

impl std::fmt::Display for BudgetTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BudgetTag::Odd(n) => write!(f, "V{}", 2 * n + 1),
            BudgetTag::Endpoint => write!(f, "Vinf"),
        }
    }
}

/// Structural interval at one moment pair for the tagged budget. The
/// three-call budget has a closed form; larger budgets run the certified
/// moment program; the endpoint map has its own closed form.
pub fn bound_interval(tag: BudgetTag, theta: &MomentPair) -> Result<(f64, f64)> {
    match tag {
        BudgetTag::Odd(1) => {
            let iv = three_vote_interval(theta);
            Ok((iv.lower, iv.upper))
        }
        BudgetTag::Odd(n) => {
            let obj = PolyObjective::majority(n)?;
            let b = sharp_interval(&obj, theta, &SolverConfig::default())?;
            Ok((b.lower, b.upper))
        }
        BudgetTag::Endpoint => {
            let iv = endpoint_interval(theta);
            Ok((iv.lower, iv.upper))
        }
    }
}

/// Interval hull of the structural bounds over a confidence region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectedHull {
    pub budget_tag: BudgetTag,
    pub lower: f64,
    pub upper: f64,
    pub argmin_theta: MomentPair,
    pub argmax_theta: MomentPair,
}

fn lex_less(a: &MomentPair, b: &MomentPair) -> bool {
    (a.mu(), a.nu()) < (b.mu(), b.nu())
}

/// Project the region through the tagged interval map and take the hull:
/// sample densely (ellipse boundary, feasibility-boundary arcs, interior
/// grid), then polish the extremes by coordinate descent with projection
/// back into the region.
pub fn project_hull(region: &WaldRegion, tag: BudgetTag) -> Result<ProjectedHull> {
    let clamped = region.stats.estimate.clamped;
    if region.point_region {
        let (lo, hi) = bound_interval(tag, &clamped)?;
        return Ok(ProjectedHull {
            budget_tag: tag,
            lower: lo,
            upper: hi,
            argmin_theta: clamped,
            argmax_theta: clamped,
        });
    }

    let (cm, cn) = region.center();
    let scale = (region.chi2_quantile / region.stats.n_examples as f64).sqrt();
    let (blo, bhi, vlo, vhi) = region.bounding_box();
    let mut raw: Vec<(f64, f64)> = Vec::with_capacity(1024 + 2 * 512 + 64 * 64 + 1);
    for k in 0..1024 {
        let ang = 2.0 * std::f64::consts::PI * k as f64 / 1024.0;
        let u = [ang.cos(), ang.sin()];
        let d = [
            region.sqrt_sigma[0][0] * u[0] + region.sqrt_sigma[0][1] * u[1],
            region.sqrt_sigma[1][0] * u[0] + region.sqrt_sigma[1][1] * u[1],
        ];
        raw.push((cm + scale * d[0], cn + scale * d[1]));
    }
    // Feasibility-boundary arcs crossing the box: extremes of the interval
    // maps often sit on the moment-cone boundary.
    for k in 0..=512 {
        let m = blo + (bhi - blo) * k as f64 / 512.0;
        raw.push((m, m * m));
        raw.push((m, m));
    }
    for i in 0..64 {
        for j in 0..64 {
            raw.push((
                blo + (bhi - blo) * (i as f64 + 0.5) / 64.0,
                vlo + (vhi - vlo) * (j as f64 + 0.5) / 64.0,
            ));
        }
    }

    let mut members: Vec<MomentPair> = vec![clamped];
    for (m, v) in raw {
        let p = clamp_feasible(m, v);
        if region.contains(p.mu(), p.nu()) {
            members.push(p);
        }
    }
    if members.len() == 1 && !region.contains(clamped.mu(), clamped.nu()) {
        return Err(Error::EmptyRegion);
    }

    let bounds: Vec<(f64, f64)> = members
        .par_iter()
        .map(|p| bound_interval(tag, p))
        .collect::<Result<_>>()?;

    let mut lo_at = members[0];
    let mut hi_at = members[0];
    let (mut lo, mut hi) = bounds[0];
    for (p, &(l, u)) in members.iter().zip(&bounds).skip(1) {
        if l < lo - 1e-15 || ((l - lo).abs() <= 1e-15 && lex_less(p, &lo_at)) {
            lo = l;
            lo_at = *p;
        }
        if u > hi + 1e-15 || ((u - hi).abs() <= 1e-15 && lex_less(p, &hi_at)) {
            hi = u;
            hi_at = *p;
        }
    }

    // The hull must cover the point estimate's own structural interval even
    // when clamping pushed it off the ellipse.
    let (clo, chi) = bound_interval(tag, &clamped)?;
    if clo < lo {
        lo = clo;
        lo_at = clamped;
    }
    if chi > hi {
        hi = chi;
        hi_at = clamped;
    }

    let (lo, lo_at) = refine_extreme(region, tag, lo_at, lo, false)?;
    let (hi, hi_at) = refine_extreme(region, tag, hi_at, hi, true)?;
    Ok(ProjectedHull {
        budget_tag: tag,
        lower: lo,
        upper: hi,
        argmin_theta: lo_at,
        argmax_theta: hi_at,
    })
}

/// Pull a proposed point back into the region: clamp to the cone, then
/// bisect along the segment toward a known member until membership holds.
fn project_into(region: &WaldRegion, from: &MomentPair, to_mu: f64, to_nu: f64) -> MomentPair {
    let p = clamp_feasible(to_mu, to_nu);
    if region.contains(p.mu(), p.nu()) {
        return p;
    }
    let (mut lo_t, mut hi_t) = (0.0f64, 1.0f64);
    for _ in 0..50 {
        let t = 0.5 * (lo_t + hi_t);
        let q = clamp_feasible(
            from.mu() + t * (p.mu() - from.mu()),
            from.nu() + t * (p.nu() - from.nu()),
        );
        if region.contains(q.mu(), q.nu()) {
            lo_t = t;
        } else {
            hi_t = t;
        }
    }
    clamp_feasible(
        from.mu() + lo_t * (p.mu() - from.mu()),
        from.nu() + lo_t * (p.nu() - from.nu()),
    )
}

fn refine_extreme(
    region: &WaldRegion,
    tag: BudgetTag,
    mut at: MomentPair,
    mut value: f64,
    maximize: bool,
) -> Result<(f64, MomentPair)> {
    let (blo, bhi, vlo, vhi) = region.bounding_box();
    let mut step = ((bhi - blo) + (vhi - vlo)) / 64.0;
    if !(step > 0.0) {
        return Ok((value, at));
    }
    let accepts = |v: f64, value: f64| {
        if maximize {
            v > value + 1e-14
        } else {
            v < value - 1e-14
        }
    };
    let mut rounds = 0u32;
    while step > 1e-8 && rounds < 500 {
        rounds += 1;
        let mut improved = false;
        let start = at;
        for (dm, dn) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let cand = project_into(region, &at, at.mu() + dm, at.nu() + dn);
            if !region.contains(cand.mu(), cand.nu()) {
                continue;
            }
            let (l, u) = bound_interval(tag, &cand)?;
            let v = if maximize { u } else { l };
            if accepts(v, value) {
                value = v;
                at = cand;
                improved = true;
            }
        }
        // Pattern move: axis probes zigzag along diagonal valleys (the
        // map's branch seams), so extend the round's net displacement,
        // doubling while it keeps paying.
        let (mut dm, mut dn) = (at.mu() - start.mu(), at.nu() - start.nu());
        for _ in 0..60 {
            if dm == 0.0 && dn == 0.0 {
                break;
            }
            let cand = project_into(region, &at, at.mu() + dm, at.nu() + dn);
            if !region.contains(cand.mu(), cand.nu()) {
                break;
            }
            let (l, u) = bound_interval(tag, &cand)?;
            let v = if maximize { u } else { l };
            if !accepts(v, value) {
                break;
            }
            dm = cand.mu() + dm - at.mu();
            dn = cand.nu() + dn - at.nu();
            value = v;
            at = cand;
        }
        if !improved {
            step *= 0.5;
        }
    }
    // Extrema pinned to a constraint curve sit between pattern-search
    // probes: polish along each curve's own parameterization, where the
    // remaining error is second order in the search tolerance.
    let sense = if maximize { Sense::Max } else { Sense::Min };
    let side = |p: &MomentPair| -> Option<f64> {
        let (l, u) = bound_interval(tag, p).ok()?;
        Some(if maximize { u } else { l })
    };
    let arc = |m: f64, v: f64| -> Option<f64> {
        if !region.contains(m, v) {
            return None;
        }
        side(&MomentPair::new(m, v).ok()?)
    };
    let w = (bhi - blo) / 32.0;
    let polish = [
        // Feasibility cone: the parabola of perfectly correlated pairs and
        // the diagonal of uncorrelated ones.
        optimize_1d(&|m| arc(m, m * m), at.mu() - w, at.mu() + w, 32, sense, 1e-12)
            .map(|(m, v)| (m, m * m, v)),
        optimize_1d(&|m| arc(m, m), at.mu() - w, at.mu() + w, 32, sense, 1e-12)
            .map(|(m, v)| (m, m, v)),
        boundary_polish(region, at, &arc, sense),
    ];
    for cand in polish.into_iter().flatten() {
        let (m, v, val) = cand;
        if accepts(val, value) && region.contains(m, v) {
            value = val;
            at = MomentPair::new(m, v)?;
        }
    }
    Ok((value, at))
}

/// Golden polish along the ellipse boundary near the incumbent's angle in
/// the covariance eigenframe.
fn boundary_polish(
    region: &WaldRegion,
    at: MomentPair,
    arc: &dyn Fn(f64, f64) -> Option<f64>,
    sense: Sense,
) -> Option<(f64, f64, f64)> {
    let sq = region.sqrt_sigma;
    let det = sq[0][0] * sq[1][1] - sq[0][1] * sq[1][0];
    if det.abs() < 1e-300 {
        return None;
    }
    let (cm, cn) = region.center();
    let scale = (region.chi2_quantile / region.stats.n_examples as f64).sqrt();
    let d = [at.mu() - cm, at.nu() - cn];
    let phi0 = ((-sq[1][0] * d[0] + sq[0][0] * d[1]) / det)
        .atan2((sq[1][1] * d[0] - sq[0][1] * d[1]) / det);
    // Stay a hair inside so membership survives rounding.
    let r = scale * (1.0 - 1e-12);
    let point = move |phi: f64| {
        (
            cm + r * (sq[0][0] * phi.cos() + sq[0][1] * phi.sin()),
            cn + r * (sq[1][0] * phi.cos() + sq[1][1] * phi.sin()),
        )
    };
    let w = std::f64::consts::TAU / 256.0;
    let (phi, v) = optimize_1d(
        &|phi| {
            let (m, n) = point(phi);
            arc(m, n)
        },
        phi0 - w,
        phi0 + w,
        32,
        sense,
        1e-13,
    )?;
    let (m, n) = point(phi);
    Some((m, n, v))
}
