//! Sharp two-moment bounds for polynomial vote objectives.
//!
//! The primal side searches small-support laws matching (mu, nu); the dual
//! side certifies each bound with a quadratic that dominates (or is
//! dominated by) the objective across [0,1]. Certificates are verified by
//! isolating every critical point of the residual, so an accepted bound does
//! not depend on the search having found the true optimum.

mod gridlp;
mod roots;

use crate::error::{Error, Result};
use crate::law::{DiscreteLaw, MomentPair};
use crate::poly::{gain_poly, majority_poly, Poly};
use serde::{Deserialize, Serialize};

pub(crate) use gridlp::{lagrange3, simplex_lp, GridSolution, Sense};
use roots::{min_on_unit, near_minimal_points};

/// Polynomial objective on [0,1] with a display label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyObjective {
    pub poly: Poly,
    pub label: String,
}

pub const MAX_OBJECTIVE_DEGREE: usize = 61;

impl PolyObjective {
    pub fn new(poly: Poly, label: impl Into<String>) -> Result<Self> {
        let d = poly.degree();
        if d < 1 || d > MAX_OBJECTIVE_DEGREE {
            return Err(Error::Domain(format!(
                "objective degree {d} outside 1..={MAX_OBJECTIVE_DEGREE}"
            )));
        }
        Ok(PolyObjective {
            poly,
            label: label.into(),
        })
    }

    /// Majority objective for odd budget 2n+1.
    pub fn majority(n: usize) -> Result<Self> {
        let p = majority_poly(n)?;
        PolyObjective::new(p.poly, format!("P{n}"))
    }

    /// Marginal-gain objective P_{n_hi} - P_{n_lo}.
    pub fn gain(n_hi: usize, n_lo: usize) -> Result<Self> {
        let p = gain_poly(n_hi, n_lo)?;
        PolyObjective::new(p, format!("P{n_hi}-P{n_lo}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertSide {
    Majorant,
    Minorant,
}

/// Quadratic a + b q + c q^2 dominating (majorant) or dominated by
/// (minorant) the objective on [0,1]; its moment value a + b mu + c nu is
/// the certified bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticCertificate {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub side: CertSide,
    pub contacts: Vec<f64>,
    pub min_residual: f64,
    pub bound_value: f64,
}

impl QuadraticCertificate {
    fn quad_poly(&self) -> Poly {
        Poly::new(vec![self.a, self.b, self.c])
    }
}

/// Signed residual whose nonnegativity proves the certificate's side.
fn residual_poly(cert: &QuadraticCertificate, g: &Poly) -> Poly {
    match cert.side {
        CertSide::Majorant => cert.quad_poly().sub(g),
        CertSide::Minorant => g.sub(&cert.quad_poly()),
    }
}

/// Recompute the certified minimum of the residual over [0,1] by derivative
/// root isolation plus endpoint evaluation. Negative beyond tolerance means
/// the certificate fails; the value is returned, never masked.
pub fn verify_certificate(cert: &QuadraticCertificate, objective: &PolyObjective) -> f64 {
    min_on_unit(&residual_poly(cert, &objective.poly)).0
}

/// Two-sided sharp bound with witnesses and certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalBound {
    pub objective: PolyObjective,
    pub theta: MomentPair,
    pub lower: f64,
    pub upper: f64,
    pub lower_witness: DiscreteLaw,
    pub upper_witness: DiscreteLaw,
    pub lower_cert: QuadraticCertificate,
    pub upper_cert: QuadraticCertificate,
    /// Worst primal-dual mismatch across the two sides.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Chebyshev seed-grid size before forced points are added.
    pub seed_grid_m: usize,
    /// Support-location convergence tolerance of the continuous refinement.
    pub location_tol: f64,
    /// Accepted |primal - dual| per side.
    pub gap_tol: f64,
    /// Accepted signed minimum of a certificate residual.
    pub residual_tol: f64,
    /// Accepted |residual| at listed contact points.
    pub contact_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            seed_grid_m: 512,
            location_tol: 1e-10,
            gap_tol: 1e-7,
            residual_tol: 1e-9,
            contact_tol: 1e-8,
        }
    }
}

const CONE_BYPASS: f64 = 1e-10;

/// Sharp lower and upper values of the objective's expectation over all laws
/// on [0,1] with mean mu and second moment nu.
pub fn sharp_interval(
    objective: &PolyObjective,
    theta: &MomentPair,
    cfg: &SolverConfig,
) -> Result<IntervalBound> {
    let g = &objective.poly;
    let (mu, nu) = (theta.mu(), theta.nu());
    if nu - mu * mu < CONE_BYPASS {
        return degenerate_point_bound(objective, theta, cfg);
    }
    if mu - nu < CONE_BYPASS {
        return degenerate_bernoulli_bound(objective, theta, cfg);
    }
    let (lo_val, lo_atoms) = refine_side(g, theta, cfg, Sense::Min)?;
    let (hi_val, hi_atoms) = refine_side(g, theta, cfg, Sense::Max)?;
    let lower_witness = witness_law(&lo_atoms)?;
    let upper_witness = witness_law(&hi_atoms)?;
    let lower_cert = fit_certificate(g, &contact_points(&lo_atoms), CertSide::Minorant, theta, cfg)?;
    let upper_cert = fit_certificate(g, &contact_points(&hi_atoms), CertSide::Majorant, theta, cfg)?;
    finish_bound(
        objective.clone(),
        *theta,
        cfg,
        (lo_val, lower_witness, lower_cert),
        (hi_val, upper_witness, upper_cert),
    )
}

/// Sharp bounds on the vote gain P_{n_hi} - P_{n_lo} over the moment class.
pub fn gain_interval(n_hi: usize, n_lo: usize, theta: &MomentPair) -> Result<IntervalBound> {
    let objective = PolyObjective::gain(n_hi, n_lo)?;
    sharp_interval(&objective, theta, &SolverConfig::default())
}

/// Exact optimum of the uniform-grid moment LP, both senses. The oracle
/// counterpart of sharp_interval: O(M^-2) from the continuous value for
/// smooth objectives, and honestly infeasible when theta sits closer to the
/// moment-cone boundary than the grid can represent.
pub fn brute_force_lp(
    objective: &PolyObjective,
    theta: &MomentPair,
    m: usize,
) -> Result<(f64, f64)> {
    if m < 101 {
        return Err(Error::Domain(format!("grid size {m} below minimum 101")));
    }
    let xs: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| objective.poly.eval(x)).collect();
    let lo = simplex_lp(&xs, &gs, theta, Sense::Min)?;
    let hi = simplex_lp(&xs, &gs, theta, Sense::Max)?;
    Ok((lo.value, hi.value))
}

fn witness_law(atoms: &[(f64, f64)]) -> Result<DiscreteLaw> {
    let total: f64 = atoms.iter().map(|&(_, w)| w).sum();
    let cleaned: Vec<(f64, f64)> = atoms
        .iter()
        .map(|&(x, w)| (x.clamp(0.0, 1.0), (w / total).max(0.0)))
        .collect();
    DiscreteLaw::new(cleaned)
}

/// Canonicalize a raw contact list: snap near-endpoint locations to the
/// endpoint, sort, deduplicate.
fn snap_points(raw: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts: Vec<f64> = raw
        .into_iter()
        .map(|x| {
            if x < 1e-7 {
                0.0
            } else if x > 1.0 - 1e-7 {
                1.0
            } else {
                x
            }
        })
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    pts
}

/// Contact locations for the dual fit: atoms carrying real weight, with
/// near-endpoint locations snapped to the endpoint. Atoms at dust weight or
/// a hair inside an endpoint arise when a support family approaches a
/// boundary-supported optimum from inside; the snapped set is the support of
/// the limiting law, which is what the touching quadratic must match.
fn contact_points(atoms: &[(f64, f64)]) -> Vec<f64> {
    snap_points(atoms.iter().filter(|&&(_, w)| w > 1e-7).map(|&(x, _)| x))
}

fn finish_bound(
    objective: PolyObjective,
    theta: MomentPair,
    cfg: &SolverConfig,
    lower: (f64, DiscreteLaw, QuadraticCertificate),
    upper: (f64, DiscreteLaw, QuadraticCertificate),
) -> Result<IntervalBound> {
    let (lo_primal, lower_witness, lower_cert) = lower;
    let (hi_primal, upper_witness, upper_cert) = upper;
    let lo_gap = (lower_cert.bound_value - lo_primal).abs();
    let hi_gap = (upper_cert.bound_value - hi_primal).abs();
    for (side, gap) in [("lower", lo_gap), ("upper", hi_gap)] {
        if gap > cfg.gap_tol {
            return Err(Error::Certificate(format!(
                "{side} bound of {} at ({}, {}): primal-dual gap {gap:.3e} exceeds {:.1e}",
                objective.label,
                theta.mu(),
                theta.nu(),
                cfg.gap_tol
            )));
        }
    }
    Ok(IntervalBound {
        objective,
        theta,
        lower: lower_cert.bound_value,
        upper: upper_cert.bound_value,
        lower_witness,
        upper_witness,
        lower_cert,
        upper_cert,
        gap: lo_gap.max(hi_gap),
    })
}

/// nu == mu^2 (within bypass tolerance): the only law is the point mass, so
/// both bounds equal g(mu) and the certificates are shifted tangents.
fn degenerate_point_bound(
    objective: &PolyObjective,
    theta: &MomentPair,
    cfg: &SolverConfig,
) -> Result<IntervalBound> {
    let g = &objective.poly;
    let mu = theta.mu();
    let value = g.eval(mu);
    let witness = DiscreteLaw::point(mu)?;
    let lower_cert = fit_certificate(g, &[mu], CertSide::Minorant, theta, cfg)?;
    let upper_cert = fit_certificate(g, &[mu], CertSide::Majorant, theta, cfg)?;
    finish_bound(
        objective.clone(),
        *theta,
        cfg,
        (value, witness.clone(), lower_cert),
        (value, witness, upper_cert),
    )
}

/// nu == mu (within bypass tolerance): every matching law lives on {0, 1},
/// so both bounds equal the Bernoulli value and the certificates are shifted
/// chords.
fn degenerate_bernoulli_bound(
    objective: &PolyObjective,
    theta: &MomentPair,
    cfg: &SolverConfig,
) -> Result<IntervalBound> {
    let g = &objective.poly;
    let mu = theta.mu();
    let value = (1.0 - mu) * g.eval(0.0) + mu * g.eval(1.0);
    let witness = DiscreteLaw::new(vec![(0.0, 1.0 - mu), (1.0, mu)])?;
    let lower_cert = fit_certificate(g, &[0.0, 1.0], CertSide::Minorant, theta, cfg)?;
    let upper_cert = fit_certificate(g, &[0.0, 1.0], CertSide::Majorant, theta, cfg)?;
    finish_bound(
        objective.clone(),
        *theta,
        cfg,
        (value, witness.clone(), lower_cert),
        (value, witness, upper_cert),
    )
}

// ---------------------------------------------------------------------------
// Primal refinement
// ---------------------------------------------------------------------------

fn seed_grid(mu: f64, nu: f64, m: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..m)
        .map(|k| 0.5 * (1.0 - (std::f64::consts::PI * k as f64 / (m - 1) as f64).cos()))
        .collect();
    xs.push(0.5);
    if mu > 0.0 {
        xs.push((nu / mu).clamp(0.0, 1.0));
    }
    if mu < 1.0 {
        xs.push(((mu - nu) / (1.0 - mu)).clamp(0.0, 1.0));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
    xs
}

fn better(sense: Sense, a: f64, b: f64) -> bool {
    match sense {
        Sense::Min => a < b,
        Sense::Max => a > b,
    }
}

/// Scan-then-golden optimizer over a closed interval. The callback returns
/// None outside the family's feasible set. Every local optimum of the scan
/// is polished, so multimodal objectives (high-degree vote polynomials) are
/// handled without unimodality assumptions.
pub(crate) fn optimize_1d(
    f: &dyn Fn(f64) -> Option<f64>,
    lo: f64,
    hi: f64,
    nscan: usize,
    sense: Sense,
    tol: f64,
) -> Option<(f64, f64)> {
    if !(hi > lo) {
        return f(lo).map(|v| (lo, v));
    }
    let n = nscan.max(8);
    let mut ts = Vec::with_capacity(n + 1);
    let mut vs = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = lo + (hi - lo) * i as f64 / n as f64;
        ts.push(t);
        vs.push(f(t));
    }
    let mut best: Option<(f64, f64)> = None;
    let push = |x: f64, v: f64, best: &mut Option<(f64, f64)>| {
        if best.is_none() || better(sense, v, best.unwrap().1) {
            *best = Some((x, v));
        }
    };
    for i in 0..=n {
        if let Some(v) = vs[i] {
            push(ts[i], v, &mut best);
        }
    }
    best?;
    // Polish every interior scan point that beats both neighbours.
    for i in 1..n {
        let Some(v) = vs[i] else { continue };
        let left_ok = vs[i - 1].map_or(true, |l| !better(sense, l, v));
        let right_ok = vs[i + 1].map_or(true, |r| !better(sense, r, v));
        if left_ok && right_ok {
            if let Some((x, val)) = golden(f, ts[i - 1], ts[i + 1], sense, tol) {
                push(x, val, &mut best);
            }
        }
    }
    best
}

fn golden(
    f: &dyn Fn(f64) -> Option<f64>,
    mut a: f64,
    mut b: f64,
    sense: Sense,
    tol: f64,
) -> Option<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let worst = match sense {
        Sense::Min => f64::INFINITY,
        Sense::Max => f64::NEG_INFINITY,
    };
    let ev = |x: f64| f(x).unwrap_or(worst);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = ev(c);
    let mut fd = ev(d);
    for _ in 0..220 {
        if b - a <= tol {
            break;
        }
        if better(sense, fc, fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = ev(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = ev(d);
        }
    }
    let x = 0.5 * (a + b);
    f(x).map(|v| (x, v))
}

type Atoms = Vec<(f64, f64)>;

/// Two-point family: both moments pin the partner point and the weight, so
/// x alone parametrizes every feasible two-atom law. x ranges over
/// [0, (mu-nu)/(1-mu)]; the endpoints are the classic one-sided witnesses
/// {0, nu/mu} and {(mu-nu)/(1-mu), 1}.
fn family_pair(g: &Poly, mu: f64, nu: f64, x: f64) -> Option<(f64, Atoms)> {
    if x >= mu - 1e-12 {
        return None;
    }
    let y = ((nu - mu * x) / (mu - x)).clamp(0.0, 1.0);
    if y <= x + 1e-12 {
        return None;
    }
    let w = (y - mu) / (y - x);
    if !(0.0..=1.0).contains(&w) {
        return None;
    }
    Some((
        w * g.eval(x) + (1.0 - w) * g.eval(y),
        vec![(x, w), (y, 1.0 - w)],
    ))
}

/// Three-point family on a fixed pattern: any subset of {0, 1} plus free
/// interior points, weights solved exactly from the moment system.
///
/// Separations below 1e-5 are rejected: the Lagrange weights lose absolute
/// accuracy like eps/sep there, and a merged-atom law is always reachable
/// through the two-point family instead.
fn family_triple(g: &Poly, mu: f64, nu: f64, s: [f64; 3]) -> Option<(f64, Atoms)> {
    if (s[0] - s[1]).abs() < 1e-5 || (s[1] - s[2]).abs() < 1e-5 || (s[0] - s[2]).abs() < 1e-5 {
        return None;
    }
    let w = lagrange3(s, mu, nu)?;
    if w.iter().any(|&wi| wi < -1e-12) {
        return None;
    }
    let value = w[0] * g.eval(s[0]) + w[1] * g.eval(s[1]) + w[2] * g.eval(s[2]);
    Some((value, s.iter().zip(w).map(|(&x, wi)| (x, wi.max(0.0))).collect()))
}

/// Coordinate descent for the two-interior-point families, from a coarse
/// seed; the window shrinks geometrically to the location tolerance.
fn descend_xy(
    value: &dyn Fn(f64, f64) -> Option<f64>,
    mut x: f64,
    mut y: f64,
    sense: Sense,
    tol: f64,
) -> Option<(f64, f64, f64)> {
    let mut delta = 0.03;
    let mut best = value(x, y)?;
    let mut stale_at_floor = 0u32;
    for _ in 0..240 {
        let before = best;
        let (x0, y0) = (x, y);
        if let Some((nx, v)) = optimize_1d(
            &|t| value(t, y),
            (x - delta).max(1e-9),
            (x + delta).min(y - 1e-9),
            24,
            sense,
            tol.min(delta * 1e-3),
        ) {
            if better(sense, v, best) {
                best = v;
                x = nx;
            }
        }
        if let Some((ny, v)) = optimize_1d(
            &|t| value(x, t),
            (y - delta).max(x + 1e-9),
            (y + delta).min(1.0 - 1e-9),
            24,
            sense,
            tol.min(delta * 1e-3),
        ) {
            if better(sense, v, best) {
                best = v;
                y = ny;
            }
        }
        // Line search along the round's net displacement: axis moves alone
        // zigzag down diagonal valleys with vanishing per-round progress.
        let (dx, dy) = (x - x0, y - y0);
        let norm = dx.hypot(dy);
        if norm > 1e-15 {
            let (ux, uy) = (dx / norm, dy / norm);
            let probe = |t: f64| {
                let (qx, qy) = (x + t * ux, y + t * uy);
                if qx < 1e-9 || qy > 1.0 - 1e-9 || qx + 1e-9 > qy {
                    None
                } else {
                    value(qx, qy)
                }
            };
            if let Some((t, v)) = optimize_1d(
                &probe,
                -2.0 * delta,
                2.0 * delta,
                24,
                sense,
                tol.min(delta * 1e-3),
            ) {
                if better(sense, v, best) {
                    best = v;
                    x += t * ux;
                    y += t * uy;
                }
            }
        }
        // Shrink only on stalled rounds; a fixed schedule clamps the window
        // before long diagonal valleys are walked out. Jitter-scale gains
        // don't count, else rescan noise keeps the window wide forever.
        let improved = better(sense, best, before) && (best - before).abs() > 1e-13;
        if improved {
            delta = (delta * 1.3).min(0.03);
        } else if delta <= tol {
            stale_at_floor += 1;
            if stale_at_floor >= 2 {
                break;
            }
        } else {
            delta = (delta * 0.5).max(tol);
        }
    }
    Some((x, y, best))
}

fn refine_side(
    g: &Poly,
    theta: &MomentPair,
    cfg: &SolverConfig,
    sense: Sense,
) -> Result<(f64, Atoms)> {
    let (mu, nu) = (theta.mu(), theta.nu());
    let mut cands: Vec<(f64, Atoms)> = Vec::new();

    // Grid seed: basic solution on the Chebyshev grid plus forced anchors.
    let xs = seed_grid(mu, nu, cfg.seed_grid_m);
    let gs: Vec<f64> = xs.iter().map(|&x| g.eval(x)).collect();
    let seed: GridSolution = simplex_lp(&xs, &gs, theta, sense)?;
    cands.push((
        seed.value,
        seed.support
            .iter()
            .zip(&seed.weights)
            .map(|(&x, &w)| (x, w))
            .collect(),
    ));

    // {0, x, y} and {x, y, 1} families: coarse scan then coordinate descent.
    // Pushed before the one-parameter families: candidates later in the list
    // win value ties, and at a tie the lower-dimensional family's support is
    // the exact limit the two-parameter families only approach.
    let seed_interior: Vec<f64> = seed
        .support
        .iter()
        .copied()
        .filter(|&s| s > 1e-9 && s < 1.0 - 1e-9)
        .collect();
    for endpoint_zero in [true, false] {
        let value = |x: f64, y: f64| -> Option<f64> {
            let s = if endpoint_zero {
                [0.0, x, y]
            } else {
                [x, y, 1.0]
            };
            family_triple(g, mu, nu, s).map(|p| p.0)
        };
        let k = 96;
        let mut starts: Vec<(f64, f64, f64)> = Vec::new();
        for i in 1..k {
            for j in (i + 1)..k {
                let (x, y) = (i as f64 / k as f64, j as f64 / k as f64);
                if let Some(v) = value(x, y) {
                    starts.push((x, y, v));
                }
            }
        }
        starts.sort_by(|a, b| match sense {
            Sense::Min => a.2.total_cmp(&b.2),
            Sense::Max => b.2.total_cmp(&a.2),
        });
        starts.truncate(4);
        if seed_interior.len() == 2 {
            let (a, b) = (seed_interior[0], seed_interior[1]);
            if let Some(v) = value(a.min(b), a.max(b)) {
                starts.push((a.min(b), a.max(b), v));
            }
        }
        for (x0, y0, _) in starts {
            if let Some((x, y, _)) = descend_xy(&value, x0, y0, sense, cfg.location_tol) {
                let s = if endpoint_zero {
                    [0.0, x, y]
                } else {
                    [x, y, 1.0]
                };
                if let Some(c) = family_triple(g, mu, nu, s) {
                    cands.push(c);
                }
            }
        }
    }

    // {0, x, 1} family.
    if let Some((x, _)) = optimize_1d(
        &|x| family_triple(g, mu, nu, [0.0, x, 1.0]).map(|p| p.0),
        1e-9,
        1.0 - 1e-9,
        4096,
        sense,
        cfg.location_tol,
    ) {
        if let Some(c) = family_triple(g, mu, nu, [0.0, x, 1.0]) {
            cands.push(c);
        }
    }

    // Two-point family, last: at a value tie its witness is exact.
    let x_max = (mu - nu) / (1.0 - mu);
    if let Some((x, _)) = optimize_1d(
        &|x| family_pair(g, mu, nu, x).map(|p| p.0),
        0.0,
        x_max,
        4096,
        sense,
        cfg.location_tol,
    ) {
        if let Some(c) = family_pair(g, mu, nu, x) {
            cands.push(c);
        }
    }

    // Ties go to the later candidate, i.e. the simpler support.
    cands
        .into_iter()
        .reduce(|a, b| if better(sense, a.0, b.0) { a } else { b })
        .ok_or_else(|| Error::NonConvergence {
            what: "no feasible support family".into(),
            norm: 0.0,
        })
}

// ---------------------------------------------------------------------------
// Dual certificates
// ---------------------------------------------------------------------------

fn is_interior(s: f64) -> bool {
    s > 1e-9 && s < 1.0 - 1e-9
}

fn grid_max_abs(p: &Poly) -> f64 {
    (0..=2048)
        .map(|i| p.eval(i as f64 / 2048.0).abs())
        .fold(0.0, f64::max)
}

/// Fit the side's quadratic from contact conditions, then verify. When the
/// estimated contact locations are slightly off the true tangency points
/// (the primal search is accurate in value, not location), the shifted
/// residual no longer vanishes at the estimated points; the quadratic is
/// still sound, so restate the contacts as the places where the final
/// residual actually touches down.
fn fit_certificate(
    g: &Poly,
    contacts: &[f64],
    side: CertSide,
    theta: &MomentPair,
    cfg: &SolverConfig,
) -> Result<QuadraticCertificate> {
    let mut cert = build_certificate(g, contacts, side, theta, cfg)?;
    if contact_residuals_ok(&cert, g, cfg) {
        return Ok(cert);
    }
    let r = residual_poly(&cert, g);
    cert.contacts = snap_points(near_minimal_points(&r, 0.5 * cfg.contact_tol));
    if !contact_residuals_ok(&cert, g, cfg) {
        let worst = cert
            .contacts
            .iter()
            .map(|&s| r.eval(s).abs())
            .fold(0.0, f64::max);
        return Err(Error::Certificate(format!(
            "residual {worst:.3e} at restated contacts exceeds {:.1e}",
            cfg.contact_tol
        )));
    }
    Ok(cert)
}

fn contact_residuals_ok(cert: &QuadraticCertificate, g: &Poly, cfg: &SolverConfig) -> bool {
    let r = residual_poly(cert, g);
    cert.contacts
        .iter()
        .all(|&s| r.eval(s).abs() <= cfg.contact_tol)
}

/// One fit-and-shift pass: solve for the quadratic from the contact
/// conditions, then shift it until the residual is certified nonnegative.
fn build_certificate(
    g: &Poly,
    contacts: &[f64],
    side: CertSide,
    theta: &MomentPair,
    cfg: &SolverConfig,
) -> Result<QuadraticCertificate> {
    if contacts.is_empty() {
        return Err(Error::Certificate("empty contact set".into()));
    }
    let dg = g.derivative();
    let (a, b, c) = if contacts.len() == 1 {
        // Tangent plus curvature pad: valid once shifted, sharp because the
        // moment slack nu - mu^2 is at bypass scale wherever this is used.
        let s = contacts[0];
        let pad = 2.0 * grid_max_abs(&g.derivative().derivative()).max(1.0);
        let sign = match side {
            CertSide::Majorant => 1.0,
            CertSide::Minorant => -1.0,
        };
        let (v, d) = (g.eval(s), dg.eval(s));
        (
            v - d * s + sign * pad * s * s,
            d - sign * pad * 2.0 * s,
            sign * pad,
        )
    } else if contacts.len() == 2 && !is_interior(contacts[0]) && !is_interior(contacts[1]) {
        // Chord through {0,1} plus the extremal curvature multiple of
        // q(q-1): the sharpest quadratic pinned at both endpoints.
        let (g0, g1) = (g.eval(0.0), g.eval(1.0));
        let h = |q: f64| -> Option<f64> {
            let denom = q * (1.0 - q);
            if denom < 1e-12 {
                return None;
            }
            Some((g0 + (g1 - g0) * q - g.eval(q)) / denom)
        };
        let sense = match side {
            CertSide::Majorant => Sense::Min,
            CertSide::Minorant => Sense::Max,
        };
        let c_star = optimize_1d(&h, 1e-6, 1.0 - 1e-6, 4096, sense, 1e-12)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Certificate("endpoint chord fit failed".into()))?;
        (g0, g1 - g0 - c_star, c_star)
    } else {
        // Least squares over the contact conditions.
        let mut rows: Vec<([f64; 3], f64)> = Vec::new();
        for &s in contacts {
            rows.push(([1.0, s, s * s], g.eval(s)));
            if is_interior(s) {
                rows.push(([0.0, 1.0, 2.0 * s], dg.eval(s)));
            }
        }
        solve_ls(&rows).ok_or_else(|| {
            Error::Certificate(format!("degenerate contact system at {contacts:?}"))
        })?
    };

    let mut cert = QuadraticCertificate {
        a,
        b,
        c,
        side,
        contacts: contacts.to_vec(),
        min_residual: 0.0,
        bound_value: 0.0,
    };
    // Shift until the residual is certified nonnegative, then freeze.
    let (m0, _) = min_on_unit(&residual_poly(&cert, g));
    if m0 < 0.0 {
        match side {
            CertSide::Majorant => cert.a -= m0,
            CertSide::Minorant => cert.a += m0,
        }
    }
    let (m1, _) = min_on_unit(&residual_poly(&cert, g));
    cert.min_residual = m1;
    cert.bound_value = cert.a + cert.b * theta.mu() + cert.c * theta.nu();
    if cert.min_residual < -cfg.residual_tol {
        return Err(Error::Certificate(format!(
            "residual minimum {:.3e} below tolerance after shift",
            cert.min_residual
        )));
    }
    Ok(cert)
}

/// 3-unknown least squares via normal equations and Cramer's rule.
fn solve_ls(rows: &[([f64; 3], f64)]) -> Option<(f64, f64, f64)> {
    let mut n = [[0.0f64; 3]; 3];
    let mut v = [0.0f64; 3];
    for (r, y) in rows {
        for i in 0..3 {
            for j in 0..3 {
                n[i][j] += r[i] * r[j];
            }
            v[i] += r[i] * y;
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&n);
    if d.abs() < 1e-14 {
        return None;
    }
    let mut out = [0.0; 3];
    for k in 0..3 {
        let mut mk = n;
        for i in 0..3 {
            mk[i][k] = v[i];
        }
        out[k] = det(&mk) / d;
    }
    Some((out[0], out[1], out[2]))
}
