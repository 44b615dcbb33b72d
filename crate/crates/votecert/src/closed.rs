use crate::error::{Error, Result};
use crate::law::MomentPair;
use crate::poly::majority_poly;
use serde::{Deserialize, Serialize};

/// Certified accuracy interval for a fixed odd vote budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedInterval {
    pub lower: f64,
    pub upper: f64,
    /// Odd call count the interval certifies (2n+1).
    pub budget: u32,
}

impl ClosedInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Sharp three-call majority bounds from the first two moments.
///
/// Lower: nu + 2 (mu - nu)^2 / (1 - mu); upper: 3 nu - 2 nu^2 / mu; with the
/// degenerate endpoints mu = 0 -> [0, 0] and mu = 1 -> [1, 1].
pub fn three_vote_interval(theta: &MomentPair) -> ClosedInterval {
    let (mu, nu) = (theta.mu(), theta.nu());
    let (lower, upper) = if mu <= 0.0 {
        (0.0, 0.0)
    } else if mu >= 1.0 {
        (1.0, 1.0)
    } else {
        let d = mu - nu;
        let lower = nu + 2.0 * d * d / (1.0 - mu);
        let upper = 3.0 * nu - 2.0 * nu * nu / mu;
        (lower, upper)
    };
    ClosedInterval {
        lower: lower.clamp(0.0, 1.0),
        upper: upper.clamp(0.0, 1.0),
        budget: 3,
    }
}

/// Same bounds in correlation form, kept as an independent cross-check:
/// L = mu^2 + rho mu (1-mu) + 2 mu^2 (1-mu)(1-rho)^2,
/// U = nu (3 - 2 mu - 2 rho (1-mu)).
pub fn three_vote_interval_rho_form(theta: &MomentPair) -> Option<ClosedInterval> {
    let rho = theta.rho()?;
    let (mu, nu) = (theta.mu(), theta.nu());
    let lower = mu * mu + rho * mu * (1.0 - mu) + 2.0 * mu * mu * (1.0 - mu) * (1.0 - rho).powi(2);
    let upper = nu * (3.0 - 2.0 * mu - 2.0 * rho * (1.0 - mu));
    Some(ClosedInterval {
        lower: lower.clamp(0.0, 1.0),
        upper: upper.clamp(0.0, 1.0),
        budget: 3,
    })
}

/// Exact width of the three-call interval: 2 mu (1 - mu) rho (1 - rho),
/// globally at most 1/8.
pub fn three_vote_width(theta: &MomentPair) -> f64 {
    match theta.rho() {
        Some(rho) => 2.0 * theta.mu() * (1.0 - theta.mu()) * rho * (1.0 - rho),
        None => 0.0,
    }
}

/// Whether three calls are certified to beat one: the lower three-call bound
/// strictly exceeds mu exactly when mu > 1/2 and rho < 1 - 1/(2 mu).
pub fn certified_improvement(theta: &MomentPair) -> bool {
    let mu = theta.mu();
    match theta.rho() {
        Some(rho) => mu > 0.5 && rho < 1.0 - 1.0 / (2.0 * mu),
        None => false,
    }
}

/// Mean-only envelope for the three-call vote: with only mu known,
/// L = P1(mu) for mu <= 1/4 else (9 mu - 1)/8, and
/// U = 9 mu / 8 for mu <= 3/4 else P1(mu).
pub fn mean_only_envelope(mu: f64) -> Result<ClosedInterval> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Domain(format!("mean {mu} outside [0, 1]")));
    }
    let p1 = majority_poly(1)?;
    let lower = if mu <= 0.25 {
        p1.eval(mu)
    } else {
        (9.0 * mu - 1.0) / 8.0
    };
    let upper = if mu <= 0.75 { 9.0 * mu / 8.0 } else { p1.eval(mu) };
    Ok(ClosedInterval {
        lower: lower.clamp(0.0, 1.0),
        upper: upper.clamp(0.0, 1.0),
        budget: 3,
    })
}

const BRANCH_TOL: f64 = 1e-12;

/// Sharp upper bound on the infinite-vote limit P(Q > 1/2) + 1/2 P(Q = 1/2).
///
/// Piecewise: the fractional branch c / (c + d) with c = nu - mu^2 and
/// d = (mu - 1/2)^2 applies when mu <= 1/2 and nu <= mu / 2 (mass can sit at
/// a point just above 1/2); otherwise min{1, 3 mu - 2 nu} via a three-point
/// law pushing weight to 1. The point (1/2, 1/4) makes both c and d vanish;
/// the value there is 1/2.
fn endpoint_upper(mu: f64, nu: f64) -> f64 {
    let c = nu - mu * mu;
    let d = (mu - 0.5) * (mu - 0.5);
    if (mu - 0.5).abs() <= BRANCH_TOL && c.abs() <= BRANCH_TOL {
        return 0.5;
    }
    if mu <= 0.5 + BRANCH_TOL && nu <= mu * 0.5 + BRANCH_TOL {
        c / (c + d)
    } else {
        (3.0 * mu - 2.0 * nu).min(1.0)
    }
}

/// Sharp bounds on the infinite-budget vote accuracy. The lower bound is the
/// upper bound reflected through q -> 1 - q: L(mu, nu) = 1 - U(1-mu, 1-2mu+nu).
pub fn endpoint_interval(theta: &MomentPair) -> ClosedInterval {
    let (mu, nu) = (theta.mu(), theta.nu());
    let upper = endpoint_upper(mu, nu);
    let lower = 1.0 - endpoint_upper(1.0 - mu, 1.0 - 2.0 * mu + nu);
    ClosedInterval {
        lower: lower.clamp(0.0, 1.0),
        upper: upper.clamp(0.0, 1.0),
        budget: u32::MAX,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{law_endpoint, law_vote_accuracy, DiscreteLaw};
    use proptest::prelude::*;

    fn pair(mu: f64, nu: f64) -> MomentPair {
        MomentPair::new(mu, nu).unwrap()
    }

    /// Grid point at fraction `t` of the feasible nu range, snapped into the
    /// exact float bounds.
    fn grid_pair(mu: f64, t: f64) -> MomentPair {
        let nu = (mu * mu + (mu - mu * mu) * t).clamp(mu * mu, mu);
        pair(mu, nu)
    }

    #[test]
    fn three_vote_reference_point() {
        let iv = three_vote_interval(&pair(0.7, 0.595));
        assert!((iv.lower - 0.6685).abs() <= 1e-12, "lower {}", iv.lower);
        assert!((iv.upper - 0.7735).abs() <= 1e-12, "upper {}", iv.upper);
        assert_eq!(iv.budget, 3);
    }

    #[test]
    fn degenerate_means_collapse() {
        let z = three_vote_interval(&pair(0.0, 0.0));
        assert_eq!((z.lower, z.upper), (0.0, 0.0));
        let o = three_vote_interval(&pair(1.0, 1.0));
        assert_eq!((o.lower, o.upper), (1.0, 1.0));
        let ze = endpoint_interval(&pair(0.0, 0.0));
        assert_eq!((ze.lower, ze.upper), (0.0, 0.0));
        let oe = endpoint_interval(&pair(1.0, 1.0));
        assert_eq!((oe.lower, oe.upper), (1.0, 1.0));
    }

    #[test]
    fn rho_form_agrees_with_moment_form() {
        for i in 1..40 {
            let mu = i as f64 / 40.0;
            for j in 0..=20 {
                let th = grid_pair(mu, j as f64 / 20.0);
                let a = three_vote_interval(&th);
                let b = three_vote_interval_rho_form(&th).unwrap();
                assert!(
                    (a.lower - b.lower).abs() <= 1e-12 && (a.upper - b.upper).abs() <= 1e-12,
                    "forms disagree at mu={mu} nu={}",
                    th.nu()
                );
            }
        }
    }

    #[test]
    fn width_formula_and_cap() {
        let mut max_w = 0.0f64;
        for i in 1..80 {
            let mu = i as f64 / 80.0;
            for j in 0..=40 {
                let th = grid_pair(mu, j as f64 / 40.0);
                let iv = three_vote_interval(&th);
                let w = three_vote_width(&th);
                assert!(
                    (iv.width() - w).abs() <= 1e-12,
                    "width at mu={mu} nu={}",
                    th.nu()
                );
                max_w = max_w.max(w);
            }
        }
        assert!(max_w <= 0.125 + 1e-15);
        // The cap is attained at mu = 1/2, rho = 1/2.
        let th = MomentPair::from_mu_rho(0.5, 0.5).unwrap();
        assert!((three_vote_width(&th) - 0.125).abs() <= 1e-15);
    }

    #[test]
    fn certified_improvement_boundary() {
        // rho < 1 - 1/(2 mu) and mu > 1/2 exactly characterize L1 > mu.
        // Grid points landing on the boundary itself are skipped: the open
        // condition is a float knife edge there.
        for i in 1..60 {
            let mu = i as f64 / 60.0;
            for j in 0..60 {
                let rho = j as f64 / 60.0;
                let boundary = 1.0 - 1.0 / (2.0 * mu);
                if (rho - boundary).abs() < 1e-9 {
                    continue;
                }
                let th = MomentPair::from_mu_rho(mu, rho).unwrap();
                let flag = certified_improvement(&th);
                let l1 = three_vote_interval(&th).lower;
                let analytic = mu > 0.5 && rho < boundary;
                assert_eq!(flag, analytic, "flag at mu={mu} rho={rho}");
                if flag {
                    assert!(l1 > mu, "certified but L1={l1} <= mu={mu}");
                } else {
                    assert!(l1 <= mu + 1e-12, "uncertified but L1={l1} > mu={mu}");
                }
            }
        }
    }

    #[test]
    fn interval_brackets_iid_and_pinned_laws() {
        // For any q, both the iid point mass at q and any feasible law must
        // land inside the interval built from its own moments.
        for i in 0..=20 {
            let q = i as f64 / 20.0;
            let law = DiscreteLaw::point(q).unwrap();
            let (mu, nu) = law.moments();
            let iv = three_vote_interval(&pair(mu, nu));
            let truth = law_vote_accuracy(&law, 1).unwrap();
            assert!(iv.lower - 1e-12 <= truth && truth <= iv.upper + 1e-12);
        }
        let law = DiscreteLaw::new(vec![(0.2, 0.3), (0.9, 0.7)]).unwrap();
        let (mu, nu) = law.moments();
        let iv = three_vote_interval(&pair(mu, nu));
        let truth = law_vote_accuracy(&law, 1).unwrap();
        assert!(iv.lower - 1e-12 <= truth && truth <= iv.upper + 1e-12);
    }

    #[test]
    fn envelope_contains_every_feasible_interval() {
        for i in 0..=100 {
            let mu = i as f64 / 100.0;
            let env = mean_only_envelope(mu).unwrap();
            for j in 0..=50 {
                let th = grid_pair(mu, j as f64 / 50.0);
                let iv = three_vote_interval(&th);
                assert!(
                    env.lower <= iv.lower + 1e-12 && iv.upper <= env.upper + 1e-12,
                    "envelope violated at mu={mu} nu={}",
                    th.nu()
                );
            }
        }
        assert!(mean_only_envelope(-0.1).is_err());
        assert!(mean_only_envelope(1.1).is_err());
    }

    #[test]
    fn envelope_breakpoints() {
        // Branch crossings are continuous: at mu=1/4 both lower pieces give
        // P1(1/4) = 5/32; at mu=3/4 both upper pieces give 27/32.
        let p1 = majority_poly(1).unwrap();
        let lo = mean_only_envelope(0.25).unwrap();
        assert!((lo.lower - p1.eval(0.25)).abs() <= 1e-15);
        assert!(((9.0 * 0.25 - 1.0) / 8.0 - p1.eval(0.25)).abs() <= 1e-15);
        let hi = mean_only_envelope(0.75).unwrap();
        assert!((hi.upper - p1.eval(0.75)).abs() <= 1e-15);
        assert!((9.0 * 0.75 / 8.0 - p1.eval(0.75)).abs() <= 1e-15);
    }

    #[test]
    fn endpoint_reference_points() {
        // Fractional branch example: theta = (0.4, 0.2) gives U = 0.8, L = 0.
        let iv = endpoint_interval(&pair(0.4, 0.2));
        assert!((iv.upper - 0.8).abs() <= 1e-12, "upper {}", iv.upper);
        assert!(iv.lower.abs() <= 1e-12, "lower {}", iv.lower);
        // Exceptional point (1/2, 1/4): both branch numerator and denominator
        // vanish; value 1/2 by continuity along the iid segment.
        assert!((endpoint_upper(0.5, 0.25) - 0.5).abs() <= 1e-15);
        // Linear branch: mu > 1/2 uses min{1, 3 mu - 2 nu}.
        let iv = endpoint_interval(&pair(0.7, 0.55));
        assert!((iv.upper - (3.0 * 0.7 - 2.0 * 0.55)).abs() <= 1e-12);
        // Saturation: 3 mu - 2 nu > 1.
        let iv = endpoint_interval(&pair(0.8, 0.65));
        assert_eq!(iv.upper, 1.0);
    }

    #[test]
    fn endpoint_dominates_sampled_laws() {
        // Every discrete law's true endpoint value must respect the bounds
        // built from that law's own moments.
        let laws = [
            DiscreteLaw::new(vec![(0.1, 0.5), (0.9, 0.5)]).unwrap(),
            DiscreteLaw::new(vec![(0.45, 0.3), (0.55, 0.7)]).unwrap(),
            DiscreteLaw::new(vec![(0.0, 0.2), (0.5, 0.3), (1.0, 0.5)]).unwrap(),
            DiscreteLaw::new(vec![(0.3, 1.0)]).unwrap(),
            DiscreteLaw::new(vec![(0.6, 0.25), (0.7, 0.75)]).unwrap(),
        ];
        for law in &laws {
            let (mu, nu) = law.moments();
            let iv = endpoint_interval(&pair(mu, nu));
            let truth = law_endpoint(law);
            assert!(
                iv.lower - 1e-12 <= truth && truth <= iv.upper + 1e-12,
                "endpoint bound violated: law {law:?} truth {truth} iv [{}, {}]",
                iv.lower,
                iv.upper
            );
        }
    }

    #[test]
    fn endpoint_upper_is_attained() {
        // Fractional branch witness: two-point law {x_eps, 1/2 + eps} with
        // weight c/(c+d) near the bound as eps -> 0.
        let (mu, nu) = (0.4, 0.2);
        let c = nu - mu * mu;
        let d = (mu - 0.5) * (mu - 0.5);
        let target = c / (c + d);
        for &eps in &[1e-2, 1e-4, 1e-6] {
            let t = 0.5 + eps;
            let x = (mu * t - nu) / (t - mu);
            let w = (mu - x) / (t - x);
            let law = DiscreteLaw::new(vec![(x, 1.0 - w), (t, w)]).unwrap();
            let got = law_endpoint(&law);
            assert!(got <= target + 1e-12);
            assert!((got - target).abs() <= 4.0 * eps, "eps={eps} got={got}");
        }
        // Linear branch witness at s = 1/2 + eps with atoms {0, s, 1}.
        let (mu, nu) = (0.7, 0.55);
        let target = 3.0 * mu - 2.0 * nu;
        for &eps in &[1e-3, 1e-5] {
            let s = 0.5 + eps;
            let ws = (mu - nu) / (s * (1.0 - s));
            let w1 = (nu - mu * s) / (1.0 - s);
            let w0 = 1.0 - ws - w1;
            let law = DiscreteLaw::new(vec![(0.0, w0), (s, ws), (1.0, w1)]).unwrap();
            let got = law_endpoint(&law);
            assert!(got <= target + 1e-12);
            assert!((got - target).abs() <= 8.0 * eps, "eps={eps} got={got}");
        }
    }

    #[test]
    fn branch_tie_prefers_fractional() {
        // Exactly on the branch seam nu = mu/2 with mu < 1/2 both formulas
        // agree; just inside the tolerance band the fractional value is used.
        let mu = 0.4f64;
        let nu = mu / 2.0;
        let c = nu - mu * mu;
        let d = (mu - 0.5) * (mu - 0.5);
        let frac = c / (c + d);
        let lin: f64 = (3.0 * mu - 2.0 * nu).min(1.0);
        assert!((frac - lin).abs() <= 1e-12, "seam mismatch {frac} vs {lin}");
        assert!((endpoint_upper(mu, nu + 0.5e-12) - frac).abs() <= 1e-9);
    }

    proptest! {
        #[test]
        fn intervals_stay_ordered_in_unit(mu in 0.0f64..=1.0, t in 0.0f64..=1.0) {
            let th = grid_pair(mu, t);
            let three = three_vote_interval(&th);
            let inf = endpoint_interval(&th);
            prop_assert!(three.lower >= 0.0 && three.upper <= 1.0);
            prop_assert!(three.lower <= three.upper + 1e-12);
            prop_assert!(inf.lower >= 0.0 && inf.upper <= 1.0);
            prop_assert!(inf.lower <= inf.upper + 1e-12);
            // Upper three-call bound never drops below the agreement mass.
            prop_assert!(three.upper + 1e-12 >= th.nu());
        }

        #[test]
        fn endpoint_reflection_symmetry(mu in 0.01f64..=0.99, t in 0.0f64..=1.0) {
            let th = grid_pair(mu, t);
            let (mu, nu) = (th.mu(), th.nu());
            let rm = 1.0 - mu;
            let refl = pair(rm, (1.0 - 2.0 * mu + nu).clamp(rm * rm, rm));
            let a = endpoint_interval(&th);
            let b = endpoint_interval(&refl);
            prop_assert!((a.lower - (1.0 - b.upper)).abs() <= 1e-12);
            prop_assert!((a.upper - (1.0 - b.lower)).abs() <= 1e-12);
        }
    }
}
