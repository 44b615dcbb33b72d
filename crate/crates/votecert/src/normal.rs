use crate::error::{Error, Result};
use crate::quad::adaptive_gl;

// Rational approximations for erf/erfc (W. J. Cody's CALERF scheme):
// relative error below ~1e-16 on the erf range and ~1e-13 for scaled erfc.
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
const INV_SQRT_PI: f64 = 0.56418958354775628695;

fn erf_core(x: f64) -> f64 {
    let z = x * x;
    let mut num = ERF_A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + ERF_A[i]) * z;
        den = (den + ERF_B[i]) * z;
    }
    x * (num + ERF_A[3]) / (den + ERF_B[3])
}

/// exp(-y^2) with the argument split to preserve low-order bits.
fn exp_msq(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

fn erfc_mid(y: f64) -> f64 {
    let mut num = ERF_C[8] * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + ERF_C[i]) * y;
        den = (den + ERF_D[i]) * y;
    }
    exp_msq(y) * (num + ERF_C[7]) / (den + ERF_D[7])
}

fn erfc_tail(y: f64) -> f64 {
    let z = 1.0 / (y * y);
    let mut num = ERF_P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + ERF_P[i]) * z;
        den = (den + ERF_Q[i]) * z;
    }
    let r = z * (num + ERF_P[4]) / (den + ERF_Q[4]);
    exp_msq(y) * (INV_SQRT_PI - r) / y
}

pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let pos = if y <= 0.46875 {
        return 1.0 - erf_core(x);
    } else if y <= 4.0 {
        erfc_mid(y)
    } else if y < 26.6 {
        erfc_tail(y)
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - pos
    } else {
        pos
    }
}

pub fn erf(x: f64) -> f64 {
    if x.abs() <= 0.46875 {
        erf_core(x)
    } else {
        1.0 - erfc(x)
    }
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn phi_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Acklam's rational approximation to the normal quantile, then one Halley
// step against the high-accuracy CDF above (final relative error ~1e-15).
const INV_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const INV_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const INV_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const INV_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

pub fn phi_inv(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::Domain(format!("probability {p} outside [0,1]")));
    }
    if p == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((INV_C[0] * q + INV_C[1]) * q + INV_C[2]) * q + INV_C[3]) * q + INV_C[4]) * q
            + INV_C[5])
            / ((((INV_D[0] * q + INV_D[1]) * q + INV_D[2]) * q + INV_D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((INV_A[0] * r + INV_A[1]) * r + INV_A[2]) * r + INV_A[3]) * r + INV_A[4]) * r
            + INV_A[5])
            * q
            / (((((INV_B[0] * r + INV_B[1]) * r + INV_B[2]) * r + INV_B[3]) * r + INV_B[4]) * r
                + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((INV_C[0] * q + INV_C[1]) * q + INV_C[2]) * q + INV_C[3]) * q + INV_C[4]) * q
            + INV_C[5])
            / ((((INV_D[0] * q + INV_D[1]) * q + INV_D[2]) * q + INV_D[3]) * q + 1.0)
    };
    // Halley refinement.
    let e = phi(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Equal-threshold bivariate normal orthant probability Phi2(t, t; r) for
/// equicorrelation r in [0, 1): Phi(t)^2 plus the correlation integral
/// of the bivariate density at (t, t), integrated in the arcsine variable
/// so the r -> 1 endpoint stays smooth; absolute tolerance 1e-12.
pub fn bvn_equal(t: f64, r: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Domain(format!("correlation {r} outside [0,1)")));
    }
    if !t.is_finite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let base = phi(t) * phi(t);
    if r == 0.0 {
        return Ok(base);
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    // s = sin(u): integrand exp(-t^2/(1+s)) / (2 pi), u in [0, arcsin r].
    let f = |u: f64| (-t * t / (1.0 + u.sin())).exp() / two_pi;
    Ok(base + adaptive_gl(&f, 0.0, r.asin(), 1e-12))
}

/// Chi-squared(2) quantile at probability 1 - alpha, from the closed-form
/// CDF 1 - exp(-x/2).
pub fn chi2_2_quantile(alpha: f64) -> Result<f64> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0,1)")));
    }
    Ok(-2.0 * alpha.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference CDF values computed independently at build-planning time.
    const PHI_REFS: [(f64, f64); 8] = [
        (-6.0, 9.865_876_450_376_945_8e-10),
        (-3.0, 1.349_898_031_630_093_3e-3),
        (-1.0, 1.586_552_539_314_570_7e-1),
        (-0.5, 3.085_375_387_259_868_8e-1),
        (0.5, 6.914_624_612_740_131_2e-1),
        (1.0, 8.413_447_460_685_429_3e-1),
        (3.0, 9.986_501_019_683_699e-1),
        (6.0, 9.999_999_990_134_123e-1),
    ];

    #[test]
    fn cdf_matches_reference_values() {
        for &(x, p) in &PHI_REFS {
            let got = phi(x);
            assert!(
                ((got - p) / p).abs() <= 1e-13,
                "phi({x}) = {got:e}, want {p:e}"
            );
        }
    }

    #[test]
    fn cdf_symmetry_and_edges() {
        for i in 0..=120 {
            let x = -6.0 + i as f64 * 0.1;
            assert!((phi(x) + phi(-x) - 1.0).abs() <= 1e-15);
        }
        assert!(phi(-40.0) >= 0.0);
        assert_eq!(phi(40.0), 1.0);
    }

    #[test]
    fn quantile_round_trip() {
        for i in 0..=120 {
            let x = -6.0 + i as f64 * 0.1;
            let p = phi(x);
            let back = phi_inv(p).unwrap();
            // Above the median, p sits next to 1.0 where the grid of
            // representable doubles quantizes x to ulp(1)/density; the lower
            // tail has full relative precision and gets the strict bound.
            let tol = if x <= 0.0 {
                1e-9
            } else {
                (f64::EPSILON / phi_density(x)).max(1e-9)
            };
            assert!((back - x).abs() <= tol, "x={x} back={back}");
        }
        assert!((phi_inv(0.7).unwrap() - 0.524_400_512_708_040_67).abs() <= 1e-13);
        assert_eq!(phi_inv(0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(phi_inv(1.0).unwrap(), f64::INFINITY);
        assert!(phi_inv(-0.1).is_err());
    }

    #[test]
    fn bvn_equal_independence_and_arcsine_identity() {
        // r = 0: product of marginals.
        assert!((bvn_equal(0.7, 0.0).unwrap() - phi(0.7) * phi(0.7)).abs() <= 1e-15);
        // t = 0: closed form 1/4 + arcsin(r)/(2 pi); at r = 1/2 equals 1/3.
        let got = bvn_equal(0.0, 0.5).unwrap();
        assert!((got - 1.0 / 3.0).abs() <= 1e-12);
        for r in [0.1, 0.3, 0.77, 0.99] {
            let exact = 0.25 + (r as f64).asin() / (2.0 * std::f64::consts::PI);
            assert!((bvn_equal(0.0, r).unwrap() - exact).abs() <= 1e-12);
        }
    }

    #[test]
    fn bvn_equal_comonotone_limit() {
        // As r -> 1 the joint probability approaches the marginal; the gap
        // shrinks like sqrt(1 - r).
        for t in [0.0_f64, 1.0, -0.8] {
            let gap = (bvn_equal(t, 1.0 - 1e-8).unwrap() - phi(t)).abs();
            assert!(gap <= 3e-5, "t={t} gap={gap:e}");
        }
        let far = (bvn_equal(1.0, 0.9999).unwrap() - phi(1.0)).abs();
        let near = (bvn_equal(1.0, 1.0 - 1e-8).unwrap() - phi(1.0)).abs();
        assert!(near < far);
        assert!(bvn_equal(0.0, 1.0).is_err());
    }

    #[test]
    fn bvn_equal_monotone_in_r() {
        let mut prev = bvn_equal(0.6, 0.0).unwrap();
        for i in 1..=20 {
            let r = i as f64 * 0.045;
            let v = bvn_equal(0.6, r).unwrap();
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn chi2_quantile_values() {
        let q = chi2_2_quantile(0.05).unwrap();
        assert!((q - 5.991_464_547_107_982).abs() <= 1e-9);
        // Verify against the CDF: 1 - exp(-q/2) = 0.95.
        assert!((1.0 - (-q / 2.0).exp() - 0.95).abs() <= 1e-15);
        assert!(chi2_2_quantile(0.0).is_err());
        assert!(chi2_2_quantile(1.0).is_err());
    }
}
