use crate::error::{Error, Result};
use crate::law::MomentPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sense {
    Min,
    Max,
}

/// Solution of one grid-restricted moment LP: optimize sum w_i g_i subject
/// to sum w_i = 1, sum w_i x_i = mu, sum w_i x_i^2 = nu, w >= 0.
#[derive(Debug, Clone)]
pub(crate) struct GridSolution {
    pub value: f64,
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
}

const PIVOT_TOL: f64 = 1e-11;
const SUPPORT_TOL: f64 = 1e-12;

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = match r {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c1, c2) = match c {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let minor = m[c1][r1] * m[c2][r2] - m[c1][r2] * m[c2][r1];
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            inv[r][c] = sign * minor * inv_det;
        }
    }
    Some(inv)
}

fn matvec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Revised simplex over the 3-row standard form. Columns 0..m are grid
/// weights with column [1, x_j, x_j^2]; columns m..m+3 are the phase-1
/// artificials (identity). Bland's rule throughout, so degenerate vertices
/// cannot cycle. The basis inverse is recomputed from scratch every pivot:
/// the system is 3x3, so exactness beats update tricks.
struct Tableau<'a> {
    xs: &'a [f64],
    m: usize,
    b: [f64; 3],
    basis: [usize; 3],
}

impl<'a> Tableau<'a> {
    fn column(&self, j: usize) -> [f64; 3] {
        if j < self.m {
            let x = self.xs[j];
            [1.0, x, x * x]
        } else {
            let mut e = [0.0; 3];
            e[j - self.m] = 1.0;
            e
        }
    }

    fn basis_inverse(&self) -> Result<[[f64; 3]; 3]> {
        let mut bm = [[0.0; 3]; 3];
        for (k, &j) in self.basis.iter().enumerate() {
            let col = self.column(j);
            for r in 0..3 {
                bm[r][k] = col[r];
            }
        }
        invert3(&bm).ok_or_else(|| Error::NonConvergence {
            what: "singular simplex basis".into(),
            norm: 0.0,
        })
    }

    /// One simplex phase: minimize `cost` over the current basis. Artificial
    /// columns may be barred from entering (phase 2).
    fn run(&mut self, cost: &dyn Fn(usize) -> f64, allow_artificial: bool) -> Result<[f64; 3]> {
        let ncols = if allow_artificial { self.m + 3 } else { self.m };
        let max_iter = 60 * (self.m + 10);
        for _ in 0..max_iter {
            let binv = self.basis_inverse()?;
            let xb = matvec(&binv, &self.b);
            let cb = [
                cost(self.basis[0]),
                cost(self.basis[1]),
                cost(self.basis[2]),
            ];
            // y = cB^T B^{-1}
            let y = [
                cb[0] * binv[0][0] + cb[1] * binv[1][0] + cb[2] * binv[2][0],
                cb[0] * binv[0][1] + cb[1] * binv[1][1] + cb[2] * binv[2][1],
                cb[0] * binv[0][2] + cb[1] * binv[1][2] + cb[2] * binv[2][2],
            ];
            // Bland: first column with negative reduced cost.
            let mut entering = None;
            for j in 0..ncols {
                if self.basis.contains(&j) {
                    continue;
                }
                let a = self.column(j);
                let r = cost(j) - (y[0] * a[0] + y[1] * a[1] + y[2] * a[2]);
                if r < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else {
                return Ok(xb);
            };
            let d = matvec(&binv, &self.column(j));
            // Ratio test, Bland ties on the smallest basis variable index.
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..3 {
                if d[i] > PIVOT_TOL {
                    let ratio = (xb[i].max(0.0)) / d[i];
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-13
                                || ((ratio - lr).abs() <= 1e-13
                                    && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((i, _)) = leave else {
                return Err(Error::NonConvergence {
                    what: "unbounded moment LP".into(),
                    norm: f64::INFINITY,
                });
            };
            self.basis[i] = j;
        }
        Err(Error::NonConvergence {
            what: "simplex iteration cap".into(),
            norm: max_iter as f64,
        })
    }
}

/// Exact optimum of the grid LP via two-phase simplex.
pub(crate) fn simplex_lp(
    xs: &[f64],
    gs: &[f64],
    theta: &MomentPair,
    sense: Sense,
) -> Result<GridSolution> {
    assert_eq!(xs.len(), gs.len());
    let m = xs.len();
    if m < 3 {
        return Err(Error::GridInfeasible {
            mu: theta.mu(),
            nu: theta.nu(),
            m,
        });
    }
    let mut t = Tableau {
        xs,
        m,
        b: [1.0, theta.mu(), theta.nu()],
        basis: [m, m + 1, m + 2],
    };
    // Phase 1: drive the artificials to zero.
    let phase1 = t.run(&|j| if j >= m { 1.0 } else { 0.0 }, true)?;
    let art_mass: f64 = t
        .basis
        .iter()
        .zip(phase1)
        .filter(|(&j, _)| j >= m)
        .map(|(_, w)| w.max(0.0))
        .sum();
    if art_mass > 1e-9 {
        return Err(Error::GridInfeasible {
            mu: theta.mu(),
            nu: theta.nu(),
            m,
        });
    }
    // Pivot any zero-level artificial out of the basis when possible.
    for i in 0..3 {
        if t.basis[i] < m {
            continue;
        }
        let binv = t.basis_inverse()?;
        let mut swapped = false;
        for j in 0..m {
            if t.basis.contains(&j) {
                continue;
            }
            let d = matvec(&binv, &t.column(j));
            if d[i].abs() > 1e-9 {
                t.basis[i] = j;
                swapped = true;
                break;
            }
        }
        if !swapped {
            // The three moment rows are independent on >= 3 distinct grid
            // points, so a stuck artificial means numerical breakdown.
            return Err(Error::NonConvergence {
                what: "artificial variable stuck in simplex basis".into(),
                norm: phase1[i],
            });
        }
    }
    // Phase 2. Artificials cannot re-enter (the column scan stops at m).
    let sign = match sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    let cost = move |j: usize| if j < m { sign * gs[j] } else { 0.0 };
    let xb = t.run(&cost, false)?;
    let mut support = Vec::new();
    let mut weights = Vec::new();
    let mut value = 0.0;
    for (k, &j) in t.basis.iter().enumerate() {
        if j < m && xb[k] > SUPPORT_TOL {
            support.push(xs[j]);
            weights.push(xb[k]);
            value += xb[k] * gs[j];
        }
    }
    Ok(GridSolution {
        value,
        support,
        weights,
    })
}

/// Weights putting the three moments (1, mu, nu) on distinct support points,
/// by expectation of the Lagrange basis: w_i = E[l_i(Q)].
pub(crate) fn lagrange3(s: [f64; 3], mu: f64, nu: f64) -> Option<[f64; 3]> {
    let mut w = [0.0; 3];
    for i in 0..3 {
        let a = s[(i + 1) % 3];
        let b = s[(i + 2) % 3];
        let den = (s[i] - a) * (s[i] - b);
        if den.abs() < 1e-300 {
            return None;
        }
        w[i] = (nu - (a + b) * mu + a * b) / den;
    }
    Some(w)
}

/// Brute-force vertex enumeration for small grids, used as an oracle for the
/// simplex path: every basic feasible solution has at most three support
/// points and appears (possibly with zero weights) among the triples.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn enumerate_lp(
    xs: &[f64],
    gs: &[f64],
    theta: &MomentPair,
    sense: Sense,
) -> Result<GridSolution> {
    let m = xs.len();
    assert!(m <= 401, "enumeration oracle is cubic; use simplex_lp");
    let (mu, nu) = (theta.mu(), theta.nu());
    let mut best: Option<GridSolution> = None;
    for i in 0..m {
        for j in (i + 1)..m {
            for k in (j + 1)..m {
                let Some(w) = lagrange3([xs[i], xs[j], xs[k]], mu, nu) else {
                    continue;
                };
                if w.iter().any(|&wi| wi < -1e-11) {
                    continue;
                }
                let value = w[0] * gs[i] + w[1] * gs[j] + w[2] * gs[k];
                let better = match &best {
                    None => true,
                    Some(bs) => match sense {
                        Sense::Min => value < bs.value,
                        Sense::Max => value > bs.value,
                    },
                };
                if better {
                    best = Some(GridSolution {
                        value,
                        support: vec![xs[i], xs[j], xs[k]],
                        weights: w.to_vec(),
                    });
                }
            }
        }
    }
    best.ok_or(Error::GridInfeasible { mu, nu, m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::majority_poly;

    fn uniform_grid(m: usize) -> Vec<f64> {
        (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
    }

    fn eval_on(xs: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        xs.iter().map(|&x| f(x)).collect()
    }

    #[test]
    fn pinned_moments_are_reproduced() {
        // Objective q gives mu on both sides; q^2 gives nu.
        let th = MomentPair::new(0.7, 0.595).unwrap();
        let xs = uniform_grid(501);
        let gx = eval_on(&xs, |x| x);
        let gx2 = eval_on(&xs, |x| x * x);
        for sense in [Sense::Min, Sense::Max] {
            let s = simplex_lp(&xs, &gx, &th, sense).unwrap();
            assert!((s.value - 0.7).abs() <= 1e-10, "identity {:?}", s.value);
            let s2 = simplex_lp(&xs, &gx2, &th, sense).unwrap();
            assert!((s2.value - 0.595).abs() <= 1e-10, "square {:?}", s2.value);
        }
    }

    #[test]
    fn simplex_matches_enumeration_oracle() {
        let p1 = majority_poly(1).unwrap();
        let p2 = majority_poly(2).unwrap();
        let thetas = [
            MomentPair::new(0.7, 0.595).unwrap(),
            MomentPair::new(0.5, 0.3).unwrap(),
            MomentPair::new(0.3, 0.15).unwrap(),
            MomentPair::new(0.85, 0.75).unwrap(),
        ];
        for m in [101usize, 201] {
            let xs = uniform_grid(m);
            for g in [&p1.poly, &p2.poly] {
                let gs = eval_on(&xs, |x| g.eval(x));
                for th in &thetas {
                    for sense in [Sense::Min, Sense::Max] {
                        let fast = simplex_lp(&xs, &gs, th, sense).unwrap();
                        let slow = enumerate_lp(&xs, &gs, th, sense).unwrap();
                        assert!(
                            (fast.value - slow.value).abs() <= 1e-10,
                            "m={m} {th:?} {sense:?}: simplex {} enum {}",
                            fast.value,
                            slow.value
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn support_is_a_valid_law() {
        let th = MomentPair::new(0.6, 0.45).unwrap();
        let xs = uniform_grid(401);
        let p2 = majority_poly(2).unwrap();
        let gs = eval_on(&xs, |x| p2.eval(x));
        for sense in [Sense::Min, Sense::Max] {
            let s = simplex_lp(&xs, &gs, &th, sense).unwrap();
            assert!(s.support.len() <= 3);
            let wsum: f64 = s.weights.iter().sum();
            let m1: f64 = s.weights.iter().zip(&s.support).map(|(w, x)| w * x).sum();
            let m2: f64 = s
                .weights
                .iter()
                .zip(&s.support)
                .map(|(w, x)| w * x * x)
                .sum();
            assert!((wsum - 1.0).abs() <= 1e-9);
            assert!((m1 - 0.6).abs() <= 1e-9);
            assert!((m2 - 0.45).abs() <= 1e-9);
            assert!(s.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn infeasible_near_cone_boundary() {
        // Between adjacent grid squares the piecewise-linear hull sits above
        // the parabola, so a theta in that sliver has no grid law.
        let xs = uniform_grid(101);
        let gs = eval_on(&xs, |x| x);
        let mu = 0.505;
        let nu = mu * mu + 1e-7;
        let th = MomentPair::new(mu, nu).unwrap();
        match simplex_lp(&xs, &gs, &th, Sense::Min) {
            Err(Error::GridInfeasible { .. }) => {}
            other => panic!("expected grid infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_grid_mass_splits() {
        // theta exactly representable on grid points: mu=0.5, nu=0.5 forces
        // the two-point law {0, 1} with equal weights.
        let xs = uniform_grid(101);
        let gs = eval_on(&xs, |x| 3.0 * x * x - 2.0 * x * x * x);
        let th = MomentPair::new(0.5, 0.5).unwrap();
        for sense in [Sense::Min, Sense::Max] {
            let s = simplex_lp(&xs, &gs, &th, sense).unwrap();
            assert!((s.value - 0.5).abs() <= 1e-10);
        }
    }
}
