//! Run reports: the versioned JSON document commands emit, plot-ready CSV
//! grids (interval width maps, certified-gain map, votability plane), and
//! containment verdicts against transcribed reference intervals.

use crate::closed::{certified_improvement, endpoint_interval, three_vote_interval};
use crate::error::{Error, Result};
use crate::inference::{project_hull, BudgetTag, TwoCallStats, WaldRegion};
use crate::law::MomentPair;
use crate::moments::{CorrectnessMatrix, PairTable};
use crate::program::{sharp_interval, PolyObjective, QuadraticCertificate, SolverConfig};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaBlock {
    pub mu: f64,
    pub nu: f64,
}

impl From<MomentPair> for ThetaBlock {
    fn from(theta: MomentPair) -> Self {
        ThetaBlock {
            mu: theta.mu(),
            nu: theta.nu(),
        }
    }
}

/// Moment estimation results for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateBlock {
    pub policy_id: String,
    pub n_examples: usize,
    pub pair_table: PairTable,
    pub raw_mu: f64,
    pub raw_nu: f64,
    pub feasible: bool,
    pub mu: f64,
    pub nu: f64,
    pub rho: Option<f64>,
    pub se_mu: f64,
    pub se_nu: f64,
    pub se_rho: Option<f64>,
}

/// Compact restatement of one optimality certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub bound: f64,
    pub min_residual: f64,
    pub contact_count: usize,
}

impl From<&QuadraticCertificate> for CertificateSummary {
    fn from(c: &QuadraticCertificate) -> Self {
        CertificateSummary {
            bound: c.bound_value,
            min_residual: c.min_residual,
            contact_count: c.contacts.len(),
        }
    }
}

/// Structural and statistical results for one vote budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetBlock {
    /// Budget label: "V3", "V5", ..., "Vinf".
    pub budget: String,
    pub structural_lower: f64,
    pub structural_upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hull_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hull_upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_vote: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_certificate: Option<CertificateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_certificate: Option<CertificateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompletionBlock {
    Maxent {
        lambda: f64,
        kappa: f64,
        curve: crate::completions::CompletionCurve,
    },
    Ldgp {
        eta: f64,
        gamma: f64,
        curve: crate::completions::CompletionCurve,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaBlock>,
    /// Whether three votes certifiably beat one call at the reported theta.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified_improvement: Option<bool>,
    pub budgets: Vec<BudgetBlock>,
    pub completions: Vec<CompletionBlock>,
    pub config_echo: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_hash: Option<String>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            tool_version: tool_version().to_string(),
            command: command.to_string(),
            alpha: None,
            estimate: None,
            theta: None,
            certified_improvement: None,
            budgets: Vec::new(),
            completions: Vec::new(),
            config_echo: serde_json::Value::Null,
            input_hash: None,
        }
    }

    /// Every reported interval must satisfy lower <= upper.
    pub fn validate(&self) -> Result<()> {
        for b in &self.budgets {
            if !(b.structural_lower <= b.structural_upper) {
                return Err(Error::Domain(format!(
                    "budget {}: structural interval [{}, {}] is inverted",
                    b.budget, b.structural_lower, b.structural_upper
                )));
            }
            if let (Some(lo), Some(hi)) = (b.hull_lower, b.hull_upper) {
                if !(lo <= hi) {
                    return Err(Error::Domain(format!(
                        "budget {}: hull [{lo}, {hi}] is inverted",
                        b.budget
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn estimate_block(matrix: &CorrectnessMatrix) -> Result<EstimateBlock> {
    let stats = crate::inference::two_call_stats(matrix)?;
    Ok(estimate_block_from_stats(matrix, &stats))
}

pub fn estimate_block_from_stats(matrix: &CorrectnessMatrix, stats: &TwoCallStats) -> EstimateBlock {
    let table = crate::moments::pair_table(matrix).expect("two_call_stats checked repeats");
    let est = &stats.estimate;
    EstimateBlock {
        policy_id: matrix.policy_id.clone(),
        n_examples: stats.n_examples,
        pair_table: table,
        raw_mu: est.raw_mu,
        raw_nu: est.raw_nu,
        feasible: est.feasible,
        mu: est.clamped.mu(),
        nu: est.clamped.nu(),
        rho: est.rho_raw,
        se_mu: stats.se_mu,
        se_nu: stats.se_nu,
        se_rho: stats.se_rho,
    }
}

/// Assemble one budget record: structural interval (closed form where one
/// exists, certified moment program otherwise), optional projected hull,
/// and optional empirical vote accuracy.
pub fn budget_block(
    tag: BudgetTag,
    theta: &MomentPair,
    region: Option<&WaldRegion>,
    empirical_vote: Option<f64>,
    cfg: &SolverConfig,
) -> Result<BudgetBlock> {
    let mut block = BudgetBlock {
        budget: tag.to_string(),
        structural_lower: 0.0,
        structural_upper: 1.0,
        hull_lower: None,
        hull_upper: None,
        empirical_vote,
        certificate_gap: None,
        lower_certificate: None,
        upper_certificate: None,
    };
    match tag {
        BudgetTag::Odd(1) => {
            let iv = three_vote_interval(theta);
            block.structural_lower = iv.lower;
            block.structural_upper = iv.upper;
        }
        BudgetTag::Odd(n) => {
            let bound = sharp_interval(&PolyObjective::majority(n)?, theta, cfg)?;
            block.structural_lower = bound.lower;
            block.structural_upper = bound.upper;
            block.certificate_gap = Some(bound.gap);
            block.lower_certificate = Some((&bound.lower_cert).into());
            block.upper_certificate = Some((&bound.upper_cert).into());
        }
        BudgetTag::Endpoint => {
            let iv = endpoint_interval(theta);
            block.structural_lower = iv.lower;
            block.structural_upper = iv.upper;
        }
    }
    if let Some(region) = region {
        let hull = project_hull(region, tag)?;
        block.hull_lower = Some(hull.lower);
        block.hull_upper = Some(hull.upper);
    }
    Ok(block)
}

fn theta_from_mu_rho(mu: f64, rho: f64) -> MomentPair {
    let nu = mu * mu + rho * mu * (1.0 - mu);
    MomentPair::new(mu, nu).expect("mu in (0,1) and rho in [0,1] are always feasible")
}

fn fmt(x: f64) -> String {
    format!("{x:.12}")
}

pub const WIDTH_MAP_HEADER: [&str; 4] = ["mu", "rho", "width_v3", "width_endpoint"];

/// Grid of identified-interval widths over the (mu, rho) plane: the
/// three-vote width and the infinite-vote endpoint width. Both vanish at
/// rho in {0, 1}.
pub fn width_map_rows(grid: usize) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(grid * (grid + 1));
    for i in 1..=grid {
        let mu = i as f64 / (grid + 1) as f64;
        for j in 0..=grid {
            let rho = j as f64 / grid as f64;
            let theta = theta_from_mu_rho(mu, rho);
            let v3 = three_vote_interval(&theta);
            let endpoint = endpoint_interval(&theta);
            rows.push(vec![
                fmt(mu),
                fmt(rho),
                fmt(v3.upper - v3.lower),
                fmt(endpoint.upper - endpoint.lower),
            ]);
        }
    }
    rows
}

pub const GAIN_MAP_HEADER: [&str; 3] = ["mu", "rho", "certified_gain"];

/// Grid of the certified three-vote gain L3 - mu. Positive cells certify a
/// uniform improvement from three votes over one call; the zero contour is
/// rho = 1 - 1/(2 mu) for mu > 1/2.
pub fn gain_map_rows(grid: usize) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(grid * (grid + 1));
    for i in 1..=grid {
        let mu = i as f64 / (grid + 1) as f64;
        for j in 0..=grid {
            let rho = j as f64 / grid as f64;
            let theta = theta_from_mu_rho(mu, rho);
            let gain = three_vote_interval(&theta).lower - mu;
            rows.push(vec![fmt(mu), fmt(rho), fmt(gain)]);
        }
    }
    rows
}

pub const VOTABILITY_HEADER: [&str; 4] = ["policy", "mu", "rho", "certified_gain"];

/// One point per policy in the (mu, rho) votability plane.
pub fn votability_rows(estimates: &[EstimateBlock]) -> Vec<Vec<String>> {
    estimates
        .iter()
        .map(|e| {
            let theta = MomentPair::new(e.mu, e.nu).expect("estimates store clamped moments");
            let gain = three_vote_interval(&theta).lower - e.mu;
            vec![
                e.policy_id.clone(),
                fmt(e.mu),
                fmt(e.rho.unwrap_or(f64::NAN)),
                fmt(gain),
            ]
        })
        .collect()
}

/// One transcribed reference condition: point estimates (percent) and the
/// published projected-hull intervals (percent) for the three- and
/// five-vote budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub dataset: String,
    pub policy: String,
    pub mu_pct: f64,
    pub rho_pct: f64,
    pub hull3_pct: [f64; 2],
    pub hull5_pct: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentVerdict {
    pub dataset: String,
    pub policy: String,
    pub structural3_pct: [f64; 2],
    pub structural5_pct: [f64; 2],
    pub hull3_pct: [f64; 2],
    pub hull5_pct: [f64; 2],
    /// Smallest slack across the four containment inequalities, in
    /// percentage points; negative means a violation.
    pub margin_pp: f64,
    pub pass: bool,
}

/// Check that structural intervals recomputed at each row's point estimate
/// lie inside the transcribed hulls, up to `tol_pp` percentage points of
/// transcription rounding.
pub fn containment_verdicts(
    rows: &[ReferenceRow],
    tol_pp: f64,
    cfg: &SolverConfig,
) -> Result<Vec<ContainmentVerdict>> {
    let five = PolyObjective::majority(2)?;
    rows.iter()
        .map(|row| {
            let theta = theta_from_mu_rho(row.mu_pct / 100.0, row.rho_pct / 100.0);
            let v3 = three_vote_interval(&theta);
            let s3 = [v3.lower * 100.0, v3.upper * 100.0];
            let b5 = sharp_interval(&five, &theta, cfg)?;
            let s5 = [b5.lower * 100.0, b5.upper * 100.0];
            let margin_pp = (s3[0] - row.hull3_pct[0])
                .min(row.hull3_pct[1] - s3[1])
                .min(s5[0] - row.hull5_pct[0])
                .min(row.hull5_pct[1] - s5[1]);
            Ok(ContainmentVerdict {
                dataset: row.dataset.clone(),
                policy: row.policy.clone(),
                structural3_pct: s3,
                structural5_pct: s5,
                hull3_pct: row.hull3_pct,
                hull5_pct: row.hull5_pct,
                margin_pp,
                pass: margin_pp >= -tol_pp,
            })
        })
        .collect()
}

pub fn reference_rows_from_json(text: &str) -> Result<Vec<ReferenceRow>> {
    Ok(serde_json::from_str(text)?)
}
