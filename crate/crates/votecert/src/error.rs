use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("budget index {n} out of supported range (0..=30)")]
    BudgetRange { n: usize },

    #[error("infeasible moment pair (mu={mu}, nu={nu}): requires 0 <= mu <= 1 and mu^2 <= nu <= mu")]
    Infeasible { mu: f64, nu: f64 },

    #[error("{0}")]
    Domain(String),

    #[error("certificate verification failed: {0}")]
    Certificate(String),

    #[error("solver did not converge: {what} (residual norm {norm:.3e})")]
    NonConvergence { what: String, norm: f64 },

    #[error("no feasible grid support for (mu={mu}, nu={nu}) at M={m}: refine the grid near nu = mu^2")]
    GridInfeasible { mu: f64, nu: f64, m: usize },

    #[error("confidence region is empty after intersecting with the feasible set")]
    EmptyRegion,

    #[error("input error at line {line}: {msg}")]
    Input { line: usize, msg: String },

    #[error("network failure: {0}")]
    Network(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
