//! Certified accuracy intervals for majority voting, from two labeled calls
//! per example.
//!
//! Two labeled calls per example identify exactly two moments of the latent
//! per-example success probability: the mean `mu` and the second moment `nu`.
//! This crate computes, for any odd vote budget, the sharp interval of
//! majority-vote accuracies consistent with those two moments, together with
//! extremal witness laws and verifiable quadratic certificates. On top of the
//! structural layer it provides finite-sample Wald regions projected through
//! the interval maps, two point completions of the identified set (maximum
//! entropy and a latent-difficulty Gaussian probit model), a deterministic
//! simulator, and a data-collection client for local generation endpoints.

pub mod closed;
pub mod collect;
pub mod completions;
pub mod error;
pub mod inference;
pub mod io;
pub mod law;
pub mod moments;
pub mod normal;
pub mod poly;
pub mod program;
pub mod quad;
pub mod report;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use law::{DiscreteLaw, MomentPair};
pub use poly::{majority_poly, Poly, VotePolynomial};
