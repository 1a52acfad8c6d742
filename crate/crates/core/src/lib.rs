//! Matrix-analytic solvers for Poisson's equation `(I - P) X = I - e pi^T`
//! of irreducible positive-recurrent Markov chains.
//!
//! The toolkit covers:
//!
//! * dense linear algebra with the group inverse of `I - P` ([`linalg`]);
//! * censoring on a subset of states and stationary-vector reconstruction
//!   ([`censor`]);
//! * the general censoring-based solution `X~`, the deviation matrix `D`,
//!   and the anchored additive-functional matrix `K` ([`poisson`]);
//! * structured block chains with repeating rows: the G-matrix iteration,
//!   Psi/R measures, blockwise fundamental matrices, level-recursive
//!   stationary vectors, and the block form of `X~` ([`gig1`]);
//! * the continuous-time analogue `-Q X = I - e pi^T` ([`ctmc`]);
//! * independent oracles (series summation, taboo probabilities, and
//!   Monte-Carlo estimation) for validating the analytic routes ([`oracle`]).

// index-based loops mirror the block formulas and stay
#![allow(clippy::needless_range_loop)]

pub mod censor;
pub mod config;
pub mod ctmc;
pub mod error;
pub mod gig1;
pub mod linalg;
pub mod oracle;
pub mod poisson;
pub mod presets;

pub use censor::{
    censor_dtmc, fundamental_matrix, stationary_via_censoring, CensoredChain, Partition,
};
pub use config::SolverConfig;
pub use error::{Error, Result};
pub use linalg::{group_inverse, infinity_norm, solve_linear, DenseMatrix, DenseVector};
pub use poisson::{ForcingFunction, PoissonSolution};
