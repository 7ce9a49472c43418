//! Social influence regression for longitudinal dyadic count networks.
//!
//! The model is a Poisson network autoregression whose sender and receiver
//! influence matrices are linear in pair covariates:
//!
//! ```text
//! y_ijt ~ Poisson(mu_ijt)
//! log mu_ijt = theta . z_ijt + sum_{i'j'} a_ii't x_i'j't b_jj't
//! a_ii't = alpha . w_ii't,   b_jj't = beta . w_jj't,   x = log(y_{t-1} + 1)
//! ```
//!
//! Modules follow the pipeline: [`tensor`] and [`design`] hold the data,
//! [`glm`] and [`sir`] estimate, [`inference`] produces standard errors,
//! [`scoring`] and [`eval`] assess forecasts, [`sim`] generates data from
//! the model, and [`io`] / [`cli`] handle files and the command line.

// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod design;
pub mod error;
pub mod eval;
pub mod glm;
pub mod inference;
pub mod io;
pub mod scoring;
pub mod sim;
pub mod sir;
pub mod tensor;

pub use design::{
    collapse_alpha, collapse_beta, collapse_full, influence_scores, ColumnKind, DirectDesign, InfluenceDesign, Side,
};
pub use error::{Error, Result};
pub use glm::{fit_poisson, loglik_poisson, GlmFit, GlmOptions, PoissonRegression};
pub use inference::{compute_vcov, score_and_hessian, VcovResult};
pub use scoring::{score_cell, score_forecast, CellScores, ScoreReport};
pub use sir::{canonicalize, fit_sir, predict_mu, ParameterSet, SirData, SirFit, SirOptions};
pub use tensor::{flatten, lag_log_transform, DyadTensor, Mask, ObservationIndex, PredictorTensor, RateTensor};
