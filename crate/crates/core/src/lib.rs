//! Discrete-time relative risk survival models with Kullback-Leibler
//! integration of a previously published prediction model.
//!
//! Data are expanded to one row per subject and period at risk. The local
//! log-likelihood is maximized by [`fit_local`]; [`fit_kl`] replaces each
//! death indicator by the pseudo-response `(delta + lambda * delta_hat) / (1 + lambda)`
//! where `delta_hat` is the prior model's predicted hazard. `lambda = 0` gives
//! the local fit, large `lambda` recovers the prior, and [`cv_select_lambda`]
//! picks it by held-out log-likelihood.
//!
//! ```
//! use klsurv::{fit_local, CovariateSchema, FitOptions, Link, SubjectRecord, SurvivalDataset};
//!
//! let subjects = (0..10)
//!     .map(|i| SubjectRecord::new(format!("s{i}"), 1, i < 3, vec![]))
//!     .collect();
//! let data = SurvivalDataset::new(CovariateSchema::new(Vec::<String>::new())?, subjects, 1)?;
//! let model = fit_local(&data, Link::Logit, &FitOptions::default())?;
//! assert!((model.params.eta[0] - (0.3f64 / 0.7).ln()).abs() < 1e-8);
//! # Ok::<(), klsurv::Error>(())
//! ```

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod fit;
pub mod likelihood;
mod linalg;
pub mod link;
pub mod prior;
pub mod sim;
pub mod tuning;

pub use data::{expand_person_period, CovariateSchema, PersonPeriodTable, SubjectRecord, SurvivalDataset};
pub use error::{Error, Result};
pub use fit::{evaluate, evaluate_prior, fit_kl, fit_local, predict_hazard, predict_survival, FitOptions, FittedModel};
pub use likelihood::{
    gradient, hessian, log_likelihood, weighted_log_likelihood, Objective, ParamVector, ResponseWeights,
};
pub use link::Link;
pub use prior::{align_prior, prior_predictions, PriorModel};
pub use tuning::{cv_select_lambda, fit_kl_cv, CvConfig, CvPoint, CvResult};
