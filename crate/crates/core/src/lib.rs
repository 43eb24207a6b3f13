//! Local projections whose impulse responses are decomposed into
//! per-observation weights and historical contributions.
//!
//! The linear estimator ([`linear`]) writes every shock coefficient as
//! `beta_h = sum_t w_t y_{t+h}`; [`proximity`] gives the dual reading of the
//! same weights, [`forest_lp`] extracts the analogous convex leaf weights from
//! a random forest, and [`diagnostics`] and [`clustering`] summarize them.

pub mod clustering;
pub mod dataset;
pub mod diagnostics;
mod error;
pub mod exact;
pub mod forest_lp;
pub mod inference;
pub mod linalg;
pub mod linear;
pub mod proximity;
pub mod stats;
pub mod synthetic;

pub use error::{LpError, Result};
