//! Multiply robust estimation of natural and controlled effects for
//! mediation analysis in two-period difference-in-differences designs.
//!
//! The estimators solve empirical estimating equations built from efficient
//! influence functions, with parametric working models for the propensity
//! score, the pseudo-propensity score `P(G=1 | M, X)`, the outcome-change
//! regression `E(Y1 - Y0 | G, M, X)` and the mediator distribution.

pub mod cli_io;
pub mod controlled_effects;
pub mod data;
pub mod error;
pub mod model_core;
pub mod natural_effects;
pub mod numeric;
pub mod nuisance;
pub mod simulation;

pub use data::{MediatorKind, ObservationalDataset};
pub use error::{Error, Result};
