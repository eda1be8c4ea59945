//! Regression machinery behind every nuisance model: design matrices,
//! least squares, IRLS logistic regression and local polynomial smoothing.

pub mod design;
pub mod kernel;
pub mod linear;
pub mod logistic;

pub use design::{build_design, Column, DesignSpec, Overrides, Term};
pub use kernel::{
    fit_local_polynomial, local_design_spec, silverman_bandwidth, Bandwidth, KernelConfig, KernelKind,
    LocalPolynomialFit,
};
pub use linear::{fit_ols, fit_wls, FittedLinearModel};
pub use logistic::{fit_logistic, FittedLogisticModel, IrlsOptions};
