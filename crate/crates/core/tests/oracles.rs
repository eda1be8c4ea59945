//! Independent oracles for the regression machinery and the estimating
//! equations.

mod common;

use common::oracle;

#[test]
fn irls_matches_gradient_ascent_on_five_fixtures() {
    let gap = oracle::logistic_gap();
    assert!(gap < 1e-6, "{gap}");
}

#[test]
fn ols_matches_normal_equations() {
    let gap = oracle::ols_gap();
    assert!(gap < 1e-8, "{gap}");
}

#[test]
fn local_polynomial_matches_weighted_normal_equations() {
    let gap = oracle::local_polynomial_gap();
    assert!(gap < 1e-8, "{gap}");
}

#[test]
fn estimating_equations_vanish_at_returned_points() {
    let r = oracle::estimating_equation_residual();
    assert!(r < 1e-10, "{r}");
}

#[test]
fn decomposition_holds_on_100_random_datasets() {
    let (exact, direct) = oracle::decomposition_gap();
    assert_eq!(exact, 0.0);
    assert!(direct <= 1e-12, "{direct}");
}

#[test]
fn discrete_nu_is_the_exact_mixture() {
    assert_eq!(oracle::discrete_mixture_gap(), 0.0);
}

#[test]
fn continuous_nu_matches_monte_carlo_integration() {
    let gap = oracle::continuous_nu_gap();
    assert!(gap < 1e-3, "{gap}");
}
