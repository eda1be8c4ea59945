mod common;

use common::{sim, sim_model, treated_expectation};
use didmed::model_core::{build_design, fit_logistic, fit_ols, Column, DesignSpec, IrlsOptions, Overrides, Term};
use didmed::numeric::normal_cdf;
use didmed::simulation::{compute_truths, regression_based, DgpModel, OracleValue, Panel, Setting};
use nalgebra::DMatrix;

const DRAWS: usize = 1_000_000;

fn close(oracle: OracleValue, analytic: f64, what: &str) {
    let tol = 4.0 * oracle.mc_se + 1e-6;
    assert!(
        (oracle.value - analytic).abs() < tol,
        "{what}: oracle {} (mc se {}) vs analytic {analytic}",
        oracle.value,
        oracle.mc_se
    );
}

#[test]
fn generation_is_reproducible() {
    let a = sim(Setting::Binary, Panel::B, 500, 42);
    let b = sim(Setting::Binary, Panel::B, 500, 42);
    let c = sim(Setting::Binary, Panel::B, 500, 43);
    assert_eq!(a.post_outcome(), b.post_outcome());
    assert_eq!(a.mediator(), b.mediator());
    assert_eq!(a.treatment(), b.treatment());
    assert_ne!(a.post_outcome(), c.post_outcome());
}

#[test]
fn assignment_logistic_recovers_coefficients() {
    let data = sim(Setting::Continuous, Panel::O, 100_000, 5);
    let spec = DesignSpec::covariates_only(2);
    let design = build_design(&data, &spec, Overrides::none()).unwrap();
    let y: Vec<f64> = data.treatment().iter().map(|&g| g as f64).collect();
    let fit = fit_logistic(&spec, &design, &y, IrlsOptions::default()).unwrap();
    let mut info = DMatrix::<f64>::zeros(3, 3);
    for i in 0..data.len() {
        let r = design.row(i);
        let eta: f64 = (0..3).map(|j| r[j] * fit.coefficients[j]).sum();
        let p = 1.0 / (1.0 + (-eta).exp());
        info += r.transpose() * r * (p * (1.0 - p));
    }
    let cov = info.try_inverse().unwrap();
    for (j, truth) in [0.3, 0.4, 0.5].into_iter().enumerate() {
        let se = cov[(j, j)].sqrt();
        assert!(
            (fit.coefficients[j] - truth).abs() < 3.0 * se,
            "coef {j}: {} vs {truth} (se {se})",
            fit.coefficients[j]
        );
    }
}

#[test]
fn mediator_shifts_by_one_under_treatment() {
    let data = sim(Setting::Continuous, Panel::O, 100_000, 6);
    let spec = DesignSpec::new(vec![
        Term::intercept(),
        Term::new(vec![Column::G]),
        Term::new(vec![Column::X(0)]),
        Term::new(vec![Column::X(1)]),
    ])
    .unwrap();
    let design = build_design(&data, &spec, Overrides::none()).unwrap();
    let fit = fit_ols(&spec, &design, data.mediator()).unwrap();
    let se = fit.std_error(1);
    assert!((fit.coefficients[1] - 1.0).abs() < 3.0 * se, "{} (se {se})", fit.coefficients[1]);
    assert!((fit.coefficients[2] - 0.6).abs() < 3.0 * fit.std_error(2));
    assert!((fit.coefficients[3] + 0.3).abs() < 3.0 * fit.std_error(3));
}

#[test]
fn direct_effect_is_one_when_treatment_enters_additively() {
    for setting in [Setting::Continuous, Setting::Binary] {
        for panel in [Panel::O, Panel::B] {
            let t = compute_truths(&DgpModel::new(setting, panel), DRAWS, 1).unwrap();
            assert!((t.tau_de.value - 1.0).abs() < 1e-12, "{setting:?} {panel}: {}", t.tau_de.value);
            assert!((t.tau_de_0.value - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn panel_a_direct_effect_has_mediator_interaction() {
    // Y1(1, m) - Y1(0, m) = 1 + 0.25 X2 m
    let model = DgpModel::new(Setting::Continuous, Panel::A);
    let analytic = 1.0 + 0.25 * treated_expectation(&model, |x1, x2| x2 * (0.6 * x1 - 0.3 * x2 + 1.0));
    let t = compute_truths(&model, DRAWS, 2).unwrap();
    close(t.tau_de, analytic, "panel A tau_de");
    assert!((analytic - 1.0).abs() > 0.01);

    let model = DgpModel::new(Setting::Binary, Panel::A);
    let analytic =
        1.0 + 0.25 * treated_expectation(&model, |x1, x2| x2 * normal_cdf(0.6 * x1 - 0.3 * x2 + 1.0));
    let t = compute_truths(&model, DRAWS, 3).unwrap();
    close(t.tau_de, analytic, "panel A binary tau_de");
}

#[test]
fn indirect_effect_matches_quadrature() {
    let model = DgpModel::new(Setting::Continuous, Panel::O);
    let e_x2 = treated_expectation(&model, |_, x2| x2);
    let t = compute_truths(&model, DRAWS, 4).unwrap();
    close(t.tau_ie, 0.5 * (1.0 + 0.4 * e_x2), "setting 1 tau_ie");

    for panel in [Panel::O, Panel::B] {
        let model = DgpModel::new(Setting::Binary, panel);
        let analytic = treated_expectation(&model, |x1, x2| {
            let a = 0.6 * x1 - 0.3 * x2;
            0.5 * (1.0 + 0.4 * x2) * (normal_cdf(a + 1.0) - normal_cdf(a))
        });
        let t = compute_truths(&model, DRAWS, 5).unwrap();
        close(t.tau_ie, analytic, "setting 2 tau_ie");
    }
}

#[test]
fn controlled_truths_match_quadrature() {
    let model = DgpModel::new(Setting::Continuous, Panel::O);
    let base = treated_expectation(&model, |x1, x2| x2 - x1);
    let t = compute_truths(&model, DRAWS, 6).unwrap();
    close(t.bar_tau_1_0, base + 1.0, "bar_tau(1,0)");
    close(t.bar_tau_0_0, base, "bar_tau(0,0)");

    let model = DgpModel::new(Setting::Binary, Panel::A);
    let base = treated_expectation(&model, |x1, x2| (x1 + x2) * x2 - 2.0 * x1 * x2.abs().ln_1p());
    let t = compute_truths(&model, DRAWS, 7).unwrap();
    close(t.bar_tau_0_0, base, "panel A bar_tau(0,0)");
    close(t.bar_tau_1_0, base + 1.0, "panel A bar_tau(1,0)");
}

#[test]
fn truths_decompose() {
    for panel in [Panel::O, Panel::A, Panel::B] {
        let t = compute_truths(&DgpModel::new(Setting::Binary, panel), DRAWS, 8).unwrap();
        let gap = t.tau_ie.value + t.tau_de.value - t.tau.value;
        assert!(gap.abs() <= 2.0 * t.tau.mc_se, "{panel}: {gap}");
    }
}

#[test]
fn null_mediation_truth_is_zero() {
    let mut model = DgpModel::new(Setting::Continuous, Panel::O);
    model.mediator_scale = 0.0;
    let t = compute_truths(&model, DRAWS, 9).unwrap();
    assert!(t.tau_ie.value.abs() < 1e-12);
    assert!((t.tau.value - 1.0).abs() < 1e-12);
}

#[test]
fn comparator_recovers_direct_effect_without_mediation() {
    let mut model = DgpModel::new(Setting::Continuous, Panel::O);
    model.mediator_scale = 0.0;
    let data = sim_model(model, 20_000, 10);
    let r = regression_based(&data).unwrap();
    assert!(r.nie.point.abs() < 4.0 * r.nie.se, "nie {} se {}", r.nie.point, r.nie.se);
    assert!((r.nde.point - 1.0).abs() < 4.0 * r.nde.se, "nde {} se {}", r.nde.point, r.nde.se);
    assert_eq!(r.nie.point + r.nde.point, r.te.point);
}
