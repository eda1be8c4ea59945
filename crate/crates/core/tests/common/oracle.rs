//! Independent oracles. Each check returns the largest discrepancy found.

use didmed::controlled_effects::{bar_tau_continuous_at, bar_tau_discrete};
use didmed::data::RowSubset;
use didmed::model_core::{
    build_design, fit_local_polynomial, fit_logistic, fit_ols, DesignSpec, IrlsOptions, KernelKind, Overrides,
};
use didmed::natural_effects::natural_effects;
use didmed::nuisance::MediatorDistModel;
use didmed::simulation::{Panel, Setting};
use didmed::MediatorKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{fit_default, random_dataset, sim};

/// Dense solve by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..k {
            let f = a[r][c] / a[c][c];
            for j in c..k {
                a[r][j] -= f * a[c][j];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|j| a[r][j] * x[j]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn weighted_normal_equations(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for (i, r) in rows.iter().enumerate() {
        for p in 0..k {
            b[p] += w[i] * r[p] * y[i];
            for q in 0..k {
                a[p][q] += w[i] * r[p] * r[q];
            }
        }
    }
    solve(a, b)
}

pub fn gradient_ascent_logistic(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = rows.len() as f64;
    let k = rows[0].len();
    // Lipschitz bound of the mean log-likelihood gradient: trace(X'X) / (4n)
    let lip: f64 = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / (4.0 * n);
    let step = 1.0 / lip;
    let mut beta = vec![0.0; k];
    for _ in 0..2_000_000 {
        let mut grad = vec![0.0; k];
        for (r, &yi) in rows.iter().zip(y) {
            let eta: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            for j in 0..k {
                grad[j] += (yi - p) * r[j] / n;
            }
        }
        if grad.iter().all(|g| g.abs() < 1e-13) {
            break;
        }
        for j in 0..k {
            beta[j] += step * grad[j];
        }
    }
    beta
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// IRLS against gradient ascent on five random fixtures.
pub fn logistic_gap() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let p = 1 + seed as usize % 3;
        let data = random_dataset(100 + seed, 300 + 50 * seed as usize, p, MediatorKind::Continuous);
        let rows: Vec<Vec<f64>> = (0..data.len())
            .map(|i| std::iter::once(1.0).chain(data.covariates(i).iter().copied()).collect())
            .collect();
        let y: Vec<f64> = data.treatment().iter().map(|&g| g as f64).collect();
        let spec = DesignSpec::covariates_only(p);
        let design = build_design(&data, &spec, Overrides::none()).unwrap();
        let fit = fit_logistic(&spec, &design, &y, IrlsOptions::default()).unwrap();
        assert!(fit.converged);
        worst = worst.max(max_gap(&fit.coefficients, &gradient_ascent_logistic(&rows, &y)));
    }
    worst
}

/// OLS on the full `G x M x X` design against hand-built normal equations.
pub fn ols_gap() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let data = sim(Setting::Continuous, Panel::O, 800, seed);
        let rows: Vec<Vec<f64>> = (0..data.len())
            .map(|i| {
                let (g, m, x) = (data.treatment()[i] as f64, data.mediator()[i], data.covariates(i));
                let mut r = vec![1.0, g, m, g * m];
                for &xj in x {
                    r.extend([xj, g * xj, m * xj, g * m * xj]);
                }
                r
            })
            .collect();
        let spec = DesignSpec::full_interaction(2);
        let design = build_design(&data, &spec, Overrides::none()).unwrap();
        let fit = fit_ols(&spec, &design, data.delta_y()).unwrap();
        let oracle = weighted_normal_equations(&rows, data.delta_y(), &vec![1.0; data.len()]);
        worst = worst.max(max_gap(&fit.coefficients, &oracle));
    }
    worst
}

/// Kernel-weighted local quadratic fit against weighted normal equations.
pub fn local_polynomial_gap() -> f64 {
    let data = sim(Setting::Continuous, Panel::O, 2000, 3);
    let rows = data.group_rows(1);
    let mut worst = 0.0f64;
    for (kernel, target, h) in [(KernelKind::Gaussian, 0.5, 0.3), (KernelKind::Epanechnikov, 1.2, 0.6)] {
        let src = RowSubset {
            data: &data,
            rows: &rows,
            mediator_shift: target,
        };
        let y: Vec<f64> = rows.iter().map(|&i| data.delta_y()[i]).collect();
        let fit =
            fit_local_polynomial(&src, &y, target, 2, kernel, h, &DesignSpec::covariates_only(2)).unwrap();
        let design: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| {
                let d = data.mediator()[i] - target;
                let x = data.covariates(i);
                vec![1.0, x[0], x[1], d, d * d]
            })
            .collect();
        let w: Vec<f64> = rows
            .iter()
            .map(|&i| {
                let u = (data.mediator()[i] - target) / h;
                let k = match kernel {
                    KernelKind::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
                    KernelKind::Epanechnikov => (0.75 * (1.0 - u * u)).max(0.0),
                };
                k / h
            })
            .collect();
        worst = worst.max(max_gap(&fit.model.coefficients, &weighted_normal_equations(&design, &y, &w)));
    }
    worst
}

/// Largest `|P_n phi_hat|` over natural and controlled estimates.
pub fn estimating_equation_residual() -> f64 {
    let cases = [
        sim(Setting::Continuous, Panel::O, 1000, 1),
        sim(Setting::Binary, Panel::A, 1000, 2),
        sim(Setting::Continuous, Panel::B, 1000, 3),
        random_dataset(4, 600, 3, MediatorKind::Discrete { levels: 4 }),
    ];
    let mut worst = 0.0f64;
    for data in &cases {
        let nu = fit_default(data);
        let fx = natural_effects(data, &nu).unwrap();
        for e in fx.effects().into_iter().chain(fx.components()) {
            worst = worst.max(e.estimating_equation_residual().abs());
        }
        let controlled = match data.mediator_kind() {
            MediatorKind::Discrete { .. } => vec![
                bar_tau_discrete(1, 0.0, data, &nu).unwrap(),
                bar_tau_discrete(0, 1.0, data, &nu).unwrap(),
            ],
            MediatorKind::Continuous => vec![
                bar_tau_continuous_at(1, 0.5, data, &nu, KernelKind::Gaussian, 0.3).unwrap(),
                bar_tau_continuous_at(0, 0.0, data, &nu, KernelKind::Epanechnikov, 0.5).unwrap(),
            ],
        };
        for c in controlled {
            worst = worst.max(c.estimating_equation_residual().abs());
        }
    }
    worst
}

/// Largest `|NIE + NDE - TE|` over 100 random datasets, and the largest
/// relative gap between TE and `tau(1,1) - tau(0,0)`.
pub fn decomposition_gap() -> (f64, f64) {
    let (mut exact, mut direct) = (0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let kind = match seed % 3 {
            0 => MediatorKind::Continuous,
            1 => MediatorKind::Discrete { levels: 2 },
            _ => MediatorKind::Discrete { levels: 3 },
        };
        let data = random_dataset(1000 + seed, 300, 1 + seed as usize % 3, kind);
        let fx = natural_effects(&data, &fit_default(&data)).unwrap();
        exact = exact.max((fx.nie.point + fx.nde.point - fx.te.point).abs());
        let d = fx.tau11.point - fx.tau00.point;
        direct = direct.max((fx.te.point - d).abs() / d.abs().max(1.0));
    }
    (exact, direct)
}

/// `nu_hat` against `sum_k P_hat(k | 0, x) delta_hat(0, k, x)`.
pub fn discrete_mixture_gap() -> f64 {
    let mut worst = 0.0f64;
    for (seed, levels) in [(1u64, 2usize), (2, 3), (3, 4)] {
        let data = random_dataset(seed, 1500, 2, MediatorKind::Discrete { levels });
        let nu = fit_default(&data);
        for i in (0..data.len()).step_by(37) {
            let x = data.covariates(i);
            let mixture: f64 = (0..levels)
                .map(|k| {
                    let p = nu.mediator_dist.density(k as f64, 0, x).unwrap();
                    nu.delta_hat(0.0, k as f64, x) * p
                })
                .sum();
            worst = worst.max((nu.nu_hat(x) - mixture).abs());
        }
    }
    worst
}

/// Continuous `nu_hat` against Monte Carlo integration of `delta_hat(0, M, x)`
/// over the fitted control-group mediator law (antithetic pairs).
pub fn continuous_nu_gap() -> f64 {
    let data = sim(Setting::Continuous, Panel::O, 2000, 11);
    let nu = fit_default(&data);
    let MediatorDistModel::Continuous(models) = &nu.mediator_dist else {
        panic!("continuous mediator expected");
    };
    let control = &models[0];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for i in [0usize, 17, 401, 1234, 1999] {
        let x = data.covariates(i);
        let mean = control.mean_at(x);
        let pairs = 500_000;
        let mut total = 0.0;
        for _ in 0..pairs {
            let z: f64 = StandardNormal.sample(&mut rng);
            total += nu.delta_hat(0.0, mean + control.sd * z, x) + nu.delta_hat(0.0, mean - control.sd * z, x);
        }
        worst = worst.max((nu.nu_hat(x) - total / (2 * pairs) as f64).abs());
    }
    worst
}
