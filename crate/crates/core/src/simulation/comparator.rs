//! Product-of-coefficients regression comparator.
//!
//! Mediator model `M ~ 1 + G + X` (a linear-probability fit when `M` is
//! binary) and outcome model `Y1 - Y0 ~ 1 + G + M + X`, both OLS.
//! `NIE = a * b_M` with the Sobel variance, `NDE = b_G`, `TE = NIE + NDE`.

use serde::Serialize;

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::model_core::{build_design, fit_ols, Column, DesignSpec, FittedLinearModel, Overrides, Term};
use crate::natural_effects::{EffectEstimate, Estimand};
use crate::numeric::fsum;

#[derive(Debug, Clone, Serialize)]
pub struct RegressionEffects {
    pub nie: EffectEstimate,
    pub nde: EffectEstimate,
    pub te: EffectEstimate,
}

impl RegressionEffects {
    pub fn effects(&self) -> [&EffectEstimate; 3] {
        [&self.nie, &self.nde, &self.te]
    }
}

/// `[1, G, X1, .., Xp]`.
fn mediator_spec(p: usize) -> DesignSpec {
    let mut terms = vec![Term::intercept(), Term::new(vec![Column::G])];
    terms.extend((0..p).map(|j| Term::new(vec![Column::X(j)])));
    DesignSpec::new(terms).expect("static spec")
}

struct Fits {
    mediator: FittedLinearModel,
    outcome: FittedLinearModel,
}

fn fit(data: &ObservationalDataset) -> Result<Fits> {
    let p = data.n_covariates();
    let m_spec = mediator_spec(p);
    let m_design = build_design(data, &m_spec, Overrides::none())?;
    let mediator = fit_ols(&m_spec, &m_design, data.mediator()).map_err(Error::nuisance("comparator mediator model"))?;
    let y_spec = DesignSpec::main_effects(p);
    let y_design = build_design(data, &y_spec, Overrides::none())?;
    let outcome = fit_ols(&y_spec, &y_design, data.delta_y()).map_err(Error::nuisance("comparator outcome model"))?;
    Ok(Fits { mediator, outcome })
}

pub fn regression_based(data: &ObservationalDataset) -> Result<RegressionEffects> {
    let fits = fit(data)?;
    let n1 = data.n_treated();
    // mediator spec: [1, G, X..]; outcome spec: [1, G, M, X..]
    let a = fits.mediator.coefficients[1];
    let var_a = fits.mediator.covariance[(1, 1)];
    let b_g = fits.outcome.coefficients[1];
    let b_m = fits.outcome.coefficients[2];
    let cov = &fits.outcome.covariance;
    let (var_bg, var_bm, cov_gm) = (cov[(1, 1)], cov[(2, 2)], cov[(1, 2)]);

    let nie_var = a * a * var_bm + b_m * b_m * var_a;
    let nie = EffectEstimate::from_se(Estimand::Nie, a * b_m, nie_var.max(0.0).sqrt(), n1);
    let nde = EffectEstimate::from_se(Estimand::Nde, b_g, var_bg.max(0.0).sqrt(), n1);
    // gradient of a*b_M + b_G in (a, b_G, b_M) is (b_M, 1, a)
    let te_var = nie_var + var_bg + 2.0 * a * cov_gm;
    let te = EffectEstimate::from_se(Estimand::Te, nie.point + nde.point, te_var.max(0.0).sqrt(), n1);
    Ok(RegressionEffects { nie, nde, te })
}

/// Comparator for controlled effects: outcome-model prediction at
/// `G = g, M = m`, averaged over treated covariates (held fixed in the
/// variance).
#[derive(Debug, Clone, Serialize)]
pub struct RegressionControlled {
    pub bar_tau_1: (f64, f64),
    pub bar_tau_0: (f64, f64),
    pub tau_de: (f64, f64),
}

pub fn regression_controlled(data: &ObservationalDataset, m: f64) -> Result<RegressionControlled> {
    let fits = fit(data)?;
    let p = data.n_covariates();
    let treated = data.group_rows(1);
    let xbar: Vec<f64> = (0..p)
        .map(|j| fsum(treated.iter().map(|&i| data.covariates(i)[j])) / treated.len() as f64)
        .collect();
    let model = &fits.outcome;
    let at = |g: f64| {
        let mut c = vec![1.0, g, m];
        c.extend_from_slice(&xbar);
        let point = fsum(c.iter().zip(&model.coefficients).map(|(a, b)| a * b));
        let mut var = 0.0;
        for (r, cr) in c.iter().enumerate() {
            for (s, cs) in c.iter().enumerate() {
                var += cr * cs * model.covariance[(r, s)];
            }
        }
        (point, var.max(0.0).sqrt())
    };
    Ok(RegressionControlled {
        bar_tau_1: at(1.0),
        bar_tau_0: at(0.0),
        tau_de: (model.coefficients[1], model.covariance[(1, 1)].max(0.0).sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exactly linear data without noise: a = 2, b_M = 3, b_G = 0.5.
    #[test]
    fn exact_linear_fit_recovers_products() {
        let n = 40;
        let mut g = Vec::new();
        let mut x = Vec::new();
        let mut m = Vec::new();
        let mut y0 = Vec::new();
        let mut y1 = Vec::new();
        for i in 0..n {
            let gi = (i % 2) as u8;
            let xi = (i as f64 * 0.37).sin();
            let noise = (i as f64 * 1.3).cos() * 0.1;
            let mi = 1.0 + 2.0 * gi as f64 + 0.5 * xi + noise;
            g.push(gi);
            x.push(xi);
            m.push(mi);
            y0.push(xi);
            y1.push(xi + 0.5 * gi as f64 + 3.0 * mi - xi);
        }
        let data = ObservationalDataset::new(g, x, 1, y0, m, y1, crate::MediatorKind::Continuous).unwrap();
        let r = regression_based(&data).unwrap();
        assert!((r.nde.point - 0.5).abs() < 1e-8);
        assert!((r.te.point - r.nie.point - r.nde.point).abs() < 1e-15);
        let c = regression_controlled(&data, 0.0).unwrap();
        assert!((c.tau_de.0 - 0.5).abs() < 1e-8);
        assert!((c.bar_tau_1.0 - c.bar_tau_0.0 - 0.5).abs() < 1e-8);
    }
}
