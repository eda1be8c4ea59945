//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use super::design::DesignSpec;
use super::linear::{solve_gram, weighted_normal_equations};
use crate::error::{Error, Result};
use crate::numeric::{expit, fdot, fsum};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-8;
/// Coefficient norm beyond which the fit is declared separated.
pub const SEPARATION_NORM: f64 = 1e4;
/// Fitted probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]`.
pub const PROB_CLIP: f64 = 1e-6;
/// A linear predictor beyond this magnitude means some fitted probability
/// is within about 1e-13 of 0 or 1, which only happens under separation.
pub const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct FittedLogisticModel {
    pub spec: DesignSpec,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the score at the returned coefficients.
    pub score_norm: f64,
}

impl FittedLogisticModel {
    /// Wraps known coefficients, e.g. a true model in a simulation.
    pub fn from_coefficients(spec: DesignSpec, coefficients: Vec<f64>) -> Self {
        assert_eq!(spec.len(), coefficients.len(), "one coefficient per term");
        Self {
            spec,
            coefficients,
            converged: true,
            iterations: 0,
            score_norm: 0.0,
        }
    }

    pub fn linear_predictor(&self, g: f64, m: f64, x: &[f64]) -> f64 {
        self.spec.linear_predictor(&self.coefficients, g, m, x)
    }

    /// Fitted probability, clipped to `[1e-6, 1 - 1e-6]`.
    pub fn predict(&self, g: f64, m: f64, x: &[f64]) -> f64 {
        expit(self.linear_predictor(g, m, x)).clamp(PROB_CLIP, 1.0 - PROB_CLIP)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IrlsOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

fn log_likelihood(eta: &[f64], y: &[f64]) -> f64 {
    // y*eta - log(1 + e^eta), computed stably
    fsum(eta.iter().zip(y).map(|(&e, &yi)| {
        let log1pexp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
        yi * e - log1pexp
    }))
}

fn linear_predictors(design: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (0..design.nrows())
        .map(|i| (0..design.ncols()).map(|j| design[(i, j)] * beta[j]).sum())
        .collect()
}

pub fn fit_logistic(
    spec: &DesignSpec,
    design: &DMatrix<f64>,
    response: &[f64],
    opts: IrlsOptions,
) -> Result<FittedLogisticModel> {
    let (n, k) = design.shape();
    if k != spec.len() {
        return Err(Error::Schema(format!("design has {k} columns, spec has {} terms", spec.len())));
    }
    if response.len() != n {
        return Err(Error::Data("response length differs from design rows".into()));
    }
    if let Some(i) = response.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data(format!("logistic response must be 0/1, row {i} is {}", response[i])));
    }
    let ones = response.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::DegenerateSample(format!(
            "logistic response has a single class ({ones} of {n} ones)"
        )));
    }

    let mut beta = DVector::zeros(k);
    let mut eta = vec![0.0; n];
    let mut ll = log_likelihood(&eta, response);
    let mut iterations = 0;
    let mut converged = false;
    let mut score_norm;
    loop {
        let p: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let resid: Vec<f64> = response.iter().zip(&p).map(|(y, p)| y - p).collect();
        let score = DVector::from_fn(k, |j, _| fdot(design.column(j).as_slice(), &resid));
        score_norm = score.amax();
        if score_norm < opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let w: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
        let (info, _) = weighted_normal_equations(design, &resid, Some(&w));
        let step = solve_gram(&info, &score)?.coefficients;

        // Newton step with halving on likelihood decrease.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &beta + &step * t;
            let cand_eta = linear_predictors(design, &candidate);
            let cand_ll = log_likelihood(&cand_eta, response);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = candidate;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let norm = beta.norm();
        if norm > SEPARATION_NORM || !norm.is_finite() {
            return Err(Error::Separation {
                norm,
                limit: SEPARATION_NORM,
            });
        }
        if !accepted {
            break;
        }
    }
    if eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
        return Err(Error::Separation {
            norm: beta.norm(),
            limit: SEPARATION_NORM,
        });
    }
    Ok(FittedLogisticModel {
        spec: spec.clone(),
        coefficients: beta.iter().copied().collect(),
        converged,
        iterations,
        score_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::design::{Column, Term};
    use crate::numeric::logit;

    fn intercept_spec() -> DesignSpec {
        DesignSpec::new(vec![Term::intercept()]).unwrap()
    }

    #[test]
    fn intercept_only_half() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let fit = fit_logistic(&intercept_spec(), &x, &[0.0, 1.0, 0.0, 1.0], IrlsOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[0].abs() < 1e-12);
    }

    #[test]
    fn intercept_only_quarter() {
        let x = DMatrix::from_element(8, 1, 1.0);
        let y = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let fit = fit_logistic(&intercept_spec(), &x, &y, IrlsOptions::default()).unwrap();
        assert!((fit.coefficients[0] - (1.0f64 / 3.0).ln()).abs() < 1e-10);
        assert!((fit.coefficients[0] - logit(0.25)).abs() < 1e-10);
        assert!(fit.score_norm < DEFAULT_TOL);
    }

    #[test]
    fn separated_data_is_an_error() {
        let spec = DesignSpec::new(vec![Term::intercept(), Term::new(vec![Column::X(0)])]).unwrap();
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0]);
        let err = fit_logistic(&spec, &x, &[0.0, 0.0, 1.0, 1.0], IrlsOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }));
    }

    #[test]
    fn single_class_rejected() {
        let x = DMatrix::from_element(3, 1, 1.0);
        assert!(fit_logistic(&intercept_spec(), &x, &[1.0, 1.0, 1.0], IrlsOptions::default()).is_err());
        assert!(fit_logistic(&intercept_spec(), &x, &[1.0, 0.5, 1.0], IrlsOptions::default()).is_err());
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let spec = DesignSpec::new(vec![Term::intercept(), Term::new(vec![Column::X(0)])]).unwrap();
        let x = DMatrix::from_row_slice(5, 2, &[1.0, -2.0, 1.0, -1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let opts = IrlsOptions { max_iter: 1, tol: 1e-8 };
        let fit = fit_logistic(&spec, &x, &[0.0, 1.0, 0.0, 1.0, 1.0], opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn predictions_are_clipped() {
        let fit = FittedLogisticModel::from_coefficients(intercept_spec(), vec![50.0]);
        assert_eq!(fit.predict(0.0, 0.0, &[]), 1.0 - PROB_CLIP);
        let fit = FittedLogisticModel::from_coefficients(intercept_spec(), vec![-50.0]);
        assert_eq!(fit.predict(0.0, 0.0, &[]), PROB_CLIP);
    }
}
