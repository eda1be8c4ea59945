//! Ordinary and weighted least squares.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::design::DesignSpec;
use crate::error::{Error, Result};
use crate::numeric::{fdot, fsum};

/// Ridge jitter, relative to the mean diagonal of the scaled Gram matrix.
pub const RIDGE_JITTER: f64 = 1e-10;
/// Largest acceptable condition number of the scaled Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct FittedLinearModel {
    pub spec: DesignSpec,
    pub coefficients: Vec<f64>,
    pub residual_variance: f64,
    /// `residual_variance * (X'WX)^{-1}`.
    pub covariance: DMatrix<f64>,
    pub n_obs: usize,
    /// True when the ridge jitter had to be applied.
    pub regularized: bool,
}

impl FittedLinearModel {
    pub fn predict(&self, g: f64, m: f64, x: &[f64]) -> f64 {
        self.spec.linear_predictor(&self.coefficients, g, m, x)
    }

    pub fn std_error(&self, k: usize) -> f64 {
        self.covariance[(k, k)].max(0.0).sqrt()
    }
}

/// Solution of a symmetric positive semi-definite system `A b = rhs`.
pub(crate) struct GramSolution {
    pub coefficients: DVector<f64>,
    pub inverse: DMatrix<f64>,
    pub regularized: bool,
}

/// Solves `gram * b = rhs` after diagonal equilibration. Applies the ridge
/// jitter when the scaled condition number exceeds [`MAX_CONDITION`] and
/// reports the offending column if it is still exceeded afterwards.
pub(crate) fn solve_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<GramSolution> {
    let k = gram.nrows();
    let mut scale = DVector::zeros(k);
    for j in 0..k {
        let d = gram[(j, j)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Singular { column: j });
        }
        scale[j] = 1.0 / d.sqrt();
    }
    let mut scaled = DMatrix::from_fn(k, k, |i, j| gram[(i, j)] * scale[i] * scale[j]);
    let condition = |m: &DMatrix<f64>| {
        let eig = SymmetricEigen::new(m.clone());
        let (mut lo, mut hi, mut arg) = (f64::INFINITY, 0.0f64, 0usize);
        for (i, &v) in eig.eigenvalues.iter().enumerate() {
            if v < lo {
                lo = v;
                arg = i;
            }
            hi = hi.max(v);
        }
        let worst = eig
            .eigenvectors
            .column(arg)
            .iamax();
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        (cond, worst)
    };
    let (cond, _) = condition(&scaled);
    let mut regularized = false;
    if !(cond <= MAX_CONDITION) {
        let jitter = RIDGE_JITTER * scaled.trace() / k as f64;
        for j in 0..k {
            scaled[(j, j)] += jitter;
        }
        regularized = true;
        let (cond, worst) = condition(&scaled);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::Singular { column: worst });
        }
    }
    let chol = scaled.clone().cholesky().ok_or_else(|| {
        let (_, worst) = condition(&scaled);
        Error::Singular { column: worst }
    })?;
    let scaled_rhs = rhs.component_mul(&scale);
    let beta_scaled = chol.solve(&scaled_rhs);
    let inv_scaled = chol.inverse();
    let coefficients = beta_scaled.component_mul(&scale);
    let inverse = DMatrix::from_fn(k, k, |i, j| inv_scaled[(i, j)] * scale[i] * scale[j]);
    Ok(GramSolution {
        coefficients,
        inverse,
        regularized,
    })
}

/// `X' W X` and `X' W y` with exact summation.
pub(crate) fn weighted_normal_equations(
    design: &DMatrix<f64>,
    response: &[f64],
    weights: Option<&[f64]>,
) -> (DMatrix<f64>, DVector<f64>) {
    let k = design.ncols();
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let c = design.column(j);
            match weights {
                Some(w) => c.iter().zip(w).map(|(a, b)| a * b).collect(),
                None => c.iter().copied().collect(),
            }
        })
        .collect();
    let mut gram = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for j in 0..k {
        let xj = design.column(j);
        let xj = xj.as_slice();
        for l in j..k {
            let v = fdot(&cols[l], xj);
            gram[(j, l)] = v;
            gram[(l, j)] = v;
        }
        rhs[j] = fdot(&cols[j], response);
    }
    (gram, rhs)
}

pub fn fit_ols(spec: &DesignSpec, design: &DMatrix<f64>, response: &[f64]) -> Result<FittedLinearModel> {
    fit_wls(spec, design, response, None)
}

/// Weighted least squares; `weights = None` gives OLS.
pub fn fit_wls(
    spec: &DesignSpec,
    design: &DMatrix<f64>,
    response: &[f64],
    weights: Option<&[f64]>,
) -> Result<FittedLinearModel> {
    let (n, k) = design.shape();
    if k != spec.len() {
        return Err(Error::Schema(format!("design has {k} columns, spec has {} terms", spec.len())));
    }
    if response.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::Data("response/weights length differs from design rows".into()));
    }
    if n < k {
        return Err(Error::Data(format!("{n} rows for {k} columns")));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite response".into()));
    }
    let (gram, rhs) = weighted_normal_equations(design, response, weights);
    let sol = solve_gram(&gram, &rhs)?;
    let beta = sol.coefficients;
    let rss = fsum((0..n).map(|i| {
        let fitted: f64 = (0..k).map(|j| design[(i, j)] * beta[j]).sum();
        let r = response[i] - fitted;
        weights.map_or(1.0, |w| w[i]) * r * r
    }));
    let df = n - k;
    let residual_variance = if df > 0 { rss / df as f64 } else { 0.0 };
    Ok(FittedLinearModel {
        spec: spec.clone(),
        coefficients: beta.iter().copied().collect(),
        residual_variance,
        covariance: sol.inverse * residual_variance,
        n_obs: n,
        regularized: sol.regularized,
    })
}
