//! Kernels, Silverman's rule and kernel-weighted local polynomial regression.

use serde::{Deserialize, Serialize};

use super::design::{build_design, Column, DesignSpec, Overrides, Term};
use super::linear::{fit_wls, FittedLinearModel};
use crate::data::DesignSource;
use crate::error::{Error, Result};
use crate::numeric::{fsum, quantile_sorted, sample_sd, SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl KernelKind {
    /// Unit-bandwidth kernel density `K(u)`.
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelKind::Gaussian => (-0.5 * u * u).exp() / SQRT_2PI,
            KernelKind::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// `K_h(u) = K(u / h) / h`.
    pub fn scaled(self, u: f64, h: f64) -> f64 {
        self.eval(u / h) / h
    }

    pub fn peak(self) -> f64 {
        self.eval(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    #[default]
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default)]
    pub kernel: KernelKind,
    #[serde(default)]
    pub bandwidth: Bandwidth,
}

impl KernelConfig {
    pub fn fixed(h: f64) -> Self {
        Self {
            kernel: KernelKind::Gaussian,
            bandwidth: Bandwidth::Fixed(h),
        }
    }

    /// Resolves the bandwidth, applying Silverman's rule to `values` when
    /// no fixed bandwidth is set.
    pub fn resolve(&self, values: &[f64]) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            Bandwidth::Fixed(h) => Err(Error::Config(format!("bandwidth must be positive, got {h}"))),
            Bandwidth::Silverman => silverman_bandwidth(values),
        }
    }
}

/// `h = 0.9 * min(sd, IQR / 1.34) * n^(-1/5)`. Falls back to `sd` alone
/// when the interquartile range is zero.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!("bandwidth needs >= 2 values, got {n}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[n - 1] {
        return Err(Error::DegenerateSample("all values identical".into()));
    }
    let sd = sample_sd(&sorted);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Local polynomial fit around `target_m`.
#[derive(Debug, Clone)]
pub struct LocalPolynomialFit {
    /// Fitted on the x-spec extended with powers of `M - target_m`.
    pub model: FittedLinearModel,
    pub target_m: f64,
    pub degree: usize,
    pub bandwidth: f64,
    /// Kernel weights normalized to peak one, summed.
    pub effective_n: f64,
}

impl LocalPolynomialFit {
    /// Prediction at `M = target_m`: only the covariate part contributes.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.model.predict(0.0, 0.0, x)
    }

    pub fn to_linear_model(&self) -> &FittedLinearModel {
        &self.model
    }
}

/// Extends a covariate-only spec with `M, M:M, ..` up to `degree`.
pub fn local_design_spec(x_spec: &DesignSpec, degree: usize) -> Result<DesignSpec> {
    x_spec.forbid(&[Column::G, Column::M], "local polynomial covariate")?;
    let mut spec = x_spec.clone();
    for d in 1..=degree {
        spec = spec.with_term(Term::new(vec![Column::M; d]))?;
    }
    Ok(spec)
}

/// Weighted least squares of `response` on `[x_spec, (m - target), ..,
/// (m - target)^degree]` with weights `K_h(m_i - target)`.
///
/// `source` must present the mediator *already centred* at `target_m`
/// (see [`crate::data::RowSubset::mediator_shift`]).
pub fn fit_local_polynomial<S: DesignSource + ?Sized>(
    source: &S,
    response: &[f64],
    target_m: f64,
    degree: usize,
    kernel: KernelKind,
    bandwidth: f64,
    x_spec: &DesignSpec,
) -> Result<LocalPolynomialFit> {
    if degree > 2 {
        return Err(Error::Config(format!("local polynomial degree must be 0, 1 or 2, got {degree}")));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let spec = local_design_spec(x_spec, degree)?;
    let n = source.n_rows();
    let weights: Vec<f64> = (0..n).map(|i| kernel.scaled(source.m(i), bandwidth)).collect();
    let effective_n = fsum(weights.iter().map(|w| w * bandwidth / kernel.peak()));
    let nonzero = weights.iter().filter(|&&w| w > 0.0).count();
    let required = spec.len() + 1;
    if effective_n < required as f64 || nonzero < required {
        return Err(Error::InsufficientLocalData {
            effective: effective_n,
            required,
        });
    }
    let design = build_design(source, &spec, Overrides::none())?;
    let model = fit_wls(&spec, &design, response, Some(&weights))?;
    Ok(LocalPolynomialFit {
        model,
        target_m,
        degree,
        bandwidth,
        effective_n,
    })
}
