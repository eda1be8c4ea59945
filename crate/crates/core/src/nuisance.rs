//! Working models for the nuisance functions: propensity score `pi(x)`,
//! pseudo-propensity score `varpi(m, x) = P(G=1 | M=m, X=x)`, outcome-change
//! regression `delta(g, m, x)`, imputation `nu(0, x)` and the mediator
//! distribution `f(m | g, x)`.

use serde::{Deserialize, Serialize};

use crate::data::{MediatorKind, ObservationalDataset, RowSubset};
use crate::error::{Error, Result};
use crate::model_core::{
    build_design, fit_logistic, fit_ols, Column, DesignSpec, FittedLinearModel, FittedLogisticModel,
    IrlsOptions, Overrides,
};
use crate::numeric::{normal_pdf, SQRT_2PI};

pub const DEFAULT_CLIP_LEVEL: f64 = 0.01;
/// Floor for the conditional mediator density/mass in inverse weights.
pub const DENSITY_FLOOR: f64 = 1e-4;

/// Design specs for each working model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSpecs {
    /// `G ~ X`.
    pub propensity: DesignSpec,
    /// `G ~ (M, X)`.
    pub pseudo_propensity: DesignSpec,
    /// `Y1 - Y0 ~ (G, M, X)`.
    pub outcome_change: DesignSpec,
    /// `M ~ X`, fitted within each treatment group.
    pub mediator: DesignSpec,
}

impl NuisanceSpecs {
    /// Main-effects propensity models, full `G x M x X` outcome model.
    pub fn defaults(p: usize) -> Self {
        Self {
            propensity: DesignSpec::covariates_only(p),
            pseudo_propensity: DesignSpec::mediator_and_covariates(p),
            outcome_change: DesignSpec::full_interaction(p),
            mediator: DesignSpec::covariates_only(p),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.propensity.validate(p)?;
        self.pseudo_propensity.validate(p)?;
        self.outcome_change.validate(p)?;
        self.mediator.validate(p)?;
        self.propensity.forbid(&[Column::G, Column::M], "propensity")?;
        self.pseudo_propensity.forbid(&[Column::G], "pseudo-propensity")?;
        self.mediator.forbid(&[Column::G, Column::M], "mediator")?;
        Ok(())
    }
}

/// Probability model for one mediator level.
#[derive(Debug, Clone)]
pub enum LevelModel {
    Logistic(FittedLogisticModel),
    /// Level never (0) or always (1) observed in the group.
    Constant(f64),
}

impl LevelModel {
    fn prob(&self, x: &[f64]) -> f64 {
        match self {
            LevelModel::Logistic(m) => m.predict(0.0, 0.0, x),
            LevelModel::Constant(p) => *p,
        }
    }
}

/// `P(M = k | G = g, X)` for one group. Binary mediators use a single
/// model for level 1; more levels use one-vs-rest models renormalized to
/// the simplex.
#[derive(Debug, Clone)]
pub struct LevelProbabilities {
    levels: usize,
    models: Vec<LevelModel>,
}

impl LevelProbabilities {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn models(&self) -> &[LevelModel] {
        &self.models
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        if self.levels == 2 {
            let p1 = self.models[0].prob(x);
            return vec![1.0 - p1, p1];
        }
        let raw: Vec<f64> = self.models.iter().map(|m| m.prob(x)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }

    pub fn probability(&self, level: usize, x: &[f64]) -> f64 {
        if self.levels == 2 {
            let p1 = self.models[0].prob(x);
            return if level == 1 { p1 } else { 1.0 - p1 };
        }
        self.probabilities(x)[level]
    }
}

/// Homoscedastic Gaussian linear model for `M | G = g, X`.
#[derive(Debug, Clone)]
pub struct GaussianMediatorModel {
    pub mean: FittedLinearModel,
    pub sd: f64,
}

impl GaussianMediatorModel {
    pub fn mean_at(&self, x: &[f64]) -> f64 {
        self.mean.predict(0.0, 0.0, x)
    }

    pub fn density(&self, m: f64, x: &[f64]) -> f64 {
        normal_pdf((m - self.mean_at(x)) / self.sd) / self.sd
    }
}

/// `f(m | g, x)` for both groups (index 0 = control, 1 = treated).
#[derive(Debug, Clone)]
pub enum MediatorDistModel {
    Continuous([GaussianMediatorModel; 2]),
    Discrete([LevelProbabilities; 2]),
}

impl MediatorDistModel {
    /// Probability mass (discrete) or density (continuous) of `m`.
    pub fn density(&self, m: f64, g: u8, x: &[f64]) -> Result<f64> {
        match self {
            MediatorDistModel::Continuous(models) => Ok(models[g as usize].density(m, x)),
            MediatorDistModel::Discrete(groups) => {
                let probs = &groups[g as usize];
                let levels = probs.levels();
                if m.fract() != 0.0 || m < 0.0 || m >= levels as f64 {
                    return Err(Error::LevelOutOfRange { level: m, levels });
                }
                Ok(probs.probability(m as usize, x))
            }
        }
    }

    /// `E(M | G = g, X = x)`.
    pub fn mean(&self, g: u8, x: &[f64]) -> f64 {
        match self {
            MediatorDistModel::Continuous(models) => models[g as usize].mean_at(x),
            MediatorDistModel::Discrete(groups) => groups[g as usize]
                .probabilities(x)
                .iter()
                .enumerate()
                .map(|(k, p)| k as f64 * p)
                .sum(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelStatus {
    pub model: String,
    pub converged: bool,
    pub iterations: usize,
    pub regularized: bool,
}

/// Fitted nuisance functions. Immutable after [`fit_nuisances`].
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    pub propensity: FittedLogisticModel,
    pub pseudo_propensity: FittedLogisticModel,
    pub outcome_change: FittedLinearModel,
    pub mediator_dist: MediatorDistModel,
    pub clip_level: f64,
    pub specs: NuisanceSpecs,
}

/// Clips `p` into `[clip, 1 - clip]` and returns the odds and whether
/// clipping changed the value.
pub fn odds_from_probability(p: f64, clip: f64) -> (f64, bool) {
    let c = p.clamp(clip, 1.0 - clip);
    (c / (1.0 - c), c != p)
}

impl NuisanceSet {
    /// Fitted `pi(x)` (clipped only at the logistic level).
    pub fn propensity(&self, x: &[f64]) -> f64 {
        self.propensity.predict(0.0, 0.0, x)
    }

    /// `pi(x)` clipped into `[clip_level, 1 - clip_level]`.
    pub fn propensity_clipped(&self, x: &[f64]) -> f64 {
        self.propensity(x).clamp(self.clip_level, 1.0 - self.clip_level)
    }

    pub fn pseudo_propensity(&self, m: f64, x: &[f64]) -> f64 {
        self.pseudo_propensity.predict(0.0, m, x)
    }

    pub fn propensity_odds(&self, x: &[f64]) -> f64 {
        self.propensity_odds_checked(x).0
    }

    pub fn propensity_odds_checked(&self, x: &[f64]) -> (f64, bool) {
        odds_from_probability(self.propensity(x), self.clip_level)
    }

    pub fn pseudo_propensity_odds(&self, m: f64, x: &[f64]) -> f64 {
        self.pseudo_propensity_odds_checked(m, x).0
    }

    pub fn pseudo_propensity_odds_checked(&self, m: f64, x: &[f64]) -> (f64, bool) {
        odds_from_probability(self.pseudo_propensity(m, x), self.clip_level)
    }

    /// `delta_hat(g, m, x)` with `G` and `M` overridden.
    pub fn delta_hat(&self, g: f64, m: f64, x: &[f64]) -> f64 {
        self.outcome_change.predict(g, m, x)
    }

    /// `nu_hat(0, x) = E{delta_hat(0, M, x) | G = 0, x}`: an exact mixture
    /// over levels for a discrete mediator, the plug-in at the fitted
    /// control-group mean for a continuous one.
    pub fn nu_hat(&self, x: &[f64]) -> f64 {
        match &self.mediator_dist {
            MediatorDistModel::Discrete(groups) => groups[0]
                .probabilities(x)
                .iter()
                .enumerate()
                .map(|(k, p)| self.delta_hat(0.0, k as f64, x) * p)
                .sum(),
            MediatorDistModel::Continuous(models) => self.delta_hat(0.0, models[0].mean_at(x), x),
        }
    }

    pub fn mediator_density(&self, m: f64, g: u8, x: &[f64]) -> Result<f64> {
        self.mediator_dist.density(m, g, x)
    }

    /// `f_hat(G = g, M = m | x) = P_hat(G = g | x) * f_hat(m | g, x)`, with the
    /// propensity clipped at `clip_level` and the mediator density floored at
    /// [`DENSITY_FLOOR`]. The flag reports whether the floor was hit.
    pub fn joint_density(&self, g: u8, m: f64, x: &[f64]) -> Result<(f64, bool)> {
        let pi = self.propensity_clipped(x);
        let pg = if g == 1 { pi } else { 1.0 - pi };
        let f = self.mediator_density(m, g, x)?;
        let floored = f < DENSITY_FLOOR;
        Ok((pg * f.max(DENSITY_FLOOR), floored))
    }

    pub fn statuses(&self) -> Vec<ModelStatus> {
        let logit = |name: &str, m: &FittedLogisticModel| ModelStatus {
            model: name.to_string(),
            converged: m.converged,
            iterations: m.iterations,
            regularized: false,
        };
        let mut out = vec![
            logit("propensity", &self.propensity),
            logit("pseudo_propensity", &self.pseudo_propensity),
            ModelStatus {
                model: "outcome_change".into(),
                converged: true,
                iterations: 0,
                regularized: self.outcome_change.regularized,
            },
        ];
        match &self.mediator_dist {
            MediatorDistModel::Continuous(models) => {
                for (g, m) in models.iter().enumerate() {
                    out.push(ModelStatus {
                        model: format!("mediator_g{g}"),
                        converged: true,
                        iterations: 0,
                        regularized: m.mean.regularized,
                    });
                }
            }
            MediatorDistModel::Discrete(groups) => {
                for (g, probs) in groups.iter().enumerate() {
                    for (k, lm) in probs.models().iter().enumerate() {
                        let level = if probs.levels() == 2 { 1 } else { k };
                        let (converged, iterations) = match lm {
                            LevelModel::Logistic(m) => (m.converged, m.iterations),
                            LevelModel::Constant(_) => (true, 0),
                        };
                        out.push(ModelStatus {
                            model: format!("mediator_g{g}_level{level}"),
                            converged,
                            iterations,
                            regularized: false,
                        });
                    }
                }
            }
        }
        out
    }
}

fn fit_level_model(
    data: &ObservationalDataset,
    rows: &[usize],
    spec: &DesignSpec,
    level: usize,
) -> Result<LevelModel> {
    let y: Vec<f64> = rows
        .iter()
        .map(|&i| if data.mediator()[i] == level as f64 { 1.0 } else { 0.0 })
        .collect();
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 {
        return Ok(LevelModel::Constant(0.0));
    }
    if ones == y.len() {
        return Ok(LevelModel::Constant(1.0));
    }
    let src = RowSubset {
        data,
        rows,
        mediator_shift: 0.0,
    };
    let design = build_design(&src, spec, Overrides::none())?;
    Ok(LevelModel::Logistic(fit_logistic(spec, &design, &y, IrlsOptions::default())?))
}

fn fit_mediator_dist(data: &ObservationalDataset, spec: &DesignSpec) -> Result<MediatorDistModel> {
    let rows = [data.group_rows(0), data.group_rows(1)];
    match data.mediator_kind() {
        MediatorKind::Continuous => {
            let fit_group = |g: usize| -> Result<GaussianMediatorModel> {
                let src = RowSubset {
                    data,
                    rows: &rows[g],
                    mediator_shift: 0.0,
                };
                let design = build_design(&src, spec, Overrides::none())?;
                let y: Vec<f64> = rows[g].iter().map(|&i| data.mediator()[i]).collect();
                let mean = fit_ols(spec, &design, &y)?;
                let sd = mean.residual_variance.sqrt();
                if !(sd > 0.0) {
                    return Err(Error::DegenerateSample(format!(
                        "mediator residual sd is zero in group {g}"
                    )));
                }
                Ok(GaussianMediatorModel { mean, sd })
            };
            Ok(MediatorDistModel::Continuous([fit_group(0)?, fit_group(1)?]))
        }
        MediatorKind::Discrete { levels } => {
            let fit_group = |g: usize| -> Result<LevelProbabilities> {
                let models = if levels == 2 {
                    vec![fit_level_model(data, &rows[g], spec, 1)?]
                } else {
                    (0..levels)
                        .map(|k| fit_level_model(data, &rows[g], spec, k))
                        .collect::<Result<Vec<_>>>()?
                };
                Ok(LevelProbabilities { levels, models })
            };
            Ok(MediatorDistModel::Discrete([fit_group(0)?, fit_group(1)?]))
        }
    }
}

/// Fits every working model on `data`.
pub fn fit_nuisances(data: &ObservationalDataset, specs: &NuisanceSpecs, clip_level: f64) -> Result<NuisanceSet> {
    if !(clip_level > 0.0 && clip_level < 0.5) {
        return Err(Error::Config(format!("clip_level must lie in (0, 0.5), got {clip_level}")));
    }
    specs.validate(data.n_covariates())?;
    let g: Vec<f64> = data.treatment().iter().map(|&v| v as f64).collect();

    let design = build_design(data, &specs.propensity, Overrides::none()).map_err(Error::nuisance("propensity"))?;
    let propensity = fit_logistic(&specs.propensity, &design, &g, IrlsOptions::default())
        .map_err(Error::nuisance("propensity"))?;

    let design = build_design(data, &specs.pseudo_propensity, Overrides::none())
        .map_err(Error::nuisance("pseudo_propensity"))?;
    let pseudo_propensity = fit_logistic(&specs.pseudo_propensity, &design, &g, IrlsOptions::default())
        .map_err(Error::nuisance("pseudo_propensity"))?;

    let design =
        build_design(data, &specs.outcome_change, Overrides::none()).map_err(Error::nuisance("outcome_change"))?;
    let outcome_change =
        fit_ols(&specs.outcome_change, &design, data.delta_y()).map_err(Error::nuisance("outcome_change"))?;

    let mediator_dist = fit_mediator_dist(data, &specs.mediator).map_err(Error::nuisance("mediator"))?;

    Ok(NuisanceSet {
        propensity,
        pseudo_propensity,
        outcome_change,
        mediator_dist,
        clip_level,
        specs: specs.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSupport {
    pub g: u8,
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_counts: Option<Vec<usize>>,
}

/// Overlap and positivity diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub clip_level: f64,
    pub n_units: usize,
    pub propensity_min: f64,
    pub propensity_max: f64,
    pub pseudo_propensity_min: f64,
    pub pseudo_propensity_max: f64,
    /// Pseudo-odds over propensity odds, a proxy for `f(m|1,x) / f(m|0,x)`.
    pub density_ratio_min: f64,
    pub density_ratio_max: f64,
    pub clipped_propensity: usize,
    pub clipped_pseudo_propensity: usize,
    pub clipped_units: usize,
    pub clipped_fraction: f64,
    pub mediator_support: Vec<GroupSupport>,
    pub models: Vec<ModelStatus>,
    pub warnings: Vec<String>,
}

pub fn overlap_diagnostics(data: &ObservationalDataset, nuisances: &NuisanceSet) -> OverlapReport {
    let n = data.len();
    let (mut pmin, mut pmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut qmin, mut qmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut clip_p, mut clip_q, mut clip_any) = (0, 0, 0);
    for i in 0..n {
        let x = data.covariates(i);
        let m = data.mediator()[i];
        let p = nuisances.propensity(x);
        let q = nuisances.pseudo_propensity(m, x);
        pmin = pmin.min(p);
        pmax = pmax.max(p);
        qmin = qmin.min(q);
        qmax = qmax.max(q);
        let (po, pc) = odds_from_probability(p, nuisances.clip_level);
        let (qo, qc) = odds_from_probability(q, nuisances.clip_level);
        let r = qo / po;
        rmin = rmin.min(r);
        rmax = rmax.max(r);
        clip_p += pc as usize;
        clip_q += qc as usize;
        clip_any += (pc || qc) as usize;
    }
    let mediator_support = [0u8, 1]
        .iter()
        .map(|&g| {
            let vals: Vec<f64> = data.group_rows(g).iter().map(|&i| data.mediator()[i]).collect();
            let level_counts = match data.mediator_kind() {
                MediatorKind::Discrete { levels } => {
                    let mut c = vec![0usize; levels];
                    for v in &vals {
                        c[*v as usize] += 1;
                    }
                    Some(c)
                }
                MediatorKind::Continuous => None,
            };
            GroupSupport {
                g,
                n: vals.len(),
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: crate::numeric::fmean(&vals),
                level_counts,
            }
        })
        .collect();
    let clipped_fraction = clip_any as f64 / n as f64;
    let models = nuisances.statuses();
    let mut warnings = Vec::new();
    if clipped_fraction > 0.05 {
        warnings.push(format!(
            "{:.1}% of units have clipped propensity or pseudo-propensity at level {}",
            100.0 * clipped_fraction,
            nuisances.clip_level
        ));
    }
    for s in &models {
        if !s.converged {
            warnings.push(format!("{} did not converge after {} iterations", s.model, s.iterations));
        }
        if s.regularized {
            warnings.push(format!("{} needed ridge regularization (near-collinear design)", s.model));
        }
    }
    OverlapReport {
        clip_level: nuisances.clip_level,
        n_units: n,
        propensity_min: pmin,
        propensity_max: pmax,
        pseudo_propensity_min: qmin,
        pseudo_propensity_max: qmax,
        density_ratio_min: rmin,
        density_ratio_max: rmax,
        clipped_propensity: clip_p,
        clipped_pseudo_propensity: clip_q,
        clipped_units: clip_any,
        clipped_fraction,
        mediator_support,
        models,
        warnings,
    }
}

/// Mode of a Gaussian mediator model, `1 / (sd * sqrt(2 pi))`.
pub fn gaussian_mode_density(sd: f64) -> f64 {
    1.0 / (sd * SQRT_2PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::Term;

    fn intercept() -> DesignSpec {
        DesignSpec::new(vec![Term::intercept()]).unwrap()
    }

    #[test]
    fn odds_arithmetic() {
        assert_eq!(odds_from_probability(0.5, 0.01), (1.0, false));
        let (o, clipped) = odds_from_probability(0.999, 0.01);
        assert!((o - 99.0).abs() < 1e-10 && clipped);
        assert!((odds_from_probability(0.8, 0.01).0 - 4.0).abs() < 1e-12);
        assert!((odds_from_probability(0.2, 0.01).0 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn binary_level_probabilities_complement() {
        let lp = LevelProbabilities {
            levels: 2,
            models: vec![LevelModel::Logistic(FittedLogisticModel::from_coefficients(
                intercept(),
                vec![crate::numeric::logit(0.3)],
            ))],
        };
        assert!((lp.probability(0, &[]) - 0.7).abs() < 1e-12);
        assert!((lp.probabilities(&[]).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_vs_rest_renormalizes() {
        let lp = LevelProbabilities {
            levels: 3,
            models: vec![
                LevelModel::Constant(0.2),
                LevelModel::Constant(0.5),
                LevelModel::Constant(0.5),
            ],
        };
        let p = lp.probabilities(&[]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p[0] - 0.2 / 1.2).abs() < 1e-15);
    }

    #[test]
    fn gaussian_mode() {
        let mean = crate::model_core::FittedLinearModel {
            spec: intercept(),
            coefficients: vec![1.5],
            residual_variance: 4.0,
            covariance: nalgebra::DMatrix::zeros(1, 1),
            n_obs: 10,
            regularized: false,
        };
        let m = GaussianMediatorModel { mean, sd: 2.0 };
        assert!((m.density(1.5, &[]) - gaussian_mode_density(2.0)).abs() < 1e-15);
    }

    #[test]
    fn spec_validation_rejects_treatment_in_propensity() {
        let mut specs = NuisanceSpecs::defaults(2);
        specs.propensity = DesignSpec::parse(&["1", "G"], &[]).unwrap();
        assert!(matches!(specs.validate(2).unwrap_err(), Error::Schema(_)));
    }
}
