//! Influence-function estimators of `tau(1,1)`, `tau(0,0)`, `tau(0,1)` and
//! the natural indirect, direct and total effects on the treated.
//!
//! Each `tau(g, g*)` solves `P_n phi_hat(g, g*) = 0` with `P(G = 1)` replaced
//! by `P_n(G)`, so the fitted influence values have mean zero up to
//! rounding. Standard errors are `sqrt(P_n(phi_hat^2) / n)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::numeric::{fsum, two_sided_p};
use crate::nuisance::NuisanceSet;

/// Normal quantile used for 95% intervals.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Tau11,
    Tau00,
    Tau01,
    Nie,
    Nde,
    Te,
}

impl Estimand {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimand::Tau11 => "tau11",
            Estimand::Tau00 => "tau00",
            Estimand::Tau01 => "tau01",
            Estimand::Nie => "NIE",
            Estimand::Nde => "NDE",
            Estimand::Te => "TE",
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EffectEstimate {
    pub estimand: Estimand,
    pub point: f64,
    #[serde(skip)]
    pub influence_values: Vec<f64>,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub n_treated: usize,
    /// Set when every influence value is zero, so `se = 0`.
    pub degenerate_se: bool,
}

impl EffectEstimate {
    /// Builds the estimate from fitted influence values; `se = sqrt(mean(phi^2) / n)`.
    pub fn from_influence(estimand: Estimand, point: f64, influence_values: Vec<f64>, n_treated: usize) -> Self {
        let n = influence_values.len() as f64;
        let se = (fsum(influence_values.iter().map(|v| v * v)) / (n * n)).sqrt();
        let mut est = Self::from_se(estimand, point, se, n_treated);
        est.influence_values = influence_values;
        est
    }

    /// Builds the estimate from an externally computed standard error.
    pub fn from_se(estimand: Estimand, point: f64, se: f64, n_treated: usize) -> Self {
        let degenerate_se = se == 0.0;
        let p_value = if degenerate_se {
            if point == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            two_sided_p(point / se)
        };
        Self {
            estimand,
            point,
            influence_values: Vec::new(),
            se,
            ci_low: point - Z_95 * se,
            ci_high: point + Z_95 * se,
            p_value,
            n_treated,
            degenerate_se,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }

    /// `*`, `**`, `***` at 0.05, 0.01, 0.001.
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_value)
    }

    /// `P_n phi_hat`, zero up to rounding at the returned point.
    pub fn estimating_equation_residual(&self) -> f64 {
        fsum(self.influence_values.iter().copied()) / self.influence_values.len() as f64
    }

    /// `self - other`, with influence values differenced elementwise.
    pub fn difference(&self, other: &EffectEstimate, estimand: Estimand) -> EffectEstimate {
        let infl = self
            .influence_values
            .iter()
            .zip(&other.influence_values)
            .map(|(a, b)| a - b)
            .collect();
        EffectEstimate::from_influence(estimand, self.point - other.point, infl, self.n_treated)
    }
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Per-unit nuisance evaluations entering the estimating equations.
#[derive(Debug, Clone)]
pub struct NuisanceValues {
    /// Clipped `pi_hat(X) / (1 - pi_hat(X))`.
    pub propensity_odds: Vec<f64>,
    /// Clipped `varpi_hat(M, X) / (1 - varpi_hat(M, X))`.
    pub pseudo_odds: Vec<f64>,
    /// `nu_hat(0, X)`.
    pub nu0: Vec<f64>,
    /// `delta_hat(0, M, X)`.
    pub delta0: Vec<f64>,
    pub clipped_propensity: usize,
    pub clipped_pseudo: usize,
}

impl NuisanceValues {
    pub fn evaluate(data: &ObservationalDataset, nuisances: &NuisanceSet) -> Self {
        let n = data.len();
        let mut v = NuisanceValues {
            propensity_odds: Vec::with_capacity(n),
            pseudo_odds: Vec::with_capacity(n),
            nu0: Vec::with_capacity(n),
            delta0: Vec::with_capacity(n),
            clipped_propensity: 0,
            clipped_pseudo: 0,
        };
        for i in 0..n {
            let x = data.covariates(i);
            let m = data.mediator()[i];
            let (po, pc) = nuisances.propensity_odds_checked(x);
            let (qo, qc) = nuisances.pseudo_propensity_odds_checked(m, x);
            v.propensity_odds.push(po);
            v.pseudo_odds.push(qo);
            v.clipped_propensity += pc as usize;
            v.clipped_pseudo += qc as usize;
            v.nu0.push(nuisances.nu_hat(x));
            v.delta0.push(nuisances.delta_hat(0.0, m, x));
        }
        v
    }

    fn check_len(&self, n: usize) -> Result<()> {
        let lens = [
            self.propensity_odds.len(),
            self.pseudo_odds.len(),
            self.nu0.len(),
            self.delta0.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Data(format!("nuisance values have lengths {lens:?}, dataset has {n}")));
        }
        Ok(())
    }
}

fn treated_share(data: &ObservationalDataset) -> Result<(usize, f64)> {
    let n1 = data.n_treated();
    if n1 == 0 {
        return Err(Error::EmptyGroup("no treated units".into()));
    }
    Ok((n1, n1 as f64 / data.len() as f64))
}

/// Solves `P_n[(A_i + G_i (b_i - tau)) / P_n(G)] = 0` for `tau`, where
/// `A_i` is the inverse-weighted control residual and `b_i` the imputed
/// treated-arm value.
fn solve_augmented(
    data: &ObservationalDataset,
    estimand: Estimand,
    control_term: impl Fn(usize) -> f64,
    imputed: &[f64],
) -> Result<EffectEstimate> {
    let (n1, share) = treated_share(data)?;
    let g = data.treatment();
    let a: Vec<f64> = (0..data.len()).map(|i| if g[i] == 0 { control_term(i) } else { 0.0 }).collect();
    let total = fsum((0..data.len()).map(|i| a[i] + if g[i] == 1 { imputed[i] } else { 0.0 }));
    let point = total / n1 as f64;
    let infl = (0..data.len())
        .map(|i| {
            let treated = if g[i] == 1 { imputed[i] - point } else { 0.0 };
            (a[i] + treated) / share
        })
        .collect();
    Ok(EffectEstimate::from_influence(estimand, point, infl, n1))
}

/// `tau_hat(1,1) = P_n(G dY) / P_n(G)`.
pub fn tau_11(data: &ObservationalDataset) -> Result<EffectEstimate> {
    let (n1, share) = treated_share(data)?;
    let g = data.treatment();
    let dy = data.delta_y();
    let point = fsum((0..data.len()).filter(|&i| g[i] == 1).map(|i| dy[i])) / n1 as f64;
    let infl = (0..data.len())
        .map(|i| if g[i] == 1 { (dy[i] - point) / share } else { 0.0 })
        .collect();
    Ok(EffectEstimate::from_influence(Estimand::Tau11, point, infl, n1))
}

pub fn tau_00(data: &ObservationalDataset, nuisances: &NuisanceSet) -> Result<EffectEstimate> {
    tau_00_with(data, &NuisanceValues::evaluate(data, nuisances))
}

/// `tau_hat(0,0)` from explicit nuisance values.
pub fn tau_00_with(data: &ObservationalDataset, values: &NuisanceValues) -> Result<EffectEstimate> {
    values.check_len(data.len())?;
    let dy = data.delta_y();
    solve_augmented(
        data,
        Estimand::Tau00,
        |i| values.propensity_odds[i] * (dy[i] - values.nu0[i]),
        &values.nu0,
    )
}

pub fn tau_01(data: &ObservationalDataset, nuisances: &NuisanceSet) -> Result<EffectEstimate> {
    tau_01_with(data, &NuisanceValues::evaluate(data, nuisances))
}

/// `tau_hat(0,1)` from explicit nuisance values.
pub fn tau_01_with(data: &ObservationalDataset, values: &NuisanceValues) -> Result<EffectEstimate> {
    values.check_len(data.len())?;
    let dy = data.delta_y();
    solve_augmented(
        data,
        Estimand::Tau01,
        |i| values.pseudo_odds[i] * (dy[i] - values.delta0[i]),
        &values.delta0,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct NaturalEffects {
    pub nie: EffectEstimate,
    pub nde: EffectEstimate,
    pub te: EffectEstimate,
    pub tau11: EffectEstimate,
    pub tau00: EffectEstimate,
    pub tau01: EffectEstimate,
    pub clipped_propensity: usize,
    pub clipped_pseudo: usize,
}

impl NaturalEffects {
    pub fn effects(&self) -> [&EffectEstimate; 3] {
        [&self.nie, &self.nde, &self.te]
    }

    pub fn components(&self) -> [&EffectEstimate; 3] {
        [&self.tau11, &self.tau00, &self.tau01]
    }
}

pub fn natural_effects(data: &ObservationalDataset, nuisances: &NuisanceSet) -> Result<NaturalEffects> {
    natural_effects_with(data, &NuisanceValues::evaluate(data, nuisances))
}

/// NIE = tau(0,1) - tau(0,0), NDE = tau(1,1) - tau(0,1), TE = NIE + NDE.
///
/// TE is assembled as the sum of the two parts (algebraically equal to
/// tau(1,1) - tau(0,0)) so the decomposition holds exactly in floating point.
pub fn natural_effects_with(data: &ObservationalDataset, values: &NuisanceValues) -> Result<NaturalEffects> {
    let tau11 = tau_11(data)?;
    let tau00 = tau_00_with(data, values)?;
    let tau01 = tau_01_with(data, values)?;
    let nie = tau01.difference(&tau00, Estimand::Nie);
    let nde = tau11.difference(&tau01, Estimand::Nde);
    let te_infl = nie
        .influence_values
        .iter()
        .zip(&nde.influence_values)
        .map(|(a, b)| a + b)
        .collect();
    let te = EffectEstimate::from_influence(Estimand::Te, nie.point + nde.point, te_infl, tau11.n_treated);
    Ok(NaturalEffects {
        nie,
        nde,
        te,
        tau11,
        tau00,
        tau01,
        clipped_propensity: values.clipped_propensity,
        clipped_pseudo: values.clipped_pseudo,
    })
}
