//! Controlled effects `bar_tau(g, m) = E{Y1(g, m) - Y0(0) | G = 1}` and the
//! controlled direct effect curve `tau_DE(m) = bar_tau(1, m) - bar_tau(0, m)`.
//!
//! A discrete mediator uses the indicator `I(M = m)` in the influence
//! function. A continuous mediator replaces it with `K_h(M - m)` and takes
//! `delta_hat(g, m, x)` from a degree-two local polynomial fitted within
//! group `g`. No kernel bias correction is applied.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{MediatorKind, ObservationalDataset, RowSubset};
use crate::error::{Error, Result};
use crate::model_core::{fit_local_polynomial, KernelConfig, KernelKind};
use crate::natural_effects::Z_95;
use crate::numeric::{fsum, two_sided_p};
use crate::nuisance::NuisanceSet;

/// Local polynomial degree in `M - m`.
pub const LOCAL_DEGREE: usize = 2;

#[derive(Debug, Clone, Serialize)]
pub struct ControlledEstimate {
    pub g: u8,
    pub m: f64,
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    #[serde(skip)]
    pub influence_values: Vec<f64>,
    /// Present for a continuous mediator only.
    pub bandwidth: Option<f64>,
    /// Units at the level (discrete) or kernel weights normalized to peak
    /// one (continuous), within group `g`.
    pub effective_n: f64,
    /// Units whose mediator density hit the floor.
    pub floored_density: usize,
}

impl ControlledEstimate {
    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }

    pub fn estimating_equation_residual(&self) -> f64 {
        fsum(self.influence_values.iter().copied()) / self.influence_values.len() as f64
    }
}

fn se_from_influence(infl: &[f64]) -> f64 {
    let n = infl.len() as f64;
    (fsum(infl.iter().map(|v| v * v)) / (n * n)).sqrt()
}

/// Solves `P_n phi_hat(g, m) = 0` given per-unit localization weights
/// (indicator or kernel times `pi_hat / f_hat(G=g, M=m | X)`) and
/// `delta_hat(g, m, X_i)`.
fn solve_controlled(
    data: &ObservationalDataset,
    weights: &[f64],
    delta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n1 = data.n_treated();
    if n1 == 0 {
        return Err(Error::EmptyGroup("no treated units".into()));
    }
    let share = n1 as f64 / data.len() as f64;
    let g = data.treatment();
    let dy = data.delta_y();
    let resid: Vec<f64> = (0..data.len())
        .map(|i| if weights[i] != 0.0 { weights[i] * (dy[i] - delta[i]) } else { 0.0 })
        .collect();
    let total = fsum((0..data.len()).map(|i| resid[i] + if g[i] == 1 { delta[i] } else { 0.0 }));
    let point = total / n1 as f64;
    let infl = (0..data.len())
        .map(|i| {
            let treated = if g[i] == 1 { delta[i] - point } else { 0.0 };
            (resid[i] + treated) / share
        })
        .collect();
    Ok((point, infl))
}

fn finish(
    g: u8,
    m: f64,
    point: f64,
    influence_values: Vec<f64>,
    bandwidth: Option<f64>,
    effective_n: f64,
    floored_density: usize,
) -> ControlledEstimate {
    let se = se_from_influence(&influence_values);
    ControlledEstimate {
        g,
        m,
        point,
        se,
        ci_low: point - Z_95 * se,
        ci_high: point + Z_95 * se,
        influence_values,
        bandwidth,
        effective_n,
        floored_density,
    }
}

/// `bar_tau_hat(g, m)` for a discrete mediator level.
pub fn bar_tau_discrete(
    g: u8,
    level: f64,
    data: &ObservationalDataset,
    nuisances: &NuisanceSet,
) -> Result<ControlledEstimate> {
    let levels = match data.mediator_kind() {
        MediatorKind::Discrete { levels } => levels,
        MediatorKind::Continuous => {
            return Err(Error::Config("discrete controlled effect requested for a continuous mediator".into()))
        }
    };
    if level.fract() != 0.0 || level < 0.0 || level >= levels as f64 {
        return Err(Error::LevelOutOfRange { level, levels });
    }
    let gs = data.treatment();
    let ms = data.mediator();
    let group_count = gs.iter().filter(|&&v| v == g).count();
    let cell_count = (0..data.len()).filter(|&i| gs[i] == g && ms[i] == level).count();
    if cell_count == 0 {
        return Err(Error::UnsupportedLevel {
            g,
            m: level,
            group_count,
            cell_count,
        });
    }
    let mut floored = 0;
    let mut weights = vec![0.0; data.len()];
    let mut delta = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let x = data.covariates(i);
        delta.push(nuisances.delta_hat(g as f64, level, x));
        if gs[i] == g && ms[i] == level {
            let (joint, hit) = nuisances.joint_density(g, level, x)?;
            floored += hit as usize;
            weights[i] = nuisances.propensity_clipped(x) / joint;
        }
    }
    let (point, infl) = solve_controlled(data, &weights, &delta)?;
    Ok(finish(g, level, point, infl, None, cell_count as f64, floored))
}

/// Resolves the bandwidth for group `g` (Silverman on the group's mediator
/// values unless fixed).
pub fn group_bandwidth(g: u8, data: &ObservationalDataset, kernel: &KernelConfig) -> Result<f64> {
    let values: Vec<f64> = data.group_rows(g).iter().map(|&i| data.mediator()[i]).collect();
    kernel.resolve(&values)
}

/// `bar_tau_hat_h(g, m)` for a continuous mediator.
pub fn bar_tau_continuous(
    g: u8,
    m: f64,
    data: &ObservationalDataset,
    nuisances: &NuisanceSet,
    kernel: &KernelConfig,
) -> Result<ControlledEstimate> {
    let h = group_bandwidth(g, data, kernel)?;
    bar_tau_continuous_at(g, m, data, nuisances, kernel.kernel, h)
}

/// `bar_tau_hat_h(g, m)` at an explicit bandwidth.
pub fn bar_tau_continuous_at(
    g: u8,
    m: f64,
    data: &ObservationalDataset,
    nuisances: &NuisanceSet,
    kernel: KernelKind,
    h: f64,
) -> Result<ControlledEstimate> {
    if data.mediator_kind() != MediatorKind::Continuous {
        return Err(Error::Config("kernel-smoothed controlled effect requested for a discrete mediator".into()));
    }
    let rows = data.group_rows(g);
    let src = RowSubset {
        data,
        rows: &rows,
        mediator_shift: m,
    };
    let response: Vec<f64> = rows.iter().map(|&i| data.delta_y()[i]).collect();
    let local = fit_local_polynomial(
        &src,
        &response,
        m,
        LOCAL_DEGREE,
        kernel,
        h,
        &nuisances.specs.mediator,
    )?;

    let gs = data.treatment();
    let ms = data.mediator();
    let mut floored = 0;
    let mut weights = vec![0.0; data.len()];
    let mut delta = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let x = data.covariates(i);
        delta.push(local.predict(x));
        if gs[i] == g {
            let k = kernel.scaled(ms[i] - m, h);
            if k > 0.0 {
                let (joint, hit) = nuisances.joint_density(g, m, x)?;
                floored += hit as usize;
                weights[i] = k * nuisances.propensity_clipped(x) / joint;
            }
        }
    }
    let (point, infl) = solve_controlled(data, &weights, &delta)?;
    Ok(finish(g, m, point, infl, Some(h), local.effective_n, floored))
}

/// Dispatches on the mediator kind.
pub fn bar_tau(
    g: u8,
    m: f64,
    data: &ObservationalDataset,
    nuisances: &NuisanceSet,
    kernel: &KernelConfig,
) -> Result<ControlledEstimate> {
    match data.mediator_kind() {
        MediatorKind::Discrete { .. } => bar_tau_discrete(g, m, data, nuisances),
        MediatorKind::Continuous => bar_tau_continuous(g, m, data, nuisances, kernel),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CdePoint {
    pub m: f64,
    pub treated: ControlledEstimate,
    pub control: ControlledEstimate,
    pub cde: f64,
    pub se_cde: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    /// Pointwise significance at the 5% level.
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedPoint {
    pub m: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CdeCurve {
    pub points: Vec<CdePoint>,
    pub skipped: Vec<SkippedPoint>,
    /// Bandwidths `(h for the first arm, h for the second arm)`.
    pub bandwidth: Option<(f64, f64)>,
    /// Arms contrasted: `bar_tau(arms.0, m) - bar_tau(arms.1, m)`.
    pub arms: (u8, u8),
}

impl CdeCurve {
    /// Maximal runs of consecutive significant grid points, as `(m_lo, m_hi)`.
    pub fn significant_regions(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut run: Option<(f64, f64)> = None;
        for p in &self.points {
            match (p.significant, run) {
                (true, None) => run = Some((p.m, p.m)),
                (true, Some((lo, _))) => run = Some((lo, p.m)),
                (false, Some(r)) => {
                    out.push(r);
                    run = None;
                }
                (false, None) => {}
            }
        }
        out.extend(run);
        out
    }
}

fn contrast_point(m: f64, first: ControlledEstimate, second: ControlledEstimate) -> CdePoint {
    let infl: Vec<f64> = first
        .influence_values
        .iter()
        .zip(&second.influence_values)
        .map(|(a, b)| a - b)
        .collect();
    let cde = first.point - second.point;
    let se = se_from_influence(&infl);
    let p_value = if se > 0.0 { two_sided_p(cde / se) } else if cde == 0.0 { 1.0 } else { 0.0 };
    CdePoint {
        m,
        treated: first,
        control: second,
        cde,
        se_cde: se,
        ci_low: cde - Z_95 * se,
        ci_high: cde + Z_95 * se,
        p_value,
        significant: p_value < 0.05,
    }
}

/// `tau_DE_hat(m)` over `grid`.
pub fn cde_curve(
    grid: &[f64],
    data: &ObservationalDataset,
    nuisances: &NuisanceSet,
    kernel: &KernelConfig,
) -> Result<CdeCurve> {
    contrast_curve(grid, (1, 0), data, nuisances, kernel)
}

/// `bar_tau_hat(arms.0, m) - bar_tau_hat(arms.1, m)` over `grid`. Grid
/// points without support are skipped and recorded.
pub fn contrast_curve(
    grid: &[f64],
    arms: (u8, u8),
    data: &ObservationalDataset,
    nuisances: &NuisanceSet,
    kernel: &KernelConfig,
) -> Result<CdeCurve> {
    if grid.is_empty() {
        return Err(Error::Config("CDE grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("CDE grid must be strictly increasing".into()));
    }
    let bandwidth = match data.mediator_kind() {
        MediatorKind::Continuous => Some((
            group_bandwidth(arms.0, data, kernel)?,
            group_bandwidth(arms.1, data, kernel)?,
        )),
        MediatorKind::Discrete { .. } => None,
    };
    let support: Vec<(f64, f64)> = [arms.0, arms.1]
        .iter()
        .map(|&g| {
            let rows = data.group_rows(g);
            let vals = rows.iter().map(|&i| data.mediator()[i]);
            let lo = vals.clone().fold(f64::INFINITY, f64::min);
            let hi = vals.fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect();

    let one = |g: u8, h: Option<f64>, m: f64| match (data.mediator_kind(), h) {
        (MediatorKind::Continuous, Some(h)) => bar_tau_continuous_at(g, m, data, nuisances, kernel.kernel, h),
        _ => bar_tau_discrete(g, m, data, nuisances),
    };
    let results: Vec<std::result::Result<CdePoint, SkippedPoint>> = grid
        .par_iter()
        .map(|&m| {
            if support.iter().any(|&(lo, hi)| m < lo || m > hi) {
                return Err(SkippedPoint {
                    m,
                    reason: "outside the observed mediator support of a group".into(),
                });
            }
            let first = one(arms.0, bandwidth.map(|b| b.0), m);
            let second = one(arms.1, bandwidth.map(|b| b.1), m);
            match (first, second) {
                (Ok(a), Ok(b)) => Ok(contrast_point(m, a, b)),
                (Err(e), _) | (_, Err(e)) => Err(SkippedPoint { m, reason: e.to_string() }),
            }
        })
        .collect();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(p) => points.push(p),
            Err(s) => skipped.push(s),
        }
    }
    Ok(CdeCurve {
        points,
        skipped,
        bandwidth,
        arms,
    })
}

pub const CURVE_CSV_HEADER: [&str; 13] = [
    "m",
    "tau1",
    "se1",
    "tau0",
    "se0",
    "cde",
    "se_cde",
    "ci_low",
    "ci_high",
    "significant",
    "effective_n1",
    "effective_n0",
    "bandwidth",
];

/// Writes the curve as CSV. The `bandwidth` column holds the bandwidth of
/// the first (treated) arm and is empty for a discrete mediator.
pub fn write_curve_csv<W: Write>(curve: &CdeCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io {
        path: "cde_curve.csv".into(),
        source: std::io::Error::other(e),
    };
    w.write_record(CURVE_CSV_HEADER).map_err(io)?;
    for p in &curve.points {
        let bw = curve.bandwidth.map(|b| b.0.to_string()).unwrap_or_default();
        w.write_record([
            p.m.to_string(),
            p.treated.point.to_string(),
            p.treated.se.to_string(),
            p.control.point.to_string(),
            p.control.se.to_string(),
            p.cde.to_string(),
            p.se_cde.to_string(),
            p.ci_low.to_string(),
            p.ci_high.to_string(),
            p.significant.to_string(),
            p.treated.effective_n.to_string(),
            p.control.effective_n.to_string(),
            bw,
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "cde_curve.csv".into(),
        source: e,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(g: u8, point: f64, infl: Vec<f64>) -> ControlledEstimate {
        finish(g, 0.0, point, infl, None, 1.0, 0)
    }

    #[test]
    fn contrast_is_antisymmetric() {
        let a = est(1, 1.25, vec![0.1, -0.3, 0.2]);
        let b = est(0, 0.5, vec![0.05, 0.2, -0.25]);
        let ab = contrast_point(0.0, a.clone(), b.clone());
        let ba = contrast_point(0.0, b, a);
        assert_eq!(ab.cde, -ba.cde);
        assert_eq!(ab.se_cde, ba.se_cde);
    }

    #[test]
    fn significant_regions_are_runs() {
        let mk = |m: f64, sig: bool| CdePoint {
            m,
            treated: est(1, 0.0, vec![0.0]),
            control: est(0, 0.0, vec![0.0]),
            cde: 0.0,
            se_cde: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            p_value: if sig { 0.01 } else { 0.5 },
            significant: sig,
        };
        let curve = CdeCurve {
            points: vec![mk(0.0, false), mk(0.1, true), mk(0.2, true), mk(0.3, false), mk(0.4, true)],
            skipped: vec![],
            bandwidth: None,
            arms: (1, 0),
        };
        assert_eq!(curve.significant_regions(), vec![(0.1, 0.2), (0.4, 0.4)]);
    }
}
