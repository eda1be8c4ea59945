//! Monte Carlo harness: replications per `(setting, panel, n)` cell, summary
//! metrics (bias, average SE, SD, coverage) and report serialization.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::comparator::{regression_based, regression_controlled};
use super::dgp::{child_seed, generate, mix64, DgpConfig, DgpModel, Panel, Setting};
use super::truth::{compute_truths, OracleValue, TruthSet};
use crate::controlled_effects::{bar_tau_continuous, bar_tau_discrete};
use crate::error::{Error, Result};
use crate::model_core::KernelConfig;
use crate::natural_effects::{natural_effects, Z_95};
use crate::numeric::{fmean, fsum, sample_sd};
use crate::nuisance::{fit_nuisances, NuisanceSpecs, DEFAULT_CLIP_LEVEL};

pub const DEFAULT_ORACLE_DRAWS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    RegressionBased,
    Proposed,
}

impl Estimator {
    pub const ALL: [Estimator; 2] = [Estimator::RegressionBased, Estimator::Proposed];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::RegressionBased => "regression",
            Estimator::Proposed => "proposed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    TauIe,
    TauDe,
    Tau,
    BarTau10,
    BarTau00,
    TauDe0,
}

impl Target {
    pub const TABLE1: [Target; 3] = [Target::TauIe, Target::TauDe, Target::Tau];
    pub const TABLE2: [Target; 3] = [Target::BarTau10, Target::BarTau00, Target::TauDe0];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::TauIe => "tau_ie",
            Target::TauDe => "tau_de",
            Target::Tau => "tau",
            Target::BarTau10 => "bar_tau_1_0",
            Target::BarTau00 => "bar_tau_0_0",
            Target::TauDe0 => "tau_de_0",
        }
    }

    pub fn truth(self, t: &TruthSet) -> OracleValue {
        match self {
            Target::TauIe => t.tau_ie,
            Target::TauDe => t.tau_de,
            Target::Tau => t.tau,
            Target::BarTau10 => t.bar_tau_1_0,
            Target::BarTau00 => t.bar_tau_0_0,
            Target::TauDe0 => t.tau_de_0,
        }
    }

    pub fn in_table2(self) -> bool {
        Target::TABLE2.contains(&self)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_settings() -> Vec<Setting> {
    vec![Setting::Continuous, Setting::Binary]
}
fn default_panels() -> Vec<Panel> {
    vec![Panel::O, Panel::A, Panel::B]
}
fn default_sizes() -> Vec<usize> {
    vec![200, 1000, 5000]
}
fn default_replications() -> usize {
    1000
}
fn default_oracle_draws() -> usize {
    DEFAULT_ORACLE_DRAWS
}
fn default_clip() -> f64 {
    DEFAULT_CLIP_LEVEL
}
fn default_true() -> bool {
    true
}
fn default_one() -> f64 {
    1.0
}

/// Grid and options of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_settings")]
    pub settings: Vec<Setting>,
    #[serde(default = "default_panels")]
    pub panels: Vec<Panel>,
    #[serde(default = "default_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_oracle_draws")]
    pub oracle_draws: usize,
    #[serde(default = "default_clip")]
    pub clip_level: f64,
    /// Also estimate the controlled effects at `m = 0`.
    #[serde(default = "default_true")]
    pub controlled: bool,
    #[serde(default = "default_one")]
    pub mediator_scale: f64,
    #[serde(default)]
    pub mediator_curvature: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            settings: default_settings(),
            panels: default_panels(),
            sample_sizes: default_sizes(),
            replications: default_replications(),
            base_seed: 0,
            oracle_draws: DEFAULT_ORACLE_DRAWS,
            clip_level: DEFAULT_CLIP_LEVEL,
            controlled: true,
            mediator_scale: 1.0,
            mediator_curvature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub setting: Setting,
    pub panel: Panel,
    pub n: usize,
}

impl SimulationConfig {
    /// One cell, for quick runs.
    pub fn single(setting: Setting, panel: Panel, n: usize, replications: usize, base_seed: u64) -> Self {
        Self {
            settings: vec![setting],
            panels: vec![panel],
            sample_sizes: vec![n],
            replications,
            base_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.settings.is_empty() || self.panels.is_empty() || self.sample_sizes.is_empty() {
            return Err(Error::Config("simulation grid is empty".into()));
        }
        if !(self.clip_level > 0.0 && self.clip_level < 0.5) {
            return Err(Error::Config(format!("clip_level must lie in (0, 0.5), got {}", self.clip_level)));
        }
        for cell in self.cells() {
            self.dgp(cell, 0).validate()?;
        }
        Ok(())
    }

    /// Cells in table order: panel, then n, then setting.
    pub fn cells(&self) -> Vec<Cell> {
        let mut panels = self.panels.clone();
        panels.sort();
        panels.dedup();
        let mut sizes = self.sample_sizes.clone();
        sizes.sort();
        sizes.dedup();
        let mut settings = self.settings.clone();
        settings.sort();
        settings.dedup();
        let mut out = Vec::new();
        for &panel in &panels {
            for &n in &sizes {
                for &setting in &settings {
                    out.push(Cell { setting, panel, n });
                }
            }
        }
        out
    }

    pub fn model(&self, setting: Setting, panel: Panel) -> DgpModel {
        DgpModel {
            setting,
            panel,
            mediator_scale: self.mediator_scale,
            mediator_curvature: self.mediator_curvature,
        }
    }

    pub fn dgp(&self, cell: Cell, rep: usize) -> DgpConfig {
        DgpConfig {
            model: self.model(cell.setting, cell.panel),
            n: cell.n,
            seed: child_seed(self.base_seed, cell.setting, cell.panel, cell.n, rep),
        }
    }

    /// Oracle seed for a `(setting, panel)` pair.
    pub fn truth_seed(&self, setting: Setting, panel: Panel) -> u64 {
        child_seed(mix64(self.base_seed ^ 0x7472_7574_68), setting, panel, 0, 0)
    }
}

/// Point and SE of one estimator/estimand in one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub estimator: Estimator,
    pub target: Target,
    pub point: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub rep: usize,
    pub seed: u64,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub rep: usize,
    pub seed: u64,
    pub draws: Vec<Draw>,
    pub failures: Vec<Failure>,
}

/// Runs every estimator on one simulated sample. Failures are recorded
/// per stage so a controlled-effect failure leaves the natural effects in.
pub fn run_replication(config: &SimulationConfig, cell: Cell, rep: usize) -> Replication {
    let dgp = config.dgp(cell, rep);
    let mut out = Replication {
        rep,
        seed: dgp.seed,
        draws: Vec::new(),
        failures: Vec::new(),
    };
    let fail = |stage: &str, e: Error, out: &mut Replication| {
        out.failures.push(Failure {
            rep,
            seed: dgp.seed,
            stage: stage.to_string(),
            message: e.to_string(),
        })
    };
    let data = match generate(&dgp) {
        Ok(d) => d,
        Err(e) => {
            fail("generate", e, &mut out);
            return out;
        }
    };
    let push = |out: &mut Replication, estimator, target, point, se| {
        out.draws.push(Draw {
            estimator,
            target,
            point,
            se,
        })
    };

    match regression_based(&data) {
        Ok(r) => {
            for (t, e) in Target::TABLE1.into_iter().zip(r.effects()) {
                push(&mut out, Estimator::RegressionBased, t, e.point, e.se);
            }
        }
        Err(e) => fail("regression", e, &mut out),
    }
    let nuisances = match fit_nuisances(&data, &NuisanceSpecs::defaults(2), config.clip_level) {
        Ok(nu) => Some(nu),
        Err(e) => {
            fail("nuisance", e, &mut out);
            None
        }
    };
    if let Some(nu) = &nuisances {
        match natural_effects(&data, nu) {
            Ok(r) => {
                for (t, e) in Target::TABLE1.into_iter().zip(r.effects()) {
                    push(&mut out, Estimator::Proposed, t, e.point, e.se);
                }
            }
            Err(e) => fail("natural_effects", e, &mut out),
        }
    }
    if !config.controlled {
        return out;
    }
    match regression_controlled(&data, 0.0) {
        Ok(r) => {
            for (t, (point, se)) in Target::TABLE2.into_iter().zip([r.bar_tau_1, r.bar_tau_0, r.tau_de]) {
                push(&mut out, Estimator::RegressionBased, t, point, se);
            }
        }
        Err(e) => fail("regression_controlled", e, &mut out),
    }
    if let Some(nu) = &nuisances {
        let kernel = KernelConfig::default();
        let one = |g: u8| match cell.setting {
            Setting::Continuous => bar_tau_continuous(g, 0.0, &data, nu, &kernel),
            Setting::Binary => bar_tau_discrete(g, 0.0, &data, nu),
        };
        match (one(1), one(0)) {
            (Ok(t1), Ok(t0)) => {
                let diff: Vec<f64> = t1
                    .influence_values
                    .iter()
                    .zip(&t0.influence_values)
                    .map(|(a, b)| a - b)
                    .collect();
                let n = diff.len() as f64;
                let se = (fsum(diff.iter().map(|v| v * v)) / (n * n)).sqrt();
                push(&mut out, Estimator::Proposed, Target::BarTau10, t1.point, t1.se);
                push(&mut out, Estimator::Proposed, Target::BarTau00, t0.point, t0.se);
                push(&mut out, Estimator::Proposed, Target::TauDe0, t1.point - t0.point, se);
            }
            (Err(e), _) | (_, Err(e)) => fail("controlled_effects", e, &mut out),
        }
    }
    out
}

/// Bias, average SE, SD and coverage of one estimator/estimand in a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub estimator: Estimator,
    pub target: Target,
    pub truth: f64,
    pub bias: f64,
    pub avg_se: f64,
    pub sd: f64,
    pub cp: f64,
    /// Monte Carlo SE of the mean point estimate, `sd / sqrt(used)`.
    pub mc_se: f64,
    pub mean_point: f64,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    pub truths: TruthSet,
    pub metrics: Vec<Metric>,
    pub failures: Vec<Failure>,
    pub seeds: Vec<u64>,
}

impl CellReport {
    pub fn metric(&self, estimator: Estimator, target: Target) -> Option<&Metric> {
        self.metrics
            .iter()
            .find(|m| m.estimator == estimator && m.target == target)
    }

    /// Failures outside the controlled-effect stages.
    pub fn natural_effect_failures(&self) -> usize {
        self.failures
            .iter()
            .filter(|f| !f.stage.contains("controlled"))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub cells: Vec<CellReport>,
    pub version: String,
    /// Wall-clock time; not serialized so reports stay byte-identical.
    #[serde(skip)]
    pub runtime: Duration,
}

impl SimulationReport {
    pub fn cell(&self, setting: Setting, panel: Panel, n: usize) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.cell.setting == setting && c.cell.panel == panel && c.cell.n == n)
    }

    pub fn failure_count(&self) -> usize {
        self.cells.iter().map(|c| c.failures.len()).sum()
    }
}

/// Aggregates replications of a cell against its truths.
pub fn summarize(cell: Cell, truths: TruthSet, reps: &[Replication]) -> CellReport {
    let mut grouped: BTreeMap<(Estimator, Target), Vec<Draw>> = BTreeMap::new();
    for r in reps {
        for d in &r.draws {
            grouped.entry((d.estimator, d.target)).or_default().push(*d);
        }
    }
    let metrics = grouped
        .into_iter()
        .map(|((estimator, target), draws)| {
            let truth = target.truth(&truths).value;
            let points: Vec<f64> = draws.iter().map(|d| d.point).collect();
            let ses: Vec<f64> = draws.iter().map(|d| d.se).collect();
            let covered = draws
                .iter()
                .filter(|d| (d.point - Z_95 * d.se) <= truth && truth <= (d.point + Z_95 * d.se))
                .count();
            let used = draws.len();
            let mean_point = fmean(&points);
            let sd = sample_sd(&points);
            Metric {
                estimator,
                target,
                truth,
                bias: mean_point - truth,
                avg_se: fmean(&ses),
                sd,
                cp: covered as f64 / used as f64,
                mc_se: sd / (used as f64).sqrt(),
                mean_point,
                used,
            }
        })
        .collect();
    CellReport {
        cell,
        truths,
        metrics,
        failures: reps.iter().flat_map(|r| r.failures.iter().cloned()).collect(),
        seeds: reps.iter().map(|r| r.seed).collect(),
    }
}

/// Runs the whole grid. Replications run in parallel; results are collected
/// in replication order and reduced with exact sums, so the report does not
/// depend on the number of threads.
pub fn run_monte_carlo(config: &SimulationConfig) -> Result<SimulationReport> {
    config.validate()?;
    let start = Instant::now();
    let mut truths: BTreeMap<(Setting, Panel), TruthSet> = BTreeMap::new();
    let mut cells = Vec::new();
    for cell in config.cells() {
        let key = (cell.setting, cell.panel);
        if !truths.contains_key(&key) {
            let t = compute_truths(
                &config.model(cell.setting, cell.panel),
                config.oracle_draws,
                config.truth_seed(cell.setting, cell.panel),
            )?;
            truths.insert(key, t);
        }
        let reps: Vec<Replication> = (0..config.replications)
            .into_par_iter()
            .map(|rep| run_replication(config, cell, rep))
            .collect();
        cells.push(summarize(cell, truths[&key].clone(), &reps));
    }
    Ok(SimulationReport {
        config: config.clone(),
        cells,
        version: env!("CARGO_PKG_VERSION").to_string(),
        runtime: start.elapsed(),
    })
}

pub const METRICS: [&str; 4] = ["bias", "se", "sd", "cp"];

fn metric_value(m: &Metric, name: &str) -> f64 {
    match name {
        "bias" => m.bias,
        "se" => m.avg_se,
        "sd" => m.sd,
        _ => m.cp,
    }
}

/// Table layout: rows `panel x n x metric`, columns `setting x estimator x
/// estimand`. Cells not in the run are left empty.
pub fn write_table_csv<W: Write>(report: &SimulationReport, targets: [Target; 3], out: W) -> Result<()> {
    let mut settings: Vec<Setting> = report.cells.iter().map(|c| c.cell.setting).collect();
    settings.sort();
    settings.dedup();
    let mut rows: Vec<(Panel, usize)> = report.cells.iter().map(|c| (c.cell.panel, c.cell.n)).collect();
    rows.sort();
    rows.dedup();

    let io = |e: csv::Error| Error::Io {
        path: "simreport.csv".into(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["panel".to_string(), "n".to_string(), "metric".to_string()];
    for s in &settings {
        for e in Estimator::ALL {
            for t in targets {
                header.push(format!("s{}_{}_{}", s.number(), e.as_str(), t.as_str()));
            }
        }
    }
    w.write_record(&header).map_err(io)?;
    for (panel, n) in rows {
        for metric in METRICS {
            let mut rec = vec![panel.to_string(), n.to_string(), metric.to_string()];
            for &s in &settings {
                let cell = report.cell(s, panel, n);
                for e in Estimator::ALL {
                    for t in targets {
                        let v = cell
                            .and_then(|c| c.metric(e, t))
                            .map(|m| format!("{:.6}", metric_value(m, metric)))
                            .unwrap_or_default();
                        rec.push(v);
                    }
                }
            }
            w.write_record(&rec).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Io {
        path: "simreport.csv".into(),
        source: e,
    })?;
    Ok(())
}
