//! TOML configuration for `analyze`, `cde` and `simulate`.
//!
//! ```toml
//! input = "data.csv"
//! output_dir = "out"
//! mediator_kind = "continuous"   # or "discrete"
//! clip_level = 0.01
//! seed = 0
//!
//! [columns]
//! treatment = "G"
//! mediator = "M"
//! pre_outcome = "Y0"
//! post_outcome = "Y1"
//! covariates = ["X1", "X2"]
//!
//! [[transforms]]
//! column = "Y0"
//! kind = "log1p"
//!
//! [[transforms]]
//! column = "M"
//! kind = "ordinal_recode"
//! breakpoints = [0.0, 0.5, 1.0]
//! closed = ["right", "right", "left"]
//!
//! [models]                        # optional; term lists
//! outcome_change = ["1", "G", "M", "G:M", "X1", "M:X1"]
//!
//! [cde]
//! min = 0.0
//! max = 1.0
//! points = 21
//! kernel = "gaussian"
//! bandwidth = "silverman"         # or { fixed = 0.2 }
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model_core::{Bandwidth, DesignSpec, KernelConfig, KernelKind};
use crate::nuisance::{NuisanceSpecs, DEFAULT_CLIP_LEVEL};
use crate::simulation::SimulationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub treatment: String,
    pub mediator: String,
    pub pre_outcome: String,
    pub post_outcome: String,
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl ColumnRoles {
    pub fn all(&self) -> Vec<&str> {
        let mut out = vec![
            self.treatment.as_str(),
            self.mediator.as_str(),
            self.pre_outcome.as_str(),
            self.post_outcome.as_str(),
        ];
        out.extend(self.covariates.iter().map(String::as_str));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.all();
        for (i, c) in all.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::Config("column names must be non-empty".into()));
            }
            if all[..i].contains(c) {
                return Err(Error::Config(format!("column `{c}` is assigned more than one role")));
            }
        }
        Ok(())
    }
}

/// Which side of a breakpoint the breakpoint itself belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closed {
    /// `b` ends the interval below it: `(.., b]`.
    Right,
    /// `b` starts the interval above it: `[b, ..)`.
    Left,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformKind {
    None,
    /// `x -> ln(1 + x)`.
    Log1p,
    /// `k` breakpoints give levels `0..=k`. `closed` defaults to `right`
    /// for every breakpoint.
    OrdinalRecode {
        breakpoints: Vec<f64>,
        #[serde(default)]
        closed: Vec<Closed>,
    },
    /// `{0} -> 0, (0, 0.5] -> 1, (0.5, 1) -> 2, {1} -> 3`.
    EmploymentFourLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub column: String,
    #[serde(flatten)]
    pub kind: TransformKind,
}

impl TransformKind {
    pub fn employment_four_level() -> Self {
        TransformKind::OrdinalRecode {
            breakpoints: vec![0.0, 0.5, 1.0],
            closed: vec![Closed::Right, Closed::Right, Closed::Left],
        }
    }

    /// Normalizes named recodes and validates breakpoints.
    pub fn resolved(&self) -> Result<TransformKind> {
        match self {
            TransformKind::EmploymentFourLevel => Self::employment_four_level().resolved(),
            TransformKind::OrdinalRecode { breakpoints, closed } => {
                if breakpoints.is_empty() {
                    return Err(Error::Config("ordinal_recode needs at least one breakpoint".into()));
                }
                if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Config("ordinal_recode breakpoints must be finite and strictly increasing".into()));
                }
                let closed = match closed.len() {
                    0 => vec![Closed::Right; breakpoints.len()],
                    k if k == breakpoints.len() => closed.clone(),
                    k => {
                        return Err(Error::Config(format!(
                            "ordinal_recode has {} breakpoints but {k} closed flags",
                            breakpoints.len()
                        )))
                    }
                };
                Ok(TransformKind::OrdinalRecode {
                    breakpoints: breakpoints.clone(),
                    closed,
                })
            }
            other => Ok(other.clone()),
        }
    }

    /// Number of levels produced, for recodes.
    pub fn levels(&self) -> Option<usize> {
        match self {
            TransformKind::OrdinalRecode { breakpoints, .. } => Some(breakpoints.len() + 1),
            TransformKind::EmploymentFourLevel => Some(4),
            _ => None,
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        match self {
            TransformKind::None => v,
            TransformKind::Log1p => v.ln_1p(),
            TransformKind::OrdinalRecode { breakpoints, closed } => {
                let mut level = 0;
                for (i, &b) in breakpoints.iter().enumerate() {
                    let side = closed.get(i).copied().unwrap_or(Closed::Right);
                    if v > b || (v == b && side == Closed::Left) {
                        level = i + 1;
                    }
                }
                level as f64
            }
            TransformKind::EmploymentFourLevel => Self::employment_four_level().apply(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediatorKindName {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTerms {
    pub propensity: Option<Vec<String>>,
    pub pseudo_propensity: Option<Vec<String>>,
    pub outcome_change: Option<Vec<String>>,
    pub mediator: Option<Vec<String>>,
}

impl ModelTerms {
    pub fn resolve(&self, names: &[String]) -> Result<NuisanceSpecs> {
        let defaults = NuisanceSpecs::defaults(names.len());
        let pick = |terms: &Option<Vec<String>>, default: DesignSpec| match terms {
            Some(t) => DesignSpec::parse(t, names).map_err(|e| Error::Config(e.to_string())),
            None => Ok(default),
        };
        let specs = NuisanceSpecs {
            propensity: pick(&self.propensity, defaults.propensity)?,
            pseudo_propensity: pick(&self.pseudo_propensity, defaults.pseudo_propensity)?,
            outcome_change: pick(&self.outcome_change, defaults.outcome_change)?,
            mediator: pick(&self.mediator, defaults.mediator)?,
        };
        specs.validate(names.len()).map_err(|e| Error::Config(e.to_string()))?;
        Ok(specs)
    }
}

fn default_points() -> usize {
    21
}

/// Mediator grid and smoothing options for `cde`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdeOptions {
    pub min: Option<f64>,
    pub max: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Explicit grid; overrides `min`/`max`/`points`.
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub kernel: KernelKind,
    #[serde(default)]
    pub bandwidth: Bandwidth,
}

impl Default for CdeOptions {
    fn default() -> Self {
        Self {
            min: None,
            max: None,
            points: default_points(),
            values: None,
            kernel: KernelKind::Gaussian,
            bandwidth: Bandwidth::Silverman,
        }
    }
}

impl CdeOptions {
    pub fn kernel_config(&self) -> KernelConfig {
        KernelConfig {
            kernel: self.kernel,
            bandwidth: self.bandwidth,
        }
    }

    /// Grid within `[lo, hi]`, the declared mediator support. For a
    /// discrete mediator with no explicit grid, every level.
    pub fn grid(&self, lo: f64, hi: f64, discrete_levels: Option<usize>) -> Result<Vec<f64>> {
        let grid = if let Some(v) = &self.values {
            v.clone()
        } else if let (Some(levels), None, None) = (discrete_levels, self.min, self.max) {
            (0..levels).map(|l| l as f64).collect()
        } else {
            let a = self.min.unwrap_or(lo);
            let b = self.max.unwrap_or(hi);
            match self.points {
                0 => return Err(Error::Config("cde.points must be positive".into())),
                1 => vec![a],
                k => (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect(),
            }
        };
        if grid.is_empty() {
            return Err(Error::Config("CDE grid is empty".into()));
        }
        if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("CDE grid must be finite and strictly increasing".into()));
        }
        if let Some(levels) = discrete_levels {
            if let Some(v) = grid.iter().find(|v| v.fract() != 0.0 || **v < 0.0 || **v >= levels as f64) {
                return Err(Error::Config(format!("grid value {v} is not a level in 0..{levels}")));
            }
        }
        if grid[0] < lo || grid[grid.len() - 1] > hi {
            return Err(Error::Config(format!(
                "CDE grid [{}, {}] leaves the observed mediator range [{lo}, {hi}]",
                grid[0],
                grid[grid.len() - 1]
            )));
        }
        Ok(grid)
    }
}

fn default_clip() -> f64 {
    DEFAULT_CLIP_LEVEL
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub columns: ColumnRoles,
    pub mediator_kind: MediatorKindName,
    /// Number of levels of a discrete mediator. Defaults to the recode's
    /// level count, else the largest observed level plus one.
    pub levels: Option<usize>,
    #[serde(default)]
    pub transforms: Vec<TransformSpec>,
    #[serde(default)]
    pub models: ModelTerms,
    #[serde(default = "default_clip")]
    pub clip_level: f64,
    #[serde(default)]
    pub cde: CdeOptions,
    /// Recorded in provenance; the analysis itself draws no random numbers.
    #[serde(default)]
    pub seed: u64,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        self.columns.validate()?;
        let roles = self.columns.all();
        for t in &self.transforms {
            if !roles.contains(&t.column.as_str()) {
                return Err(Error::Config(format!("transform refers to column `{}` without a role", t.column)));
            }
            let kind = t.kind.resolved()?;
            if kind.levels().is_some() && t.column != self.columns.mediator {
                return Err(Error::Config(format!("ordinal recode applies to the mediator only, not `{}`", t.column)));
            }
            if kind.levels().is_some() && self.mediator_kind != MediatorKindName::Discrete {
                return Err(Error::Config("an ordinal recode requires mediator_kind = \"discrete\"".into()));
            }
        }
        if !(self.clip_level > 0.0 && self.clip_level < 0.5) {
            return Err(Error::Config(format!("clip_level must lie in (0, 0.5), got {}", self.clip_level)));
        }
        if let Some(0) = self.levels {
            return Err(Error::Config("levels must be positive".into()));
        }
        Ok(())
    }

    /// Transforms of `column`, in declaration order, resolved.
    pub fn transforms_for(&self, column: &str) -> Result<Vec<TransformKind>> {
        self.transforms
            .iter()
            .filter(|t| t.column == column)
            .map(|t| t.kind.resolved())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(flatten)]
    pub simulation: SimulationConfig,
}

/// A parsed config together with the bytes it came from.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: T,
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read(path: &Path) -> Result<(String, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let hash = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
    Ok((text, hash))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn parse_analysis(text: &str) -> Result<AnalysisConfig> {
    let cfg: AnalysisConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_analysis_config(path: &Path) -> Result<Loaded<AnalysisConfig>> {
    let (text, sha256) = read(path)?;
    let mut config = parse_analysis(&text)?;
    let base = base_dir(path);
    config.input = resolve(&base, &config.input);
    config.output_dir = resolve(&base, &config.output_dir);
    Ok(Loaded {
        config,
        path: path.to_path_buf(),
        sha256,
    })
}

pub fn parse_simulate(text: &str) -> Result<SimulateConfig> {
    let cfg: SimulateConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.simulation.validate()?;
    Ok(cfg)
}

pub fn load_simulate_config(path: &Path) -> Result<Loaded<SimulateConfig>> {
    let (text, sha256) = read(path)?;
    let mut config = parse_simulate(&text)?;
    config.output_dir = resolve(&base_dir(path), &config.output_dir);
    Ok(Loaded {
        config,
        path: path.to_path_buf(),
        sha256,
    })
}
