//! Data-generating processes for the two simulation settings and the
//! misspecification panels.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{MediatorKind, ObservationalDataset};
use crate::error::{Error, Result};
use crate::numeric::{expit, normal_cdf};

/// Mediator type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// `M(g) = 0.6 X1 - 0.3 X2 + g + eps`.
    Continuous,
    /// `P(M(g) = 1 | X) = Phi(0.6 X1 - 0.3 X2 + g)`.
    Binary,
}

impl Setting {
    pub fn number(self) -> u8 {
        match self {
            Setting::Continuous => 1,
            Setting::Binary => 2,
        }
    }

    pub fn mediator_kind(self) -> MediatorKind {
        match self {
            Setting::Continuous => MediatorKind::Continuous,
            Setting::Binary => MediatorKind::Discrete { levels: 2 },
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "continuous" => Ok(Setting::Continuous),
            "2" | "binary" => Ok(Setting::Binary),
            other => Err(Error::Config(format!("unknown setting '{other}' (expected 1 or 2)"))),
        }
    }
}

/// Which part of the truth departs from the analyst's working models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Panel {
    /// Working models correctly specified.
    O,
    /// Outcome model misspecified.
    A,
    /// Propensity score misspecified.
    B,
}

impl Panel {
    pub fn as_str(self) -> &'static str {
        match self {
            Panel::O => "O",
            Panel::A => "A",
            Panel::B => "B",
        }
    }

    fn index(self) -> u64 {
        match self {
            Panel::O => 0,
            Panel::A => 1,
            Panel::B => 2,
        }
    }
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Panel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "O" => Ok(Panel::O),
            "A" => Ok(Panel::A),
            "B" => Ok(Panel::B),
            other => Err(Error::Config(format!("unknown panel '{other}' (expected O, A or B)"))),
        }
    }
}

/// Structural part of the DGP, shared by data generation and the truth
/// oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpModel {
    pub setting: Setting,
    pub panel: Panel,
    /// Multiplies the mediator term of `Y1`; `0` removes mediation.
    #[serde(default = "one")]
    pub mediator_scale: f64,
    /// Adds `mediator_curvature * m^2` to `Y1(g, m)`.
    #[serde(default)]
    pub mediator_curvature: f64,
}

fn one() -> f64 {
    1.0
}

impl DgpModel {
    pub fn new(setting: Setting, panel: Panel) -> Self {
        Self {
            setting,
            panel,
            mediator_scale: 1.0,
            mediator_curvature: 0.0,
        }
    }

    pub fn treatment_probability(&self, x1: f64, x2: f64) -> f64 {
        match self.panel {
            Panel::O | Panel::A => expit(0.3 + 0.4 * x1 + 0.5 * x2),
            Panel::B => normal_cdf(0.3 + 0.4 * x1 + 0.5 * x2 + 0.3 * x1 * x2),
        }
    }

    /// Linear index of the mediator model.
    pub fn mediator_index(&self, g: f64, x1: f64, x2: f64) -> f64 {
        0.6 * x1 - 0.3 * x2 + g
    }

    /// `M(g)` given the unit's mediator noise: a normal draw for the
    /// continuous setting, a uniform draw for the binary one.
    pub fn mediator(&self, g: f64, x1: f64, x2: f64, noise: f64) -> f64 {
        let index = self.mediator_index(g, x1, x2);
        match self.setting {
            Setting::Continuous => index + noise,
            Setting::Binary => {
                if noise < normal_cdf(index) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `E{M(g) | X}`.
    pub fn mediator_mean(&self, g: f64, x1: f64, x2: f64) -> f64 {
        let index = self.mediator_index(g, x1, x2);
        match self.setting {
            Setting::Continuous => index,
            Setting::Binary => normal_cdf(index),
        }
    }

    /// `Y0(0)` without the unit effect and error.
    pub fn y0_mean(&self, x1: f64, x2: f64) -> f64 {
        match self.panel {
            Panel::O | Panel::B => 2.0 * x1,
            Panel::A => 2.0 * x1 * (1.0 + x2.abs()).ln(),
        }
    }

    /// `Y1(g, m)` without the unit effect and error.
    pub fn y1_mean(&self, g: f64, m: f64, x1: f64, x2: f64) -> f64 {
        let (base, slope) = match self.panel {
            Panel::O | Panel::B => (x1 + x2, 0.5 * (1.0 + 0.4 * x2)),
            Panel::A => ((x1 + x2) * x2, 0.5 * (1.0 + 0.5 * g * x2)),
        };
        base + g + self.mediator_scale * slope * m + self.mediator_curvature * m * m
    }

    /// `delta(g, m, x) = E(Y1 - Y0 | G = g, M = m, X = x)`.
    pub fn delta(&self, g: f64, m: f64, x1: f64, x2: f64) -> f64 {
        self.y1_mean(g, m, x1, x2) - self.y0_mean(x1, x2)
    }
}

/// One simulated sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub model: DgpModel,
    pub n: usize,
    pub seed: u64,
}

pub const MIN_SAMPLE_SIZE: usize = 50;

impl DgpConfig {
    pub fn new(setting: Setting, panel: Panel, n: usize, seed: u64) -> Self {
        Self {
            model: DgpModel::new(setting, panel),
            n,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_SAMPLE_SIZE {
            return Err(Error::Config(format!(
                "simulated sample size {} is below {MIN_SAMPLE_SIZE}",
                self.n
            )));
        }
        if !self.model.mediator_scale.is_finite() || !self.model.mediator_curvature.is_finite() {
            return Err(Error::Config("DGP coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// All primitive draws of one unit. Potential outcomes share the unit's
/// draws, so `M(0)` and `M(1)` are coupled through `mediator_noise`.
#[derive(Debug, Clone, Copy)]
pub struct UnitDraw {
    pub x1: f64,
    pub x2: f64,
    pub u: f64,
    pub mediator_noise: f64,
    pub e0: f64,
    pub e1: f64,
    pub assignment_uniform: f64,
}

impl UnitDraw {
    pub fn sample<R: Rng + ?Sized>(setting: Setting, rng: &mut R) -> Self {
        let x1 = rng.sample(StandardNormal);
        let x2 = rng.sample(StandardNormal);
        let u = rng.sample(StandardNormal);
        let mediator_noise = match setting {
            Setting::Continuous => rng.sample(StandardNormal),
            Setting::Binary => rng.random::<f64>(),
        };
        let e0 = 0.5 * rng.sample::<f64, _>(StandardNormal);
        let e1 = 0.5 * rng.sample::<f64, _>(StandardNormal);
        let assignment_uniform = rng.random::<f64>();
        Self {
            x1,
            x2,
            u,
            mediator_noise,
            e0,
            e1,
            assignment_uniform,
        }
    }

    pub fn treatment(&self, model: &DgpModel) -> u8 {
        (self.assignment_uniform < model.treatment_probability(self.x1, self.x2)) as u8
    }

    pub fn mediator(&self, model: &DgpModel, g: u8) -> f64 {
        model.mediator(g as f64, self.x1, self.x2, self.mediator_noise)
    }

    pub fn y0(&self, model: &DgpModel) -> f64 {
        model.y0_mean(self.x1, self.x2) + self.u + self.e0
    }

    pub fn y1(&self, model: &DgpModel, g: u8, m: f64) -> f64 {
        model.y1_mean(g as f64, m, self.x1, self.x2) + self.u + self.e1
    }
}

/// Random stream for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `rep` in the cell `(setting, panel, n)`. Depends only
/// on these values, so filtering the grid does not change any replication.
pub fn child_seed(base_seed: u64, setting: Setting, panel: Panel, n: usize, rep: usize) -> u64 {
    let cell = (setting.number() as u64) << 60 | panel.index() << 56 | n as u64;
    mix64(mix64(mix64(base_seed) ^ cell) ^ rep as u64)
}

/// Draws a dataset with covariates `(X1, X2)`.
pub fn generate(config: &DgpConfig) -> Result<ObservationalDataset> {
    config.validate()?;
    let model = &config.model;
    let mut rng = rng_from_seed(config.seed);
    let n = config.n;
    let mut g = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(2 * n);
    let mut y0 = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    for _ in 0..n {
        let d = UnitDraw::sample(model.setting, &mut rng);
        let gi = d.treatment(model);
        let mi = d.mediator(model, gi);
        g.push(gi);
        x.push(d.x1);
        x.push(d.x2);
        y0.push(d.y0(model));
        m.push(mi);
        y1.push(d.y1(model, gi, mi));
    }
    ObservationalDataset::new(g, x, 2, y0, m, y1, model.setting.mediator_kind())?
        .with_covariate_names(vec!["X1".into(), "X2".into()])
}
