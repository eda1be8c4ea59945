#![allow(dead_code)]

pub mod oracle;

use didmed::nuisance::{fit_nuisances, NuisanceSet, NuisanceSpecs, DEFAULT_CLIP_LEVEL};
use didmed::simulation::{generate, DgpConfig, DgpModel, Panel, Setting};
use didmed::{MediatorKind, ObservationalDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn sim(setting: Setting, panel: Panel, n: usize, seed: u64) -> ObservationalDataset {
    generate(&DgpConfig::new(setting, panel, n, seed)).unwrap()
}

pub fn sim_model(model: DgpModel, n: usize, seed: u64) -> ObservationalDataset {
    generate(&DgpConfig { model, n, seed }).unwrap()
}

pub fn fit_default(data: &ObservationalDataset) -> NuisanceSet {
    fit_nuisances(data, &NuisanceSpecs::defaults(data.n_covariates()), DEFAULT_CLIP_LEVEL).unwrap()
}

/// Arbitrary dataset with `p` covariates, logistic assignment and a mediator
/// of the requested kind. Outcomes are nonlinear so no working model is exact.
pub fn random_dataset(seed: u64, n: usize, p: usize, kind: MediatorKind) -> ObservationalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<f64> = (0..p).map(|_| rng.random_range(-0.8..0.8)).collect();
    let mut g = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * p);
    let mut m = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let lin: f64 = xi.iter().zip(&coef).map(|(a, b)| a * b).sum();
        let gi = (rng.random::<f64>() < 1.0 / (1.0 + (-0.2 - lin).exp())) as u8;
        let e: f64 = rng.sample(StandardNormal);
        let mi = match kind {
            MediatorKind::Continuous => 0.5 * lin + gi as f64 + e,
            MediatorKind::Discrete { levels } => {
                let z = 0.5 * lin + gi as f64 + e;
                (((z + 1.5) * levels as f64 / 3.0).floor()).clamp(0.0, levels as f64 - 1.0)
            }
        };
        let u: f64 = rng.sample(StandardNormal);
        let x0 = xi.first().copied().unwrap_or(0.0);
        y0.push(x0 * x0 + u + 0.3 * rng.sample::<f64, _>(StandardNormal));
        y1.push(lin.sin() + gi as f64 * (1.0 + 0.2 * mi) + 0.4 * mi + u + 0.3 * rng.sample::<f64, _>(StandardNormal));
        g.push(gi);
        x.extend(xi);
        m.push(mi);
    }
    ObservationalDataset::new(g, x, p, y0, m, y1, kind).unwrap()
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E{f(X1, X2) | G = 1}` by a tensor trapezoid rule on `[-8, 8]^2`.
pub fn treated_expectation(model: &DgpModel, f: impl Fn(f64, f64) -> f64) -> f64 {
    let (lo, steps) = (-8.0, 800);
    let step = 16.0 / steps as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=steps {
        let x1 = lo + i as f64 * step;
        let w1 = if i == 0 || i == steps { 0.5 } else { 1.0 } * std_normal_pdf(x1);
        for j in 0..=steps {
            let x2 = lo + j as f64 * step;
            let w2 = if j == 0 || j == steps { 0.5 } else { 1.0 } * std_normal_pdf(x2);
            let w = w1 * w2 * model.treatment_probability(x1, x2);
            num += w * f(x1, x2);
            den += w;
        }
    }
    num / den
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
