//! Monte Carlo evaluation of the estimands from fully simulated potential
//! outcomes, conditioning on `G = 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{mix64, rng_from_seed, DgpModel, UnitDraw};
use crate::error::{Error, Result};
use crate::numeric::ExactSum;

pub const MIN_ORACLE_DRAWS: usize = 1_000_000;
const CHUNK: usize = 1 << 16;

/// A truth value with its oracle Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSet {
    pub tau_ie: OracleValue,
    pub tau_de: OracleValue,
    pub tau: OracleValue,
    pub bar_tau_1_0: OracleValue,
    pub bar_tau_0_0: OracleValue,
    pub tau_de_0: OracleValue,
    pub draws: usize,
    pub treated_draws: usize,
    pub seed: u64,
}

#[derive(Default, Clone)]
struct Moments {
    sum: ExactSum,
    sum_sq: ExactSum,
}

impl Moments {
    fn add(&mut self, v: f64) {
        self.sum.add(v);
        self.sum_sq.add(v * v);
    }

    fn merge(&mut self, other: &Moments) {
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    fn finish(&self, n: usize) -> OracleValue {
        let nf = n as f64;
        let mean = self.sum.value() / nf;
        let var = ((self.sum_sq.value() - nf * mean * mean) / (nf - 1.0)).max(0.0);
        OracleValue {
            value: mean,
            mc_se: (var / nf).sqrt(),
        }
    }
}

const N_TARGETS: usize = 6;

#[derive(Default, Clone)]
struct Chunk {
    treated: usize,
    moments: [Moments; N_TARGETS],
}

fn simulate_chunk(model: &DgpModel, seed: u64, draws: usize) -> Chunk {
    let mut rng = rng_from_seed(seed);
    let mut out = Chunk::default();
    for _ in 0..draws {
        let d = UnitDraw::sample(model.setting, &mut rng);
        if d.treatment(model) != 1 {
            continue;
        }
        out.treated += 1;
        let m0 = d.mediator(model, 0);
        let m1 = d.mediator(model, 1);
        let y0 = d.y0(model);
        let y1_11 = d.y1(model, 1, m1);
        let y1_01 = d.y1(model, 0, m1);
        let y1_00 = d.y1(model, 0, m0);
        let bt1 = d.y1(model, 1, 0.0) - y0;
        let bt0 = d.y1(model, 0, 0.0) - y0;
        let values = [
            y1_01 - y1_00,
            y1_11 - y1_01,
            y1_11 - y1_00,
            bt1,
            bt0,
            bt1 - bt0,
        ];
        for (m, v) in out.moments.iter_mut().zip(values) {
            m.add(v);
        }
    }
    out
}

/// Evaluates every estimand by simulating all potential outcomes of
/// `draws` units and averaging over those assigned `G = 1`.
pub fn compute_truths(model: &DgpModel, draws: usize, seed: u64) -> Result<TruthSet> {
    if draws < MIN_ORACLE_DRAWS {
        return Err(Error::Config(format!(
            "oracle needs at least {MIN_ORACLE_DRAWS} draws, got {draws}"
        )));
    }
    compute_truths_unchecked(model, draws, seed)
}

pub(crate) fn compute_truths_unchecked(model: &DgpModel, draws: usize, seed: u64) -> Result<TruthSet> {
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<Chunk> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let size = CHUNK.min(draws - c * CHUNK);
            simulate_chunk(model, mix64(seed ^ mix64(c as u64)), size)
        })
        .collect();
    let mut total = Chunk::default();
    for p in &parts {
        total.treated += p.treated;
        for (a, b) in total.moments.iter_mut().zip(&p.moments) {
            a.merge(b);
        }
    }
    if total.treated < 2 {
        return Err(Error::DegenerateSample("oracle drew fewer than two treated units".into()));
    }
    let [tau_ie, tau_de, tau, bar_tau_1_0, bar_tau_0_0, tau_de_0] =
        std::array::from_fn(|k| total.moments[k].finish(total.treated));
    Ok(TruthSet {
        tau_ie,
        tau_de,
        tau,
        bar_tau_1_0,
        bar_tau_0_0,
        tau_de_0,
        draws,
        treated_draws: total.treated,
        seed,
    })
}
