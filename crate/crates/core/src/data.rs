//! Unit-level observational data `(G, X, Y0, M, Y1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MediatorKind {
    Continuous,
    /// Level indices `0..levels`.
    Discrete { levels: usize },
}

impl MediatorKind {
    pub fn is_discrete(self) -> bool {
        matches!(self, MediatorKind::Discrete { .. })
    }
}

/// Row access used by design-matrix construction.
pub trait DesignSource {
    fn n_rows(&self) -> usize;
    fn n_covariates(&self) -> usize;
    fn g(&self, row: usize) -> f64;
    fn m(&self, row: usize) -> f64;
    fn x(&self, row: usize) -> &[f64];
}

/// Two-period observational sample. `x` is stored row-major.
#[derive(Debug, Clone)]
pub struct ObservationalDataset {
    g: Vec<u8>,
    x: Vec<f64>,
    p: usize,
    y0: Vec<f64>,
    m: Vec<f64>,
    y1: Vec<f64>,
    delta_y: Vec<f64>,
    kind: MediatorKind,
    covariate_names: Vec<String>,
}

impl ObservationalDataset {
    /// Validates and builds a dataset. `x` is row-major with `p` columns.
    pub fn new(
        g: Vec<u8>,
        x: Vec<f64>,
        p: usize,
        y0: Vec<f64>,
        m: Vec<f64>,
        y1: Vec<f64>,
        kind: MediatorKind,
    ) -> Result<Self> {
        let n = g.len();
        if y0.len() != n || m.len() != n || y1.len() != n || x.len() != n * p {
            return Err(Error::Data(format!(
                "column lengths disagree: n={n}, x={} (p={p}), y0={}, m={}, y1={}",
                x.len(),
                y0.len(),
                m.len(),
                y1.len()
            )));
        }
        if let Some(i) = g.iter().position(|&v| v > 1) {
            return Err(Error::Data(format!("treatment must be 0/1, row {i} has {}", g[i])));
        }
        for (name, col) in [("y0", &y0), ("m", &m), ("y1", &y1), ("x", &x)] {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                let row = if name == "x" { i / p.max(1) } else { i };
                return Err(Error::Data(format!("non-finite value in `{name}` at row {row}")));
            }
        }
        let n1 = g.iter().filter(|&&v| v == 1).count();
        if n1 == 0 {
            return Err(Error::EmptyGroup("treated group (G=1) is empty".into()));
        }
        if n1 == n {
            return Err(Error::EmptyGroup("control group (G=0) is empty".into()));
        }
        if let MediatorKind::Discrete { levels } = kind {
            if levels < 2 {
                return Err(Error::Data(format!("discrete mediator needs >= 2 levels, got {levels}")));
            }
            let mut seen = vec![false; levels];
            for &v in &m {
                if v.fract() != 0.0 || v < 0.0 || v >= levels as f64 {
                    return Err(Error::LevelOutOfRange { level: v, levels });
                }
                seen[v as usize] = true;
            }
            if let Some(k) = seen.iter().position(|s| !s) {
                return Err(Error::Data(format!(
                    "discrete mediator levels must be contiguous 0..{levels}; level {k} never observed"
                )));
            }
        }
        let delta_y = y1.iter().zip(&y0).map(|(a, b)| a - b).collect();
        let covariate_names = (1..=p).map(|j| format!("X{j}")).collect();
        Ok(Self {
            g,
            x,
            p,
            y0,
            m,
            y1,
            delta_y,
            kind,
            covariate_names,
        })
    }

    pub fn with_covariate_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p {
            return Err(Error::Schema(format!(
                "{} covariate names for {} covariates",
                names.len(),
                self.p
            )));
        }
        self.covariate_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.p
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn mediator_kind(&self) -> MediatorKind {
        self.kind
    }

    pub fn treatment(&self) -> &[u8] {
        &self.g
    }

    pub fn mediator(&self) -> &[f64] {
        &self.m
    }

    pub fn pre_outcome(&self) -> &[f64] {
        &self.y0
    }

    pub fn post_outcome(&self) -> &[f64] {
        &self.y1
    }

    /// `Y1 - Y0` per unit.
    pub fn delta_y(&self) -> &[f64] {
        &self.delta_y
    }

    pub fn covariates(&self, row: usize) -> &[f64] {
        &self.x[row * self.p..(row + 1) * self.p]
    }

    pub fn n_treated(&self) -> usize {
        self.g.iter().filter(|&&v| v == 1).count()
    }

    /// Row indices of units with `G = g`.
    pub fn group_rows(&self, g: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.g[i] == g).collect()
    }

    /// Reorders units; used by permutation-invariance checks.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let p = self.p;
        let mut x = Vec::with_capacity(self.x.len());
        for &i in order {
            x.extend_from_slice(self.covariates(i));
        }
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self::new(
            order.iter().map(|&i| self.g[i]).collect(),
            x,
            p,
            pick(&self.y0),
            pick(&self.m),
            pick(&self.y1),
            self.kind,
        )?
        .with_covariate_names(self.covariate_names.clone())
    }
}

impl DesignSource for ObservationalDataset {
    fn n_rows(&self) -> usize {
        self.len()
    }

    fn n_covariates(&self) -> usize {
        self.p
    }

    fn g(&self, row: usize) -> f64 {
        self.g[row] as f64
    }

    fn m(&self, row: usize) -> f64 {
        self.m[row]
    }

    fn x(&self, row: usize) -> &[f64] {
        self.covariates(row)
    }
}

/// A subset of rows, optionally with the mediator shifted by a constant.
pub struct RowSubset<'a> {
    pub data: &'a ObservationalDataset,
    pub rows: &'a [usize],
    pub mediator_shift: f64,
}

impl DesignSource for RowSubset<'_> {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn n_covariates(&self) -> usize {
        self.data.n_covariates()
    }

    fn g(&self, row: usize) -> f64 {
        self.data.g(self.rows[row])
    }

    fn m(&self, row: usize) -> f64 {
        self.data.m(self.rows[row]) - self.mediator_shift
    }

    fn x(&self, row: usize) -> &[f64] {
        self.data.covariates(self.rows[row])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(g: Vec<u8>, m: Vec<f64>, kind: MediatorKind) -> Result<ObservationalDataset> {
        let n = g.len();
        ObservationalDataset::new(g, vec![0.0; n], 1, vec![0.0; n], m, vec![1.0; n], kind)
    }

    #[test]
    fn rejects_empty_groups() {
        let err = tiny(vec![1, 1], vec![0.0, 1.0], MediatorKind::Continuous).unwrap_err();
        assert!(matches!(err, Error::EmptyGroup(ref s) if s.contains("control")));
        let err = tiny(vec![0, 0], vec![0.0, 1.0], MediatorKind::Continuous).unwrap_err();
        assert!(matches!(err, Error::EmptyGroup(ref s) if s.contains("treated")));
    }

    #[test]
    fn discrete_levels_must_be_contiguous() {
        let kind = MediatorKind::Discrete { levels: 3 };
        assert!(tiny(vec![0, 1, 1], vec![0.0, 1.0, 2.0], kind).is_ok());
        assert!(tiny(vec![0, 1, 1], vec![0.0, 2.0, 2.0], kind).is_err());
        assert!(matches!(
            tiny(vec![0, 1, 1], vec![0.0, 1.0, 3.0], kind).unwrap_err(),
            Error::LevelOutOfRange { .. }
        ));
        assert!(tiny(vec![0, 1, 1], vec![0.0, 1.5, 2.0], kind).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let err = tiny(vec![0, 1], vec![0.0, f64::NAN], MediatorKind::Continuous).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn delta_y_is_post_minus_pre() {
        let d = ObservationalDataset::new(
            vec![0, 1],
            vec![1.0, 2.0],
            1,
            vec![1.0, 2.0],
            vec![0.0, 0.0],
            vec![4.0, 1.0],
            MediatorKind::Continuous,
        )
        .unwrap();
        assert_eq!(d.delta_y(), &[3.0, -1.0]);
        assert_eq!(d.n_treated(), 1);
    }
}
