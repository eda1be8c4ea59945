//! Product-term design specifications and design-matrix construction.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DesignSource;
use crate::error::{Error, Result};

/// A raw column a term can reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Column {
    G,
    M,
    /// Zero-based covariate index.
    X(usize),
}

/// Product of raw columns. The empty product is the intercept.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term(Vec<Column>);

impl Term {
    pub fn intercept() -> Self {
        Term(Vec::new())
    }

    pub fn new(mut columns: Vec<Column>) -> Self {
        columns.sort();
        Term(columns)
    }

    pub fn columns(&self) -> &[Column] {
        &self.0
    }

    pub fn is_intercept(&self) -> bool {
        self.0.is_empty()
    }

    pub fn uses(&self, col: Column) -> bool {
        self.0.contains(&col)
    }

    #[inline]
    fn value(&self, g: f64, m: f64, x: &[f64]) -> f64 {
        self.0.iter().fold(1.0, |acc, c| {
            acc * match *c {
                Column::G => g,
                Column::M => m,
                Column::X(j) => x[j],
            }
        })
    }

    /// Parses `"1"`, `"G"`, `"M"`, `"X2"`, `"G:M:X2"` or covariate names
    /// (`"age"`, `"M:age"`) resolved against `names`.
    pub fn parse(text: &str, names: &[String]) -> Result<Self> {
        let text = text.trim();
        if text == "1" {
            return Ok(Term::intercept());
        }
        let mut cols = Vec::new();
        for part in text.split(':') {
            let part = part.trim();
            let col = match part {
                "G" => Column::G,
                "M" => Column::M,
                _ => {
                    if let Some(j) = names.iter().position(|n| n == part) {
                        Column::X(j)
                    } else if let Some(idx) = part.strip_prefix('X').and_then(|s| s.parse::<usize>().ok()) {
                        if idx == 0 {
                            return Err(Error::Schema(format!("covariate index in `{text}` is 1-based")));
                        }
                        Column::X(idx - 1)
                    } else {
                        return Err(Error::Schema(format!("unknown column `{part}` in term `{text}`")));
                    }
                }
            };
            cols.push(col);
        }
        Ok(Term::new(cols))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ":")?;
            }
            match c {
                Column::G => write!(f, "G")?,
                Column::M => write!(f, "M")?,
                Column::X(j) => write!(f, "X{}", j + 1)?,
            }
        }
        Ok(())
    }
}

/// Ordered, duplicate-free list of terms with the intercept first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct DesignSpec {
    terms: Vec<Term>,
}

impl DesignSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if terms.first().map_or(true, |t| !t.is_intercept()) {
            return Err(Error::Schema("design must start with the intercept term".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if i > 0 && t.is_intercept() {
                return Err(Error::Schema("intercept term appears more than once".into()));
            }
            if terms[..i].contains(t) {
                return Err(Error::Schema(format!("duplicate term `{t}`")));
            }
        }
        Ok(Self { terms })
    }

    pub fn parse<S: AsRef<str>>(terms: &[S], names: &[String]) -> Result<Self> {
        let parsed = terms
            .iter()
            .map(|t| Term::parse(t.as_ref(), names))
            .collect::<Result<Vec<_>>>()?;
        Self::new(parsed)
    }

    /// `[1, X1, .., Xp]`.
    pub fn covariates_only(p: usize) -> Self {
        let mut terms = vec![Term::intercept()];
        terms.extend((0..p).map(|j| Term::new(vec![Column::X(j)])));
        Self { terms }
    }

    /// `[1, M, X1, .., Xp]`.
    pub fn mediator_and_covariates(p: usize) -> Self {
        let mut terms = vec![Term::intercept(), Term::new(vec![Column::M])];
        terms.extend((0..p).map(|j| Term::new(vec![Column::X(j)])));
        Self { terms }
    }

    /// Full factorial in `G`, `M` and each covariate separately:
    /// `1, G, M, G:M, Xj, G:Xj, M:Xj, G:M:Xj`.
    pub fn full_interaction(p: usize) -> Self {
        let mut terms = vec![
            Term::intercept(),
            Term::new(vec![Column::G]),
            Term::new(vec![Column::M]),
            Term::new(vec![Column::G, Column::M]),
        ];
        for j in 0..p {
            terms.push(Term::new(vec![Column::X(j)]));
            terms.push(Term::new(vec![Column::G, Column::X(j)]));
            terms.push(Term::new(vec![Column::M, Column::X(j)]));
            terms.push(Term::new(vec![Column::G, Column::M, Column::X(j)]));
        }
        Self { terms }
    }

    /// `[1, G, M, X1, .., Xp]` with no interactions.
    pub fn main_effects(p: usize) -> Self {
        let mut terms = vec![
            Term::intercept(),
            Term::new(vec![Column::G]),
            Term::new(vec![Column::M]),
        ];
        terms.extend((0..p).map(|j| Term::new(vec![Column::X(j)])));
        Self { terms }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn uses(&self, col: Column) -> bool {
        self.terms.iter().any(|t| t.uses(col))
    }

    /// Index of the first term equal to `term`.
    pub fn position(&self, term: &Term) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    /// Appends a term; errors on duplicates.
    pub fn with_term(&self, term: Term) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.push(term);
        Self::new(terms)
    }

    /// Checks that every referenced covariate exists.
    pub fn validate(&self, n_covariates: usize) -> Result<()> {
        for t in &self.terms {
            for c in t.columns() {
                if let Column::X(j) = *c {
                    if j >= n_covariates {
                        return Err(Error::Schema(format!(
                            "term `{t}` references covariate X{} but the dataset has {n_covariates}",
                            j + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Errors if the spec references any of `forbidden`.
    pub fn forbid(&self, forbidden: &[Column], context: &str) -> Result<()> {
        for c in forbidden {
            if self.uses(*c) {
                return Err(Error::Schema(format!("{context} spec may not reference {c:?}")));
            }
        }
        Ok(())
    }

    /// Term values for a single point.
    pub fn row_into(&self, g: f64, m: f64, x: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.value(g, m, x);
        }
    }

    /// Linear predictor `sum_k coef_k * term_k(g, m, x)`.
    pub fn linear_predictor(&self, coefficients: &[f64], g: f64, m: f64, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(coefficients)
            .map(|(t, b)| b * t.value(g, m, x))
            .sum()
    }
}

impl TryFrom<Vec<String>> for DesignSpec {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        DesignSpec::parse(&v, &[])
    }
}

impl From<DesignSpec> for Vec<String> {
    fn from(s: DesignSpec) -> Self {
        s.terms.iter().map(|t| t.to_string()).collect()
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Fixed values substituted for `G` and/or `M` in every row.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub g: Option<f64>,
    pub m: Option<f64>,
}

impl Overrides {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn g(g: f64) -> Self {
        Self { g: Some(g), m: None }
    }

    pub fn gm(g: f64, m: f64) -> Self {
        Self {
            g: Some(g),
            m: Some(m),
        }
    }
}

/// Builds the `n x terms` design matrix.
pub fn build_design<S: DesignSource + ?Sized>(
    source: &S,
    spec: &DesignSpec,
    overrides: Overrides,
) -> Result<DMatrix<f64>> {
    spec.validate(source.n_covariates())?;
    let n = source.n_rows();
    let k = spec.len();
    let mut out = DMatrix::zeros(n, k);
    let mut row = vec![0.0; k];
    for i in 0..n {
        let g = overrides.g.unwrap_or_else(|| source.g(i));
        let m = overrides.m.unwrap_or_else(|| source.m(i));
        let x = source.x(i);
        if !g.is_finite() || !m.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite input in design row {i}")));
        }
        spec.row_into(g, m, x, &mut row);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}
