//! CSV ingestion with declared column roles and per-column transforms.

use std::io::Read;

use serde::Serialize;

use super::config::{AnalysisConfig, MediatorKindName, TransformKind};
use crate::data::{MediatorKind, ObservationalDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct LoadSummary {
    pub rows: usize,
    pub input_sha256: String,
    pub mediator_kind: MediatorKind,
    pub transforms: Vec<(String, TransformKind)>,
}

pub fn load_dataset(config: &AnalysisConfig) -> Result<(ObservationalDataset, LoadSummary)> {
    let path = &config.input;
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    let (data, mut summary) = parse_dataset(&bytes, config)?;
    summary.input_sha256 = super::config::sha256_hex(&bytes);
    Ok((data, summary))
}

/// Parses CSV bytes (header row, no missing values) into a dataset.
pub fn parse_dataset(bytes: &[u8], config: &AnalysisConfig) -> Result<(ObservationalDataset, LoadSummary)> {
    config.validate()?;
    let roles = &config.columns;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read CSV header: {e}")))?
        .clone();
    let wanted = roles.all();
    let mut index = Vec::with_capacity(wanted.len());
    for name in &wanted {
        let pos = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}` in input header")))?;
        index.push(pos);
    }
    let transforms: Vec<Vec<TransformKind>> = wanted
        .iter()
        .map(|c| config.transforms_for(c))
        .collect::<Result<_>>()?;

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    for (r, record) in reader.records().enumerate() {
        // header is line 1
        let row = r + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        for (k, &pos) in index.iter().enumerate() {
            let raw = record.get(pos).unwrap_or("");
            let column = wanted[k].to_string();
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return Err(Error::Parse {
                    row,
                    column,
                    message: "missing value".into(),
                });
            }
            let mut v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: column.clone(),
                message: format!("`{raw}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column,
                    message: format!("`{raw}` is not finite"),
                });
            }
            for t in &transforms[k] {
                v = t.apply(v);
            }
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column,
                    message: format!("`{raw}` is not finite after transform"),
                });
            }
            cols[k].push(v);
        }
    }
    let n = cols[0].len();
    if n == 0 {
        return Err(Error::Data("input has no data rows".into()));
    }

    let g = cols[0]
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0.0 => Ok(0u8),
            1.0 => Ok(1u8),
            _ => Err(Error::Parse {
                row: i + 2,
                column: roles.treatment.clone(),
                message: format!("treatment must be 0 or 1, got {v}"),
            }),
        })
        .collect::<Result<Vec<u8>>>()?;
    let m = std::mem::take(&mut cols[1]);
    let kind = match config.mediator_kind {
        MediatorKindName::Continuous => MediatorKind::Continuous,
        MediatorKindName::Discrete => {
            let recode_levels = transforms[1].iter().rev().find_map(TransformKind::levels);
            if let Some(i) = m.iter().position(|v| v.fract() != 0.0 || *v < 0.0) {
                return Err(Error::Parse {
                    row: i + 2,
                    column: roles.mediator.clone(),
                    message: format!("discrete mediator must hold level indices 0, 1, .., got {}", m[i]),
                });
            }
            let observed = m.iter().fold(0.0f64, |a, &b| a.max(b)) as usize + 1;
            let levels = config.levels.or(recode_levels).unwrap_or(observed);
            if observed > levels {
                return Err(Error::LevelOutOfRange {
                    level: (observed - 1) as f64,
                    levels,
                });
            }
            MediatorKind::Discrete { levels }
        }
    };
    let p = roles.covariates.len();
    let mut x = Vec::with_capacity(n * p);
    for i in 0..n {
        for col in cols.iter().skip(4) {
            x.push(col[i]);
        }
    }
    let y0 = std::mem::take(&mut cols[2]);
    let y1 = std::mem::take(&mut cols[3]);
    let data = ObservationalDataset::new(g, x, p, y0, m, y1, kind)?.with_covariate_names(roles.covariates.clone())?;
    let summary = LoadSummary {
        rows: n,
        input_sha256: String::new(),
        mediator_kind: kind,
        transforms: config
            .transforms
            .iter()
            .map(|t| Ok((t.column.clone(), t.kind.resolved()?)))
            .collect::<Result<_>>()?,
    };
    Ok((data, summary))
}

/// Writes a dataset as CSV with columns `G, M, Y0, Y1` and the covariates.
pub fn write_dataset_csv<W: std::io::Write>(data: &ObservationalDataset, out: W) -> Result<()> {
    let err = |e: csv::Error| Error::Data(format!("CSV serialization failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["G".to_string(), "M".into(), "Y0".into(), "Y1".into()];
    header.extend(data.covariate_names().iter().cloned());
    w.write_record(&header).map_err(err)?;
    for i in 0..data.len() {
        let mut rec = vec![
            data.treatment()[i].to_string(),
            data.mediator()[i].to_string(),
            data.pre_outcome()[i].to_string(),
            data.post_outcome()[i].to_string(),
        ];
        rec.extend(data.covariates(i).iter().map(f64::to_string));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("CSV serialization failed: {e}")))
}
