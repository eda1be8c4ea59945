//! The `analyze`, `cde` and `simulate` pipelines and their output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{AnalysisConfig, Loaded, SimulateConfig};
use super::load::{load_dataset, LoadSummary};
use crate::controlled_effects::{cde_curve, write_curve_csv, CdeCurve};
use crate::data::{MediatorKind, ObservationalDataset};
use crate::error::{Error, Result};
use crate::natural_effects::{natural_effects, significance_stars, EffectEstimate, NaturalEffects};
use crate::nuisance::{fit_nuisances, overlap_diagnostics, NuisanceSet, OverlapReport};
use crate::simulation::{run_monte_carlo, write_table_csv, SimulationReport, Target};

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    fn new<T>(command: &str, loaded: &Loaded<T>, input_sha256: Option<String>, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_path: loaded.path.display().to_string(),
            config_sha256: loaded.sha256.clone(),
            input_sha256,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultBundle {
    pub effects: NaturalEffects,
    pub diagnostics: OverlapReport,
    pub load: LoadSummary,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<CdeCurve>,
    pub files: Vec<PathBuf>,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::Data(format!("JSON serialization failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub const EFFECTS_CSV_HEADER: [&str; 7] = ["estimand", "point", "se", "ci_low", "ci_high", "p", "stars"];

/// Effect table as CSV. Numbers use the shortest representation that
/// parses back to the same double.
pub fn effects_csv(effects: &NaturalEffects) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Data(format!("CSV serialization failed: {e}"));
    w.write_record(EFFECTS_CSV_HEADER).map_err(err)?;
    for e in effects.effects() {
        w.write_record([
            e.estimand.as_str().to_string(),
            e.point.to_string(),
            e.se.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            format!("{:?}", e.p_value),
            e.stars().to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Data(format!("CSV serialization failed: {e}")))
}

fn effect_line(out: &mut String, e: &EffectEstimate) {
    let _ = writeln!(
        out,
        "{:<6} {:>10.4} {:>10.4}   [{:>8.4}, {:>8.4}] {:>9.4} {}",
        e.estimand.as_str(),
        e.point,
        e.se,
        e.ci_low,
        e.ci_high,
        e.p_value,
        significance_stars(e.p_value)
    );
}

pub fn summary_text(data: &ObservationalDataset, bundle: &ResultBundle) -> String {
    let mut out = String::new();
    let kind = match data.mediator_kind() {
        MediatorKind::Continuous => "continuous".to_string(),
        MediatorKind::Discrete { levels } => format!("discrete, {levels} levels"),
    };
    let _ = writeln!(
        out,
        "Natural effects on the treated (n = {}, treated = {}, mediator {kind})",
        data.len(),
        data.n_treated()
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<6} {:>10} {:>10}   {:<20} {:>9}",
        "effect", "estimate", "se", "95% CI", "p"
    );
    for e in bundle.effects.effects() {
        effect_line(&mut out, e);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "* p < 0.05, ** p < 0.01, *** p < 0.001 (two-sided, normal approximation)");
    let d = &bundle.diagnostics;
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "propensity range [{:.4}, {:.4}], pseudo-propensity range [{:.4}, {:.4}]",
        d.propensity_min, d.propensity_max, d.pseudo_propensity_min, d.pseudo_propensity_max
    );
    let _ = writeln!(
        out,
        "odds clipped at level {}: {} units ({:.2}%)",
        d.clip_level,
        d.clipped_units,
        100.0 * d.clipped_fraction
    );
    for w in &d.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    if let Some(curve) = &bundle.curve {
        let _ = writeln!(out);
        curve_summary(&mut out, curve);
    }
    let _ = writeln!(out);
    let p = &bundle.provenance;
    let _ = writeln!(
        out,
        "config sha256 {} | seed {} | version {}",
        p.config_sha256, p.seed, p.version
    );
    out
}

fn curve_summary(out: &mut String, curve: &CdeCurve) {
    let _ = writeln!(
        out,
        "Controlled direct effect curve: {} grid points, {} skipped",
        curve.points.len(),
        curve.skipped.len()
    );
    if let Some((h1, h0)) = curve.bandwidth {
        let _ = writeln!(out, "bandwidth h(G=1) = {h1:.6}, h(G=0) = {h0:.6}");
    }
    let regions = curve.significant_regions();
    if regions.is_empty() {
        let _ = writeln!(out, "no grid point is significant at the 5% level (pointwise)");
    }
    for (lo, hi) in regions {
        let sign = curve
            .points
            .iter()
            .find(|p| p.m == lo)
            .map_or("", |p| if p.cde > 0.0 { "positive" } else { "negative" });
        let _ = writeln!(out, "significant ({sign}) for m in [{lo}, {hi}]");
    }
    for s in &curve.skipped {
        let _ = writeln!(out, "skipped m = {}: {}", s.m, s.reason);
    }
}

/// Loads the data and fits the working models of an analysis config.
pub fn prepare(config: &AnalysisConfig) -> Result<(ObservationalDataset, LoadSummary, NuisanceSet)> {
    let (data, summary) = load_dataset(config)?;
    let specs = config.models.resolve(data.covariate_names())?;
    let nuisances = fit_nuisances(&data, &specs, config.clip_level)?;
    Ok((data, summary, nuisances))
}

fn analysis_bundle(
    command: &str,
    loaded: &Loaded<AnalysisConfig>,
    with_curve: bool,
) -> Result<(ObservationalDataset, ResultBundle)> {
    let config = &loaded.config;
    let (data, load, nuisances) = prepare(config)?;
    let effects = natural_effects(&data, &nuisances)?;
    let diagnostics = overlap_diagnostics(&data, &nuisances);
    let curve = if with_curve {
        let m = data.mediator();
        let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let levels = match data.mediator_kind() {
            MediatorKind::Discrete { levels } => Some(levels),
            MediatorKind::Continuous => None,
        };
        let grid = config.cde.grid(lo, hi, levels)?;
        Some(cde_curve(&grid, &data, &nuisances, &config.cde.kernel_config())?)
    } else {
        None
    };
    let provenance = Provenance::new(command, loaded, Some(load.input_sha256.clone()), config.seed);
    Ok((
        data,
        ResultBundle {
            effects,
            diagnostics,
            load,
            provenance,
            curve,
            files: Vec::new(),
        },
    ))
}

#[derive(Serialize)]
struct EffectsJson<'a> {
    effects: [&'a EffectEstimate; 3],
    components: [&'a EffectEstimate; 3],
    clipped_propensity: usize,
    clipped_pseudo: usize,
    provenance: &'a Provenance,
}

#[derive(Serialize)]
struct DiagnosticsJson<'a> {
    overlap: &'a OverlapReport,
    load: &'a LoadSummary,
    provenance: &'a Provenance,
}

fn write_common(dir: &Path, data: &ObservationalDataset, bundle: &mut ResultBundle) -> Result<()> {
    ensure_dir(dir)?;
    let e = &bundle.effects;
    let files = [
        ("effects.csv", effects_csv(e)?),
        (
            "effects.json",
            to_json(&EffectsJson {
                effects: e.effects(),
                components: e.components(),
                clipped_propensity: e.clipped_propensity,
                clipped_pseudo: e.clipped_pseudo,
                provenance: &bundle.provenance,
            })?,
        ),
        (
            "diagnostics.json",
            to_json(&DiagnosticsJson {
                overlap: &bundle.diagnostics,
                load: &bundle.load,
                provenance: &bundle.provenance,
            })?,
        ),
        ("summary.txt", summary_text(data, bundle).into_bytes()),
    ];
    for (name, bytes) in files {
        let path = dir.join(name);
        write_file(&path, &bytes)?;
        bundle.files.push(path);
    }
    Ok(())
}

pub fn cmd_analyze(loaded: &Loaded<AnalysisConfig>) -> Result<ResultBundle> {
    let (data, mut bundle) = analysis_bundle("analyze", loaded, false)?;
    write_common(&loaded.config.output_dir, &data, &mut bundle)?;
    Ok(bundle)
}

#[derive(Serialize)]
struct CurveJson<'a> {
    arms: (u8, u8),
    bandwidth: Option<(f64, f64)>,
    grid: Vec<f64>,
    significant_regions: Vec<(f64, f64)>,
    skipped: &'a [crate::controlled_effects::SkippedPoint],
    provenance: &'a Provenance,
}

pub fn cmd_cde(loaded: &Loaded<AnalysisConfig>) -> Result<ResultBundle> {
    let (data, mut bundle) = analysis_bundle("cde", loaded, true)?;
    let dir = &loaded.config.output_dir;
    write_common(dir, &data, &mut bundle)?;
    let curve = bundle.curve.as_ref().expect("curve requested");
    let mut csv_bytes = Vec::new();
    write_curve_csv(curve, &mut csv_bytes)?;
    let json = to_json(&CurveJson {
        arms: curve.arms,
        bandwidth: curve.bandwidth,
        grid: curve.points.iter().map(|p| p.m).collect(),
        significant_regions: curve.significant_regions(),
        skipped: &curve.skipped,
        provenance: &bundle.provenance,
    })?;
    for (name, bytes) in [("cde_curve.csv", csv_bytes), ("cde_curve.json", json)] {
        let path = dir.join(name);
        write_file(&path, &bytes)?;
        bundle.files.push(path);
    }
    Ok(bundle)
}

#[derive(Serialize)]
struct SimJson<'a> {
    report: &'a SimulationReport,
    failures: usize,
    provenance: &'a Provenance,
}

#[derive(Debug)]
pub struct SimulateOutput {
    pub report: SimulationReport,
    pub provenance: Provenance,
    pub files: Vec<PathBuf>,
}

pub fn cmd_simulate(loaded: &Loaded<SimulateConfig>) -> Result<SimulateOutput> {
    let sim = &loaded.config.simulation;
    let report = run_monte_carlo(sim)?;
    let provenance = Provenance::new("simulate", loaded, None, sim.base_seed);
    let dir = &loaded.config.output_dir;
    ensure_dir(dir)?;
    let mut files = Vec::new();
    let mut outputs = Vec::new();
    let mut t1 = Vec::new();
    write_table_csv(&report, Target::TABLE1, &mut t1)?;
    outputs.push(("simreport.csv", t1));
    if sim.controlled {
        let mut t2 = Vec::new();
        write_table_csv(&report, Target::TABLE2, &mut t2)?;
        outputs.push(("simreport_table2.csv", t2));
    }
    outputs.push((
        "simreport.json",
        to_json(&SimJson {
            report: &report,
            failures: report.failure_count(),
            provenance: &provenance,
        })?,
    ));
    for (name, bytes) in outputs {
        let path = dir.join(name);
        write_file(&path, &bytes)?;
        files.push(path);
    }
    Ok(SimulateOutput {
        report,
        provenance,
        files,
    })
}

/// Machine-readable error record written to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub class: &'static str,
    pub exit_code: i32,
    pub module: &'static str,
    pub message: String,
}

impl ErrorRecord {
    pub fn from_error(e: &Error) -> Self {
        let class = e.class();
        Self {
            class: class.as_str(),
            exit_code: class.exit_code(),
            module: e.module(),
            message: e.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}
