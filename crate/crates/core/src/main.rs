use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use didmed::cli_io::{
    cmd_analyze, cmd_cde, cmd_simulate, load_analysis_config, load_simulate_config, parse_simulate, sha256_hex,
    write_dataset_csv, ErrorRecord, Loaded,
};
use didmed::simulation::{generate, DgpConfig, Panel, Setting};
use didmed::{Error, Result};

/// Multiply robust mediation analysis for difference-in-differences designs.
#[derive(Parser)]
#[command(name = "didmed", version)]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Natural indirect, direct and total effects.
    Analyze(AnalysisArgs),
    /// Controlled direct effect curve (also writes the natural effects).
    Cde(AnalysisArgs),
    /// Monte Carlo study.
    Simulate(SimulateArgs),
    /// Write one simulated sample as CSV (columns G, M, Y0, Y1, X1, X2).
    Generate(GenerateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "1")]
    setting: Setting,
    #[arg(long, default_value = "O")]
    panel: Panel,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplies the mediator term of the post-period outcome.
    #[arg(long, default_value_t = 1.0)]
    mediator_scale: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Config file; built-in defaults (the full grid) when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Restrict to one setting (1 continuous, 2 binary).
    #[arg(long)]
    setting: Option<Setting>,
    /// Restrict to one panel (O, A or B).
    #[arg(long)]
    panel: Option<Panel>,
    /// Restrict to one sample size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn simulate_config(args: &SimulateArgs) -> Result<Loaded<didmed::cli_io::SimulateConfig>> {
    let mut loaded = match &args.config {
        Some(path) => load_simulate_config(path)?,
        None => Loaded {
            config: parse_simulate("")?,
            path: PathBuf::from("<defaults>"),
            sha256: sha256_hex(b""),
        },
    };
    let sim = &mut loaded.config.simulation;
    if let Some(s) = args.setting {
        sim.settings = vec![s];
    }
    if let Some(p) = args.panel {
        sim.panels = vec![p];
    }
    if let Some(n) = args.n {
        sim.sample_sizes = vec![n];
    }
    if let Some(r) = args.replications {
        sim.replications = r;
    }
    if let Some(s) = args.seed {
        sim.base_seed = s;
    }
    sim.validate()?;
    if let Some(dir) = &args.output_dir {
        loaded.config.output_dir = dir.clone();
    }
    Ok(loaded)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure {t} threads: {e}")))?;
    }
    let start = Instant::now();
    match cli.command {
        Command::Analyze(args) => {
            let mut loaded = load_analysis_config(&args.config)?;
            if let Some(dir) = args.output_dir {
                loaded.config.output_dir = dir;
            }
            let bundle = cmd_analyze(&loaded)?;
            for e in bundle.effects.effects() {
                println!(
                    "{:<4} {:>10.4} (se {:.4}){}",
                    e.estimand.as_str(),
                    e.point,
                    e.se,
                    e.stars()
                );
            }
            report_files(&bundle.files);
        }
        Command::Cde(args) => {
            let mut loaded = load_analysis_config(&args.config)?;
            if let Some(dir) = args.output_dir {
                loaded.config.output_dir = dir;
            }
            let bundle = cmd_cde(&loaded)?;
            if let Some(curve) = &bundle.curve {
                println!(
                    "{} grid points, {} skipped, {} significant",
                    curve.points.len(),
                    curve.skipped.len(),
                    curve.points.iter().filter(|p| p.significant).count()
                );
            }
            report_files(&bundle.files);
        }
        Command::Simulate(args) => {
            let loaded = simulate_config(&args)?;
            let out = cmd_simulate(&loaded)?;
            println!(
                "{} cells, {} replications each, {} failures",
                out.report.cells.len(),
                out.report.config.replications,
                out.report.failure_count()
            );
            report_files(&out.files);
        }
        Command::Generate(args) => {
            let mut dgp = DgpConfig::new(args.setting, args.panel, args.n, args.seed);
            dgp.model.mediator_scale = args.mediator_scale;
            let data = generate(&dgp)?;
            let file = std::fs::File::create(&args.output).map_err(|e| Error::Io {
                path: args.output.display().to_string(),
                source: e,
            })?;
            write_dataset_csv(&data, std::io::BufWriter::new(file))?;
            report_files(&[args.output]);
        }
    }
    eprintln!("finished in {:.1?}", start.elapsed());
    Ok(())
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = ErrorRecord::from_error(&e);
            eprintln!("{}", record.to_json());
            ExitCode::from(record.exit_code as u8)
        }
    }
}
