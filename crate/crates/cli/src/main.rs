use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use paramsens::model::fiber_io::write_fiber_file;
use paramsens::model::validate_descriptors;
use paramsens::sampling::build_plan;
use paramsens::study::{self, preprocess, run_study, Collection, StudyConfig};
use paramsens::synth::{generate, SynthConfig};
use paramsens::ParameterDescriptor;

mod serve;

#[derive(Parser)]
#[command(name = "paramsens", version, about = "Sensitivity analysis for fiber-producing algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a star-sampling plan for the parameters in a TOML file.
    Sample {
        /// File with `[[parameter]]` tables (name, min, max).
        #[arg(long)]
        params: PathBuf,
        /// Number of stars.
        #[arg(long)]
        n: usize,
        /// Step width as a fraction of each parameter range.
        #[arg(long)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cap on steps per branch direction.
        #[arg(long)]
        max_steps: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate one synthetic fiber result.
    Synth {
        /// Controls fiber length, in [0, 1].
        #[arg(long)]
        param1: f64,
        /// Controls fiber diameter, in [0, 1].
        #[arg(long)]
        param2: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 80)]
        count: usize,
        /// Volume size as `ax,ay,az`.
        #[arg(long, value_parser = parse_extent)]
        extent: Option<[f64; 3]>,
        #[arg(long, default_value_t = 0)]
        result_id: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute the target for every sample of a study.
    Run {
        /// Study configuration (TOML).
        config: PathBuf,
    },
    /// Compute (or load cached) derived data and write sensitivity.csv and
    /// the occupation volume into the collection.
    Analyze {
        /// Study output directory.
        collection: PathBuf,
        /// Worker threads, 0 for all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Serve the read-only query API over HTTP.
    Serve {
        collection: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write matrix, regional curves and embedding as CSV plus a summary.
    Report {
        collection: PathBuf,
        /// Defaults to `<collection>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    parameter: Vec<ParameterDescriptor>,
}

fn load_params(path: &Path) -> anyhow::Result<Vec<ParameterDescriptor>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ParamFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    validate_descriptors(&file.parameter)?;
    Ok(file.parameter)
}

fn parse_extent(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p}: {e}"))).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three comma-separated values".to_string())
}

fn open(collection: &Path, threads: Option<usize>) -> anyhow::Result<study::Preprocessed> {
    let c = Collection::open(collection).with_context(|| format!("opening collection {}", collection.display()))?;
    let threads = threads.unwrap_or(c.config.analysis.threads);
    let pre = preprocess(c, threads)?;
    for a in &pre.artifacts {
        log::info!("{}: {:?} ({})", a.kind, a.status, &a.key[..12]);
    }
    Ok(pre)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Sample { params, n, step, seed, max_steps, out } => {
            let descriptors = load_params(&params)?;
            let plan = build_plan(&descriptors, n, step, seed, max_steps)?;
            let mut bytes = Vec::new();
            plan.write_csv(&mut bytes)?;
            fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
            println!("{} samples in {} stars written to {}", plan.samples.len(), plan.star_count, out.display());
        }
        Command::Synth { param1, param2, seed, count, extent, result_id, out } => {
            let mut cfg = SynthConfig {
                seed,
                fiber_count: count,
                ..SynthConfig::default()
            };
            if let Some(e) = extent {
                cfg.extent = e;
            }
            let outcome = generate(param1, param2, &cfg, result_id)?;
            if !outcome.is_complete() {
                log::warn!("placed {} of {} fibers", outcome.achieved(), outcome.requested);
            }
            write_fiber_file(&out, &outcome.result)?;
        }
        Command::Run { config } => {
            let cfg = StudyConfig::load(&config)?;
            let summary = run_study(&cfg)?;
            let failed = summary.manifest.failed().count();
            println!(
                "{} samples: {} executed, {} reused, {} failed; collection at {}",
                summary.manifest.samples.len(),
                summary.executed,
                summary.reused,
                failed,
                summary.collection.display()
            );
        }
        Command::Analyze { collection, threads } => {
            let pre = open(&collection, threads)?;
            for path in study::write_analysis(&pre)? {
                println!("{}", path.display());
            }
        }
        Command::Serve { collection, host, port, threads } => {
            let pre = open(&collection, threads)?;
            serve::serve(pre, &host, port)?;
        }
        Command::Report { collection, out, threads } => {
            let pre = open(&collection, threads)?;
            let out = out.unwrap_or_else(|| collection.join("report"));
            if out.exists() && !out.is_dir() {
                bail!("{} exists and is not a directory", out.display());
            }
            for path in study::write_report(&pre, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}
