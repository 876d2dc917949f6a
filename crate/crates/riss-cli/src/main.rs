//! Experiment runner and artifact renderer.
//!
//! Verbs: `run` (execute an experiment config, bundled name or TOML path),
//! `validate` (schema + physics checks), `render` (CSV → SVG),
//! `list-experiments`. Exit codes: 0 ok, 1 validation failure, 2 runtime
//! failure. `RISS_OUTPUT_ROOT` overrides the default output root.

mod config;
mod experiments;
mod manifest;
mod seeds;
mod svg;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::{parse_config, validate_config};
use manifest::{Manifest, sha256_hex};
use svg::ChartKind;

#[derive(Parser)]
#[command(name = "riss", version, about = "Reflective-surface link experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment (bundled name or config path) and write a run
    /// directory with artifacts and a manifest.
    Run {
        /// Bundled experiment name or path to a TOML config.
        config: String,
        /// Output directory (overrides config and RISS_OUTPUT_ROOT).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a config and report errors and physics warnings.
    Validate { config: String },
    /// Render a CSV artifact to a deterministic SVG chart.
    Render {
        #[arg(long)]
        kind: Kind,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Column to plot on the y axis (line charts; default second column).
        #[arg(long)]
        y_column: Option<String>,
        /// Plot log10 of the y values.
        #[arg(long)]
        log_y: bool,
    },
    /// List bundled experiments.
    ListExperiments,
}

#[derive(ValueEnum, Clone, Copy)]
enum Kind {
    Beampattern,
    Trace,
    Constellation,
    Heatmap,
}

impl From<Kind> for ChartKind {
    fn from(kind: Kind) -> ChartKind {
        match kind {
            Kind::Beampattern | Kind::Trace => ChartKind::Line,
            Kind::Constellation => ChartKind::Constellation,
            Kind::Heatmap => ChartKind::Heatmap,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(dispatch(cli));
}

fn load_config_text(name_or_path: &str) -> Result<String, String> {
    if let Some(text) = experiments::bundled(name_or_path) {
        return Ok(text.to_string());
    }
    fs::read_to_string(name_or_path)
        .map_err(|e| format!("cannot read config `{name_or_path}`: {e}"))
}

fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::ListExperiments => {
            for name in experiments::NAMES {
                let text = experiments::bundled(name).unwrap();
                let blurb = text
                    .lines()
                    .take_while(|l| l.starts_with('#'))
                    .map(|l| l.trim_start_matches('#').trim())
                    .collect::<Vec<_>>()
                    .join(" ");
                println!("{name}: {blurb}");
            }
            0
        }
        Command::Validate { config } => {
            let text = match load_config_text(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{e}");
                    return 1;
                }
            };
            match parse_config(&text) {
                Ok(cfg) => {
                    let report = validate_config(&cfg, &experiments::NAMES);
                    print!("{}", report.render());
                    if report.errors.is_empty() { 0 } else { 1 }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
        Command::Run { config, output } => run_verb(&config, output),
        Command::Render { kind, input, output, y_column, log_y } => {
            let csv = match fs::read_to_string(&input) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("cannot read `{}`: {e}", input.display());
                    return 2;
                }
            };
            match svg::render(kind.into(), &csv, y_column.as_deref(), log_y) {
                Ok(image) => {
                    if let Err(e) = fs::write(&output, image) {
                        eprintln!("cannot write `{}`: {e}", output.display());
                        return 2;
                    }
                    println!("wrote {}", output.display());
                    0
                }
                Err(e) => {
                    eprintln!("render failed: {e}");
                    2
                }
            }
        }
    }
}

fn run_verb(config_arg: &str, output_flag: Option<PathBuf>) -> i32 {
    let text = match load_config_text(config_arg) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let report = validate_config(&cfg, &experiments::NAMES);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.errors.is_empty() {
        for e in &report.errors {
            eprintln!("error: {e}");
        }
        return 1;
    }

    let out_dir = output_flag
        .or_else(|| cfg.run.output.clone().map(PathBuf::from))
        .unwrap_or_else(|| {
            let root = std::env::var("RISS_OUTPUT_ROOT").unwrap_or_else(|_| "runs".into());
            PathBuf::from(root).join(&cfg.run.experiment)
        });
    if let Err(e) = fs::create_dir_all(&out_dir) {
        eprintln!("cannot create `{}`: {e}", out_dir.display());
        return 2;
    }

    let result = match experiments::run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("run failed: {e}");
            return 2;
        }
    };

    let mut manifest = Manifest {
        experiment: cfg.run.experiment.clone(),
        config_sha256: sha256_hex(text.as_bytes()),
        master_seed: cfg.run.seed.unwrap_or(0),
        sub_seeds: result.sub_seeds,
        failures: result.failures,
        extras: result.extras,
        ..Default::default()
    };
    let mut files = result.artifacts;
    files.push(("config.toml".into(), text.into_bytes()));
    for (name, bytes) in files {
        manifest.artifacts.insert(name.clone(), sha256_hex(&bytes));
        if let Err(e) = fs::write(out_dir.join(&name), &bytes) {
            eprintln!("cannot write `{name}`: {e}");
            return 2;
        }
        println!("wrote {}", out_dir.join(&name).display());
    }
    if let Err(e) = fs::write(out_dir.join("manifest.json"), manifest.render()) {
        eprintln!("cannot write manifest: {e}");
        return 2;
    }
    println!("wrote {}", out_dir.join("manifest.json").display());
    println!("status: {}", manifest.status());
    0
}
