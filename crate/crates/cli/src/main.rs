//! `gbayes`: runs one analysis from a JSON config and writes a JSON report
//! plus CSV plot data into the output directory.
//!
//! On failure the process prints a JSON error document to stdout and exits
//! with status 1.

mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::RunContext;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "gbayes", version, about = "Generalized-Bayes experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Force sequential reductions. Every computation here is already
    /// sequential; the flag is recorded in the report.
    #[arg(long)]
    deterministic: bool,
    /// Overrides the seed of synthetic data.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Gibbs update and its evidence record.
    Update(Common),
    /// Partition-function diagnostic: belief or decision posterior.
    Diagnose(Common),
    /// Penalized-objective solver against the closed form.
    Variational(Common),
    /// Product-additivity gaps of the divergence catalog.
    Additivity(Common),
    /// Data-only shifts and their effect on normalizers and Bayes factors.
    EvidenceDemo(Common),
    /// Prequential score traces and their differences.
    Score(Common),
    /// Temperature calibration.
    Calibrate(Common),
    /// Empirical-likelihood and exponential-tilting quasi-posteriors.
    Quasi(Common),
    /// Linear-utility maximization over the simplex.
    Vnm(Common),
    /// Loss, separability check, calibrated update.
    Recipe(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Update(c) => ("update", c),
            Command::Diagnose(c) => ("diagnose", c),
            Command::Variational(c) => ("variational", c),
            Command::Additivity(c) => ("additivity", c),
            Command::EvidenceDemo(c) => ("evidence-demo", c),
            Command::Score(c) => ("score", c),
            Command::Calibrate(c) => ("calibrate", c),
            Command::Quasi(c) => ("quasi", c),
            Command::Vnm(c) => ("vnm", c),
            Command::Recipe(c) => ("recipe", c),
        }
    }
}

fn run(command: &Command) -> Result<PathBuf> {
    let (name, common) = command.parts();
    let text = fs::read_to_string(&common.config).with_context(|| format!("reading {}", common.config.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).context("invalid config")?;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let ctx = RunContext {
        config_dir: commands::config_dir(&common.config),
        out: common.out.clone(),
        seed: common.seed,
    };
    let mut report = match command {
        Command::Update(_) => commands::update(&cfg, &ctx),
        Command::Diagnose(_) => commands::diagnose(&cfg, &ctx),
        Command::Variational(_) => commands::variational(&cfg, &ctx),
        Command::Additivity(_) => commands::additivity(&cfg, &ctx),
        Command::EvidenceDemo(_) => commands::evidence_demo(&cfg, &ctx),
        Command::Score(_) => commands::score(&cfg, &ctx),
        Command::Calibrate(_) => commands::calibrate(&cfg, &ctx),
        Command::Quasi(_) => commands::quasi(&cfg, &ctx),
        Command::Vnm(_) => commands::vnm(&cfg, &ctx),
        Command::Recipe(_) => commands::recipe(&cfg, &ctx),
    }?;
    report["deterministic"] = json!(common.deterministic);
    report["seed_override"] = json!(common.seed);
    let file = format!("{name}.json");
    ctx.write_json(&file, &report)?;
    Ok(common.out.join(file))
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if e.chain().any(|c| c.is::<gbayes::Error>()) {
        "computation"
    } else if e.chain().any(|c| c.is::<serde_json::Error>()) {
        "config"
    } else if e.chain().any(|c| c.is::<std::io::Error>() || c.is::<csv::Error>()) {
        "io"
    } else {
        "invalid-input"
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(path) => {
            eprintln!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let doc = json!({
                "status": "error",
                "command": cli.command.parts().0,
                "kind": error_kind(&e),
                "message": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&doc).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(1)
        }
    }
}
