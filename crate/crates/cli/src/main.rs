//! logcvx: run frequency-function experiments and write deterministic
//! artifacts. Exit codes: 0 success, 1 a certificate or audit failed (stderr
//! points at the worst sample), 2 configuration or usage error.

mod config;
mod experiments;
mod report;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::Config;
use experiments::{Outcome, RunContext};
use report::{OutDir, RunManifest};

#[derive(Parser)]
#[command(
    name = "logcvx",
    version,
    about = "energy-quotient laboratory for backward parabolic uniqueness"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment and write its artifacts.
    Run {
        /// Experiment id; see `logcvx list`.
        experiment: String,
        /// Output directory for CSV, JSON and SVG artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Seed for every random draw the experiment makes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override a config key, e.g. --set identity.dtau=1e-3.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Skip SVG plots.
        #[arg(long)]
        no_svg: bool,
    },
    /// List experiment ids.
    List,
    /// Check an experiment configuration without running it.
    ValidateConfig {
        experiment: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Re-run a finished run from its manifest and compare artifacts byte
    /// for byte.
    Replay {
        /// Directory containing run.json and the original artifacts.
        dir: PathBuf,
    },
}

fn build_config(experiment: &str, set: &[String]) -> Result<Config> {
    let mut cfg = Config::for_experiment(experiment)?;
    for kv in set {
        cfg.apply_set(kv)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("LOGCVX_THREADS") {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .context("LOGCVX_THREADS must be a positive integer")?;
        builder = builder.num_threads(n);
    }
    builder.build().context("building the worker pool")
}

fn execute(cfg: &Config, out_dir: &Path, seed: u64, svg: bool) -> Result<Outcome> {
    let out = OutDir::create(out_dir)?;
    // the manifest goes first so a failed run can still be replayed
    out.write_json(
        "run.json",
        &RunManifest {
            experiment: cfg.experiment().to_string(),
            seed,
            config: cfg.echo().clone(),
        },
    )?;
    let ctx = RunContext { out: &out, seed, svg };
    thread_pool()?.install(|| experiments::run(cfg, &ctx))
}

fn cmd_run(experiment: &str, out: &Path, seed: u64, set: &[String], svg: bool) -> Result<ExitCode> {
    let cfg = build_config(experiment, set)?;
    match execute(&cfg, out, seed, svg)? {
        Outcome::Pass(msg) => {
            println!("PASS: {msg}");
            println!("artifacts in {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Outcome::Fail(msg) => {
            eprintln!("FAIL: {msg}");
            eprintln!("artifacts in {}", out.display());
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_list() -> ExitCode {
    for id in config::EXPERIMENTS {
        println!("{id}");
    }
    for (alias, target) in config::ALIASES {
        println!("alias: {alias} = {target} with the scaling sweep forced on");
    }
    ExitCode::SUCCESS
}

fn cmd_validate(experiment: &str, set: &[String]) -> Result<ExitCode> {
    let cfg = build_config(experiment, set)?;
    println!("ok: '{}' configuration is valid", cfg.experiment());
    for (k, v) in cfg.echo() {
        println!("{k}={v}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_replay(dir: &Path) -> Result<ExitCode> {
    let manifest_path = dir.join("run.json");
    let text = fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).context("parsing the run manifest")?;

    let mut cfg = Config::for_experiment(&manifest.experiment)?;
    for (k, v) in &manifest.config {
        cfg.apply_set(&format!("{k}={v}"))?;
    }
    cfg.validate()?;

    let replay_dir = dir.join("replay");
    match execute(&cfg, &replay_dir, manifest.seed, true)? {
        Outcome::Pass(_) | Outcome::Fail(_) => {}
    }

    // every artifact of the original run must reproduce byte for byte
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".csv") || name.ends_with(".json") || name.ends_with(".svg") {
            names.push(name);
        }
    }
    names.sort();
    if names.is_empty() {
        bail!("no artifacts found in {}", dir.display());
    }
    let mut drifted = Vec::new();
    for name in &names {
        let original = fs::read(dir.join(name))?;
        let replayed = fs::read(replay_dir.join(name))
            .with_context(|| format!("replay did not produce {name}"))?;
        if original != replayed {
            drifted.push(name.clone());
        }
    }
    if drifted.is_empty() {
        println!("replay matches: {} artifacts byte-identical", names.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("replay drifted on: {}", drifted.join(", "));
        Ok(ExitCode::from(1))
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run { experiment, out, seed, set, no_svg } => {
            cmd_run(&experiment, &out, seed, &set, !no_svg)
        }
        Cmd::List => Ok(cmd_list()),
        Cmd::ValidateConfig { experiment, set } => cmd_validate(&experiment, &set),
        Cmd::Replay { dir } => cmd_replay(&dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
