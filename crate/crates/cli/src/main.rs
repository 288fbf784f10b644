//! `bridgesim <subcommand> --config <file> --out <dir> [--seed <u64>] [--threads <n>]`

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::Config;

#[derive(Parser)]
#[command(name = "bridgesim", version = env!("BRIDGESIM_VERSION"), about = "Diffusion bridge simulation with guided proposals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unconditioned Euler–Maruyama paths from the bridge start.
    Forward(Common),
    /// Bridge proposals by `run.method`: guided, pulled, pulled-nodrift, exact-linear.
    Bridge(Common),
    /// Independence Metropolis–Hastings over guided proposals.
    Mh(Common),
    /// Importance-weighted guided proposals.
    Is(Common),
    /// Stochastic-gradient tuning of the guide drift θ.
    TuneTheta(Common),
    /// Divergence of the target bridge from guided proposals over a θ grid.
    KlScan(Common),
    /// Marginal histograms of the oracle and four proposals.
    SineFigure(Common),
    /// Numerical self-checks for the configured model/guide pair.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; BRIDGESIM_THREADS takes precedence.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Forward(_) => "forward",
            Self::Bridge(_) => "bridge",
            Self::Mh(_) => "mh",
            Self::Is(_) => "is",
            Self::TuneTheta(_) => "tune-theta",
            Self::KlScan(_) => "kl-scan",
            Self::SineFigure(_) => "sine-figure",
            Self::Validate(_) => "validate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Self::Forward(c)
            | Self::Bridge(c)
            | Self::Mh(c)
            | Self::Is(c)
            | Self::TuneTheta(c)
            | Self::KlScan(c)
            | Self::SineFigure(c)
            | Self::Validate(c) => c,
        }
    }

    fn run(&self, cfg: &Config) -> anyhow::Result<run::Output> {
        match self {
            Self::Forward(_) => run::forward(cfg),
            Self::Bridge(_) => run::bridge(cfg),
            Self::Mh(_) => run::mh(cfg),
            Self::Is(_) => run::importance(cfg),
            Self::TuneTheta(_) => run::tune_theta(cfg),
            Self::KlScan(_) => run::kl(cfg),
            Self::SineFigure(_) => run::sine_figure(cfg),
            Self::Validate(_) => run::validate(cfg),
        }
    }
}

fn thread_count(flag: Option<usize>) -> Option<usize> {
    std::env::var("BRIDGESIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .or(flag)
        .filter(|&n| n > 0)
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = cli.command;
    let common = command.common();

    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match config::parse(&text) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("error: invalid configuration {}:", common.config.display());
            for e in errors {
                eprintln!("  {e}");
            }
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let threads = thread_count(common.threads);
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    let out = common.out.as_path();
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::from(1);
    }
    let start = Instant::now();
    let result = command.run(&cfg).and_then(|o| {
        for (name, bytes) in &o.files {
            std::fs::write(out.join(name), bytes).with_context(|| format!("writing {name}"))?;
        }
        write_json(&out.join("summary.json"), &o.summary)?;
        Ok(o.passed)
    });
    let (status, error, code) = match &result {
        Ok(true) => ("ok", None, ExitCode::SUCCESS),
        Ok(false) => ("checks_failed", None, ExitCode::from(1)),
        Err(e) => ("error", Some(format!("{e:#}")), ExitCode::from(1)),
    };
    let manifest = json!({
        "subcommand": command.name(),
        "version": env!("BRIDGESIM_VERSION"),
        "seed": cfg.seed,
        "threads": threads,
        "config": cfg,
        "config_toml": cfg.to_toml(),
        "status": status,
        "error": error,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    if let Err(e) = write_json(&out.join("manifest.json"), &manifest) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    if let Err(e) = result {
        eprintln!("error: {e:#}");
    }
    code
}
