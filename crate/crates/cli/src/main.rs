use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lpdecomp_cli::config::{Estimator, RunConfig};
use lpdecomp_cli::{execute, Command};

#[derive(Parser)]
#[command(name = "lpdecomp", version, about = "Local projections with weight and contribution decompositions")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "LPDECOMP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Linear local projections: IRF table, weights and contributions.
    FitLinear(Common),
    /// Random-forest local projections: IRF, tree band, weights, IRF matrix.
    FitForest(Common),
    /// Proximity and influence decompositions of the linear weights.
    Decompose(Common),
    /// Weight and contribution concentration tables.
    Concentration(Common),
    /// Trimmed IRFs, subsample re-estimation and window estimates.
    Robustness(Common),
    /// k-means clustering of conditional forest IRFs.
    Cluster(Common),
    /// Checks every algebraic identity on the configured data.
    Verify(Common),
    /// Everything the configuration enables.
    Run(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Linear,
    Forest,
    Both,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Restrict the data to a date range such as `1960:` or `1960Q1:2010Q4`.
    #[arg(long)]
    subsample: Option<String>,
    #[arg(long)]
    estimator: Option<EstimatorArg>,
    /// Forest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trees per forest.
    #[arg(long)]
    trees: Option<usize>,
    /// Dose in shock standard deviations.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Skip SVG charts.
    #[arg(long)]
    no_charts: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        if let Some(s) = &self.subsample {
            cfg.data.subsample = Some(s.clone());
        }
        if let Some(e) = self.estimator {
            cfg.estimator = match e {
                EstimatorArg::Linear => Estimator::Linear,
                EstimatorArg::Forest => Estimator::Forest,
                EstimatorArg::Both => Estimator::Both,
            };
        }
        if let Some(s) = self.seed {
            cfg.forest.seed = s;
        }
        if let Some(b) = self.trees {
            cfg.forest.n_trees = b;
        }
        if let Some(d) = self.delta {
            cfg.dosage.delta = d;
        }
        if self.no_charts {
            cfg.output.charts = false;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let (cmd, common) = match &cli.command {
        Cmd::FitLinear(c) => (Command::FitLinear, c),
        Cmd::FitForest(c) => (Command::FitForest, c),
        Cmd::Decompose(c) => (Command::Decompose, c),
        Cmd::Concentration(c) => (Command::Concentration, c),
        Cmd::Robustness(c) => (Command::Robustness, c),
        Cmd::Cluster(c) => (Command::Cluster, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Run(c) => (Command::Run, c),
    };
    let cfg = common.config()?;
    let manifest = execute(&cfg, cmd)?;
    if cmd == Command::Verify {
        for c in &manifest.checks {
            println!("{:<56} {:>12.3e}  (tolerance {:.0e})", c.name, c.violation, c.tolerance);
        }
    }
    println!(
        "{}: wrote {} artifacts to {}, {} self-checks passed",
        cmd.name(),
        manifest.artifacts.len() + 1,
        cfg.output.dir.display(),
        manifest.checks.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
