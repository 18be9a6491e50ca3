use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use stiefel_ekf::experiment::{execute, ExperimentConfig, Mode};
use stiefel_ekf::NoiseMode;

#[derive(Parser, Debug)]
#[command(name = "stiefel-ekf", version, about = "Extended Kalman filter experiments on Stiefel manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate, measure and filter one realization.
    Single(RunArgs),
    /// Error statistics over a grid of process and measurement noise levels.
    Sweep(RunArgs),
    /// Build and save an η table.
    Eta(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Built-in configuration used when no file is given.
    #[arg(long, value_enum, default_value_t = Preset::S2)]
    preset: Preset,

    /// Overrides the base seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (defaults to the number of CPUs). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,

    /// Overrides the measurement noise model.
    #[arg(long, value_enum)]
    mode: Option<NoiseArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// Sphere S² = St(3,1).
    S2,
    /// St(4,2).
    St42,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NoiseArg {
    TangentNoise,
    AmbientNoise,
}

impl From<NoiseArg> for NoiseMode {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::TangentNoise => NoiseMode::Tangent,
            NoiseArg::AmbientNoise => NoiseMode::Ambient,
        }
    }
}

fn resolve(args: &RunArgs, mode: Mode) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => match args.preset {
            Preset::S2 => ExperimentConfig::s2(mode),
            Preset::St42 => ExperimentConfig::st42(mode),
        },
    };
    if let Some(m) = cfg.mode {
        if m != mode {
            bail!(
                "configuration is for mode {} but this subcommand runs {}",
                m.as_str(),
                mode.as_str()
            );
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(noise) = args.mode {
        cfg.model.noise_mode = noise.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let (args, mode) = match &cli.command {
        Command::Single(a) => (a, Mode::SingleRun),
        Command::Sweep(a) => (a, Mode::SnrSweep),
        Command::Eta(a) => (a, Mode::EtaTable),
    };
    let cfg = resolve(args, mode)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;
    let artifacts = pool.install(|| execute(&cfg, mode))?;
    print!("{}", artifacts.report);
    if !artifacts.report.ends_with('\n') {
        println!();
    }
    for f in &artifacts.files {
        println!("wrote {}", f.display());
    }
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
