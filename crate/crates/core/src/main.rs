use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use structacoustic::config::{ScenarioConfig, ScenarioKind};
use structacoustic::experiments::{run_scenario, write_artifacts};
use structacoustic::ExperimentError;

/// Spectral Galerkin simulator for a coupled acoustic chamber and clamped
/// elastic wall, with energy-estimate checks.
#[derive(Parser, Debug)]
#[command(name = "structacoustic", version)]
struct Cli {
    /// Directory for CSV and JSON artifacts (overrides `out_dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for randomized initial-data presets (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only report failures.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArg {
    /// TOML scenario file; the built-in scenario defaults are used without it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the scenario named in a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Cauchy differences across truncations.
    Converge {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated truncations, e.g. 4,8,16.
        #[arg(long, value_delimiter = ',')]
        truncations: Option<Vec<usize>>,
    },
    /// Continuous dependence on initial data.
    Perturb {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated perturbation sizes.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
    },
    /// Blow-up exploration with a superlinear plate source.
    Blowup {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Energy identity along a trajectory.
    IdentityCheck {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Orthonormality and Rayleigh identities of both bases.
    Basis {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Write the assembled operators as JSON.
    DumpOps {
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn load(arg: &ConfigArg, kind: ScenarioKind) -> Result<ScenarioConfig, ExperimentError> {
    match &arg.config {
        Some(path) => {
            let cfg = ScenarioConfig::from_file(path)?;
            Ok(ScenarioConfig { scenario: kind, ..cfg })
        }
        None => Ok(ScenarioConfig::preset_for(kind)),
    }
}

fn build_config(cli: &Cli) -> Result<ScenarioConfig, ExperimentError> {
    let mut cfg = match &cli.command {
        Command::Simulate { config } => ScenarioConfig::from_file(config)?,
        Command::Converge { config, truncations } => {
            let mut cfg = load(config, ScenarioKind::Converge)?;
            if let Some(t) = truncations {
                cfg.truncations = t.clone();
            }
            cfg
        }
        Command::Perturb { config, deltas } => {
            let mut cfg = load(config, ScenarioKind::Perturb)?;
            if let Some(d) = deltas {
                cfg.deltas = d.clone();
            }
            cfg
        }
        Command::Blowup { config } => load(config, ScenarioKind::BlowupExplore)?,
        Command::IdentityCheck { config } => load(config, ScenarioKind::IdentityCheck)?,
        Command::Basis { config } => load(config, ScenarioKind::Basis)?,
        Command::DumpOps { config } => load(config, ScenarioKind::DumpOps)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let run = match run_scenario(&cfg) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    if let Err(e) = write_artifacts(&run, &cfg, PathBuf::from(&cfg.out_dir).as_path()) {
        eprintln!("error writing artifacts: {e}");
        return ExitCode::from(3);
    }
    let s = &run.summary;
    for p in &s.properties {
        if !cli.quiet || !p.pass {
            println!("{} {}: {}", if p.pass { "PASS" } else { "FAIL" }, p.name, p.detail);
        }
    }
    if !cli.quiet {
        for (k, v) in &s.constants {
            match v {
                Some(v) => println!("  {k} = {v:.6e}"),
                None => println!("  {k} = inf"),
            }
        }
        println!(
            "{}: {} in {} ms (artifacts in {})",
            s.scenario,
            if s.pass { "pass" } else { "FAIL" },
            s.wall_ms,
            cfg.out_dir
        );
    }
    if s.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
