use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qsmolu_cli::sweep::{parse_values, sweep, SweepError};
use qsmolu_cli::{exit, parse_config, run_scenario, Regime, ScenarioConfig, Status};

#[derive(Parser)]
#[command(name = "qsmolu", version, about = "Brownian, quantum and quantum-Brownian dynamics scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Force-noise Langevin ensemble.
    #[command(name = "classical-langevin")]
    ClassicalLangevin(RunArgs),
    /// Velocity-noise ensemble sampling a target density.
    #[command(name = "velocity-noise")]
    VelocityNoise(RunArgs),
    /// Langevin ensemble with force and velocity noise.
    Joint(RunArgs),
    /// Classical Smoluchowski equation on a grid.
    Smoluchowski(RunArgs),
    /// Zero-temperature quantum Smoluchowski equation on a grid.
    #[command(name = "quantum-t0")]
    QuantumT0(RunArgs),
    /// Split-step Schrödinger propagation.
    Schrodinger(RunArgs),
    /// Madelung hydrodynamics.
    Madelung(RunArgs),
    /// Spectrum, partition function and Gibbs densities.
    Equilibrium(RunArgs),
    /// Free-particle dispersion curves.
    Dispersion(RunArgs),
    /// One run per value of a config parameter.
    Sweep(SweepArgs),
    /// Check a config without running it.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dotted config path, e.g. `integrator.dt`.
    #[arg(long)]
    param: String,
    /// Comma-separated values; may be empty.
    #[arg(long, allow_hyphen_values = true)]
    values: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

fn load(path: &Path) -> Result<ScenarioConfig, i32> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        exit::VALIDATION
    })?;
    parse_config(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        exit::VALIDATION
    })
}

fn run(regime: Regime, args: RunArgs) -> Result<(), i32> {
    let mut cfg = load(&args.config)?;
    if cfg.regime != regime {
        eprintln!("error: regime: config declares `{}` but the command is `{regime}`", cfg.regime);
        return Err(exit::VALIDATION);
    }
    if let Some(out) = args.out {
        cfg.output.directory = out;
    }
    if let Some(seed) = args.seed {
        cfg.integrator.seed = seed;
    }
    let report = run_scenario(&cfg).map_err(|e| {
        eprintln!("error: {e}");
        exit::NUMERIC
    })?;
    match report.status {
        Status::Ok => {
            println!("{} finished in {:.3} s; outputs in {}", regime, report.wall_time_s, cfg.output.directory.display());
            Ok(())
        }
        Status::Failed => {
            let f = report.error.expect("failed reports carry an error");
            let step = f.step.map_or(String::new(), |s| format!(" at step {s}"));
            eprintln!("error: {}{step}: {}", f.module, f.message);
            Err(exit::NUMERIC)
        }
    }
}

fn run_sweep(args: SweepArgs) -> Result<(), i32> {
    let cfg = load(&args.config)?;
    let out = args.out.unwrap_or_else(|| cfg.output.directory.clone());
    let values = parse_values(&args.values);
    match sweep(&cfg, &args.param, &values, &out) {
        Ok(report) => {
            println!("sweep over {} with {} value(s); summary in {}", args.param, report.runs.len(), out.join("sweep.csv").display());
            if report.all_ok() {
                Ok(())
            } else {
                eprintln!("error: some sub-runs failed; see sweep.json");
                Err(exit::NUMERIC)
            }
        }
        Err(e @ (SweepError::UnknownParam(_) | SweepError::Config(_))) => {
            eprintln!("error: {e}");
            Err(exit::VALIDATION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(exit::NUMERIC)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::VALIDATION } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::ClassicalLangevin(a) => run(Regime::ClassicalLangevin, a),
        Command::VelocityNoise(a) => run(Regime::VelocityNoise, a),
        Command::Joint(a) => run(Regime::Joint, a),
        Command::Smoluchowski(a) => run(Regime::Smoluchowski, a),
        Command::QuantumT0(a) => run(Regime::QuantumT0, a),
        Command::Schrodinger(a) => run(Regime::Schrodinger, a),
        Command::Madelung(a) => run(Regime::Madelung, a),
        Command::Equilibrium(a) => run(Regime::Equilibrium, a),
        Command::Dispersion(a) => run(Regime::Dispersion, a),
        Command::Sweep(a) => run_sweep(a),
        Command::Validate(a) => load(&a.config).map(|cfg| println!("{}: valid {} scenario", a.config.display(), cfg.regime)),
    };
    match result {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(code) => ExitCode::from(code as u8),
    }
}
