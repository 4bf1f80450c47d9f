use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpb_core::runner::{self, Format, Output, RunFailure, RunStatus, ScenarioConfig};
use mpb_core::scenario::FlatBandParams;

#[derive(Parser)]
#[command(name = "mpb", version, about = "Flat-band pole, mode and phase-space pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pole ladder: n, omega, gamma, t_R.
    Poles(StageArgs),
    /// Survival amplitude and reduced state over time.
    Evolve(StageArgs),
    /// Mode fit, gamma_eff, t_D, t_R and linear entropy.
    Modes(StageArgs),
    /// Wigner snapshots of the reduced state.
    Wigner(StageArgs),
    /// Characteristic domains and the phase-space trajectory.
    Classical(StageArgs),
    /// Config-driven runs.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Run every output listed in a config file.
    Run {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check a config file and list every problem.
    Check { file: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    common: Common,
    /// Base config; defaults to the flat band.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Numeric override, e.g. `--set model.g=0.1`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

enum Failure {
    Config(Vec<String>),
    Stage(RunFailure),
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(vec![format!("{}: {e}", path.display())]))?;
    runner::validate_config(&text).map_err(|issues| Failure::Config(issues.iter().map(|i| i.to_string()).collect()))
}

fn apply(cfg: &mut ScenarioConfig, common: &Common) {
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(format) = common.format {
        cfg.format = format.into();
    }
}

fn stage(output: Output, args: &StageArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => load(path)?,
        None => ScenarioConfig::new(FlatBandParams::default(), vec![output]),
    };
    cfg.outputs = vec![output];
    cfg.sweep.clear();
    for item in &args.overrides {
        let (path, value) =
            item.split_once('=').ok_or_else(|| Failure::Config(vec![format!("--set {item}: expected PATH=VALUE")]))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Failure::Config(vec![format!("--set {item}: '{value}' is not a number")]))?;
        cfg = cfg.with_override(path.trim(), value).map_err(|e| Failure::Config(vec![e.to_string()]))?;
    }
    // re-validate so overrides go through the same checks as files
    runner::validate_config(&cfg.to_toml())
        .map_err(|issues| Failure::Config(issues.iter().map(|i| i.to_string()).collect()))?;
    apply(&mut cfg, &args.common);
    Ok(cfg)
}

fn execute(cfg: &ScenarioConfig, out: &Path) -> Result<(), Failure> {
    let manifest = runner::run_scenario(cfg, out).map_err(Failure::Stage)?;
    debug_assert_eq!(manifest.status, RunStatus::Complete);
    for a in &manifest.artifacts {
        println!("{}", out.join(&a.path).display());
    }
    println!("{}", out.join(runner::MANIFEST).display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (output, args) = match cli.command {
        Command::Poles(a) => (Output::Poles, a),
        Command::Evolve(a) => (Output::Evolve, a),
        Command::Modes(a) => (Output::Modes, a),
        Command::Wigner(a) => (Output::Wigner, a),
        Command::Classical(a) => (Output::Classical, a),
        Command::Scenario(ScenarioCommand::Run { file, common }) => {
            let mut cfg = load(&file)?;
            apply(&mut cfg, &common);
            return execute(&cfg, &common.out);
        }
        Command::Scenario(ScenarioCommand::Check { file }) => {
            load(&file)?;
            println!("{}: ok", file.display());
            return Ok(());
        }
    };
    let cfg = stage(output, &args)?;
    execute(&cfg, &args.common.out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(issues)) => {
            eprintln!("error: stage config failed");
            for i in issues {
                eprintln!("  {i}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Stage(f)) => {
            eprintln!("error: {f}");
            ExitCode::from(1)
        }
    }
}
