use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gbsde_cli::{run, CliError, Command, ExperimentConfig, Options};

#[derive(Parser)]
#[command(name = "gbsde", version, about = "G-BSDE cascade solver and invariant checks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the G-heat equation and compare with closed forms.
    Gheat(Common),
    /// Solve the cascade and read (Y, Z, K) along scenario paths.
    Solve(Common),
    /// Run every enabled invariant check.
    Verify(Common),
    /// Run the path-dependent approximation pipeline over dyadic levels.
    Approx(Common),
    /// Dump the scenario paths.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Treat warnings as failures.
    #[arg(long)]
    strict: bool,
}

fn execute(command: Command, args: Common) -> Result<bool, CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args.out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let exp = cfg.validate()?;
    log::info!("running {} into {}", command.name(), out.display());
    let report = run(command, &exp, &Options { out: out.clone(), strict: args.strict })?;
    print!("{}", report.summary());
    println!("report written to {}", out.join("report.json").display());
    Ok(report.pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Gheat(a) => (Command::Gheat, a),
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Approx(a) => (Command::Approx, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
    };
    match execute(command, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
