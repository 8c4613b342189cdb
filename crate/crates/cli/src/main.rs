use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use agediff_cli::{execute, load_with_overrides, CliError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "agediff",
    version,
    about = "Age-structured diffusion models: growth rates, orbits and equilibria"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run whatever `run.kind` the scenario names.
    Run(Common),
    /// Malthusian parameter, stable distribution, optional growth check.
    Spectral(Common),
    /// Linear orbit.
    Simulate(Common),
    /// Orbit with a nonlinear death term.
    Semilinear(Common),
    /// One equilibrium.
    Equilibrium(Common),
    /// Equilibrium branch over a range of `eta`.
    Branch(Common),
    /// Scalar renewal and Gurtin-MacCamy reference values.
    Oracle(Common),
    /// Parse and check a scenario, then print it with defaults filled in.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long, short)]
    scenario: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// `key.path=value`, applied before validation. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8, CliError> {
    let (args, expected) = match cmd {
        Command::Run(a) => (a, None),
        Command::Spectral(a) => (a, Some("spectral")),
        Command::Simulate(a) => (a, Some("simulate")),
        Command::Semilinear(a) => (a, Some("simulate_semilinear")),
        Command::Equilibrium(a) => (a, Some("equilibrium")),
        Command::Branch(a) => (a, Some("branch")),
        Command::Oracle(a) => (a, Some("oracle")),
        Command::Validate(a) => {
            let sc = load_with_overrides(&a.scenario, &a.overrides)?;
            let text = serde_json::to_string_pretty(&sc).map_err(|e| CliError::Io(e.to_string()))?;
            println!("{text}");
            return Ok(0);
        }
    };
    let sc = load_with_overrides(&args.scenario, &args.overrides)?;
    if let Some(kind) = expected {
        if sc.run.kind() != kind {
            return Err(CliError::Validation(format!(
                "run.kind is `{}` but the `{kind}` command was used",
                sc.run.kind()
            )));
        }
    }
    let out = args
        .out
        .or_else(|| sc.output.dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("agediff-out"));
    let start = Instant::now();
    let record = execute(&sc, &out)?;
    eprintln!("{} finished in {:.3} s", record.kind, start.elapsed().as_secs_f64());
    let text = serde_json::to_string_pretty(&record.summary).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{text}");
    Ok(if record.ok() { 0 } else { 3 })
}
