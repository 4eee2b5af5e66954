mod commands;
mod manifest;
mod plot;

use clap::{Parser, Subcommand};

/// Errors caused by flag misuse rather than runtime failure; they map to
/// exit code 2 like clap's own parse errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "usage error: {}", self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "drhg",
    version,
    about = "Destroy-and-repair solver toolkit for TSP and CVRP"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a uniform random instance dataset (JSON lines)
    Gen(commands::GenArgs),
    /// Label a dataset with reference tours
    Label(commands::LabelArgs),
    /// Train the repair model on a labeled dataset
    Train(commands::TrainArgs),
    /// Solve a dataset with the iterative destroy-and-repair loop
    Solve(commands::SolveArgs),
    /// Evaluate a solver against references
    Eval(commands::EvalArgs),
    /// Render a solution (or a destruction series) as SVG
    Plot(commands::PlotArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DRHG_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => commands::cmd_gen(args),
        Command::Label(args) => commands::cmd_label(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Solve(args) => commands::cmd_solve(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Plot(args) => commands::cmd_plot(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        let code = if err.downcast_ref::<UsageError>().is_some() { 2 } else { 1 };
        std::process::exit(code);
    }
}
