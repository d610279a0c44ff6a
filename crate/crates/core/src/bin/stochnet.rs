use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use stochnet::cli::{run, Command};

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    Train,
    Eval,
    Oracle,
    Segment,
    Serve,
}

/// Stochastic feed-forward networks: training, evaluation, oracle checks,
/// segmentation and the interactive segmentation server.
#[derive(Parser)]
#[command(name = "stochnet", version)]
struct Args {
    command: Cmd,
    /// Run configuration (`key = value` lines with `[section]` headers).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set train.step_size=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn main() {
    let args = Args::try_parse().unwrap_or_else(|e| {
        let _ = e.print();
        std::process::exit(if e.use_stderr() { 2 } else { 0 });
    });
    let command = match args.command {
        Cmd::Train => Command::Train,
        Cmd::Eval => Command::Eval,
        Cmd::Oracle => Command::Oracle,
        Cmd::Segment => Command::Segment,
        Cmd::Serve => Command::Serve,
    };
    let code = run(command, &args.config, &args.sets, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
