use clap::Parser;
use ste_cli::args::{Cli, Command};
use ste_cli::commands;
use ste_cli::exit_code_for;

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Ste(args) => commands::cmd_ste(args),
        Command::Gc(args) => commands::cmd_gc(args),
        Command::Table(args) => commands::cmd_table(args),
        Command::Adjust(args) => commands::cmd_adjust(args),
    };
    if let Err(e) = result {
        eprintln!("stelab: {e}");
        std::process::exit(exit_code_for(&e));
    }
}
