//! Command-line entry point. All logic lives in [`fixpoint::cli`]; this
//! binary only parses arguments, prints the one-line summary, and converts
//! outcomes into process exit codes.

use clap::Parser;

fn main() {
    let cli = fixpoint::cli::Cli::parse();
    match fixpoint::cli::run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            std::process::exit(outcome.code);
        }
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
