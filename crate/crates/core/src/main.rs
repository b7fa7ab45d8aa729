use clap::Parser;
use consensus_lab::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
