use clap::Parser;
use graph_approx_cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
