use clap::Parser;
use wei_norman::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
