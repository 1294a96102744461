use clap::Parser;
use qpca_hjm::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
