use clap::Parser;

fn main() {
    std::process::exit(icflow_cli::execute(icflow_cli::Cli::parse()));
}
