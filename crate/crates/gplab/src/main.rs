use clap::Parser;

fn main() {
    let args = gplab::cli::Args::parse();
    std::process::exit(gplab::cli::run(args));
}
