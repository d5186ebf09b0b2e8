use clap::Parser;

fn main() {
    let cli = kec::cli::Cli::parse();
    std::process::exit(kec::cli::run(&cli));
}
