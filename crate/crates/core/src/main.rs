use clap::Parser;

fn main() {
    let cli = bapsrl::cli::Cli::parse();
    if let Err(e) = bapsrl::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
