use clap::Parser;

fn main() {
    let cli = evoforge::cli::Cli::parse();
    if let Err(e) = evoforge::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
