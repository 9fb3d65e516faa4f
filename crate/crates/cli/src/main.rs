use clap::Parser;

fn main() {
    let cli = lookahead_cli::Cli::parse();
    if let Err(e) = lookahead_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
