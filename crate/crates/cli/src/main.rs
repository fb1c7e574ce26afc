use clap::Parser;

fn main() {
    let cli = graphred::Cli::parse();
    if let Err(e) = graphred::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
