use clap::Parser;

fn main() {
    let cli = slungmpc_cli::Cli::parse();
    std::process::exit(slungmpc_cli::run_cli(&cli));
}
