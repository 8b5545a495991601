use clap::Parser;

fn main() {
    let cli = ddvar_cli::Cli::parse();
    std::process::exit(ddvar_cli::run(cli));
}
