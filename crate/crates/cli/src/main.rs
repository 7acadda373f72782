use clap::Parser;
use dialect_eval_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dialect_eval_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(dialect_eval_cli::exit_code(&err));
    }
}
