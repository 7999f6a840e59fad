use clap::Parser;
use speechcorpus_cli::{error_chain, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            1
        }
    };
    std::process::exit(code);
}
