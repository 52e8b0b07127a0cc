use clap::Parser;

use swioss_cli::{run, Cli, Outcome};

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::CheckFailed) => 1,
        Err(err) => {
            eprintln!("error: {err:#}");
            2
        }
    };
    std::process::exit(code);
}
