mod args;
mod commands;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Compare(a) => commands::compare(a),
        Command::Eval(a) => commands::eval(a),
        Command::DumpEmbeddings(a) => commands::dump_embeddings(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.code as u8)
        }
    }
}
