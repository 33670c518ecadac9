mod args;
mod commands;
mod settings;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;
use firenet::Error;

use args::{Cli, Command};
use settings::Settings;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_EMPTY: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
            Error::NonFinite(_) | Error::Numerical(_) => EXIT_NUMERIC,
            Error::Empty(_) => EXIT_EMPTY,
            _ => EXIT_IO,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    firenet::sys::retain_freed_memory();
    let mut settings = Settings::load(cli.global.config.as_deref())?;
    let threads = if cli.global.deterministic {
        Some(1)
    } else {
        settings.opt::<usize>("threads", cli.global.threads)?
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(a, &mut settings),
        Command::Train(a) => commands::train(a, &mut settings),
        Command::Hpo(a) => commands::hpo(a, &mut settings),
        Command::Eval(a) => commands::eval(a, &mut settings),
        Command::Predict(a) => commands::predict(a, &mut settings),
        Command::Cam(a) => commands::cam(a, &mut settings),
        Command::Bench(a) => commands::bench(a, &mut settings),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
