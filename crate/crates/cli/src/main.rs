mod args;
mod commands;
mod input;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Exit codes are part of the interface: 1 means a rejected trace, 2 bad
/// input or configuration, 3 a failed training run.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn training(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

/// Progress goes to standard error so standard output stays parseable.
pub struct Log {
    quiet: bool,
}

impl Log {
    pub fn info(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("emf: {}", message.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let log = Log { quiet: cli.quiet };
    let result = match cli.command {
        Command::Train(a) => commands::train(a, &log),
        Command::Classify(a) => commands::classify(a, &log),
        Command::Synth(a) => commands::synth(a, &log),
        Command::Extract(a) => commands::extract(a, &log),
        Command::Evaluate(a) => commands::evaluate(a, &log),
        Command::Rank(a) => commands::rank(a, &log),
        Command::Heatmap(a) => commands::heatmap(a, &log),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("emf: error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
