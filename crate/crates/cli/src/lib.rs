//! The `sigpep` command line: training, prediction, evaluation, screening
//! and synthetic inputs. Every command is deterministic in its inputs,
//! flags and seed.
//!
//! Exit status is 0 on success, 2 for unusable input and 1 when a run
//! aborts part-way.

pub mod args;
pub mod batch;
pub mod error;
pub mod eval;
pub mod inputs;
pub mod predict;
pub mod screen;
pub mod simulate;
pub mod train;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult, ExitKind};
pub use screen::{screen, KnownSpIndex, ScreenConfig, ScreenReport};

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => train::run(a).map(|r| {
            println!("{}", r.checkpoint.display());
        }),
        Command::Predict(a) => predict::run(a).map(drop),
        Command::Eval(a) => eval::run(a).map(|r| {
            print!("{}", r.to_metric_lines());
        }),
        Command::Screen(a) => screen::run(a).map(|r| {
            print!("{}", r.to_tsv());
        }),
        Command::Simulate(a) => simulate::run(a).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
    }
}
