//! Library side of the `lensdyn` command: every subcommand is a function
//! from a loaded project (and flags) to bytes to be written.

pub mod check;
pub mod commands;

use lensdyn_core::ProjectError;
use thiserror::Error;

pub use check::{cmd_check, CheckOptions, RunReport, SuiteResult};
pub use commands::{cmd_compose, cmd_matrix, cmd_simulate, cmd_steady, cmd_tensor, SimulateArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

/// Projects compiled into the binary and exercised by `check`.
pub mod fixtures {
    pub const FLIPFLOP: &str = include_str!("../fixtures/flipflop.json");
    pub const LV: &str = include_str!("../fixtures/lv.json");
    pub const WEATHER: &str = include_str!("../fixtures/weather.json");
    pub const BROKEN_SQUARE: &str = include_str!("../fixtures/broken_square.json");

    /// Fixtures that `check` runs by default, by file name.
    pub const BUNDLED: [(&str, &str); 3] = [
        ("flipflop.json", FLIPFLOP),
        ("lv.json", LV),
        ("weather.json", WEATHER),
    ];
}
