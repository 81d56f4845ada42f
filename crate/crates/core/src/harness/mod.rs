//! Scenario library, configuration files, verification checks and reports
//! behind the command-line front end.

pub mod checks;
pub mod config;
pub mod report;
pub mod run;
pub mod scenario;

pub use checks::Verifier;
pub use config::{load_config, parse_config};
pub use report::{Check, Report};
pub use scenario::Scenario;
pub use run::{run, Command, Outcome, RunOptions};
