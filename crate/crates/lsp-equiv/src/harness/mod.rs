//! Gaussian divergences, the condition table, study drivers, report writers and the CLI.

pub mod cli;
pub mod conditions;
pub mod config;
pub mod divergences;
pub mod output;
pub mod studies;
pub mod verify;

pub use config::RunConfig;
pub use divergences::{gaussian_divergences, Divergences};
