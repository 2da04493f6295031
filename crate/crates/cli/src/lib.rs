//! Command-line front end: CSV ingestion, configuration, parallel runners and
//! report writers around `panelfusion-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod runner;

pub use commands::run;
