//! Seeded panel generators and the simulation experiments.
//!
//! The runners here are serial. Each exposes its unit of work
//! ([`BiasExperiment::run_replicate`], [`placebo_run`]) and an order-insensitive
//! assembly step, so a caller with threads can schedule the units freely and
//! get the serial result back.

mod dgp;
mod experiments;
mod rng;

pub use dgp::{generate_dgp, generate_additive, Design, DgpConfig, ScaledLogDesign, SimulatedPanel};
pub use experiments::{
    check_equi_assumptions, check_placebo, latent_match, placebo_run, run_bias_experiment, run_placebo,
    AssumptionPoint, AssumptionReport, BiasExperiment, BiasRow, BiasSummary, BiasTable, Method, PlaceboRun,
    PlaceboTable,
};
