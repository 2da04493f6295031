//! Treatment-effect estimation for a single treated unit observed in a target
//! domain with no pre-intervention period, anchored by an auxiliary reference
//! domain observed on the same units.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It provides
//!
//! * [`panel`]: the two-domain panel model, validation, aggregation and
//!   covariate normalization;
//! * [`equi`]: the linear and logarithmic equi-confounding estimators and
//!   their bias-bound calculators;
//! * [`solver`]: simplex-constrained least squares and the budgeted
//!   quadratically constrained problem;
//! * [`fusion`]: the synthetic-control data-fusion algorithm with budget
//!   search, the naive stacked baseline and sensitivity sweeps;
//! * [`sim`]: seeded data generators and the bias, placebo and assumption
//!   experiments.
#![no_std]

extern crate alloc;

pub mod equi;
pub mod error;
pub mod fusion;
pub mod matrix;
pub mod panel;
pub mod sim;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use panel::{PanelDataset, UnitAggregates};
