//! Bias-corrected estimation and inference for panel predictive regressions
//! with persistent regressors.
//!
//! The entry points are [`inference::estimate`] for the univariate
//! corrections, [`local_projection::estimate_lp`] for multivariate and
//! long-horizon regressions, and [`montecarlo`] for simulation studies.

pub mod config;
pub mod csv_io;
pub mod error;
pub mod estimators;
pub mod geometric;
pub mod inference;
pub mod local_projection;
pub mod montecarlo;
pub mod panel;
pub mod report;
pub mod simulate;

pub use config::IvxConfig;
pub use error::{Error, Result};
pub use inference::{estimate, Base, Estimate, RhoMethod, Variant};
pub use panel::{Individual, Panel};
pub use simulate::SimulationSpec;
