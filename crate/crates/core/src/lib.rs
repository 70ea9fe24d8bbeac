//! Panel-data treatment-effect estimation under staggered adoption.
//!
//! The crate centers on the two-stage difference-in-differences estimator
//! (group and time effects fit on untreated observations, then adjusted
//! outcomes compared across treatment status), alongside the classical
//! two-way fixed-effects regression it replaces, event studies, an
//! aggregated cell-level estimator, stacked difference in differences, the
//! implicit-weight diagnostics that explain when the classical regression
//! fails, and a deterministic Monte Carlo harness.

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod gmm;
pub mod panel;
pub mod regression;
pub mod report;
pub mod simulation;

pub use error::{Error, Result};
pub use panel::{validate_panel, Observation, Panel, ValidationFlags};
