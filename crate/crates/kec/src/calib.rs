//! Calibration of the closed macroscopic model against reported case data:
//! ingestion, derivative-free optimizers, and the two fitting stages.

pub mod data;
pub mod fit;
pub mod optimize;

pub use data::{load_jhu_csv, load_simple_csv, EpiSeries, InfectedKind};
pub use fit::{
    fit_targets, fit_unconstrained, retrospective_swap, FitResult, PreFitConfig, RetroTrajectory,
    TargetFitConfig, WindowFit,
};
