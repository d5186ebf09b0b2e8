//! Kinetic epidemic models with uncertain contact distributions:
//! Fokker-Planck contact dynamics, stochastic-Galerkin SEIR solvers, the
//! closed macroscopic system, and calibration against reported case data.

pub mod calib;
pub mod cli;
pub mod compartment;
pub mod contact;
pub mod control;
pub mod error;
pub mod fpsolve;
pub mod grid;
pub mod linalg;
pub mod macroscopic;
pub mod real;
pub mod sgkinetic;
pub mod uq;

pub use compartment::{Compartment, PerCompartment};
pub use error::{KecError, Result};
pub use grid::{DensityField, Grid1D};
pub use real::Real;

// Concrete double-precision instantiations of the generic solver types.
pub type Grid1D64 = grid::Grid1D<f64>;
pub type DensityField64 = grid::DensityField<f64>;
pub type ContactParams64 = contact::ContactParams<f64>;
pub type DeltaValue64 = contact::DeltaValue<f64>;
pub type ControlSpec64 = control::ControlSpec<f64>;
pub type EpiParams64 = sgkinetic::EpiParams<f64>;
pub type KineticState64 = sgkinetic::KineticState<f64>;
pub type MacroState64 = macroscopic::MacroState<f64>;
pub type UncertaintyLaw64 = uq::UncertaintyLaw<f64>;
pub type GpcBasis64 = uq::GpcBasis<f64>;
pub type EpiSeries64 = calib::data::EpiSeries<f64>;
pub type FitResult64 = calib::fit::FitResult<f64>;
