//! Particle-based simulator for the 2D Coulomb and 3D screened-Coulomb
//! magnetized Vlasov-Poisson system, with a verification lab that checks
//! moment envelopes, interpolation inequalities, field decay, the no-work
//! identity and kinetic-Wasserstein stability bounds on simulated data.

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod exponents;
pub mod field;
pub mod grid;
pub mod inequalities;
pub mod kernels;
pub mod numeric;
pub mod report;
pub mod runner;
pub mod stability;
pub mod transport;

pub use config::RunConfig;
pub use ensemble::{init_from_grid, GridInit, InitialData, PhaseEnsemble};
pub use error::{Error, Result};
pub use field::MagneticFieldSpec;
pub use grid::GridDensity;
pub use kernels::KernelSpec;
