//! Collective sub- and superradiance of emitter ensembles in a waveguide.

pub mod clebsch;
pub mod coupling;
pub mod cumulant;
pub mod dicke;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod half;
pub mod ode;
pub mod presets;
pub mod report;
pub mod sparse;

pub use error::{Error, Result};
