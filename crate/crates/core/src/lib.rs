//! Explicit Berry–Esseen bounds for sums of locally dependent random fields,
//! with Monte Carlo and exact-enumeration estimation of every bound term.

pub mod bounds;
pub mod empirics;
pub mod error;
pub mod experiment;
pub mod fields;
pub mod montecarlo;
pub mod neighborhoods;
pub mod normal;
pub mod stein;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{BaseDistribution, FieldModel, ModelSpec, Realization};
pub use montecarlo::Estimate;
pub use neighborhoods::{KappaStats, Level, NeighborhoodSystem};
