//! Numerical laboratory for the mean-field Kuramoto game with random
//! intrinsic frequencies.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: parameters, frequency laws and the critical coupling `κ_c`;
//! * [`torus`] and [`hjb`]: periodic fields, the stationary HJB equation and
//!   the invariant law of the controlled diffusion;
//! * [`equilibrium`]: the fixed-point map `F_κ` and its symmetric reduction;
//! * [`penrose`]: the Penrose function, `κ_P` and zero counting;
//! * [`operator`]: the linearised Volterra operator and its resolvent;
//! * [`dynamics`]: time-dependent HJB/Fokker–Planck Picard iteration.

pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod hjb;
pub mod model;
pub mod operator;
pub mod penrose;
pub mod torus;

pub use error::{Error, Result};
pub use model::{kappa_c, DistributionKind, FrequencyDistribution, ModelParams};
pub use torus::{OrderParameters, TorusField, TorusGrid};
