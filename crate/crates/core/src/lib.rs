//! Electron phase shaping with free-space optical fields: ponderomotive phase
//! imprints, propagation to the focal plane, and inverse design of the light
//! spectrum for a target phase.

pub mod design1d;
pub mod error;
pub mod grid;
pub mod imprint;
pub mod io;
pub mod kinematics;
pub mod lightfield;
pub mod propagate;
pub mod quad;
pub mod special;
pub mod synth2d;

pub use error::{Error, Result};
