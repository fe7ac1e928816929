//! Numerical laboratory for nonlinear interference of shaped modulation.
//!
//! - [`alphabet`]: amplitude alphabets, i.i.d. sources, classical moments.
//! - [`shaping`]: enumerative sphere shaping over 1D and 4D symbols.
//! - [`windowed`]: windowed moments and optimal window lengths.
//! - [`egn`]: NLI coefficient prediction and calibration.
//! - [`ssfm`]: split-step link simulation and data-aided measurement.
//! - [`experiment`]: calibration and prediction-versus-simulation pipelines.

pub mod alphabet;
pub mod egn;
pub mod error;
pub mod experiment;
pub mod shaping;
pub mod ssfm;
pub mod windowed;

pub use error::{Error, Result};
