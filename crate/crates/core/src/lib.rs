//! Charged-particle beam guiding in crossed electromagnetic fields with a
//! longitudinal component, formulated on null planes.
//!
//! The field class is parameterized by functions of the single light-cone
//! coordinate xi = x0 - z. For that class the transverse dynamics reduces
//! to a linear system whose matrix Riccati linearization also generates
//! exact scalar and spinor wavefunctions, so the classical, stability, and
//! quantum layers of this crate all share one backbone:
//!
//! - [`fields`]: profile functions of xi, field evaluation, presets.
//! - [`classical`]: trajectory integration in xi with conservation
//!   diagnostics and lab-frame export.
//! - [`riccati`]: the matrix Riccati reduction (rotation removal, linear
//!   second-order form, closed forms for periodic profiles, quadratures
//!   for the action).
//! - [`stability`]: rotating-frame characteristic roots, Lyapunov
//!   verdicts, Floquet monodromy cross-check, threshold maps.
//! - [`quantum`]: exact Klein-Gordon and Dirac mode functions built from
//!   the Riccati data, Gaussian packets, and null-plane inner products.
//!
//! Everything works in scaled units: amplitudes absorb e/(c hbar), actions
//! are in units of hbar, and the mass is m0 c / hbar.

pub mod classical;
pub mod coords;
pub mod error;
pub mod fields;
pub(crate) mod ode;
pub(crate) mod quad;
pub mod quantum;
pub mod riccati;
pub mod stability;

pub use coords::{LabEvent, NullEvent};
pub use error::{Error, Result};
