//! Simulation of collective spin-phonon dynamics in linear ion chains.
//!
//! The library models N two-level ions coupled to the normal modes of a
//! harmonically trapped Coulomb chain through red and blue sideband
//! interactions, and implements the state-preparation schemes built on the
//! invariant subspaces of those interactions: W and higher Dicke states,
//! irradiant states, a four-ion GHZ construction, postselected Dicke
//! preparation, and Fock-state generation on the blue sideband.
//!
//! Two solvers are provided and cross-checked against each other: a dense
//! full product-space propagator (spins x Fock levels) and an exact
//! symmetry-reduced ladder solver that scales to hundreds of ions.
//!
//! Units: mode frequencies are expressed in units of the center-of-mass
//! frequency, lengths in the standard Coulomb-chain length scale, and time
//! in units of the inverse sideband coupling (`coupling_scale` = 1 by
//! default). hbar = 1 throughout.

pub mod collective;
pub mod dynamics;
pub mod error;
pub mod ionchain;
pub mod observables;
pub mod operator;
pub mod protocols;
pub mod statespace;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
