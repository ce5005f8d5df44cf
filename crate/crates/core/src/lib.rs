//! Thermodynamics of `n` spins of size `s` dissipating through a common bath.
//!
//! The crate covers exact angular-momentum combinatorics
//! ([`angular_momentum`]), closed-form steady states ([`equilibrium`]), a
//! block-diagonal master-equation integrator ([`dynamics`]), a brute-force
//! full-Hilbert-space Lindblad solver used as ground truth ([`oracle`]), and
//! quantum Otto cycle analysis ([`otto`]). [`validation`] runs the end-to-end
//! consistency suite.
//!
//! Conventions: `ħ = k_B = 1`; energies are measured from the ensemble ground
//! state; inverse temperatures are signed and the initial inverse temperature
//! may be `±∞`.

pub mod angular_momentum;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod numerics;
pub mod oracle;
pub mod otto;
pub mod validation;

pub use angular_momentum::{EnsembleSpec, HalfInt, MultiplicityTable};
pub use equilibrium::{BathSpec, Coupling, Ensemble, SteadyStateSummary, ThermalWeights};
pub use error::{Error, Result};
