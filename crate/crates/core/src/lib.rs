//! Six vertex model on a discrete torus with an irreversible local
//! column-jump dynamics that preserves the fixed-flux Gibbs measures.
//!
//! Modules:
//!
//! * [`lattice`]: geometry, bit-packed states, vertex types, flip and dual.
//! * [`weights`]: vertex weights, gauge transforms, `(u, q)` weights.
//! * [`dynamics`]: triggers, jump kinds, rates and column moves.
//! * [`enumeration`]: exact state spaces, Gibbs vectors, generators.
//! * [`verification`]: executable checks of the stationarity argument.
//! * [`simulation`]: event-driven continuous-time simulation.
//! * [`cli`]: the command-line driver.

pub mod cli;
pub mod dynamics;
pub mod enumeration;
pub mod error;
pub mod lattice;
pub mod simulation;
pub mod verification;
pub mod weights;

pub use error::{Error, Result};
pub use lattice::{FluxPair, State, TorusGeometry, VertexType};
pub use weights::WeightVector;
