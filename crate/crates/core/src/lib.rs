//! Simulation and verification laboratory for the chase-escape process on
//! the complete graph `K_{N+2}`.
//!
//! Susceptible vertices are infected at rate `λ` per infected neighbour and
//! infected vertices are overtaken at rate `1` per recovered neighbour. The
//! process starts from `(S, I, R) = (N, 1, 1)` and is stopped as soon as no
//! susceptible or no infected vertex remains.
//!
//! The crate provides
//!
//! * [`process`]: the embedded jump chain, a direct sampler of the absorbed
//!   state and an exhaustive dynamic-programming law for small `N`;
//! * [`coupling`]: two further exact samplers built from independent
//!   exponential clocks and from the Poisson/Yule embedding;
//! * [`limits`]: analytic large-`N` limit laws and asymptotic expectations;
//! * [`stats`]: KS, χ² and total-variation tooling;
//! * [`montecarlo`]: reproducible parallel ensembles and sweeps;
//! * [`verify`]: named statistical checks of the large-`N` theory.

pub mod coupling;
pub mod error;
pub mod limits;
pub mod montecarlo;
pub mod process;
mod quadrature;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use process::{AbsorptionRecord, Cause, ExactLaw, ProcessParams, StateCounts};
