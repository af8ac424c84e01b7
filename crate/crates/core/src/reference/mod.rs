//! Deterministic reference solutions used as oracles for the Monte-Carlo
//! estimators.

pub mod chernoff;
pub mod exhaustion;
pub mod matexp;
pub mod quadrature;
pub mod spectral;
