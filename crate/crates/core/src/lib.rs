//! Stochastic parallel transport on vector bundles over model manifolds,
//! built from dyadic refinements of Wiener paths, together with bundle
//! Feynman–Kac estimators and deterministic reference solvers.

pub mod bundle;
pub mod error;
pub mod feynman_kac;
pub mod heat;
pub mod linalg;
pub mod manifold;
pub mod paths;
pub mod reference;
pub mod rng;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
