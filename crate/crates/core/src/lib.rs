//! Localization thresholds for the Anderson model on regular rooted trees.
//!
//! The crate estimates the critical hopping of the Anderson model on a tree
//! with branching number `K` by several independent routes:
//!
//! * the leading eigenvalue of a positive transfer kernel built either from the
//!   bare disorder density or from the effective density of the cavity
//!   recursion ([`kernel`], [`thresholds::threshold_eigen`]);
//! * the quenched free energy of the cavity recursion, extrapolated in the
//!   number of sweeps and the pool size ([`cavity`], [`thresholds::threshold_cavity`]);
//! * closed-form large-`K` approximations ([`thresholds`]).
//!
//! All computations are at zero imaginary part, with real cavity resolvents.

pub mod cavity;
pub mod checks;
pub mod disorder;
pub mod error;
pub mod kernel;
pub mod rde;
pub mod rng;
pub mod stats;
pub mod thresholds;

pub use error::{Error, Result};
