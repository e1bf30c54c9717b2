//! Likelihood-free inference with ABC population Monte Carlo.
//!
//! The sampler keeps a weighted particle population and shrinks the
//! acceptance tolerance from one iteration to the next. The default
//! schedule picks each shrinkage quantile from the supremum of a
//! directly-estimated density ratio between consecutive ABC posteriors,
//! and stops once that ratio flattens out. Fixed-sequence,
//! fixed-quantile, effective-sample-size and threshold/acceptance-rate
//! schedules are available as baselines.
//!
//! Modules, bottom-up:
//!
//! - [`rng`]: counter-based random streams keyed by run coordinates.
//! - [`particles`]: priors, particle systems, perturbation kernels,
//!   importance weights and weighted moments.
//! - [`density`]: weighted 1-D kernel density estimates and the Hellinger
//!   distance on a shared grid.
//! - [`optimize`]: bounded scalar and simplex maximizers.
//! - [`ratio`]: KLIEP density-ratio fitting and the ratio supremum.
//! - [`models`]: benchmark simulators and reference posteriors.
//! - [`schedule`]: tolerance schedules and stopping decisions.
//! - [`engine`]: the ABC-PMC driver.
//! - [`harness`]: replication, scheduler comparison and artifact export.

pub mod density;
pub mod engine;
mod error;
pub mod harness;
pub mod models;
pub mod optimize;
pub mod particles;
pub mod ratio;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
