//! Sparse signal recovery with auto-encoders.
//!
//! The crate generates data from known sparse signals and dictionaries
//! (`signals`, `dictionary`, `datagen`), recovers the signals with a
//! closed-form encoder (`recovery`), scores the result (`metrics`), checks
//! the probabilistic recovery bounds against Monte-Carlo estimates
//! (`bounds`) and learns the generating dictionary from data alone
//! (`dictlearn`). `experiments` wires all of it into reproducible runs that
//! emit CSV files.

pub mod bounds;
pub mod datagen;
pub mod dictionary;
pub mod dictlearn;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod recovery;
pub mod rng;
pub mod signals;

pub use error::{Error, Result};
