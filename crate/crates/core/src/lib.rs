//! Decision engine for choosing when to release a software product and at
//! what price, facing competitors, uncertain reliability, and heterogeneous
//! buyers. Purchase probabilities and expected utilities are estimated by
//! Monte Carlo; optimizers on top search the (time, price) box.

pub mod choice;
pub mod competitors;
pub mod error;
pub mod exec;
pub mod gp;
pub mod market;
pub mod optimize;
pub mod preferences;
pub mod reliability;
pub mod rng;
pub mod scenario;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
