pub mod error;
pub mod harness;
pub mod identification;
pub mod numeric;
pub mod par;
pub mod propagation;
pub mod sets;
pub mod stats;

pub use error::{Error, Result};
