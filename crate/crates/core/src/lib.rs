pub mod construction;
pub mod decimal;
pub mod dispersion;
pub mod error;
pub mod irrationality;
pub mod sequence;
pub mod torus;
pub mod verifier;

pub(crate) mod exact;
mod par;

pub use error::{Error, Result};
