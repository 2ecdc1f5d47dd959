pub mod capacity;
pub mod embedding;
pub mod error;
pub mod extension;
mod fft;
pub mod fracspaces;
pub mod grid;
pub mod kernel;
pub mod measure;
pub mod special;
pub mod suite;
pub mod wolff;

pub use error::{CapaxError, Result};
pub use grid::{GridFunction, GridSpec, HalfSpaceField, TLadder};
pub use kernel::KernelParams;
pub use measure::{Atom, DiscreteMeasure};
