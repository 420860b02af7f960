pub mod comm;
pub mod dd;
pub mod error;
pub mod fgmres;
pub mod lattice;
pub mod layout;
pub mod partition;
pub mod perf;
pub mod precision;
pub mod solver;
pub mod wilson;

pub use error::{Error, Result};
pub use precision::{Precision, Real, Storage};
