//! The Wilson-Clover operator: clover construction, sparse application,
//! dense oracle and flop model.

pub mod clover;
pub mod dense;
pub mod dirac;
pub mod flops;

pub use clover::{build_clover, CloverField, HermitianBlock, OperatorParams};
pub use dense::{dense_matrix, DenseOperator};
pub use dirac::{apply_dirac, apply_dirac_slice, apply_gamma5, hop_term};
pub use flops::{count_flops, FlopConvention, FlopReport};
