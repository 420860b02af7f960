//! Lattice geometry, spin and color algebra, field containers, random
//! numbers and gauge-configuration I/O.

pub mod field;
pub mod gamma;
pub mod gauge_io;
pub mod geometry;
pub mod rng;
pub mod su3;

pub use field::{generate_gauge, inner, norm_sqr, GaugeField, GaugeKind, SpinorField, SITE_COMPONENTS};
pub use gamma::{GammaBasis, GAMMA, GAMMA5_DIAG};
pub use gauge_io::{gauge_checksum, read_gauge, write_gauge};
pub use geometry::{Boundary, Dir, LatticeGeometry, AXIS_NAMES, ND};
pub use rng::Rng;
pub use su3::{random_su3, Su3};
