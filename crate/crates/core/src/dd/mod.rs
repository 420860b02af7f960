//! Domain decomposition: block solves and the Schwarz preconditioner.

pub mod decomp;
pub mod mr;
pub mod operator;
pub mod schwarz;

pub use decomp::{decompose, single_domain, Domain, DomainDecomposition, DomainShape};
pub use mr::{mr_solve_domain, MrResult};
pub use operator::{build_domain_operators, compress_domain_fields, DomainOperator};
pub use schwarz::{
    apply_surface_update, schwarz_apply, surface_contribution, surface_hops, Preconditioner, ResidualMode, SchwarzParams,
    SchwarzPreconditioner, SchwarzStats, SurfaceHop,
};
