//! Fused SIMD-friendly data layout, hops and boundary buffers.

pub mod boundary;
pub mod fused;
pub mod hop;

pub use boundary::{extract_boundary_aos, inject_boundary_aos, BoundaryBuffer, Face};
pub use fused::{
    fuse, hop_gather, hop_sources, lane_utilization, unfuse, Component, FuseSpec, FusedField, HopGather,
    HopUtilization, LaneSource, SPINOR_REALS,
};
pub use hop::{fuse_gauge, fused_hop, GAUGE_REALS};
