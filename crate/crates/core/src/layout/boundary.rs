//! Array-of-structures boundary buffers.
//!
//! A face buffer holds the sites of one face of a domain, ordered
//! lexicographically over the three remaining axes (lowest axis fastest),
//! with the 24 reals of each site spin-major, then color, then re/im.

use serde::{Deserialize, Serialize};

use super::fused::{Component, FusedField, SPINOR_REALS};
use crate::error::{Error, Result};
use crate::lattice::geometry::ND;

/// One face of a box: the last slice along `axis` if `forward`, else the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub forward: bool,
}

impl Face {
    pub fn new(axis: usize, forward: bool) -> Self {
        Face { axis, forward }
    }

    /// Extents of the face (the face axis has extent one).
    pub fn extents(&self, dims: [usize; ND]) -> [usize; ND] {
        let mut e = dims;
        e[self.axis] = 1;
        e
    }

    pub fn site_count(&self, dims: [usize; ND]) -> usize {
        self.extents(dims).iter().product()
    }

    /// Coordinates of the face sites in buffer order.
    pub fn sites(&self, dims: [usize; ND]) -> Vec<[usize; ND]> {
        let e = self.extents(dims);
        let fixed = if self.forward { dims[self.axis] - 1 } else { 0 };
        let mut out = Vec::with_capacity(self.site_count(dims));
        for t in 0..e[3] {
            for z in 0..e[2] {
                for y in 0..e[1] {
                    for x in 0..e[0] {
                        let mut c = [x, y, z, t];
                        c[self.axis] = fixed;
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryBuffer<T> {
    pub face: Face,
    /// Extents of the box the face was taken from.
    pub dims: [usize; ND],
    pub data: Vec<T>,
}

impl<T: Copy> BoundaryBuffer<T> {
    pub fn sites(&self) -> usize {
        self.data.len() / SPINOR_REALS
    }

    pub fn site(&self, i: usize) -> &[T] {
        &self.data[i * SPINOR_REALS..(i + 1) * SPINOR_REALS]
    }
}

pub fn extract_boundary_aos<T: Component>(fused: &FusedField<T>, face: Face) -> Result<BoundaryBuffer<T>> {
    if fused.ncomp() != SPINOR_REALS {
        return Err(Error::GeometryMismatch("boundary buffers carry spinors".into()));
    }
    if face.axis >= ND {
        return Err(Error::InvalidParameter(format!("axis {} out of range", face.axis)));
    }
    let dims = fused.dims();
    let mut data = Vec::with_capacity(face.site_count(dims) * SPINOR_REALS);
    for c in face.sites(dims) {
        data.extend(fused.site_values(c));
    }
    Ok(BoundaryBuffer { face, dims, data })
}

pub fn inject_boundary_aos<T: Component>(buffer: &BoundaryBuffer<T>, fused: &mut FusedField<T>) -> Result<()> {
    let dims = fused.dims();
    if buffer.dims != dims || buffer.data.len() != buffer.face.site_count(dims) * SPINOR_REALS {
        return Err(Error::GeometryMismatch(format!(
            "buffer for {:?} face {:?} does not fit field {:?}",
            buffer.dims, buffer.face, dims
        )));
    }
    if fused.ncomp() != SPINOR_REALS {
        return Err(Error::GeometryMismatch("boundary buffers carry spinors".into()));
    }
    for (i, c) in buffer.face.sites(dims).into_iter().enumerate() {
        fused.set_site_values(c, buffer.site(i));
    }
    Ok(())
}
