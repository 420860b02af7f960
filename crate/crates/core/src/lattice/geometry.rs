use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of space-time dimensions.
pub const ND: usize = 4;

/// Axis names in index order.
pub const AXIS_NAMES: [char; ND] = ['x', 'y', 'z', 't'];

/// Boundary condition applied to hops that wrap around an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Antiperiodic,
}

impl Boundary {
    pub fn phase(self) -> f64 {
        match self {
            Boundary::Periodic => 1.0,
            Boundary::Antiperiodic => -1.0,
        }
    }
}

/// Hop direction: axis plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dir {
    pub axis: usize,
    pub forward: bool,
}

impl Dir {
    pub const fn new(axis: usize, forward: bool) -> Self {
        Dir { axis, forward }
    }

    /// All eight directions in kernel order: +x,-x,+y,-y,...
    pub fn all() -> [Dir; 2 * ND] {
        let mut out = [Dir::new(0, true); 2 * ND];
        for mu in 0..ND {
            out[2 * mu] = Dir::new(mu, true);
            out[2 * mu + 1] = Dir::new(mu, false);
        }
        out
    }

    pub fn index(self) -> usize {
        2 * self.axis + usize::from(!self.forward)
    }

    pub fn opposite(self) -> Dir {
        Dir::new(self.axis, !self.forward)
    }
}

impl std::fmt::Display for Dir {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", AXIS_NAMES[self.axis], if self.forward { '+' } else { '-' })
    }
}

/// Extents of a four-dimensional lattice with per-axis boundary conditions.
///
/// Sites are numbered lexicographically with `x` running fastest, matching
/// the `Lx x Ly x Lz x Lt` notation used throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    dims: [usize; ND],
    boundary: [Boundary; ND],
}

impl LatticeGeometry {
    pub fn new(dims: [usize; ND]) -> Result<Self> {
        Self::with_boundary(dims, [Boundary::Periodic; ND])
    }

    pub fn with_boundary(dims: [usize; ND], boundary: [Boundary; ND]) -> Result<Self> {
        for (axis, &d) in dims.iter().enumerate() {
            if d < 2 {
                return Err(Error::Geometry(format!(
                    "extent along {} is {d}, must be at least 2",
                    AXIS_NAMES[axis]
                )));
            }
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Geometry("volume overflows usize".into()))?;
        Ok(LatticeGeometry { dims, boundary })
    }

    /// Hypercubic lattice `l^4`.
    pub fn hypercubic(l: usize) -> Result<Self> {
        Self::new([l; ND])
    }

    pub fn dims(&self) -> [usize; ND] {
        self.dims
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.dims[axis]
    }

    pub fn boundary(&self) -> [Boundary; ND] {
        self.boundary
    }

    pub fn volume(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn site_index(&self, coords: [usize; ND]) -> Result<usize> {
        for axis in 0..ND {
            if coords[axis] >= self.dims[axis] {
                return Err(Error::CoordOutOfRange {
                    axis,
                    value: coords[axis],
                    extent: self.dims[axis],
                });
            }
        }
        Ok(self.index_unchecked(coords))
    }

    #[inline]
    pub fn index_unchecked(&self, c: [usize; ND]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * (c[2] + self.dims[2] * c[3]))
    }

    #[inline]
    pub fn site_coords(&self, mut index: usize) -> [usize; ND] {
        let mut c = [0; ND];
        for axis in 0..ND {
            c[axis] = index % self.dims[axis];
            index /= self.dims[axis];
        }
        c
    }

    /// Neighbor of `site` in direction `dir`, plus the boundary phase picked
    /// up if the hop wraps around.
    #[inline]
    pub fn neighbor(&self, site: usize, dir: Dir) -> (usize, f64) {
        let mut c = self.site_coords(site);
        let l = self.dims[dir.axis];
        let mut phase = 1.0;
        if dir.forward {
            if c[dir.axis] + 1 == l {
                c[dir.axis] = 0;
                phase = self.boundary[dir.axis].phase();
            } else {
                c[dir.axis] += 1;
            }
        } else if c[dir.axis] == 0 {
            c[dir.axis] = l - 1;
            phase = self.boundary[dir.axis].phase();
        } else {
            c[dir.axis] -= 1;
        }
        (self.index_unchecked(c), phase)
    }

    /// Checkerboard parity of a site (0 even, 1 odd).
    pub fn parity(&self, site: usize) -> usize {
        self.site_coords(site).iter().sum::<usize>() % 2
    }

    /// Precomputed neighbor table: `table[site][dir.index()] = (neighbor, phase)`.
    pub fn neighbor_table(&self) -> Vec<[(usize, f64); 2 * ND]> {
        (0..self.volume())
            .map(|s| {
                let mut row = [(0, 1.0); 2 * ND];
                for d in Dir::all() {
                    row[d.index()] = self.neighbor(s, d);
                }
                row
            })
            .collect()
    }
}
