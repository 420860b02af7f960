//! Non-overlapping block decomposition of a lattice into domains.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::geometry::{Dir, ND};
use crate::lattice::LatticeGeometry;

/// Sentinel for "no interior neighbor" in [`DomainShape::neighbors`].
pub const NO_NEIGHBOR: u32 = u32::MAX;

/// Geometry shared by all domains: local neighbor table with Dirichlet
/// boundaries (hops leaving the box are dropped) and the parity split.
///
/// Along an axis where one domain spans the whole lattice the wraparound hop
/// stays inside the domain, so it is kept, carrying the boundary phase.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainShape {
    pub dims: [usize; ND],
    pub volume: usize,
    /// `neighbors[local][dir.index()]`, or [`NO_NEIGHBOR`].
    pub neighbors: Vec<[u32; 2 * ND]>,
    /// Phase of each hop in `neighbors` (-1 only across an antiperiodic wrap).
    pub phases: Vec<[f32; 2 * ND]>,
    pub parity: Vec<u8>,
    pub even: Vec<usize>,
    pub odd: Vec<usize>,
}

impl DomainShape {
    /// Pure Dirichlet box.
    pub fn new(dims: [usize; ND]) -> Self {
        Self::with_wrap(dims, [None; ND])
    }

    /// `wrap[axis] = Some(phase)` keeps the wraparound hop along `axis`.
    pub fn with_wrap(dims: [usize; ND], wrap: [Option<f64>; ND]) -> Self {
        let volume = dims.iter().product();
        let mut neighbors = Vec::with_capacity(volume);
        let mut phases = Vec::with_capacity(volume);
        let mut parity = Vec::with_capacity(volume);
        let (mut even, mut odd) = (Vec::new(), Vec::new());
        for l in 0..volume {
            let c = local_coords(l, dims);
            let mut nb = [NO_NEIGHBOR; 2 * ND];
            let mut ph = [1.0f32; 2 * ND];
            for dir in Dir::all() {
                let a = dir.axis;
                let edge = if dir.forward { c[a] + 1 == dims[a] } else { c[a] == 0 };
                let mut n = c;
                if !edge {
                    if dir.forward {
                        n[a] += 1;
                    } else {
                        n[a] -= 1;
                    }
                } else if let Some(p) = wrap[a] {
                    n[a] = if dir.forward { 0 } else { dims[a] - 1 };
                    ph[dir.index()] = p as f32;
                } else {
                    continue;
                }
                nb[dir.index()] = local_index(n, dims) as u32;
            }
            neighbors.push(nb);
            phases.push(ph);
            let p = (c.iter().sum::<usize>() % 2) as u8;
            parity.push(p);
            if p == 0 {
                even.push(l);
            } else {
                odd.push(l);
            }
        }
        DomainShape { dims, volume, neighbors, phases, parity, even, odd }
    }
}

pub fn local_index(c: [usize; ND], d: [usize; ND]) -> usize {
    c[0] + d[0] * (c[1] + d[1] * (c[2] + d[2] * c[3]))
}

pub fn local_coords(mut i: usize, d: [usize; ND]) -> [usize; ND] {
    let mut c = [0; ND];
    for a in 0..ND {
        c[a] = i % d[a];
        i /= d[a];
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Domain {
    pub index: usize,
    /// Position in the domain grid.
    pub coords: [usize; ND],
    /// Lattice coordinates of the local origin.
    pub origin: [usize; ND],
    /// 0 = red, 1 = black.
    pub color: usize,
    /// Global site index of each local site.
    pub sites: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DomainDecomposition {
    geometry: LatticeGeometry,
    shape: DomainShape,
    grid: [usize; ND],
    domains: Vec<Domain>,
    /// Global site -> (domain, local index).
    owner: Vec<(u32, u32)>,
    proper_coloring: bool,
}

impl DomainDecomposition {
    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn domain_dims(&self) -> [usize; ND] {
        self.shape.dims
    }

    pub fn grid(&self) -> [usize; ND] {
        self.grid
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain(&self, d: usize) -> &Domain {
        &self.domains[d]
    }

    /// Nd.
    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    /// nd = Nd / 2 (1 in the degenerate single-domain mode).
    pub fn independent_domains(&self) -> usize {
        self.domains.len().div_ceil(2)
    }

    pub fn owner(&self, site: usize) -> (usize, usize) {
        let (d, l) = self.owner[site];
        (d as usize, l as usize)
    }

    /// Domains of one color in index order.
    pub fn color_domains(&self, color: usize) -> Vec<usize> {
        self.domains.iter().filter(|d| d.color == color).map(|d| d.index).collect()
    }

    /// No two adjacent domains share a color.
    pub fn is_proper_coloring(&self) -> bool {
        self.proper_coloring
    }

    pub fn is_degenerate(&self) -> bool {
        self.domains.len() == 1
    }
}

fn build(geometry: &LatticeGeometry, domain_dims: [usize; ND]) -> Result<DomainDecomposition> {
    let dims = geometry.dims();
    let mut grid = [0; ND];
    for a in 0..ND {
        if domain_dims[a] == 0 || dims[a] % domain_dims[a] != 0 {
            return Err(Error::Indivisible { axis: a, extent: dims[a], divisor: domain_dims[a] });
        }
        grid[a] = dims[a] / domain_dims[a];
    }
    let wrap = std::array::from_fn(|a| (grid[a] == 1).then(|| geometry.boundary()[a].phase()));
    let shape = DomainShape::with_wrap(domain_dims, wrap);
    let nd: usize = grid.iter().product();
    let mut domains = Vec::with_capacity(nd);
    let mut owner = vec![(0u32, 0u32); geometry.volume()];
    for d in 0..nd {
        let coords = local_coords(d, grid);
        let origin: [usize; ND] = std::array::from_fn(|a| coords[a] * domain_dims[a]);
        let mut sites = Vec::with_capacity(shape.volume);
        for l in 0..shape.volume {
            let c = local_coords(l, domain_dims);
            let g = geometry.index_unchecked(std::array::from_fn(|a| origin[a] + c[a]));
            owner[g] = (d as u32, l as u32);
            sites.push(g);
        }
        let color = coords.iter().sum::<usize>() % 2;
        domains.push(Domain { index: d, coords, origin, color, sites });
    }
    let mut proper = true;
    for dom in &domains {
        for a in 0..ND {
            if grid[a] == 1 {
                continue;
            }
            let mut n = dom.coords;
            n[a] = (n[a] + 1) % grid[a];
            if domains[local_index(n, grid)].color == dom.color {
                proper = false;
            }
        }
    }
    Ok(DomainDecomposition {
        geometry: geometry.clone(),
        shape,
        grid,
        domains,
        owner,
        proper_coloring: proper,
    })
}

/// Split `geometry` into domains of extent `domain_dims`, colored red/black by
/// the parity of the summed domain-grid coordinates.
///
/// Errors when an extent is not divisible (naming the axis) or when the
/// number of domains is odd, so that the colors cannot hold Nd/2 each.
pub fn decompose(geometry: &LatticeGeometry, domain_dims: [usize; ND]) -> Result<DomainDecomposition> {
    let dd = build(geometry, domain_dims)?;
    let nd = dd.num_domains();
    if nd % 2 != 0 {
        return Err(Error::Geometry(format!(
            "domain grid {:?} has {nd} domains; cannot split into two equal colors",
            dd.grid
        )));
    }
    Ok(dd)
}

/// The whole lattice as one domain. Only meaningful for oracle tests.
pub fn single_domain(geometry: &LatticeGeometry) -> Result<DomainDecomposition> {
    build(geometry, geometry.dims())
}
