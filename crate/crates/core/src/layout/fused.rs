//! Site-fused structure-of-arrays layout.
//!
//! A [`FuseSpec`] packs `W = fx*fy*fz*ft` neighboring sites into one vector
//! register. Every real component of a site lives in its own `W`-lane block:
//! the data of one "outer" site (a group of `W` fused sites) is `ncomp`
//! consecutive blocks, one per component. Inside a block the lanes are
//! ordered x-minor: `lane = ix + fx*(iy + fy*(iz + fz*it))`, and the site of
//! a lane is `outer * factor + inner` along each axis.
//!
//! Hops along an unfused axis move whole registers. Hops along a fused axis
//! permute lanes inside a register and blend in the edge lanes of the
//! adjacent register; lanes whose neighbor lies outside the field (wrapping
//! around) are the lanes that must come from a neighboring domain's boundary
//! buffer, and are masked in the intra-domain computation.

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::geometry::{Dir, AXIS_NAMES, ND};
use crate::lattice::{SpinorField, SITE_COMPONENTS};
use crate::precision::{Precision, Real};

/// Real components per spinor site.
pub const SPINOR_REALS: usize = 2 * SITE_COMPONENTS;

/// Scalar that can be laid out in a fused field.
pub trait Component: Copy + Default + PartialEq + std::fmt::Debug + Send + Sync + 'static {
    const PRECISION: Precision;
}

impl Component for f64 {
    const PRECISION: Precision = Precision::Double;
}
impl Component for f32 {
    const PRECISION: Precision = Precision::Single;
}
impl Component for f16 {
    const PRECISION: Precision = Precision::Half;
}

/// Per-axis fuse factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuseSpec {
    pub factors: [usize; ND],
}

impl FuseSpec {
    pub fn new(factors: [usize; ND]) -> Result<Self> {
        if factors.iter().any(|&f| f == 0) {
            return Err(Error::InvalidParameter(format!("fuse factors must be positive: {factors:?}")));
        }
        Ok(FuseSpec { factors })
    }

    /// 4x4 fusing over x and y, sixteen single-precision lanes.
    pub fn xy4x4() -> Self {
        FuseSpec { factors: [4, 4, 1, 1] }
    }

    pub fn unfused() -> Self {
        FuseSpec { factors: [1; ND] }
    }

    pub fn width(&self) -> usize {
        self.factors.iter().product()
    }

    pub fn check(&self, dims: [usize; ND]) -> Result<[usize; ND]> {
        let mut outer = [0; ND];
        for axis in 0..ND {
            if dims[axis] % self.factors[axis] != 0 {
                return Err(Error::Indivisible { axis, extent: dims[axis], divisor: self.factors[axis] });
            }
            outer[axis] = dims[axis] / self.factors[axis];
        }
        Ok(outer)
    }

    /// Inner coordinates of a lane.
    pub fn lane_coords(&self, mut lane: usize) -> [usize; ND] {
        let mut c = [0; ND];
        for axis in 0..ND {
            c[axis] = lane % self.factors[axis];
            lane /= self.factors[axis];
        }
        c
    }

    pub fn lane_index(&self, c: [usize; ND]) -> usize {
        let f = self.factors;
        c[0] + f[0] * (c[1] + f[1] * (c[2] + f[2] * c[3]))
    }
}

impl std::fmt::Display for FuseSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = (0..ND)
            .filter(|&a| self.factors[a] > 1)
            .map(|a| format!("{}:{}", AXIS_NAMES[a], self.factors[a]))
            .collect();
        if parts.is_empty() {
            write!(f, "unfused (W=1)")
        } else {
            write!(f, "{} (W={})", parts.join(" "), self.width())
        }
    }
}

fn lex(c: [usize; ND], d: [usize; ND]) -> usize {
    c[0] + d[0] * (c[1] + d[1] * (c[2] + d[2] * c[3]))
}

fn unlex(mut i: usize, d: [usize; ND]) -> [usize; ND] {
    let mut c = [0; ND];
    for axis in 0..ND {
        c[axis] = i % d[axis];
        i /= d[axis];
    }
    c
}

/// Fused SOA field. `data[(outer * ncomp + comp) * W + lane]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedField<T: Component> {
    dims: [usize; ND],
    spec: FuseSpec,
    outer: [usize; ND],
    ncomp: usize,
    data: Vec<T>,
}

impl<T: Component> FusedField<T> {
    pub fn zeros(dims: [usize; ND], spec: FuseSpec, ncomp: usize) -> Result<Self> {
        let outer = spec.check(dims)?;
        let n = dims.iter().product::<usize>() * ncomp;
        Ok(FusedField { dims, spec, outer, ncomp, data: vec![T::default(); n] })
    }

    /// Fuse site-major data (`reals[site * ncomp + comp]`, sites x-fastest).
    pub fn fuse_reals(dims: [usize; ND], ncomp: usize, reals: &[T], spec: FuseSpec) -> Result<Self> {
        let mut f = Self::zeros(dims, spec, ncomp)?;
        if reals.len() != f.data.len() {
            return Err(Error::GeometryMismatch(format!("{} reals for {} slots", reals.len(), f.data.len())));
        }
        let w = f.width();
        for site in 0..f.volume() {
            let (blk, lane) = f.locate(unlex(site, dims));
            for comp in 0..ncomp {
                f.data[(blk * ncomp + comp) * w + lane] = reals[site * ncomp + comp];
            }
        }
        Ok(f)
    }

    /// Inverse of [`FusedField::fuse_reals`].
    pub fn unfuse_reals(&self) -> Vec<T> {
        let mut out = vec![T::default(); self.data.len()];
        for site in 0..self.volume() {
            let (blk, lane) = self.locate(unlex(site, self.dims));
            for comp in 0..self.ncomp {
                out[site * self.ncomp + comp] = self.data[(blk * self.ncomp + comp) * self.width() + lane];
            }
        }
        out
    }

    pub fn dims(&self) -> [usize; ND] {
        self.dims
    }

    pub fn spec(&self) -> FuseSpec {
        self.spec
    }

    pub fn width(&self) -> usize {
        self.spec.width()
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn volume(&self) -> usize {
        self.dims.iter().product()
    }

    /// Number of outer sites, i.e. lane-blocks per component array.
    pub fn blocks_per_component(&self) -> usize {
        self.outer.iter().product()
    }

    pub fn outer_dims(&self) -> [usize; ND] {
        self.outer
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// `(outer block, lane)` of a site.
    pub fn locate(&self, c: [usize; ND]) -> (usize, usize) {
        let mut o = [0; ND];
        let mut i = [0; ND];
        for axis in 0..ND {
            o[axis] = c[axis] / self.spec.factors[axis];
            i[axis] = c[axis] % self.spec.factors[axis];
        }
        (lex(o, self.outer), self.spec.lane_index(i))
    }

    /// Lanes of component `comp` of outer block `blk`.
    pub fn block(&self, blk: usize, comp: usize) -> &[T] {
        let w = self.width();
        &self.data[(blk * self.ncomp + comp) * w..(blk * self.ncomp + comp + 1) * w]
    }

    pub fn block_mut(&mut self, blk: usize, comp: usize) -> &mut [T] {
        let w = self.width();
        &mut self.data[(blk * self.ncomp + comp) * w..(blk * self.ncomp + comp + 1) * w]
    }

    /// Components of one site.
    pub fn site_values(&self, c: [usize; ND]) -> Vec<T> {
        let (blk, lane) = self.locate(c);
        (0..self.ncomp).map(|comp| self.block(blk, comp)[lane]).collect()
    }

    pub fn set_site_values(&mut self, c: [usize; ND], values: &[T]) {
        let (blk, lane) = self.locate(c);
        for (comp, &v) in values.iter().enumerate() {
            self.block_mut(blk, comp)[lane] = v;
        }
    }

    /// Descriptor line for debugging.
    pub fn describe(&self) -> String {
        format!(
            "fused {}x{}x{}x{} {} ncomp={} outer={:?} blocks/comp={} precision={:?}",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.dims[3],
            self.spec,
            self.ncomp,
            self.outer,
            self.blocks_per_component(),
            T::PRECISION
        )
    }
}

/// Fuse a spinor field (24 reals per site).
pub fn fuse<T: Real + Component>(field: &SpinorField<T>, spec: FuseSpec) -> Result<FusedField<T>> {
    FusedField::fuse_reals(field.geometry().dims(), SPINOR_REALS, &field.to_reals(), spec)
}

pub fn unfuse<T: Real + Component>(fused: &FusedField<T>) -> Result<SpinorField<T>> {
    if fused.ncomp() != SPINOR_REALS {
        return Err(Error::GeometryMismatch(format!("{} components is not a spinor", fused.ncomp())));
    }
    let geo = crate::lattice::LatticeGeometry::new(fused.dims())?;
    SpinorField::from_reals(geo, &fused.unfuse_reals())
}

/// Where one output lane of a hop takes its data from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneSource {
    pub block: usize,
    pub lane: usize,
    /// The neighbor lies outside the field (wraps around the edge).
    pub wrapped: bool,
}

/// Lane accounting for one hop direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopUtilization {
    /// Registers with at least one useful lane.
    pub processed_blocks: usize,
    /// Registers whose lanes all come from outside (boundary path only).
    pub boundary_only_blocks: usize,
    /// Lanes computed but masked off in processed registers.
    pub masked_lanes: usize,
    /// Registers needing a cross-register blend.
    pub blended_blocks: usize,
    pub width: usize,
}

impl HopUtilization {
    /// `1 - masked / (W * processed)`.
    pub fn utilization(&self) -> f64 {
        if self.processed_blocks == 0 {
            return 1.0;
        }
        1.0 - self.masked_lanes as f64 / (self.width * self.processed_blocks) as f64
    }
}

/// Source map of a hop: `map[block][lane]`.
pub fn hop_sources(dims: [usize; ND], spec: FuseSpec, dir: Dir) -> Result<Vec<Vec<LaneSource>>> {
    let outer = spec.check(dims)?;
    let w = spec.width();
    let nblocks: usize = outer.iter().product();
    let f = spec.factors[dir.axis];
    let mut map = Vec::with_capacity(nblocks);
    for blk in 0..nblocks {
        let o = unlex(blk, outer);
        let mut row = Vec::with_capacity(w);
        for lane in 0..w {
            let mut oc = o;
            let mut ic = spec.lane_coords(lane);
            let mut wrapped = false;
            let a = dir.axis;
            if dir.forward {
                if ic[a] + 1 < f {
                    ic[a] += 1;
                } else {
                    ic[a] = 0;
                    if oc[a] + 1 < outer[a] {
                        oc[a] += 1;
                    } else {
                        oc[a] = 0;
                        wrapped = true;
                    }
                }
            } else if ic[a] > 0 {
                ic[a] -= 1;
            } else {
                ic[a] = f - 1;
                if oc[a] > 0 {
                    oc[a] -= 1;
                } else {
                    oc[a] = outer[a] - 1;
                    wrapped = true;
                }
            }
            row.push(LaneSource { block: lex(oc, outer), lane: spec.lane_index(ic), wrapped });
        }
        map.push(row);
    }
    Ok(map)
}

/// Lane-by-lane utilization accounting of a hop, without touching data.
pub fn lane_utilization(dims: [usize; ND], spec: FuseSpec, dir: Dir) -> Result<HopUtilization> {
    let map = hop_sources(dims, spec, dir)?;
    let mut u = HopUtilization {
        processed_blocks: 0,
        boundary_only_blocks: 0,
        masked_lanes: 0,
        blended_blocks: 0,
        width: spec.width(),
    };
    for row in &map {
        let wrapped = row.iter().filter(|s| s.wrapped).count();
        if wrapped == row.len() {
            u.boundary_only_blocks += 1;
            continue;
        }
        u.processed_blocks += 1;
        u.masked_lanes += wrapped;
        if row.iter().any(|s| s.block != row[0].block) {
            u.blended_blocks += 1;
        }
    }
    Ok(u)
}

/// Neighbor data `out(x) = in(x ± μ̂)` with periodic wraparound, plus the
/// lane accounting and a per-lane wrap mask.
#[derive(Debug, Clone)]
pub struct HopGather<T: Component> {
    pub neighbor: FusedField<T>,
    pub utilization: HopUtilization,
    /// `wrapped[block * W + lane]`.
    pub wrapped: Vec<bool>,
}

pub fn hop_gather<T: Component>(fused: &FusedField<T>, dir: Dir) -> Result<HopGather<T>> {
    if dir.axis >= ND {
        return Err(Error::InvalidParameter(format!("axis {} out of range", dir.axis)));
    }
    let map = hop_sources(fused.dims, fused.spec, dir)?;
    let utilization = lane_utilization(fused.dims, fused.spec, dir)?;
    let w = fused.width();
    let mut neighbor = FusedField::zeros(fused.dims, fused.spec, fused.ncomp)?;
    let mut wrapped = vec![false; map.len() * w];
    for (blk, row) in map.iter().enumerate() {
        for (lane, src) in row.iter().enumerate() {
            wrapped[blk * w + lane] = src.wrapped;
        }
        for comp in 0..fused.ncomp {
            let out = neighbor.block_mut(blk, comp);
            for (lane, src) in row.iter().enumerate() {
                out[lane] = fused.data[(src.block * fused.ncomp + comp) * w + src.lane];
            }
        }
    }
    Ok(HopGather { neighbor, utilization, wrapped })
}
