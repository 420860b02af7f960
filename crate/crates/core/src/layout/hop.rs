//! Wilson hop on fused fields, computed lane-parallel.

use super::fused::{hop_gather, FuseSpec, FusedField, HopUtilization, SPINOR_REALS};
use crate::error::{Error, Result};
use crate::lattice::geometry::{Boundary, Dir, ND};
use crate::lattice::gamma::Phase;
use crate::lattice::{GaugeField, GAMMA};
use crate::precision::Real;

use super::fused::Component;

/// Reals per site of a fused gauge field (`mu * 18 + k`).
pub const GAUGE_REALS: usize = 18 * ND;

pub fn fuse_gauge<T: Real + Component>(gauge: &GaugeField<T>, spec: FuseSpec) -> Result<FusedField<T>> {
    let mut reals = Vec::with_capacity(gauge.links().len() * 18);
    for u in gauge.links() {
        reals.extend_from_slice(&u.to_reals());
    }
    FusedField::fuse_reals(gauge.geometry().dims(), GAUGE_REALS, &reals, spec)
}

fn phase_parts<T: Real>(p: Phase) -> (T, T) {
    match p {
        Phase::One => (T::one(), T::zero()),
        Phase::MinusOne => (-T::one(), T::zero()),
        Phase::I => (T::zero(), T::one()),
        Phase::MinusI => (T::zero(), -T::one()),
    }
}

/// `out(x) = (1∓γμ) U ψ(x±μ̂)` on fused fields. Lanes that wrap around the
/// field edge pick up the boundary phase of `boundary`.
pub fn fused_hop<T: Real + Component>(
    gauge: &FusedField<T>,
    psi: &FusedField<T>,
    dir: Dir,
    boundary: Boundary,
) -> Result<(FusedField<T>, HopUtilization)> {
    if gauge.dims() != psi.dims() || gauge.spec() != psi.spec() {
        return Err(Error::GeometryMismatch("fused gauge and spinor layouts differ".into()));
    }
    if gauge.ncomp() != GAUGE_REALS || psi.ncomp() != SPINOR_REALS {
        return Err(Error::GeometryMismatch("unexpected component counts".into()));
    }
    let w = psi.width();
    let nb = hop_gather(psi, dir)?;
    // backward hops use U(x-μ̂)
    let back_gauge = if dir.forward { None } else { Some(hop_gather(gauge, dir)?.neighbor) };
    let links = back_gauge.as_ref().unwrap_or(gauge);
    let mut out = FusedField::zeros(psi.dims(), psi.spec(), SPINOR_REALS)?;
    let g = &GAMMA[dir.axis];
    let proj = |p: Phase| if dir.forward { p.neg() } else { p };
    let bphase = T::of(boundary.phase());

    let mut h = vec![T::zero(); 12 * w];
    let mut uh = vec![T::zero(); 12 * w];
    let mut lane_phase = vec![T::one(); w];
    for blk in 0..psi.blocks_per_component() {
        for l in 0..w {
            lane_phase[l] = if nb.wrapped[blk * w + l] { bphase } else { T::one() };
        }
        let src = |comp: usize| nb.neighbor.block(blk, comp);
        // spin projection onto two rows
        for r in 0..2 {
            let (pa, pb) = phase_parts::<T>(proj(g.phase[r]));
            let s = g.perm[r];
            for c in 0..3 {
                let (ar, ai) = (src(2 * (3 * r + c)), src(2 * (3 * r + c) + 1));
                let (br, bi) = (src(2 * (3 * s + c)), src(2 * (3 * s + c) + 1));
                let k = 2 * (3 * r + c);
                for l in 0..w {
                    h[k * w + l] = (ar[l] + pa * br[l] - pb * bi[l]) * lane_phase[l];
                    h[(k + 1) * w + l] = (ai[l] + pa * bi[l] + pb * br[l]) * lane_phase[l];
                }
            }
        }
        // color multiply
        uh.iter_mut().for_each(|v| *v = T::zero());
        for r in 0..2 {
            for i in 0..3 {
                let k = 2 * (3 * r + i);
                for j in 0..3 {
                    // forward U[i][j], backward conj(U[j][i])
                    let (e, conj) = if dir.forward { (3 * i + j, false) } else { (3 * j + i, true) };
                    let ur = links.block(blk, 18 * dir.axis + 2 * e);
                    let ui = links.block(blk, 18 * dir.axis + 2 * e + 1);
                    let hk = 2 * (3 * r + j);
                    for l in 0..w {
                        let (a, b) = (ur[l], if conj { -ui[l] } else { ui[l] });
                        let (hr, hi) = (h[hk * w + l], h[(hk + 1) * w + l]);
                        uh[k * w + l] += a * hr - b * hi;
                        uh[(k + 1) * w + l] += a * hi + b * hr;
                    }
                }
            }
        }
        // reconstruct
        for r in 0..2 {
            let d = g.perm[r];
            let (pa, pb) = phase_parts::<T>(proj(g.phase[d]));
            for c in 0..3 {
                let k = 2 * (3 * r + c);
                let kd = 2 * (3 * d + c);
                for l in 0..w {
                    let (vr, vi) = (uh[k * w + l], uh[(k + 1) * w + l]);
                    out.block_mut(blk, k)[l] = vr;
                    out.block_mut(blk, k + 1)[l] = vi;
                    out.block_mut(blk, kd)[l] = pa * vr - pb * vi;
                    out.block_mut(blk, kd + 1)[l] = pa * vi + pb * vr;
                }
            }
        }
    }
    Ok((out, nb.utilization))
}
