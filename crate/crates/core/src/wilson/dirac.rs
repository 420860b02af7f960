//! Sparse application of the Wilson-Clover operator
//!
//! `A ψ(x) = C(x) ψ(x) - ½ Σμ [ (1-γμ) Uμ(x) ψ(x+μ̂) + (1+γμ) Uμ†(x-μ̂) ψ(x-μ̂) ]`
//!
//! with `C(x)` the clover term (which carries the `4 + m` diagonal). Hops use
//! spin projection: `(1∓γμ)` has rank two, so only two color vectors are
//! multiplied by the link and the other two spin rows are reconstructed.

use num_complex::Complex;
use rayon::prelude::*;

use super::clover::{apply_clover_site, CloverField};
use crate::error::{Error, Result};
use crate::lattice::geometry::{Dir, ND};
use crate::lattice::{GaugeField, SpinorField, Su3, GAMMA, SITE_COMPONENTS};
use crate::precision::Real;

pub type SiteSpinor<T> = [Complex<T>; SITE_COMPONENTS];

#[inline(always)]
fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Accumulate one hop into `acc`.
///
/// Forward: `acc += phase (1-γμ) U ψ`; backward: `acc += phase (1+γμ) U† ψ`,
/// where `u` is `Uμ(x)` for forward and `Uμ(x-μ̂)` for backward hops.
#[inline(always)]
pub fn accumulate_hop<T: Real>(dir: Dir, u: &Su3<T>, psi: &[Complex<T>], phase: T, acc: &mut [Complex<T>]) {
    let g = &GAMMA[dir.axis];
    // projector sign: forward (1 - γ), backward (1 + γ)
    let ph = |p: crate::lattice::gamma::Phase| if dir.forward { p.neg() } else { p };
    let mut h = [[zero::<T>(); 3]; 2];
    for r in 0..2 {
        let p = ph(g.phase[r]);
        let src = g.perm[r];
        for c in 0..3 {
            h[r][c] = psi[3 * r + c] + p.apply(psi[3 * src + c]);
        }
        if phase != T::one() {
            for c in 0..3 {
                h[r][c] = h[r][c] * phase;
            }
        }
    }
    for r in 0..2 {
        let uh = if dir.forward { u.mul_vec(&h[r]) } else { u.adj_mul_vec(&h[r]) };
        let dst = g.perm[r];
        let p = ph(g.phase[dst]);
        for c in 0..3 {
            acc[3 * r + c] += uh[c];
            acc[3 * dst + c] += p.apply(uh[c]);
        }
    }
}

/// Link used by the hop from `site` in `dir`: `Uμ(x)` forward, `Uμ(x-μ̂)` backward.
#[inline(always)]
pub fn hop_link<'a, T: Real>(gauge: &'a GaugeField<T>, site: usize, neighbor: usize, dir: Dir) -> &'a Su3<T> {
    if dir.forward {
        gauge.link(site, dir.axis)
    } else {
        gauge.link(neighbor, dir.axis)
    }
}

fn check_geometry<T: Real>(gauge: &GaugeField<T>, clover: &CloverField<T>, input: &SpinorField<T>) -> Result<()> {
    if gauge.geometry() != input.geometry() || clover.geometry().dims() != input.geometry().dims() {
        return Err(Error::GeometryMismatch(format!(
            "gauge {:?}, clover {:?}, spinor {:?}",
            gauge.geometry().dims(),
            clover.geometry().dims(),
            input.geometry().dims()
        )));
    }
    Ok(())
}

/// Combine clover and hopping sum: `out = C ψ - ½ hop`.
#[inline(always)]
pub fn finish_site<T: Real>(cl: &[Complex<T>; 12], hop: &[Complex<T>; 12], out: &mut [Complex<T>]) {
    let half = T::of(0.5);
    for k in 0..SITE_COMPONENTS {
        out[k] = cl[k] - hop[k] * half;
    }
}

/// `out = A in` over the whole lattice.
pub fn apply_dirac<T: Real>(
    gauge: &GaugeField<T>,
    clover: &CloverField<T>,
    input: &SpinorField<T>,
) -> Result<SpinorField<T>> {
    check_geometry(gauge, clover, input)?;
    let mut out = SpinorField::zeros(input.geometry().clone());
    apply_dirac_slice(gauge, clover, input.as_slice(), out.as_mut_slice())?;
    Ok(out)
}

/// `out = A src` on flat site-major vectors.
pub fn apply_dirac_slice<T: Real>(
    gauge: &GaugeField<T>,
    clover: &CloverField<T>,
    src: &[Complex<T>],
    out: &mut [Complex<T>],
) -> Result<()> {
    let geo = gauge.geometry();
    let n = geo.volume() * SITE_COMPONENTS;
    if src.len() != n || out.len() != n || clover.geometry().dims() != geo.dims() {
        return Err(Error::GeometryMismatch(format!(
            "operator on {:?} applied to {} -> {} components",
            geo.dims(),
            src.len(),
            out.len()
        )));
    }
    out.par_chunks_mut(SITE_COMPONENTS).enumerate().for_each(|(x, o)| {
        let mut hop = [zero::<T>(); SITE_COMPONENTS];
        for dir in Dir::all() {
            let (y, phase) = geo.neighbor(x, dir);
            let psi = &src[y * SITE_COMPONENTS..(y + 1) * SITE_COMPONENTS];
            accumulate_hop(dir, hop_link(gauge, x, y, dir), psi, T::of(phase), &mut hop);
        }
        let cl = apply_clover_site(clover.site(x), &src[x * SITE_COMPONENTS..(x + 1) * SITE_COMPONENTS]);
        finish_site(&cl, &hop, o);
    });
    Ok(())
}

/// A single hopping term: `out(x) = (1-γμ) Uμ(x) ψ(x+μ̂)` for a forward
/// direction, `(1+γμ) Uμ†(x-μ̂) ψ(x-μ̂)` for a backward one.
pub fn hop_term<T: Real>(gauge: &GaugeField<T>, input: &SpinorField<T>, dir: Dir) -> Result<SpinorField<T>> {
    if gauge.geometry() != input.geometry() {
        return Err(Error::GeometryMismatch("gauge and spinor differ".into()));
    }
    let geo = input.geometry();
    let mut out = SpinorField::zeros(geo.clone());
    let src = input.as_slice();
    out.as_mut_slice().par_chunks_mut(SITE_COMPONENTS).enumerate().for_each(|(x, o)| {
        let (y, phase) = geo.neighbor(x, dir);
        let psi = &src[y * SITE_COMPONENTS..(y + 1) * SITE_COMPONENTS];
        accumulate_hop(dir, hop_link(gauge, x, y, dir), psi, T::of(phase), o);
    });
    Ok(out)
}

/// Multiply by γ5 = diag(1, 1, -1, -1) in spin.
pub fn apply_gamma5<T: Real>(v: &mut [Complex<T>]) {
    for site in v.chunks_exact_mut(SITE_COMPONENTS) {
        for z in &mut site[6..] {
            *z = -*z;
        }
    }
}

/// Number of directions in the stencil.
pub const STENCIL_DIRS: usize = 2 * ND;
