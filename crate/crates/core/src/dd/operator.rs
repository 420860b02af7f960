//! Per-domain restriction of the Wilson-Clover operator.
//!
//! Gauge links and clover blocks are stored in a [`Storage`] scalar (single or
//! half) and loaded into `f32` on use. Spinors are always single precision.

use half::f16;
use num_complex::Complex;
use rayon::prelude::*;

use super::decomp::{Domain, DomainDecomposition, DomainShape, NO_NEIGHBOR};
use crate::error::{Error, Result};
use crate::lattice::geometry::{Dir, ND};
use crate::lattice::{GaugeField, Su3, SITE_COMPONENTS};
use crate::precision::{Precision, Storage};
use crate::wilson::clover::{apply_clover_site, CloverField, CloverSite, HermitianBlock};
use crate::wilson::dirac::accumulate_hop;

pub type C32 = Complex<f32>;

const LINK_REALS: usize = 18;
const CLOVER_REALS: usize = 72;

#[inline(always)]
fn zero() -> C32 {
    Complex::new(0.0, 0.0)
}

#[derive(Debug, Clone)]
pub struct DomainOperator<S: Storage> {
    shape: std::sync::Arc<DomainShape>,
    links: Vec<S>,
    clover: Vec<S>,
    clover_inv: Vec<S>,
}

fn store_all<S: Storage>(vals: impl Iterator<Item = f64>, out: &mut Vec<S>) -> Result<()> {
    for v in vals {
        out.push(S::store(v as f32)?);
    }
    Ok(())
}

impl<S: Storage> DomainOperator<S> {
    fn build(
        shape: std::sync::Arc<DomainShape>,
        domain: &Domain,
        gauge: &GaugeField<f64>,
        clover: &CloverField<f64>,
    ) -> Result<Self> {
        let vol = shape.volume;
        let mut links = Vec::with_capacity(vol * ND * LINK_REALS);
        let mut cl = Vec::with_capacity(vol * CLOVER_REALS);
        let mut inv = Vec::with_capacity(vol * CLOVER_REALS);
        for &g in &domain.sites {
            for mu in 0..ND {
                store_all(gauge.link(g, mu).to_reals().into_iter(), &mut links)?;
            }
            for b in clover.site(g) {
                store_all(b.to_reals().into_iter(), &mut cl)?;
                store_all(b.inverse()?.to_reals().into_iter(), &mut inv)?;
            }
        }
        Ok(DomainOperator { shape, links, clover: cl, clover_inv: inv })
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn storage_precision(&self) -> Precision {
        S::PRECISION
    }

    /// Bytes of gauge plus clover data (inverse clover excluded).
    pub fn storage_bytes(&self) -> usize {
        (self.links.len() + self.clover.len()) * S::PRECISION.bytes()
    }

    #[inline(always)]
    pub fn link(&self, l: usize, mu: usize) -> Su3<f32> {
        let base = (l * ND + mu) * LINK_REALS;
        let mut r = [0.0f32; LINK_REALS];
        for (k, v) in r.iter_mut().enumerate() {
            *v = self.links[base + k].load();
        }
        Su3::from_reals(&r)
    }

    #[inline(always)]
    fn load_clover(data: &[S], l: usize) -> CloverSite<f32> {
        let base = l * CLOVER_REALS;
        let mut r = [0.0f32; CLOVER_REALS];
        for (k, v) in r.iter_mut().enumerate() {
            *v = data[base + k].load();
        }
        [HermitianBlock::from_reals(&r[..36]), HermitianBlock::from_reals(&r[36..])]
    }

    pub fn clover_site(&self, l: usize) -> CloverSite<f32> {
        Self::load_clover(&self.clover, l)
    }

    pub fn clover_inv_site(&self, l: usize) -> CloverSite<f32> {
        Self::load_clover(&self.clover_inv, l)
    }

    /// Sum of interior hops into site `l` (without the -1/2 factor).
    #[inline(always)]
    pub fn hop_site(&self, l: usize, src: &[C32]) -> [C32; SITE_COMPONENTS] {
        let mut acc = [zero(); SITE_COMPONENTS];
        let nb = &self.shape.neighbors[l];
        let ph = &self.shape.phases[l];
        for dir in Dir::all() {
            let n = nb[dir.index()];
            if n == NO_NEIGHBOR {
                continue;
            }
            let n = n as usize;
            let u = if dir.forward { self.link(l, dir.axis) } else { self.link(n, dir.axis) };
            let src = &src[n * SITE_COMPONENTS..(n + 1) * SITE_COMPONENTS];
            accumulate_hop(dir, &u, src, ph[dir.index()], &mut acc);
        }
        acc
    }

    /// `out = A_DD v` (Dirichlet boundaries).
    pub fn apply(&self, v: &[C32], out: &mut [C32]) {
        for l in 0..self.shape.volume {
            let hop = self.hop_site(l, v);
            let cl = apply_clover_site(&self.clover_site(l), &v[l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS]);
            let o = &mut out[l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS];
            crate::wilson::dirac::finish_site(&cl, &hop, o);
        }
    }

    /// `out_o = C_oo^{-1} (b_o + 1/2 hop(v_e))` on odd sites.
    pub fn odd_from_even(&self, b: &[C32], v: &[C32], out: &mut [C32]) {
        for &l in &self.shape.odd {
            let hop = self.hop_site(l, v);
            let mut t = [zero(); SITE_COMPONENTS];
            for k in 0..SITE_COMPONENTS {
                t[k] = b[l * SITE_COMPONENTS + k] + hop[k] * 0.5;
            }
            let r = apply_clover_site(&self.clover_inv_site(l), &t);
            out[l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS].copy_from_slice(&r);
        }
    }

    /// Even-site Schur complement `Â = C_ee - D_eo C_oo^{-1} D_oe`, using
    /// `tmp` as odd-site scratch. Only even sites of `v` and `out` are used.
    pub fn apply_schur(&self, v: &[C32], tmp: &mut [C32], out: &mut [C32]) {
        for &l in &self.shape.odd {
            let hop = self.hop_site(l, v);
            let mut t = [zero(); SITE_COMPONENTS];
            for k in 0..SITE_COMPONENTS {
                t[k] = hop[k] * -0.5;
            }
            let r = apply_clover_site(&self.clover_inv_site(l), &t);
            tmp[l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS].copy_from_slice(&r);
        }
        for &l in &self.shape.even {
            let hop = self.hop_site(l, tmp);
            let cl = apply_clover_site(&self.clover_site(l), &v[l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS]);
            for k in 0..SITE_COMPONENTS {
                out[l * SITE_COMPONENTS + k] = cl[k] + hop[k] * 0.5;
            }
        }
    }

    /// Schur right-hand side `b_e - D_eo C_oo^{-1} b_o`, even sites of `out`.
    pub fn schur_rhs(&self, b: &[C32], tmp: &mut [C32], out: &mut [C32]) {
        for &l in &self.shape.odd {
            let r = apply_clover_site(&self.clover_inv_site(l), &b[l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS]);
            tmp[l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS].copy_from_slice(&r);
        }
        for &l in &self.shape.even {
            let hop = self.hop_site(l, tmp);
            for k in 0..SITE_COMPONENTS {
                out[l * SITE_COMPONENTS + k] = b[l * SITE_COMPONENTS + k] + hop[k] * 0.5;
            }
        }
    }

    fn convert<T: Storage>(&self) -> Result<DomainOperator<T>> {
        let conv = |v: &[S]| v.iter().map(|x| T::store(x.load())).collect::<Result<Vec<T>>>();
        Ok(DomainOperator {
            shape: self.shape.clone(),
            links: conv(&self.links)?,
            clover: conv(&self.clover)?,
            clover_inv: conv(&self.clover_inv)?,
        })
    }
}

/// Restrict gauge and clover data to every domain, stored in `S`.
pub fn build_domain_operators<S: Storage>(
    decomp: &DomainDecomposition,
    gauge: &GaugeField<f64>,
    clover: &CloverField<f64>,
) -> Result<Vec<DomainOperator<S>>> {
    if gauge.geometry().dims() != decomp.geometry().dims() || clover.geometry().dims() != decomp.geometry().dims() {
        return Err(Error::GeometryMismatch("fields do not match the decomposition".into()));
    }
    let shape = std::sync::Arc::new(decomp.shape().clone());
    decomp
        .domains()
        .par_iter()
        .map(|d| DomainOperator::build(shape.clone(), d, gauge, clover))
        .collect()
}

/// Convert single-precision domain data to binary16. Overflow is an error.
pub fn compress_domain_fields(dops: &[DomainOperator<f32>]) -> Result<Vec<DomainOperator<f16>>> {
    dops.iter().map(|d| d.convert::<f16>()).collect()
}
