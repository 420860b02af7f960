//! Multiplicative (red-black) Schwarz preconditioner.

use half::f16;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decomp::{DomainDecomposition, NO_NEIGHBOR};
use super::mr::mr_solve_domain;
use super::operator::{build_domain_operators, compress_domain_fields, DomainOperator, C32};
use crate::error::{Error, Result};
use crate::lattice::geometry::Dir;
use crate::lattice::{GaugeField, SpinorField, SITE_COMPONENTS};
use crate::precision::{Precision, Storage};
use crate::wilson::clover::{CloverField, OperatorParams};
use crate::wilson::dirac::{accumulate_hop, apply_dirac};
use crate::wilson::build_clover;

/// How the global residual follows the domain corrections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    /// Block-solve residual inside the domain plus surface hops outside it.
    #[default]
    Incremental,
    /// Full `r = b - A z` after every color phase.
    Recompute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchwarzParams {
    pub n_schwarz: usize,
    pub n_mr: usize,
    pub eo: bool,
    #[serde(default)]
    pub residual_mode: ResidualMode,
}

impl Default for SchwarzParams {
    fn default() -> Self {
        SchwarzParams { n_schwarz: 16, n_mr: 5, eo: true, residual_mode: ResidualMode::Incremental }
    }
}

impl SchwarzParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_schwarz == 0 || self.n_mr == 0 {
            return Err(Error::InvalidParameter("n_schwarz and n_mr must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SchwarzStats {
    pub domain_solves: usize,
    pub mr_steps: usize,
    pub breakdowns: usize,
}

/// A hop from an outside site `target` into domain site `local` that the
/// Dirichlet block operator drops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurfaceHop {
    pub local: usize,
    pub target: usize,
    /// Direction of the hop as seen from `target`.
    pub dir: Dir,
}

/// Hops dropped by the block-diagonal splitting, per domain, in a fixed order.
pub fn surface_hops(decomp: &DomainDecomposition) -> Vec<Vec<SurfaceHop>> {
    let geo = decomp.geometry();
    let shape = decomp.shape();
    decomp
        .domains()
        .iter()
        .map(|d| {
            let mut out = Vec::new();
            for (l, &g) in d.sites.iter().enumerate() {
                for dir in Dir::all() {
                    if shape.neighbors[l][dir.index()] != NO_NEIGHBOR {
                        continue;
                    }
                    let (y, _) = geo.neighbor(g, dir);
                    out.push(SurfaceHop { local: l, target: y, dir: dir.opposite() });
                }
            }
            out
        })
        .collect()
}

/// `1/2 (1∓γ) U e(x)`: the change of `r(target)` caused by a correction
/// `e` at the site one hop from `target` in direction `dir`.
#[inline]
pub fn surface_contribution(gauge: &GaugeField<f32>, target: usize, dir: Dir, e: &[C32]) -> [C32; SITE_COMPONENTS] {
    let (x, phase) = gauge.geometry().neighbor(target, dir);
    let u = if dir.forward { gauge.link(target, dir.axis) } else { gauge.link(x, dir.axis) };
    let mut acc = [C32::new(0.0, 0.0); SITE_COMPONENTS];
    accumulate_hop(dir, u, e, phase as f32, &mut acc);
    for a in acc.iter_mut() {
        *a *= 0.5;
    }
    acc
}

/// `r(target) -= D(target, x) e(x)` for every dropped hop, i.e.
/// `r(target) += 1/2 (1∓γ) U e(x)`.
pub fn apply_surface_update(
    gauge: &GaugeField<f32>,
    hops: &[SurfaceHop],
    sites: &[usize],
    e: &[C32],
    r: &mut [C32],
) {
    for h in hops {
        debug_assert_eq!(gauge.geometry().neighbor(h.target, h.dir).0, sites[h.local]);
        let acc = surface_contribution(gauge, h.target, h.dir, &e[h.local * SITE_COMPONENTS..(h.local + 1) * SITE_COMPONENTS]);
        for k in 0..SITE_COMPONENTS {
            r[h.target * SITE_COMPONENTS + k] += acc[k];
        }
    }
}

/// Approximate inverse `z ≈ A^{-1} r` by alternating block solves.
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &SpinorField<f32>) -> Result<(SpinorField<f32>, SchwarzStats)>;
    fn storage_precision(&self) -> Precision;
}

pub struct SchwarzPreconditioner<S: Storage> {
    decomp: DomainDecomposition,
    dops: Vec<DomainOperator<S>>,
    gauge: GaugeField<f32>,
    clover: CloverField<f32>,
    surfaces: Vec<Vec<SurfaceHop>>,
    params: SchwarzParams,
}

impl SchwarzPreconditioner<f32> {
    pub fn new(
        decomp: DomainDecomposition,
        gauge: &GaugeField<f64>,
        op: &OperatorParams,
        params: SchwarzParams,
    ) -> Result<Self> {
        params.validate()?;
        let clover64 = build_clover::<f64>(gauge, op)?;
        let dops = build_domain_operators::<f32>(&decomp, gauge, &clover64)?;
        let surfaces = surface_hops(&decomp);
        Ok(SchwarzPreconditioner {
            decomp,
            dops,
            gauge: gauge.cast(),
            clover: clover64.cast(),
            surfaces,
            params,
        })
    }

    /// Same preconditioner with gauge and clover domain data in binary16.
    pub fn compress(&self) -> Result<SchwarzPreconditioner<f16>> {
        Ok(SchwarzPreconditioner {
            decomp: self.decomp.clone(),
            dops: compress_domain_fields(&self.dops)?,
            gauge: self.gauge.clone(),
            clover: self.clover.clone(),
            surfaces: self.surfaces.clone(),
            params: self.params,
        })
    }
}

impl<S: Storage> SchwarzPreconditioner<S> {
    pub fn params(&self) -> SchwarzParams {
        self.params
    }

    pub fn set_params(&mut self, params: SchwarzParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    pub fn decomposition(&self) -> &DomainDecomposition {
        &self.decomp
    }

    pub fn domain_operators(&self) -> &[DomainOperator<S>] {
        &self.dops
    }

    pub fn gauge(&self) -> &GaugeField<f32> {
        &self.gauge
    }

    pub fn clover(&self) -> &CloverField<f32> {
        &self.clover
    }

    /// Dropped hops of every domain, see [`surface_hops`].
    pub fn surfaces(&self) -> &[Vec<SurfaceHop>] {
        &self.surfaces
    }

    /// Schwarz iteration with domains of each color processed in `order`.
    pub fn apply_ordered(&self, r: &SpinorField<f32>, order: &[usize]) -> Result<(SpinorField<f32>, SchwarzStats)> {
        let geo = self.decomp.geometry();
        if r.geometry().dims() != geo.dims() {
            return Err(Error::GeometryMismatch("residual does not match the decomposition".into()));
        }
        let mut stats = SchwarzStats::default();
        let b = r.as_slice();
        let mut res = b.to_vec();
        let mut z = vec![C32::new(0.0, 0.0); b.len()];
        let colors = self.colors();
        let nd = self.decomp.num_domains();
        let mut last: Vec<Vec<C32>> = vec![Vec::new(); nd];
        let mut stamp: Vec<isize> = vec![-1; nd];
        for phase in 0..self.params.n_schwarz * colors {
            let color = phase % colors;
            let doms: Vec<usize> = order.iter().copied().filter(|&d| self.decomp.domain(d).color == color).collect();
            // solves read the residual frozen at the start of the phase
            let solved: Vec<_> = doms
                .par_iter()
                .map(|&d| {
                    let sites = &self.decomp.domain(d).sites;
                    let mut rhs = Vec::with_capacity(sites.len() * SITE_COMPONENTS);
                    for &g in sites {
                        rhs.extend_from_slice(&res[g * SITE_COMPONENTS..(g + 1) * SITE_COMPONENTS]);
                    }
                    if self.params.residual_mode == ResidualMode::Incremental {
                        self.gather_pending(d, stamp[d], &mut rhs, |x| {
                            let (n, l) = self.decomp.owner(x);
                            (stamp[n], last[n].get(l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS))
                        })?;
                    }
                    mr_solve_domain(&self.dops[d], &rhs, self.params.n_mr, self.params.eo).map(|m| (d, m))
                })
                .collect::<Result<_>>()?;
            for (d, m) in &solved {
                stats.domain_solves += 1;
                stats.mr_steps += m.history.len() - 1;
                stats.breakdowns += usize::from(m.breakdown);
                let sites = &self.decomp.domain(*d).sites;
                for (l, &g) in sites.iter().enumerate() {
                    let (dst, src) = (g * SITE_COMPONENTS, l * SITE_COMPONENTS);
                    for k in 0..SITE_COMPONENTS {
                        z[dst + k] += m.solution[src + k];
                        if self.params.residual_mode == ResidualMode::Incremental {
                            res[dst + k] = m.residual[src + k];
                        }
                    }
                }
            }
            match self.params.residual_mode {
                ResidualMode::Incremental => {
                    for (d, m) in solved {
                        last[d] = m.solution;
                        stamp[d] = phase as isize;
                    }
                }
                ResidualMode::Recompute => {
                    let zf = SpinorField::from_vec(geo.clone(), z.clone())?;
                    let az = apply_dirac(&self.gauge, &self.clover, &zf)?;
                    for (k, v) in res.iter_mut().enumerate() {
                        *v = b[k] - az.as_slice()[k];
                    }
                }
            }
        }
        Ok((SpinorField::from_vec(geo.clone(), z)?, stats))
    }

    /// Number of color phases per Schwarz iteration.
    pub fn colors(&self) -> usize {
        if self.decomp.is_degenerate() {
            1
        } else {
            2
        }
    }

    /// Add to the block right-hand side of domain `d` the hops from neighbor
    /// corrections made since `d` was last solved (in phase `since`).
    ///
    /// `source(x)` returns the phase of the latest correction at outside site
    /// `x` and its value. Hops are taken in the fixed order of
    /// [`surface_hops`], so the sum does not depend on where the neighbor
    /// data comes from.
    pub fn gather_pending<'s>(
        &self,
        d: usize,
        since: isize,
        rhs: &mut [C32],
        source: impl Fn(usize) -> (isize, Option<&'s [C32]>),
    ) -> Result<()> {
        let sites = &self.decomp.domain(d).sites;
        for h in &self.surfaces[d] {
            let (when, e) = source(h.target);
            if when < 0 || when < since {
                continue;
            }
            let e = e.ok_or_else(|| Error::Schedule(format!("domain {d} reads the correction at site {} before it arrived", h.target)))?;
            let acc = surface_contribution(&self.gauge, sites[h.local], h.dir.opposite(), e);
            for k in 0..SITE_COMPONENTS {
                rhs[h.local * SITE_COMPONENTS + k] += acc[k];
            }
        }
        Ok(())
    }
}

impl<S: Storage> Preconditioner for SchwarzPreconditioner<S> {
    fn apply(&self, r: &SpinorField<f32>) -> Result<(SpinorField<f32>, SchwarzStats)> {
        let order: Vec<usize> = (0..self.decomp.num_domains()).collect();
        self.apply_ordered(r, &order)
    }

    fn storage_precision(&self) -> Precision {
        S::PRECISION
    }
}

/// `z = schwarz(r)` with the default domain order.
pub fn schwarz_apply<S: Storage>(pre: &SchwarzPreconditioner<S>, r: &SpinorField<f32>) -> Result<(SpinorField<f32>, SchwarzStats)> {
    Preconditioner::apply(pre, r)
}
