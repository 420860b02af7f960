//! Load-balancing model, rank partition plans and the hyper-crossbar
//! topology model.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::geometry::{AXIS_NAMES, ND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineModel {
    /// Usable cores per processor.
    pub nc: usize,
    pub processors: usize,
    /// Switch ports per hyper-crossbar dimension.
    pub ports: usize,
    pub d_net: usize,
}

impl Default for MachineModel {
    fn default() -> Self {
        MachineModel { nc: 60, processors: 1024, ports: 32, d_net: 2 }
    }
}

impl MachineModel {
    pub fn validate(&self) -> Result<()> {
        if self.nc == 0 || self.ports < 2 || self.d_net == 0 {
            return Err(Error::InvalidParameter(format!("invalid machine model {self:?}")));
        }
        Ok(())
    }
}

/// `x / ceil(x)` with `x = nd / (2 nc)`.
pub fn load(nd: usize, nc: usize) -> Result<f64> {
    if nc == 0 {
        return Err(Error::InvalidParameter("Nc must be at least 1".into()));
    }
    if nd < 2 || nd % 2 != 0 {
        return Err(Error::InvalidParameter(format!("Nd = {nd} must be even and at least 2")));
    }
    let x = nd as f64 / (2 * nc) as f64;
    Ok(x / x.ceil())
}

/// Sequential rounds of domain pairs a processor needs: `ceil(nd / (2 nc))`.
pub fn rounds(nd: usize, nc: usize) -> usize {
    nd.div_ceil(2 * nc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankLoad {
    pub coords: [usize; ND],
    pub extents: [usize; ND],
    /// Domains on this rank (Nd).
    pub domains: usize,
    /// Domains processed concurrently (nd = Nd/2).
    pub independent: usize,
    pub rounds: usize,
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub global: [usize; ND],
    pub domain: [usize; ND],
    pub nc: usize,
    /// Local extents along each axis, in rank order.
    pub splits: [Vec<usize>; ND],
    pub ranks: Vec<RankLoad>,
    pub rank_count: usize,
    /// Arithmetic mean of the per-rank loads.
    pub average_load: f64,
    /// `rank_count / average_load`.
    pub cost_index: f64,
}

impl PartitionPlan {
    fn from_splits(global: [usize; ND], domain: [usize; ND], nc: usize, splits: [Vec<usize>; ND]) -> Result<Self> {
        for a in 0..ND {
            if splits[a].is_empty() || splits[a].iter().sum::<usize>() != global[a] {
                return Err(Error::GeometryMismatch(format!("axis {}: splits {:?} do not sum to {}", a, splits[a], global[a])));
            }
            for &e in &splits[a] {
                if e == 0 || e % domain[a] != 0 {
                    return Err(Error::Indivisible { axis: a, extent: e, divisor: domain[a] });
                }
            }
        }
        let grid: [usize; ND] = std::array::from_fn(|a| splits[a].len());
        let count: usize = grid.iter().product();
        let mut ranks = Vec::with_capacity(count);
        for r in 0..count {
            let mut rem = r;
            let coords: [usize; ND] = std::array::from_fn(|a| {
                let c = rem % grid[a];
                rem /= grid[a];
                c
            });
            let extents: [usize; ND] = std::array::from_fn(|a| splits[a][coords[a]]);
            let domains: usize = (0..ND).map(|a| extents[a] / domain[a]).product();
            ranks.push(RankLoad {
                coords,
                extents,
                domains,
                independent: domains / 2,
                rounds: rounds(domains, nc),
                load: load(domains, nc)?,
            });
        }
        let average_load = ranks.iter().map(|r| r.load).sum::<f64>() / count as f64;
        Ok(PartitionPlan {
            global,
            domain,
            nc,
            splits,
            ranks,
            rank_count: count,
            average_load,
            cost_index: count as f64 / average_load,
        })
    }

    pub fn rank_grid(&self) -> [usize; ND] {
        std::array::from_fn(|a| self.splits[a].len())
    }

    /// Sites on rank faces that cross a split, summed over ranks.
    pub fn boundary_sites(&self) -> usize {
        let grid = self.rank_grid();
        self.ranks
            .iter()
            .map(|r| {
                (0..ND)
                    .filter(|&a| grid[a] > 1)
                    .map(|a| 2 * r.extents.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, e)| e).product::<usize>())
                    .sum::<usize>()
            })
            .sum()
    }
}

impl fmt::Display for PartitionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims = |d: [usize; ND]| d.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x");
        writeln!(f, "lattice {}  domain {}  Nc {}", dims(self.global), dims(self.domain), self.nc)?;
        for a in 0..ND {
            writeln!(f, "  {}: {:?}", AXIS_NAMES[a], self.splits[a])?;
        }
        let mut distinct: Vec<(usize, usize, usize, f64)> = Vec::new();
        for r in &self.ranks {
            match distinct.iter_mut().find(|d| d.0 == r.domains) {
                Some(d) => d.3 += 1.0,
                None => distinct.push((r.domains, r.independent, r.rounds, 1.0)),
            }
        }
        for (nd, ind, rounds, n) in distinct {
            writeln!(
                f,
                "  {n:>6} ranks  Nd {nd:>4}  nd {ind:>4}  rounds {rounds}  load {:.1}%",
                100.0 * load(nd, self.nc).unwrap_or(0.0)
            )?;
        }
        write!(
            f,
            "  R {}  average load {:.1}%  cost index {:.1}",
            self.rank_count,
            100.0 * self.average_load,
            self.cost_index
        )
    }
}

/// Every rank gets `global / grid` sites per axis.
pub fn plan_uniform(global: [usize; ND], domain: [usize; ND], grid: [usize; ND], nc: usize) -> Result<PartitionPlan> {
    let mut splits: [Vec<usize>; ND] = Default::default();
    for a in 0..ND {
        if grid[a] == 0 || global[a] % grid[a] != 0 {
            return Err(Error::Indivisible { axis: a, extent: global[a], divisor: grid[a] });
        }
        let local = global[a] / grid[a];
        if domain[a] == 0 || local % domain[a] != 0 {
            return Err(Error::Indivisible { axis: a, extent: local, divisor: domain[a] });
        }
        splits[a] = vec![local; grid[a]];
    }
    PartitionPlan::from_splits(global, domain, nc, splits)
}

/// Chunk sizes (in domain units) allowed on `axis`, with their rounds.
fn chunk_options(global: [usize; ND], domain: [usize; ND], grid: [usize; ND], nc: usize, axis: usize) -> Vec<(usize, usize)> {
    let units = global[axis] / domain[axis];
    let per_unit: usize = (0..ND).filter(|&a| a != axis).map(|a| global[a] / grid[a] / domain[a]).product();
    (1..=units)
        .filter(|c| (per_unit * c) % 2 == 0)
        .map(|c| (c, rounds(per_unit * c, nc)))
        .collect()
}

/// Smallest round count for which the axis can be tiled by allowed chunks.
fn minimal_rounds(units: usize, options: &[(usize, usize)]) -> Option<usize> {
    let mut caps: Vec<usize> = options.iter().map(|o| o.1).collect();
    caps.sort_unstable();
    caps.dedup();
    caps.into_iter().find(|&cap| {
        let sizes: Vec<usize> = options.iter().filter(|o| o.1 <= cap).map(|o| o.0).collect();
        let mut reach = vec![false; units + 1];
        reach[0] = true;
        for u in 1..=units {
            reach[u] = sizes.iter().any(|&s| s <= u && reach[u - s]);
        }
        reach[units]
    })
}

const SEARCH_LIMIT: usize = 20_000_000;

/// Better plan by cost index, then fewer ranks, then smaller max chunk, then
/// the lexicographically larger descending chunk list.
fn better(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> bool {
    let rel = (a.0 - b.0) / b.0.abs().max(1e-300);
    if rel < -1e-12 {
        return true;
    }
    if rel > 1e-12 {
        return false;
    }
    if a.1.len() != b.1.len() {
        return a.1.len() < b.1.len();
    }
    if a.1[0] != b.1[0] {
        return a.1[0] < b.1[0];
    }
    a.1 > b.1
}

/// Split `axis` non-uniformly into domain-multiple chunks, other axes as in
/// `grid`, minimizing `R / average load`.
///
/// Only chunks whose processing rounds do not exceed the smallest achievable
/// round count are considered, so the time per iteration never grows; among
/// those the search is exhaustive over chunk multisets.
pub fn plan_nonuniform(
    global: [usize; ND],
    domain: [usize; ND],
    grid: [usize; ND],
    nc: usize,
    axis: usize,
) -> Result<PartitionPlan> {
    if axis >= ND {
        return Err(Error::InvalidParameter(format!("axis {axis} out of range")));
    }
    if global[axis] < 2 * domain[axis] {
        return Err(Error::InvalidParameter(format!(
            "axis {} extent {} is less than twice the domain extent {}",
            AXIS_NAMES[axis], global[axis], domain[axis]
        )));
    }
    let mut base_grid = grid;
    base_grid[axis] = 1;
    // validates divisibility of the other axes
    plan_uniform(global, domain, base_grid, nc).or_else(|e| match e {
        Error::InvalidParameter(_) => Ok(PartitionPlan {
            global,
            domain,
            nc,
            splits: Default::default(),
            ranks: vec![],
            rank_count: 0,
            average_load: 0.0,
            cost_index: 0.0,
        }),
        other => Err(other),
    })?;
    if let Ok(uniform) = plan_uniform(global, domain, grid, nc) {
        if uniform.ranks.iter().all(|r| r.load == 1.0) {
            return Ok(uniform);
        }
    }
    let units = global[axis] / domain[axis];
    let options = chunk_options(global, domain, grid, nc, axis);
    let cap = minimal_rounds(units, &options)
        .ok_or_else(|| Error::Infeasible(format!("no chunking of {} units has an even domain count", units)))?;
    let sizes: Vec<usize> = options.iter().filter(|o| o.1 <= cap).map(|o| o.0).rev().collect();
    let per_unit: usize = (0..ND).filter(|&a| a != axis).map(|a| global[a] / grid[a] / domain[a]).product();
    let others: usize = (0..ND).filter(|&a| a != axis).map(|a| grid[a]).product();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut visited = 0usize;
    let mut stack = Vec::new();
    fn walk(
        remaining: usize,
        max_idx: usize,
        sizes: &[usize],
        stack: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if remaining == 0 {
            return visit(stack);
        }
        for i in max_idx..sizes.len() {
            if sizes[i] <= remaining {
                stack.push(sizes[i]);
                walk(remaining - sizes[i], i, sizes, stack, visit)?;
                stack.pop();
            }
        }
        Ok(())
    }
    let mut visit = |chunks: &[usize]| -> Result<()> {
        visited += 1;
        if visited > SEARCH_LIMIT {
            return Err(Error::Infeasible("search space too large".into()));
        }
        let loads: f64 = chunks.iter().map(|&c| load(per_unit * c, nc).unwrap_or(0.0)).sum();
        let r = others * chunks.len();
        let avg = loads / chunks.len() as f64;
        let cand = (r as f64 / avg, chunks.to_vec());
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
        Ok(())
    };
    walk(units, 0, &sizes, &mut stack, &mut visit)?;
    let (_, chunks) = best.ok_or_else(|| Error::Infeasible("no composition found".into()))?;
    let mut splits: [Vec<usize>; ND] = std::array::from_fn(|a| vec![global[a] / grid[a]; grid[a]]);
    splits[axis] = chunks.iter().map(|c| c * domain[axis]).collect();
    PartitionPlan::from_splits(global, domain, nc, splits)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub ranks_a: usize,
    pub ranks_b: usize,
    /// `R_a / R_b`.
    pub rank_ratio: f64,
    /// `1 - R_a / R_b`.
    pub cost_reduction: f64,
    pub load_a: f64,
    pub load_b: f64,
    pub boundary_sites_a: usize,
    pub boundary_sites_b: usize,
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ranks {} -> {} (ratio {:.4}, cost reduction {:.1}%), average load {:.1}% -> {:.1}%, boundary sites {} -> {}",
            self.ranks_b,
            self.ranks_a,
            self.rank_ratio,
            100.0 * self.cost_reduction,
            100.0 * self.load_b,
            100.0 * self.load_a,
            self.boundary_sites_b,
            self.boundary_sites_a
        )
    }
}

/// Compare plan `a` against reference plan `b`.
pub fn cost_compare(a: &PartitionPlan, b: &PartitionPlan) -> Result<CostReport> {
    if a.global != b.global {
        return Err(Error::GeometryMismatch("plans cover different lattices".into()));
    }
    let ratio = a.rank_count as f64 / b.rank_count as f64;
    Ok(CostReport {
        ranks_a: a.rank_count,
        ranks_b: b.rank_count,
        rank_ratio: ratio,
        cost_reduction: 1.0 - ratio,
        load_a: a.average_load,
        load_b: b.average_load,
        boundary_sites_a: a.boundary_sites(),
        boundary_sites_b: b.boundary_sites(),
    })
}

/// `p^d`, the largest partition a d-dimensional hyper-crossbar supports.
pub fn hxbar_max_nodes(p: usize, d: usize) -> Result<u64> {
    if p < 2 || d == 0 {
        return Err(Error::InvalidParameter(format!("need p >= 2 and d >= 1, got p = {p}, d = {d}")));
    }
    let d = u32::try_from(d).map_err(|_| Error::InvalidParameter("d too large".into()))?;
    (p as u64).checked_pow(d).ok_or_else(|| Error::InvalidParameter(format!("{p}^{d} overflows")))
}

/// Switch hops between two nodes: 0 (same), 1 (one shared switch), 2 (one
/// intermediate node).
pub fn hxbar_hops(a: &[usize], b: &[usize], p: usize) -> Result<usize> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidParameter("coordinates of different dimension".into()));
    }
    if let Some(&c) = a.iter().chain(b).find(|&&c| c >= p) {
        return Err(Error::InvalidParameter(format!("coordinate {c} outside a grid of {p} ports")));
    }
    let differ = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(differ.min(2))
}
