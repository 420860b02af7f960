//! Ranks simulated in-process. Each rank owns the domains inside its box of
//! a partition plan, runs the Schwarz phases on them and exchanges face data
//! with its neighbors through FIFO channels, following a [`CommSchedule`].
//!
//! Phases run in lockstep. Corrections sent in one color phase are received
//! into halo slots at the consumer group of the next phase and folded into a
//! domain's right-hand side just before it is solved, in the same hop order
//! as the single-rank preconditioner, so results agree bit for bit. A missing
//! message is reported as a deadlock rather than waited for. Links are read
//! from the shared gauge field, standing in for halo links exchanged once at
//! setup.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use super::schedule::{build_schedule_lenient, CommSchedule, Part, ScheduleKind};
use crate::dd::decomp::local_index;
use crate::dd::mr::{mr_solve_domain, MrResult};
use crate::dd::operator::C32;
use crate::dd::schwarz::{ResidualMode, SchwarzParams, SchwarzPreconditioner};
use crate::dd::{decompose, SchwarzStats};
use crate::error::{Error, Result};
use crate::fgmres::{fgmres_dr, FgmresParams, LinearMap, SolveStats};
use crate::lattice::geometry::{Dir, ND};
use crate::lattice::{GaugeField, SpinorField, SITE_COMPONENTS};
use crate::layout::Face;
use crate::partition::PartitionPlan;
use crate::precision::{Precision, Real, Storage};
use crate::wilson::clover::{apply_clover_site, CloverField, OperatorParams};
use crate::wilson::dirac::{accumulate_hop, finish_site, hop_link};
use crate::wilson::{build_clover, count_flops, FlopConvention};

const NC: usize = SITE_COMPONENTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MessageKind {
    /// Face values of an operator input vector.
    Operator,
    /// Corrections of one color on one face part.
    Schwarz { part: Part, color: usize },
}

/// One face payload: AOS, 24 reals per site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HaloMessage {
    pub from: usize,
    pub to: usize,
    pub axis: usize,
    /// Direction of travel.
    pub forward: bool,
    pub kind: MessageKind,
    pub precision: Precision,
    pub sites: usize,
    pub data: Vec<f64>,
}

impl HaloMessage {
    pub fn bytes(&self) -> usize {
        self.sites * 2 * NC * self.precision.bytes()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RankStats {
    pub rank: usize,
    pub coords: [usize; ND],
    pub extents: [usize; ND],
    pub domains: usize,
    pub schwarz_sent: usize,
    pub schwarz_received: usize,
    pub schwarz_bytes: usize,
    pub operator_sent: usize,
    pub operator_received: usize,
    pub operator_bytes: usize,
}

struct OutLink {
    to: usize,
    axis: usize,
    forward: bool,
    part: Part,
    /// (local site, rank domain, site within domain), per color.
    sites: [Vec<(u32, u32, u32)>; 2],
}

struct InLink {
    axis: usize,
    forward: bool,
    part: Part,
    /// Halo slot of each sent site, per color, in sender order.
    slots: [Vec<u32>; 2],
}

struct OpOut {
    to: usize,
    axis: usize,
    forward: bool,
    sites: Vec<u32>,
}

struct OpIn {
    axis: usize,
    forward: bool,
    slot: usize,
    count: usize,
}

struct Rank {
    index: usize,
    coords: [usize; ND],
    origin: [usize; ND],
    extents: [usize; ND],
    sites: Vec<usize>,
    domains: Vec<usize>,
    groups: Vec<usize>,
    /// Position of each global domain in `domains`, if owned.
    dom_pos: HashMap<usize, usize>,
    /// Halo slot of each remote site that neighbors a local domain.
    halo_slot: HashMap<usize, usize>,
    schedule: CommSchedule,
    out_links: Vec<OutLink>,
    in_links: Vec<InLink>,
    op_out: Vec<OpOut>,
    op_in: Vec<OpIn>,
    /// Per site and direction: (extended index, global neighbor, phase).
    nbr: Vec<[(u32, u32, f64); 2 * ND]>,
    halo: usize,
}

type ChannelKey = (usize, usize, bool, bool);

struct RankState {
    r: Vec<C32>,
    z: Vec<C32>,
    /// Latest correction of each owned domain and the phase it was made in.
    last: Vec<Vec<C32>>,
    stamp: Vec<isize>,
    halo: Vec<C32>,
    halo_stamp: Vec<isize>,
    stats: SchwarzStats,
}

pub struct RankEnsemble<'a, S: Storage> {
    pre: &'a SchwarzPreconditioner<S>,
    plan: PartitionPlan,
    ranks: Vec<Rank>,
    site_rank: Vec<u32>,
    site_local: Vec<u32>,
    channels: Mutex<HashMap<ChannelKey, VecDeque<HaloMessage>>>,
    stats: Vec<Mutex<RankStats>>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl<'a, S: Storage> RankEnsemble<'a, S> {
    /// Ranks of `plan` with schedules of `kind` built from their domain grids.
    pub fn new(pre: &'a SchwarzPreconditioner<S>, plan: &PartitionPlan, kind: ScheduleKind) -> Result<Self> {
        let split = plan.rank_grid().map(|g| g > 1);
        let schedules = plan
            .ranks
            .iter()
            .map(|r| {
                let grid: [usize; ND] = std::array::from_fn(|a| r.extents[a] / plan.domain[a]);
                if split.iter().any(|&s| s) {
                    build_schedule_lenient(kind, split, grid)
                } else {
                    Ok(CommSchedule::local(grid))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_schedules(pre, plan, schedules)
    }

    pub fn with_schedules(pre: &'a SchwarzPreconditioner<S>, plan: &PartitionPlan, schedules: Vec<CommSchedule>) -> Result<Self> {
        let decomp = pre.decomposition();
        let geo = decomp.geometry();
        let ddims = decomp.domain_dims();
        if plan.global != geo.dims() || plan.domain != ddims {
            return Err(Error::GeometryMismatch(format!(
                "plan for {:?}/{:?} used with lattice {:?}/{:?}",
                plan.global,
                plan.domain,
                geo.dims(),
                ddims
            )));
        }
        if schedules.len() != plan.rank_count {
            return Err(Error::Schedule(format!("{} schedules for {} ranks", schedules.len(), plan.rank_count)));
        }
        if pre.params().residual_mode != ResidualMode::Incremental {
            return Err(Error::InvalidParameter("multi-rank runs use the incremental residual update".into()));
        }
        let grid = plan.rank_grid();
        let origin_of = |a: usize, c: usize| plan.splits[a][..c].iter().sum::<usize>();
        let vol = geo.volume();
        let mut site_rank = vec![0u32; vol];
        let mut site_local = vec![0u32; vol];
        let mut ranks = Vec::with_capacity(plan.rank_count);
        for (ri, (pr, schedule)) in plan.ranks.iter().zip(schedules).enumerate() {
            let origin: [usize; ND] = std::array::from_fn(|a| origin_of(a, pr.coords[a]));
            let dgrid: [usize; ND] = std::array::from_fn(|a| pr.extents[a] / ddims[a]);
            if schedule.grid != dgrid {
                return Err(Error::Schedule(format!("rank {ri}: schedule for grid {:?}, rank has {:?}", schedule.grid, dgrid)));
            }
            let n: usize = pr.extents.iter().product();
            let mut sites = Vec::with_capacity(n);
            for l in 0..n {
                let lc = crate::dd::decomp::local_coords(l, pr.extents);
                let g = geo.index_unchecked(std::array::from_fn(|a| origin[a] + lc[a]));
                site_rank[g] = ri as u32;
                site_local[g] = l as u32;
                sites.push(g);
            }
            let mut domains: Vec<usize> = decomp
                .domains()
                .iter()
                .filter(|d| (0..ND).all(|a| d.origin[a] >= origin[a] && d.origin[a] < origin[a] + pr.extents[a]))
                .map(|d| d.index)
                .collect();
            domains.sort_unstable();
            let groups = domains
                .iter()
                .map(|&d| {
                    let o = decomp.domain(d).origin;
                    schedule.group(std::array::from_fn(|a| (o[a] - origin[a]) / ddims[a]))
                })
                .collect();
            ranks.push(Rank {
                index: ri,
                coords: pr.coords,
                origin,
                extents: pr.extents,
                sites,
                domains,
                groups,
                dom_pos: HashMap::new(),
                halo_slot: HashMap::new(),
                schedule,
                out_links: Vec::new(),
                in_links: Vec::new(),
                op_out: Vec::new(),
                op_in: Vec::new(),
                nbr: Vec::new(),
                halo: 0,
            });
        }
        let neighbor_rank = |r: &Rank, axis: usize, forward: bool| -> usize {
            let mut c = r.coords;
            c[axis] = if forward { (c[axis] + 1) % grid[axis] } else { (c[axis] + grid[axis] - 1) % grid[axis] };
            local_index(c, grid)
        };
        // rank index in the plan is lexicographic in the rank grid
        for (ri, r) in ranks.iter().enumerate() {
            if local_index(r.coords, grid) != ri {
                return Err(Error::GeometryMismatch("plan ranks are not in lexicographic order".into()));
            }
        }
        let mut channels = HashMap::new();
        let mut incoming: Vec<Vec<InLink>> = (0..ranks.len()).map(|_| Vec::new()).collect();
        let mut op_incoming: Vec<Vec<(usize, bool, Vec<u32>)>> = (0..ranks.len()).map(|_| Vec::new()).collect();
        for ri in 0..ranks.len() {
            let dom_pos: HashMap<usize, usize> = ranks[ri].domains.iter().enumerate().map(|(i, &d)| (d, i)).collect();
            ranks[ri].dom_pos = dom_pos.clone();
            for axis in (0..ND).filter(|&a| grid[a] > 1) {
                for forward in [true, false] {
                    let to = neighbor_rank(&ranks[ri], axis, forward);
                    let r = &ranks[ri];
                    let dir = Dir::new(axis, forward);
                    let mut parts: Vec<OutLink> = Vec::new();
                    let mut targets: Vec<InLink> = Vec::new();
                    let mut op_sites = Vec::new();
                    let mut op_targets = Vec::new();
                    for c in Face::new(axis, forward).sites(r.extents) {
                        let xl = local_index(c, r.extents);
                        let xg = r.sites[xl];
                        let (yg, _) = geo.neighbor(xg, dir);
                        if site_rank[yg] as usize != to {
                            return Err(Error::GeometryMismatch(format!("site {xg} has no neighbor on rank {to}")));
                        }
                        op_sites.push(xl as u32);
                        op_targets.push(yg as u32);
                        let (d, l) = decomp.owner(xg);
                        let dom = decomp.domain(d);
                        let dc: [usize; ND] = std::array::from_fn(|a| (dom.origin[a] - r.origin[a]) / ddims[a]);
                        let part = r.schedule.part(axis, dc);
                        let k = match parts.iter().position(|p| p.part == part) {
                            Some(k) => k,
                            None => {
                                parts.push(OutLink { to, axis, forward, part, sites: [Vec::new(), Vec::new()] });
                                targets.push(InLink { axis, forward, part, slots: [Vec::new(), Vec::new()] });
                                parts.len() - 1
                            }
                        };
                        parts[k].sites[dom.color].push((xl as u32, dom_pos[&d] as u32, l as u32));
                        targets[k].slots[dom.color].push(xg as u32);
                    }
                    parts.sort_by_key(|p| p.part);
                    targets.sort_by_key(|p| p.part);
                    channels.insert((to, axis, forward, false), VecDeque::new());
                    channels.insert((to, axis, forward, true), VecDeque::new());
                    ranks[ri].out_links.extend(parts);
                    ranks[ri].op_out.push(OpOut { to, axis, forward, sites: op_sites });
                    incoming[to].extend(targets);
                    op_incoming[to].push((axis, forward, op_targets));
                }
            }
        }
        for (ri, (links, ops)) in incoming.into_iter().zip(op_incoming).enumerate() {
            let r = &mut ranks[ri];
            r.in_links = links;
            // sources are keyed by global site; a site reached along two
            // directions carries the same correction on both links
            for link in &mut r.in_links {
                for slots in &mut link.slots {
                    for s in slots.iter_mut() {
                        let next = r.halo_slot.len();
                        *s = *r.halo_slot.entry(*s as usize).or_insert(next) as u32;
                    }
                }
            }
            // halo slots for operator inputs, keyed by (global source, travel direction)
            let mut slot_of: HashMap<(usize, usize), usize> = HashMap::new();
            let n = r.sites.len();
            let mut next = n;
            for (axis, forward, tgts) in ops {
                let dir = Dir::new(axis, forward);
                for (k, &yg) in tgts.iter().enumerate() {
                    let (xg, _) = geo.neighbor(yg as usize, dir.opposite());
                    slot_of.insert((xg, dir.index()), next + k);
                }
                r.op_in.push(OpIn { axis, forward, slot: next, count: tgts.len() });
                next += tgts.len();
            }
            r.halo = next - n;
            r.nbr = r
                .sites
                .iter()
                .map(|&yg| {
                    std::array::from_fn(|i| {
                        let d = Dir::all()[i];
                        let (xg, phase) = geo.neighbor(yg, d);
                        let ext = if site_rank[xg] as usize == ri {
                            site_local[xg] as usize
                        } else {
                            slot_of[&(xg, d.opposite().index())]
                        };
                        (ext as u32, xg as u32, phase)
                    })
                })
                .collect();
        }
        let stats = ranks
            .iter()
            .map(|r| {
                Mutex::new(RankStats {
                    rank: r.index,
                    coords: r.coords,
                    extents: r.extents,
                    domains: r.domains.len(),
                    ..Default::default()
                })
            })
            .collect();
        Ok(RankEnsemble { pre, plan: plan.clone(), ranks, site_rank, site_local, channels: Mutex::new(channels), stats })
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn num_ranks(&self) -> usize {
        self.ranks.len()
    }

    pub fn schedule(&self, rank: usize) -> &CommSchedule {
        &self.ranks[rank].schedule
    }

    pub fn stats(&self) -> Vec<RankStats> {
        self.stats.iter().map(|s| lock(s).clone()).collect()
    }

    pub fn reset_stats(&self) {
        for s in &self.stats {
            let mut g = lock(s);
            *g = RankStats { rank: g.rank, coords: g.coords, extents: g.extents, domains: g.domains, ..Default::default() };
        }
    }

    /// Rank and local index of a global site.
    pub fn locate(&self, site: usize) -> (usize, usize) {
        (self.site_rank[site] as usize, self.site_local[site] as usize)
    }

    fn push(&self, msg: HaloMessage, schwarz: bool) {
        let mut st = lock(&self.stats[msg.from]);
        if schwarz {
            st.schwarz_sent += 1;
            st.schwarz_bytes += msg.bytes();
        } else {
            st.operator_sent += 1;
            st.operator_bytes += msg.bytes();
        }
        drop(st);
        lock(&self.channels).entry((msg.to, msg.axis, msg.forward, !schwarz)).or_default().push_back(msg);
    }

    fn pop(&self, to: usize, axis: usize, forward: bool, schwarz: bool, expect: MessageKind, sites: usize) -> Result<HaloMessage> {
        let msg = lock(&self.channels).get_mut(&(to, axis, forward, !schwarz)).and_then(|q| q.pop_front());
        let msg = msg.ok_or_else(|| {
            Error::Deadlock(format!("rank {to} waits for {expect:?} along axis {axis} ({}) that was never sent", if forward { "+" } else { "-" }))
        })?;
        if msg.kind != expect || msg.sites != sites || msg.data.len() != sites * 2 * NC {
            return Err(Error::Message(format!(
                "rank {to} expected {expect:?} with {sites} sites, got {:?} with {} sites",
                msg.kind, msg.sites
            )));
        }
        let mut st = lock(&self.stats[to]);
        if schwarz {
            st.schwarz_received += 1;
        } else {
            st.operator_received += 1;
        }
        Ok(msg)
    }

    /// Messages still queued in any channel.
    pub fn pending_messages(&self) -> usize {
        lock(&self.channels).values().map(|q| q.len()).sum()
    }

    /// `out = A v` with every rank computing its own sites from halo data.
    pub fn apply_operator<T: Real>(
        &self,
        gauge: &GaugeField<T>,
        clover: &CloverField<T>,
        v: &[Complex<T>],
        out: &mut [Complex<T>],
    ) -> Result<()> {
        let n = self.site_rank.len() * NC;
        if v.len() != n || out.len() != n {
            return Err(Error::GeometryMismatch(format!("operator on {} components applied to {}", n, v.len())));
        }
        let prec = T::PRECISION;
        let mut ext: Vec<Vec<Complex<T>>> = self
            .ranks
            .par_iter()
            .map(|r| {
                let mut e = Vec::with_capacity((r.sites.len() + r.halo) * NC);
                for &g in &r.sites {
                    e.extend_from_slice(&v[g * NC..(g + 1) * NC]);
                }
                for o in &r.op_out {
                    let mut data = Vec::with_capacity(o.sites.len() * 2 * NC);
                    for &l in &o.sites {
                        for z in &e[l as usize * NC..(l as usize + 1) * NC] {
                            data.push(z.re.f64());
                            data.push(z.im.f64());
                        }
                    }
                    let msg = HaloMessage {
                        from: r.index,
                        to: o.to,
                        axis: o.axis,
                        forward: o.forward,
                        kind: MessageKind::Operator,
                        precision: prec,
                        sites: o.sites.len(),
                        data,
                    };
                    self.push(msg, false);
                }
                e.resize((r.sites.len() + r.halo) * NC, Complex::new(T::zero(), T::zero()));
                e
            })
            .collect();
        let local: Vec<Vec<Complex<T>>> = self
            .ranks
            .par_iter()
            .zip(ext.par_iter_mut())
            .map(|(r, e)| -> Result<Vec<Complex<T>>> {
                for i in &r.op_in {
                    let msg = self.pop(r.index, i.axis, i.forward, false, MessageKind::Operator, i.count)?;
                    for k in 0..i.count * NC {
                        e[i.slot * NC + k] = Complex::new(T::of(msg.data[2 * k]), T::of(msg.data[2 * k + 1]));
                    }
                }
                let mut o = vec![Complex::new(T::zero(), T::zero()); r.sites.len() * NC];
                o.par_chunks_mut(NC).enumerate().for_each(|(l, o)| {
                    let xg = r.sites[l];
                    let mut hop = [Complex::new(T::zero(), T::zero()); NC];
                    for dir in Dir::all() {
                        let (ei, yg, phase) = r.nbr[l][dir.index()];
                        let psi = &e[ei as usize * NC..(ei as usize + 1) * NC];
                        accumulate_hop(dir, hop_link(gauge, xg, yg as usize, dir), psi, T::of(phase), &mut hop);
                    }
                    let cl = apply_clover_site(clover.site(xg), &e[l * NC..(l + 1) * NC]);
                    finish_site(&cl, &hop, o);
                });
                Ok(o)
            })
            .collect::<Result<_>>()?;
        for (r, o) in self.ranks.iter().zip(local) {
            for (l, &g) in r.sites.iter().enumerate() {
                out[g * NC..(g + 1) * NC].copy_from_slice(&o[l * NC..(l + 1) * NC]);
            }
        }
        Ok(())
    }

    fn receive(&self, r: &Rank, st: &mut RankState, group: Option<usize>, phase: usize, color: usize) -> Result<()> {
        for link in &r.in_links {
            let consumer = r.schedule.event(link.axis, link.part).map(|e| e.consumer);
            let due = match group {
                Some(g) => consumer == Some(g),
                None => true,
            };
            if !due {
                continue;
            }
            let slots = &link.slots[color];
            let msg = self.pop(
                r.index,
                link.axis,
                link.forward,
                true,
                MessageKind::Schwarz { part: link.part, color },
                slots.len(),
            )?;
            for (k, &slot) in slots.iter().enumerate() {
                let slot = slot as usize;
                for c in 0..NC {
                    let v = C32::new(msg.data[2 * (k * NC + c)] as f32, msg.data[2 * (k * NC + c) + 1] as f32);
                    st.halo[slot * NC + c] = v;
                }
                st.halo_stamp[slot] = phase as isize;
            }
        }
        Ok(())
    }

    fn phase(&self, r: &Rank, st: &mut RankState, phase: usize, color: usize, colors: usize) -> Result<()> {
        let decomp = self.pre.decomposition();
        let params: SchwarzParams = self.pre.params();
        let dops = self.pre.domain_operators();
        let mut solved: Vec<Option<MrResult>> = vec![None; r.domains.len()];
        for g in 1..=r.schedule.groups {
            if phase > 0 {
                self.receive(r, st, Some(g), phase - 1, (phase - 1) % colors)?;
            }
            let todo: Vec<usize> = (0..r.domains.len())
                .filter(|&i| r.groups[i] == g && decomp.domain(r.domains[i]).color == color)
                .collect();
            let st_ref = &*st;
            let out: Vec<(usize, MrResult)> = todo
                .par_iter()
                .map(|&i| {
                    let d = r.domains[i];
                    let mut rhs = Vec::with_capacity(decomp.domain(d).sites.len() * NC);
                    for &s in &decomp.domain(d).sites {
                        let l = self.site_local[s] as usize;
                        rhs.extend_from_slice(&st_ref.r[l * NC..(l + 1) * NC]);
                    }
                    self.pre.gather_pending(d, st_ref.stamp[i], &mut rhs, |x| self.source(r, st_ref, x, phase, colors))?;
                    mr_solve_domain(&dops[d], &rhs, params.n_mr, params.eo).map(|m| (i, m))
                })
                .collect::<Result<_>>()?;
            for (i, m) in out {
                solved[i] = Some(m);
            }
            for link in r.out_links.iter().filter(|l| r.schedule.event(l.axis, l.part).is_some_and(|e| e.trigger == g)) {
                let sites = &link.sites[color];
                let mut data = Vec::with_capacity(sites.len() * 2 * NC);
                for &(_, i, l) in sites {
                    let m = solved[i as usize].as_ref().ok_or_else(|| {
                        Error::Schedule(format!("rank {} sends domain {} before solving it", r.index, r.domains[i as usize]))
                    })?;
                    for z in &m.solution[l as usize * NC..(l as usize + 1) * NC] {
                        data.push(z.re as f64);
                        data.push(z.im as f64);
                    }
                }
                let msg = HaloMessage {
                    from: r.index,
                    to: link.to,
                    axis: link.axis,
                    forward: link.forward,
                    kind: MessageKind::Schwarz { part: link.part, color },
                    precision: Precision::Single,
                    sites: sites.len(),
                    data,
                };
                self.push(msg, true);
            }
        }
        for (i, m) in solved.iter().enumerate() {
            let Some(m) = m else { continue };
            st.stats.domain_solves += 1;
            st.stats.mr_steps += m.history.len() - 1;
            st.stats.breakdowns += usize::from(m.breakdown);
            for (l, &s) in decomp.domain(r.domains[i]).sites.iter().enumerate() {
                let (dst, src) = (self.site_local[s] as usize * NC, l * NC);
                for k in 0..NC {
                    st.z[dst + k] += m.solution[src + k];
                    st.r[dst + k] = m.residual[src + k];
                }
            }
        }
        for (i, m) in solved.into_iter().enumerate() {
            if let Some(m) = m {
                st.last[i] = m.solution;
                st.stamp[i] = phase as isize;
            }
        }
        Ok(())
    }

    /// Latest correction at site `x` as seen by rank `r` during `phase`.
    fn source<'s>(&self, r: &Rank, st: &'s RankState, x: usize, phase: usize, colors: usize) -> (isize, Option<&'s [C32]>) {
        let decomp = self.pre.decomposition();
        let (d, l) = decomp.owner(x);
        if self.site_rank[x] as usize == r.index {
            let i = r.dom_pos[&d];
            return (st.stamp[i], st.last[i].get(l * NC..(l + 1) * NC));
        }
        // the owner was last solved in the latest earlier phase of its color
        let color = decomp.domain(d).color;
        let expect = (0..phase).rev().find(|p| p % colors == color).map_or(-1, |p| p as isize);
        match r.halo_slot.get(&x) {
            Some(&s) if st.halo_stamp[s] == expect => (expect, Some(&st.halo[s * NC..(s + 1) * NC])),
            _ => (expect, None),
        }
    }

    /// One application of the Schwarz preconditioner across all ranks.
    pub fn schwarz(&self, rhs: &[C32]) -> Result<(Vec<C32>, SchwarzStats)> {
        if rhs.len() != self.site_rank.len() * NC {
            return Err(Error::GeometryMismatch("residual does not match the lattice".into()));
        }
        let colors = self.pre.colors();
        let mut states: Vec<RankState> = self
            .ranks
            .iter()
            .map(|r| {
                let mut v = Vec::with_capacity(r.sites.len() * NC);
                for &g in &r.sites {
                    v.extend_from_slice(&rhs[g * NC..(g + 1) * NC]);
                }
                RankState {
                    z: vec![C32::new(0.0, 0.0); v.len()],
                    r: v,
                    last: vec![Vec::new(); r.domains.len()],
                    stamp: vec![-1; r.domains.len()],
                    halo: vec![C32::new(0.0, 0.0); r.halo_slot.len() * NC],
                    halo_stamp: vec![-1; r.halo_slot.len()],
                    stats: SchwarzStats::default(),
                }
            })
            .collect();
        let phases = self.pre.params().n_schwarz * colors;
        for ph in 0..phases {
            states
                .par_iter_mut()
                .zip(self.ranks.par_iter())
                .map(|(st, r)| self.phase(r, st, ph, ph % colors, colors))
                .collect::<Result<Vec<()>>>()?;
        }
        states
            .par_iter_mut()
            .zip(self.ranks.par_iter())
            .map(|(st, r)| self.receive(r, st, None, phases - 1, (phases - 1) % colors))
            .collect::<Result<Vec<()>>>()?;
        let left = self.pending_messages();
        if left > 0 {
            return Err(Error::Message(format!("{left} messages were never consumed")));
        }
        let mut z = vec![C32::new(0.0, 0.0); rhs.len()];
        let mut stats = SchwarzStats::default();
        for (r, st) in self.ranks.iter().zip(&states) {
            for (l, &g) in r.sites.iter().enumerate() {
                z[g * NC..(g + 1) * NC].copy_from_slice(&st.z[l * NC..(l + 1) * NC]);
            }
            stats.domain_solves += st.stats.domain_solves;
            stats.mr_steps += st.stats.mr_steps;
            stats.breakdowns += st.stats.breakdowns;
        }
        Ok((z, stats))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiRankConfig {
    pub op: OperatorParams,
    pub domain: [usize; ND],
    pub schwarz: SchwarzParams,
    pub fgmres: FgmresParams,
    pub half_storage: bool,
    pub schedule: ScheduleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiRankResult {
    #[serde(skip)]
    pub solution: SpinorField<f64>,
    pub stats: SolveStats,
    pub ranks: Vec<RankStats>,
    pub schedules: Vec<CommSchedule>,
}

/// DD-preconditioned FGMRES with every operator and preconditioner
/// application distributed over the ranks of `plan`.
pub fn run_multirank(
    plan: &PartitionPlan,
    gauge: &GaugeField<f64>,
    b: &SpinorField<f64>,
    cfg: &MultiRankConfig,
) -> Result<MultiRankResult> {
    if gauge.geometry() != b.geometry() {
        return Err(Error::GeometryMismatch("gauge and right-hand side differ".into()));
    }
    let decomp = decompose(gauge.geometry(), cfg.domain)?;
    let pre = SchwarzPreconditioner::new(decomp, gauge, &cfg.op, cfg.schwarz)?;
    if cfg.half_storage {
        let half = pre.compress()?;
        let ens = RankEnsemble::new(&half, plan, cfg.schedule)?;
        solve(&ens, gauge, b, cfg)
    } else {
        let ens = RankEnsemble::new(&pre, plan, cfg.schedule)?;
        solve(&ens, gauge, b, cfg)
    }
}

fn solve<S: Storage>(ens: &RankEnsemble<'_, S>, gauge: &GaugeField<f64>, b: &SpinorField<f64>, cfg: &MultiRankConfig) -> Result<MultiRankResult> {
    let mut params = cfg.fgmres.clone();
    if params.op_flops == 0.0 {
        let per_site = count_flops(&cfg.op, FlopConvention::Hermitian)?.flops_per_site as f64;
        params.op_flops = per_site * b.geometry().volume() as f64;
    }
    let (solution, stats) = match params.precision {
        Precision::Double => outer::<f64, S>(ens, gauge, b, &cfg.op, &params)?,
        Precision::Single => outer::<f32, S>(ens, gauge, b, &cfg.op, &params)?,
        Precision::Half => return Err(Error::InvalidParameter("outer vectors cannot be half precision".into())),
    };
    Ok(MultiRankResult {
        solution,
        stats,
        ranks: ens.stats(),
        schedules: ens.ranks.iter().map(|r| r.schedule.clone()).collect(),
    })
}

fn outer<T: Real, S: Storage>(
    ens: &RankEnsemble<'_, S>,
    gauge: &GaugeField<f64>,
    b: &SpinorField<f64>,
    op: &OperatorParams,
    params: &FgmresParams,
) -> Result<(SpinorField<f64>, SolveStats)> {
    let geo = b.geometry().clone();
    let g: GaugeField<T> = gauge.cast();
    let cl = build_clover::<T>(gauge, op)?;
    let bt = b.cast::<T>();
    let mut a = |v: &[Complex<T>], out: &mut [Complex<T>]| ens.apply_operator(&g, &cl, v, out);
    let mut m = |v: &[Complex<T>], out: &mut [Complex<T>]| -> Result<()> {
        let r = SpinorField::<T>::from_vec(geo.clone(), v.to_vec())?.cast::<f32>();
        let (z, _) = ens.schwarz(r.as_slice())?;
        let z = SpinorField::from_vec(geo.clone(), z)?.cast::<T>();
        out.copy_from_slice(z.as_slice());
        Ok(())
    };
    let mref: &mut LinearMap<'_, T> = &mut m;
    let (x, stats) = fgmres_dr(&mut a, Some(mref), bt.as_slice(), params)?;
    Ok((SpinorField::from_vec(geo, x)?.cast::<f64>(), stats))
}
