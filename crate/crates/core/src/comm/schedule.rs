//! Compute-group ordering and boundary send events that let halo exchange
//! overlap the domain solves.
//!
//! Domains of a rank are processed group by group. Boundary data of a face
//! part may be sent once every group producing it has finished, and must
//! arrive before the first group of the next iteration that reads it.
//!
//! With only `t` split there are four groups: the `t`-face domains first,
//! then the interior in three slabs. With any other axis split there are
//! five: `t`-face domains, the lower half (in `t`) of the other faces, the
//! interior, the upper half of low faces and the upper half of high faces.
//! The lower half is sent after group 2 and read from group 1 on, the upper
//! half after group 5 and read from group 4 on.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dd::decomp::{local_coords, local_index};
use crate::error::{Error, Result};
use crate::lattice::geometry::{AXIS_NAMES, ND};

const T: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Whole,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// Half-boundary ordering.
    Overlapped,
    /// Time slabs only; faces other than `t` are sent after the last group.
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendEvent {
    pub letter: char,
    pub axis: usize,
    pub part: Part,
    /// Group after which the data is sent (1-based).
    pub trigger: usize,
    /// Group of the next iteration that first needs it (1-based).
    pub consumer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommSchedule {
    pub kind: ScheduleKind,
    pub split: [bool; ND],
    /// Domains per rank along each axis.
    pub grid: [usize; ND],
    pub groups: usize,
    /// Group of every local domain, lexicographic in `grid`.
    pub group_of: Vec<usize>,
    pub sends: Vec<SendEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    NoWindow { letter: char },
    DataNotReady { letter: char, group: usize },
    ConsumerTooLate { letter: char, group: usize },
    Coverage { axis: usize, part: Part, count: usize },
    TriggerOutOfRange { letter: char },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoWindow { letter } => write!(f, "({letter}) has no overlap window"),
            Violation::DataNotReady { letter, group } => {
                write!(f, "({letter}) is sent before group {group} has produced its data")
            }
            Violation::ConsumerTooLate { letter, group } => {
                write!(f, "({letter}) arrives after group {group} already needs it")
            }
            Violation::Coverage { axis, part, count } => {
                write!(f, "{} face {:?} covered by {count} sends", AXIS_NAMES[*axis], part)
            }
            Violation::TriggerOutOfRange { letter } => write!(f, "({letter}) has a group index out of range"),
        }
    }
}

fn on_face(split: &[bool; ND], grid: [usize; ND], c: [usize; ND], axis: usize) -> (bool, bool) {
    if !split[axis] {
        return (false, false);
    }
    (c[axis] == 0, c[axis] == grid[axis] - 1)
}

fn is_t_face(split: &[bool; ND], grid: [usize; ND], c: [usize; ND]) -> bool {
    let (lo, hi) = on_face(split, grid, c, T);
    lo || hi
}

fn upper_half(grid: [usize; ND], c: [usize; ND]) -> bool {
    2 * c[T] >= grid[T] && grid[T] > 1
}

/// Part of a face that domain `c` contributes to along `axis`.
pub fn part_of(kind: ScheduleKind, split: &[bool; ND], grid: [usize; ND], axis: usize, c: [usize; ND]) -> Part {
    if axis == T || kind == ScheduleKind::Naive {
        Part::Whole
    } else if is_t_face(split, grid, c) || !upper_half(grid, c) {
        Part::Lower
    } else {
        Part::Upper
    }
}

fn slab_groups(split: &[bool; ND], grid: [usize; ND], c: [usize; ND]) -> usize {
    if is_t_face(split, grid, c) {
        return 1;
    }
    let (t0, t1) = if split[T] { (1, grid[T].saturating_sub(1)) } else { (0, grid[T]) };
    2 + (c[T] - t0) * 3 / (t1 - t0)
}

fn assign(kind: ScheduleKind, split: &[bool; ND], grid: [usize; ND]) -> (usize, Vec<usize>) {
    let others = (0..T).any(|a| split[a]);
    let n: usize = grid.iter().product();
    if kind == ScheduleKind::Naive || !others {
        return (4, (0..n).map(|i| slab_groups(split, grid, local_coords(i, grid))).collect());
    }
    let groups = (0..n)
        .map(|i| {
            let c = local_coords(i, grid);
            if is_t_face(split, grid, c) {
                return 1;
            }
            let faces: Vec<(bool, bool)> = (0..T).map(|a| on_face(split, grid, c, a)).collect();
            let low = faces.iter().any(|f| f.0);
            let high = faces.iter().any(|f| f.1);
            match (low || high, upper_half(grid, c), low) {
                (false, _, _) => 3,
                (true, false, _) => 2,
                (true, true, true) => 4,
                (true, true, false) => 5,
            }
        })
        .collect();
    (5, groups)
}

/// Groups producing (and, by symmetry of the neighbor, reading) a face part.
fn part_groups(s: &CommSchedule, axis: usize, part: Part) -> Vec<usize> {
    let mut out: Vec<usize> = (0..s.group_of.len())
        .filter_map(|i| {
            let c = local_coords(i, s.grid);
            let (lo, hi) = on_face(&s.split, s.grid, c, axis);
            ((lo || hi) && part_of(s.kind, &s.split, s.grid, axis, c) == part).then_some(s.group_of[i])
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn parts_for(kind: ScheduleKind, axis: usize) -> &'static [Part] {
    if axis == T || kind == ScheduleKind::Naive {
        &[Part::Whole]
    } else {
        &[Part::Lower, Part::Upper]
    }
}

fn build(kind: ScheduleKind, split: [bool; ND], grid: [usize; ND], allow_single: bool) -> Result<CommSchedule> {
    if !split.iter().any(|&s| s) {
        return Err(Error::Schedule("at least one axis must be split".into()));
    }
    if grid.contains(&0) {
        return Err(Error::Schedule(format!("empty domain grid {grid:?}")));
    }
    let (groups, group_of) = assign(kind, &split, grid);
    let mut used: Vec<usize> = group_of.clone();
    used.sort_unstable();
    used.dedup();
    let mut s = CommSchedule { kind, split, grid, groups, group_of, sends: Vec::new() };
    if used.len() < 2 {
        if !allow_single {
            return Err(Error::Schedule(format!("domain grid {grid:?} yields a single compute group")));
        }
        s.groups = 1;
        s.group_of.iter_mut().for_each(|g| *g = 1);
    }
    let mut sends = Vec::new();
    for axis in (0..ND).filter(|&a| split[a]) {
        for &part in parts_for(kind, axis) {
            let g = part_groups(&s, axis, part);
            if let (Some(&first), Some(&last)) = (g.first(), g.last()) {
                sends.push(SendEvent { letter: ' ', axis, part, trigger: last, consumer: first });
            }
        }
    }
    sends.sort_by_key(|e| (e.trigger, e.axis, e.part));
    for (i, e) in sends.iter_mut().enumerate() {
        e.letter = (b'a' + i as u8) as char;
    }
    s.sends = sends;
    Ok(s)
}

/// Overlapping schedule for a rank with `grid` domains per axis.
pub fn build_schedule(split: [bool; ND], grid: [usize; ND]) -> Result<CommSchedule> {
    build(ScheduleKind::Overlapped, split, grid, false)
}

/// Baseline schedule with all non-`t` faces sent after the last group.
pub fn build_naive_schedule(split: [bool; ND], grid: [usize; ND]) -> Result<CommSchedule> {
    build(ScheduleKind::Naive, split, grid, false)
}

/// Like [`build_schedule`], but a grid with a single group yields a
/// one-group schedule without overlap instead of an error.
pub fn build_schedule_lenient(kind: ScheduleKind, split: [bool; ND], grid: [usize; ND]) -> Result<CommSchedule> {
    build(kind, split, grid, true)
}

impl CommSchedule {
    /// Schedule of a rank with no split axis: one group, nothing to send.
    pub fn local(grid: [usize; ND]) -> Self {
        CommSchedule {
            kind: ScheduleKind::Overlapped,
            split: [false; ND],
            grid,
            groups: 1,
            group_of: vec![1; grid.iter().product()],
            sends: Vec::new(),
        }
    }

    pub fn group(&self, c: [usize; ND]) -> usize {
        self.group_of[local_index(c, self.grid)]
    }

    pub fn part(&self, axis: usize, c: [usize; ND]) -> Part {
        part_of(self.kind, &self.split, self.grid, axis, c)
    }

    pub fn event(&self, axis: usize, part: Part) -> Option<&SendEvent> {
        self.sends.iter().find(|e| e.axis == axis && e.part == part)
    }

    /// Groups between the trigger and the consumer, wrapping into the next
    /// iteration, in execution order.
    pub fn overlap_groups(&self, e: &SendEvent) -> Vec<usize> {
        let mut g: Vec<usize> = (e.trigger + 1..=self.groups).collect();
        g.extend(1..e.consumer);
        g
    }

    /// Number of local domains in each part of a face, for message sizing.
    pub fn part_domains(&self, axis: usize, part: Part) -> usize {
        (0..self.group_of.len())
            .filter(|&i| {
                let c = local_coords(i, self.grid);
                on_face(&self.split, self.grid, c, axis).1 && self.part(axis, c) == part
            })
            .count()
    }
}

impl fmt::Display for CommSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axes: Vec<String> = (0..ND).filter(|&a| self.split[a]).map(|a| AXIS_NAMES[a].to_string()).collect();
        writeln!(f, "{:?} schedule, split {}, {} groups", self.kind, axes.join("+"), self.groups)?;
        for g in 1..=self.groups {
            let n = self.group_of.iter().filter(|&&x| x == g).count();
            writeln!(f, "  ({g}) {n} domains")?;
        }
        for e in &self.sends {
            let range = |a: usize, b: usize| if a == b { format!("{a}") } else { format!("{a}-{b}") };
            let mut spans = Vec::new();
            if e.trigger < self.groups {
                spans.push(range(e.trigger + 1, self.groups));
            }
            if e.consumer > 1 {
                spans.push(format!("next {}", range(1, e.consumer - 1)));
            }
            let desc = if spans.is_empty() { "nothing".to_string() } else { spans.join(", ") };
            writeln!(
                f,
                "  ({}) {} {:?} after ({}), needed by ({}), overlaps {}",
                e.letter, AXIS_NAMES[e.axis], e.part, e.trigger, e.consumer, desc
            )?;
        }
        Ok(())
    }
}

/// Dependency check of every send against the group assignment.
pub fn validate_schedule(s: &CommSchedule) -> Vec<Violation> {
    let mut out = Vec::new();
    for e in &s.sends {
        if e.trigger == 0 || e.trigger > s.groups || e.consumer == 0 || e.consumer > s.groups {
            out.push(Violation::TriggerOutOfRange { letter: e.letter });
            continue;
        }
        let g = part_groups(s, e.axis, e.part);
        if let Some(&late) = g.iter().rev().find(|&&x| x > e.trigger) {
            out.push(Violation::DataNotReady { letter: e.letter, group: late });
        }
        if let Some(&early) = g.iter().find(|&&x| x < e.consumer) {
            out.push(Violation::ConsumerTooLate { letter: e.letter, group: early });
        }
        if s.overlap_groups(e).is_empty() {
            out.push(Violation::NoWindow { letter: e.letter });
        }
    }
    for axis in (0..ND).filter(|&a| s.split[a]) {
        for &part in parts_for(s.kind, axis) {
            if part_groups(s, axis, part).is_empty() {
                continue;
            }
            let count = s.sends.iter().filter(|e| e.axis == axis && e.part == part).count();
            if count != 1 {
                out.push(Violation::Coverage { axis, part, count });
            }
        }
    }
    out
}
