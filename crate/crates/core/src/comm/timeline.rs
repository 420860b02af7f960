//! Discrete-event timeline of a schedule on a ring of identical ranks.

use std::fmt::Write as _;

use serde::Serialize;

use super::schedule::{validate_schedule, CommSchedule, SendEvent, Violation};
use crate::error::{Error, Result};

pub const DEFAULT_LATENCY: f64 = 5.5e-6;
pub const DEFAULT_BANDWIDTH: f64 = 6.5e9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineConfig {
    pub ranks: usize,
    pub iterations: usize,
    /// Seconds per group, one row per rank or a single row shared by all.
    pub group_costs: Vec<Vec<f64>>,
    pub latency: f64,
    /// Bytes per second; may be infinite.
    pub bandwidth: f64,
    /// Bytes of each send event, in schedule order.
    pub message_bytes: Vec<f64>,
}

impl TimelineConfig {
    pub fn uniform(schedule: &CommSchedule, group_cost: f64, message_bytes: f64) -> Self {
        TimelineConfig {
            ranks: 2,
            iterations: 4,
            group_costs: vec![vec![group_cost; schedule.groups]],
            latency: DEFAULT_LATENCY,
            bandwidth: DEFAULT_BANDWIDTH,
            message_bytes: vec![message_bytes; schedule.sends.len()],
        }
    }

    fn costs(&self, rank: usize) -> &[f64] {
        if self.group_costs.len() == 1 {
            &self.group_costs[0]
        } else {
            &self.group_costs[rank]
        }
    }

    pub fn transit(&self, event: usize) -> f64 {
        self.latency + self.message_bytes[event] / self.bandwidth
    }

    fn validate(&self, s: &CommSchedule) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.ranks == 0 || self.iterations < 2 {
            return bad("need at least one rank and two iterations");
        }
        if self.group_costs.len() != 1 && self.group_costs.len() != self.ranks {
            return bad("group costs must have one row or one row per rank");
        }
        if self.group_costs.iter().any(|row| row.len() != s.groups || row.iter().any(|c| !(c.is_finite() && *c > 0.0))) {
            return bad("group costs must be positive, one per group");
        }
        if self.message_bytes.len() != s.sends.len() || self.message_bytes.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad("message sizes must be non-negative, one per send");
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) || !(self.bandwidth > 0.0) {
            return bad("latency must be non-negative and bandwidth positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComputeSpan {
    pub rank: usize,
    pub iteration: usize,
    pub group: usize,
    pub start: f64,
    pub end: f64,
    /// Idle time spent waiting for messages just before this group.
    pub wait: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageSpan {
    pub letter: char,
    pub iteration: usize,
    pub from: usize,
    pub to: usize,
    pub sent: f64,
    pub arrival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timeline {
    pub spans: Vec<ComputeSpan>,
    pub messages: Vec<MessageSpan>,
    pub idle: Vec<f64>,
    /// Idle per rank after the first iteration.
    pub steady_idle: Vec<f64>,
    pub makespan: f64,
    pub violations: Vec<Violation>,
}

/// Time available to hide a send: compute of the groups it overlaps.
pub fn overlap_window(s: &CommSchedule, e: &SendEvent, costs: &[f64]) -> f64 {
    s.overlap_groups(e).iter().fold(0.0, |acc, &g| acc + costs[g - 1])
}

/// Smallest bandwidth at which every transit fits its window.
pub fn threshold_bandwidth(s: &CommSchedule, costs: &[f64], latency: f64, message_bytes: &[f64]) -> f64 {
    s.sends
        .iter()
        .zip(message_bytes)
        .map(|(e, &b)| {
            let room = overlap_window(s, e, costs) - latency;
            if room > 0.0 {
                b / room
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Simulate `cfg.iterations` iterations. Each rank sends every event to both
/// ring neighbors; communication runs beside compute.
pub fn simulate_timeline(s: &CommSchedule, cfg: &TimelineConfig) -> Result<Timeline> {
    cfg.validate(s)?;
    let n = cfg.ranks;
    let mut spans = Vec::new();
    let mut messages = Vec::new();
    let mut idle = vec![0.0; n];
    let mut steady = vec![0.0; n];
    let mut clock = vec![0.0f64; n];
    // arrival[rank][event]: latest arrival of the previous iteration's data
    let mut arrival: Vec<Vec<f64>> = vec![vec![f64::NEG_INFINITY; s.sends.len()]; n];
    for it in 0..cfg.iterations {
        let mut next = vec![vec![f64::NEG_INFINITY; s.sends.len()]; n];
        for r in 0..n {
            let costs = cfg.costs(r);
            for g in 1..=s.groups {
                let ready = s
                    .sends
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.consumer == g)
                    .map(|(k, _)| arrival[r][k])
                    .fold(clock[r], f64::max);
                let wait = ready - clock[r];
                idle[r] += wait;
                if it > 0 {
                    steady[r] += wait;
                }
                let end = ready + costs[g - 1];
                spans.push(ComputeSpan { rank: r, iteration: it, group: g, start: ready, end, wait });
                clock[r] = end;
                for (k, e) in s.sends.iter().enumerate().filter(|(_, e)| e.trigger == g) {
                    let at = end + cfg.transit(k);
                    for to in [(r + 1) % n, (r + n - 1) % n] {
                        next[to][k] = next[to][k].max(at);
                        messages.push(MessageSpan { letter: e.letter, iteration: it, from: r, to, sent: end, arrival: at });
                    }
                }
            }
        }
        arrival = next;
    }
    let makespan = clock.iter().copied().fold(0.0, f64::max);
    Ok(Timeline { spans, messages, idle, steady_idle: steady, makespan, violations: validate_schedule(s) })
}

impl Timeline {
    /// Plain-text Gantt chart: group digits for compute, `.` for waiting.
    pub fn gantt(&self, width: usize) -> String {
        let width = width.max(10);
        let scale = width as f64 / self.makespan.max(f64::MIN_POSITIVE);
        let ranks = self.idle.len();
        let mut out = String::new();
        for r in 0..ranks {
            let mut row = vec![' '; width];
            for s in self.spans.iter().filter(|s| s.rank == r) {
                let paint = |row: &mut Vec<char>, a: f64, b: f64, ch: char| {
                    let (i, j) = ((a * scale) as usize, ((b * scale).ceil() as usize).min(width));
                    for c in row.iter_mut().take(j).skip(i) {
                        *c = ch;
                    }
                };
                paint(&mut row, s.start - s.wait, s.start, '.');
                let ch = char::from_digit(s.group as u32 % 10, 10).unwrap_or('#');
                paint(&mut row, s.start, s.end, ch);
            }
            let _ = writeln!(out, "rank {r:>3} |{}| idle {:.3e} s", row.into_iter().collect::<String>(), self.idle[r]);
        }
        let _ = write!(out, "makespan {:.3e} s, {} messages", self.makespan, self.messages.len());
        out
    }
}
