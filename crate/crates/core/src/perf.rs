//! Closed-form chip, instruction-mix and working-set models.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::geometry::{Dir, ND};
use crate::layout::{lane_utilization, FuseSpec};
use crate::precision::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChipModel {
    pub cores: usize,
    pub usable_cores: usize,
    pub clock_ghz: f64,
    pub sp_lanes: usize,
    pub dp_lanes: usize,
    /// Flops per FMA instruction per lane.
    pub flops_per_fma: usize,
    pub stream_bandwidth_gbs: f64,
    pub nominal_bandwidth_gbs: f64,
}

impl Default for ChipModel {
    fn default() -> Self {
        ChipModel {
            cores: 61,
            usable_cores: 60,
            clock_ghz: 1.238,
            sp_lanes: 16,
            dp_lanes: 8,
            flops_per_fma: 2,
            stream_bandwidth_gbs: 170.0,
            nominal_bandwidth_gbs: 352.0,
        }
    }
}

impl ChipModel {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.cores, self.usable_cores, self.sp_lanes, self.dp_lanes, self.flops_per_fma];
        let rates = [self.clock_ghz, self.stream_bandwidth_gbs, self.nominal_bandwidth_gbs];
        if counts.contains(&0) || rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidParameter(format!("chip model has non-positive entries: {self:?}")));
        }
        if self.usable_cores > self.cores {
            return Err(Error::InvalidParameter("usable cores exceed cores".into()));
        }
        Ok(())
    }

    pub fn lanes(&self, precision: Precision) -> usize {
        match precision {
            Precision::Double => self.dp_lanes,
            Precision::Single | Precision::Half => self.sp_lanes,
        }
    }

    /// Peak Gflop/s of one core.
    pub fn peak_per_core(&self, precision: Precision) -> Result<f64> {
        self.validate()?;
        Ok(self.clock_ghz * (self.lanes(precision) * self.flops_per_fma) as f64)
    }
}

/// Peak Gflop/s of the whole chip: cores x GHz x lanes x 2.
pub fn peak_flops(chip: &ChipModel, precision: Precision) -> Result<f64> {
    Ok(chip.peak_per_core(precision)? * chip.cores as f64)
}

/// Fraction of peak reachable when a fraction `f` of instructions are FMAs:
/// `(2f + (1 - f)) / 2`.
pub fn fma_efficiency_limit(f: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidParameter(format!("FMA fraction {f} outside [0, 1]")));
    }
    Ok((1.0 + f) / 2.0)
}

/// Gflop/s per core after the FMA limit and a lumped instruction-overhead
/// factor.
pub fn overheaded_limit(chip: &ChipModel, precision: Precision, f: f64, overhead: f64) -> Result<f64> {
    if !(overhead > 0.0 && overhead <= 1.0) {
        return Err(Error::InvalidParameter(format!("overhead factor {overhead} outside (0, 1]")));
    }
    Ok(chip.peak_per_core(precision)? * fma_efficiency_limit(f)? * overhead)
}

/// Overhead factor that takes the 82% FMA limit down to 56% of peak.
pub const DEFAULT_OVERHEAD: f64 = 0.56 / 0.82;
/// FMA fraction used by the model (the exact count gives 0.638).
pub const DEFAULT_FMA_FRACTION: f64 = 0.64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StorageMode {
    AllSingle,
    GaugeCloverHalf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingSetSpec {
    pub domain: [usize; ND],
    pub spinor_bytes: usize,
    pub gauge_bytes: usize,
    pub clover_bytes: usize,
    /// Spinor-sized vectors resident per site.
    pub spinor_equivalents: f64,
}

impl WorkingSetSpec {
    pub fn new(domain: [usize; ND]) -> Self {
        WorkingSetSpec { domain, spinor_bytes: 96, gauge_bytes: 288, clover_bytes: 288, spinor_equivalents: 3.5 }
    }

    pub fn sites(&self) -> usize {
        self.domain.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites() == 0 || self.gauge_bytes % 2 != 0 || self.clover_bytes % 2 != 0 {
            return Err(Error::InvalidParameter(format!("invalid working-set spec {self:?}")));
        }
        if !(self.spinor_equivalents.is_finite() && self.spinor_equivalents > 0.0) {
            return Err(Error::InvalidParameter("spinor equivalents must be positive".into()));
        }
        Ok(())
    }
}

/// Working set per domain in kB (1024 bytes).
pub fn working_set(spec: &WorkingSetSpec, mode: StorageMode) -> Result<f64> {
    spec.validate()?;
    let (g, c) = match mode {
        StorageMode::AllSingle => (spec.gauge_bytes, spec.clover_bytes),
        StorageMode::GaugeCloverHalf => (spec.gauge_bytes / 2, spec.clover_bytes / 2),
    };
    let per_site = spec.spinor_equivalents * spec.spinor_bytes as f64 + (g + c) as f64;
    Ok(spec.sites() as f64 * per_site / 1024.0)
}

/// Useful-lane fraction of a hop along `dir` in a fused layout.
pub fn simd_utilization(dims: [usize; ND], spec: FuseSpec, dir: Dir) -> Result<f64> {
    Ok(lane_utilization(dims, spec, dir)?.utilization())
}

/// Measured single-core Gflop/s (single precision), kept for annotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasuredRow {
    pub prefetching: &'static str,
    pub mr_single: f64,
    pub mr_half: f64,
    pub dd_single: f64,
    pub dd_half: f64,
}

pub const MEASURED_SINGLE_CORE: [MeasuredRow; 3] = [
    MeasuredRow { prefetching: "none", mr_single: 6.1, mr_half: 8.9, dd_single: 4.6, dd_half: 6.6 },
    MeasuredRow { prefetching: "L1", mr_single: 10.4, mr_half: 13.3, dd_single: 6.5, dd_half: 8.7 },
    MeasuredRow { prefetching: "L1+L2", mr_single: 10.2, mr_half: 13.3, dd_single: 7.1, dd_half: 9.5 },
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub chip: ChipModel,
    pub fma_fraction: f64,
    pub overhead: f64,
    pub peak_dp_gflops: f64,
    pub peak_sp_gflops: f64,
    pub peak_sp_per_core: f64,
    pub fma_limit: f64,
    pub overheaded_fraction: f64,
    pub overheaded_per_core: f64,
    pub domain: [usize; ND],
    pub working_set_single_kb: f64,
    pub working_set_half_kb: f64,
}

pub fn model_report(chip: &ChipModel, f: f64, overhead: f64, ws: &WorkingSetSpec) -> Result<ModelReport> {
    let per_core = chip.peak_per_core(Precision::Single)?;
    let limited = overheaded_limit(chip, Precision::Single, f, overhead)?;
    Ok(ModelReport {
        chip: *chip,
        fma_fraction: f,
        overhead,
        peak_dp_gflops: peak_flops(chip, Precision::Double)?,
        peak_sp_gflops: peak_flops(chip, Precision::Single)?,
        peak_sp_per_core: per_core,
        fma_limit: fma_efficiency_limit(f)?,
        overheaded_fraction: limited / per_core,
        overheaded_per_core: limited,
        domain: ws.domain,
        working_set_single_kb: working_set(ws, StorageMode::AllSingle)?,
        working_set_half_kb: working_set(ws, StorageMode::GaugeCloverHalf)?,
    })
}

impl fmt::Display for ModelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.domain.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x");
        writeln!(f, "peak DP            {:8.1} Gflop/s", self.peak_dp_gflops)?;
        writeln!(f, "peak SP            {:8.1} Gflop/s ({:.1} per core)", self.peak_sp_gflops, self.peak_sp_per_core)?;
        writeln!(f, "FMA fraction {:.3}  limit {:5.1}% of peak", self.fma_fraction, 100.0 * self.fma_limit)?;
        writeln!(
            f,
            "with overheads     {:5.1}% of peak, {:.1} Gflop/s/core",
            100.0 * self.overheaded_fraction,
            self.overheaded_per_core
        )?;
        writeln!(f, "working set {d}  {:.0} kB single, {:.0} kB half gauge/clover", self.working_set_single_kb, self.working_set_half_kb)?;
        write!(f, "measured MR/DD single core (Gflop/s, single|half):")?;
        for r in MEASURED_SINGLE_CORE {
            write!(f, "\n  {:<6} MR {:4.1}|{:4.1}  DD {:4.1}|{:4.1}", r.prefetching, r.mr_single, r.mr_half, r.dd_single, r.dd_half)?;
        }
        Ok(())
    }
}
