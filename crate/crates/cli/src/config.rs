//! Run configuration: a TOML file with one table per concern. Every key has a
//! matching command-line flag; flags win over the file.

use std::path::{Path, PathBuf};

use latdd::comm::{build_schedule_lenient, ScheduleKind};
use latdd::dd::{decompose, SchwarzParams};
use latdd::fgmres::FgmresParams;
use latdd::lattice::{GaugeKind, LatticeGeometry, ND};
use latdd::partition::plan_uniform;
use latdd::wilson::OperatorParams;
use latdd::Precision;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSection,
    pub gauge: GaugeSection,
    pub source: SourceSection,
    pub operator: OperatorSection,
    pub schwarz: SchwarzSection,
    pub outer: OuterSection,
    pub plan: PlanSection,
    pub schedule: ScheduleSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub dims: [usize; ND],
    pub domain: [usize; ND],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GaugeKindName {
    Free,
    Random,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaugeSection {
    pub kind: GaugeKindName,
    pub eps: f64,
    pub seed: u64,
    /// Read the configuration from this file instead of generating it.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSection {
    pub mass: f64,
    pub csw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchwarzSection {
    pub enabled: bool,
    pub n_schwarz: usize,
    pub n_mr: usize,
    pub eo: bool,
    pub half_storage: bool,
    /// Cap on concurrent domain solves; all cores when absent.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterSection {
    pub restart: usize,
    pub deflation: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub ranks: usize,
    /// Explicit rank grid; derived from `ranks` when absent.
    pub grid: Option<[usize; ND]>,
    pub nc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Append record lines to this file.
    pub record: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lattice: LatticeSection::default(),
            gauge: GaugeSection::default(),
            source: SourceSection::default(),
            operator: OperatorSection::default(),
            schwarz: SchwarzSection::default(),
            outer: OuterSection::default(),
            plan: PlanSection::default(),
            schedule: ScheduleSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection { dims: [8; ND], domain: [4; ND] }
    }
}

impl Default for GaugeSection {
    fn default() -> Self {
        GaugeSection { kind: GaugeKindName::Weak, eps: 0.1, seed: 1, path: None }
    }
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection { seed: 2 }
    }
}

impl Default for OperatorSection {
    fn default() -> Self {
        OperatorSection { mass: 0.1, csw: 1.0 }
    }
}

impl Default for SchwarzSection {
    fn default() -> Self {
        let p = SchwarzParams::default();
        SchwarzSection { enabled: true, n_schwarz: p.n_schwarz, n_mr: p.n_mr, eo: p.eo, half_storage: false, workers: None }
    }
}

impl Default for OuterSection {
    fn default() -> Self {
        let p = FgmresParams::default();
        OuterSection { restart: p.restart, deflation: p.deflation, tol: p.tol, max_iter: p.max_iter, precision: p.precision }
    }
}

impl Default for PlanSection {
    fn default() -> Self {
        PlanSection { ranks: 1, grid: None, nc: 60 }
    }
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection { kind: ScheduleKind::Overlapped }
    }
}

impl GaugeSection {
    pub fn kind(&self) -> GaugeKind {
        match self.kind {
            GaugeKindName::Free => GaugeKind::Free,
            GaugeKindName::Random => GaugeKind::Random,
            GaugeKindName::Weak => GaugeKind::Weak { eps: self.eps },
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn operator(&self) -> Result<OperatorParams, CliError> {
        Ok(OperatorParams::new(self.operator.mass, self.operator.csw)?)
    }

    pub fn schwarz_params(&self) -> SchwarzParams {
        SchwarzParams { n_schwarz: self.schwarz.n_schwarz, n_mr: self.schwarz.n_mr, eo: self.schwarz.eo, ..Default::default() }
    }

    pub fn fgmres_params(&self) -> FgmresParams {
        FgmresParams {
            restart: self.outer.restart,
            deflation: self.outer.deflation,
            tol: self.outer.tol,
            max_iter: self.outer.max_iter,
            precision: self.outer.precision,
            ..Default::default()
        }
    }

    /// Rank grid: the explicit one, or `ranks` factored onto the axes in the
    /// order t, z, y, x as far as the domain grid allows.
    pub fn rank_grid(&self) -> Result<[usize; ND], CliError> {
        let dgrid: [usize; ND] = std::array::from_fn(|a| self.lattice.dims[a] / self.lattice.domain[a].max(1));
        if let Some(g) = self.plan.grid {
            let n: usize = g.iter().product();
            if self.plan.ranks != 1 && self.plan.ranks != n {
                return Err(CliError::Config(format!("rank grid {g:?} has {n} ranks, not {}", self.plan.ranks)));
            }
            return Ok(g);
        }
        let mut grid = [1; ND];
        let mut left = self.plan.ranks;
        if left == 0 {
            return Err(CliError::Config("ranks must be at least 1".into()));
        }
        let mut p = 2;
        while left > 1 {
            while left % p != 0 {
                p += 1;
            }
            let axis = (0..ND).rev().find(|&a| (dgrid[a] / grid[a]) % p == 0).ok_or_else(|| {
                CliError::Config(format!("{} ranks do not fit the domain grid {dgrid:?}", self.plan.ranks))
            })?;
            grid[axis] *= p;
            left /= p;
        }
        Ok(grid)
    }

    /// Consistency checks run before any work.
    pub fn validate(&self) -> Result<(), CliError> {
        let geo = LatticeGeometry::new(self.lattice.dims)?;
        decompose(&geo, self.lattice.domain)?;
        if self.gauge.kind == GaugeKindName::Weak && !(self.gauge.eps >= 0.0 && self.gauge.eps.is_finite()) {
            return Err(CliError::Config(format!("weak-field eps must be >= 0, got {}", self.gauge.eps)));
        }
        self.operator()?;
        self.schwarz_params().validate()?;
        self.fgmres_params().validate()?;
        if self.schwarz.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.plan.nc == 0 {
            return Err(CliError::Config("nc must be at least 1".into()));
        }
        let grid = self.rank_grid()?;
        if grid.iter().product::<usize>() > 1 {
            let plan = plan_uniform(self.lattice.dims, self.lattice.domain, grid, self.plan.nc)?;
            let split = grid.map(|g| g > 1);
            for r in &plan.ranks {
                let dgrid: [usize; ND] = std::array::from_fn(|a| r.extents[a] / self.lattice.domain[a]);
                build_schedule_lenient(self.schedule.kind, split, dgrid)?;
            }
        }
        Ok(())
    }
}
