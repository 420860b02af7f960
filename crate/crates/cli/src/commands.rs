//! Subcommands. Each returns an [`Outcome`]; printing and exit codes are left
//! to the binary.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use latdd::comm::{
    build_naive_schedule, build_schedule, run_multirank, simulate_timeline, threshold_bandwidth, validate_schedule,
    CommSchedule, MultiRankConfig, ScheduleKind, TimelineConfig, DEFAULT_BANDWIDTH, DEFAULT_LATENCY,
};
use latdd::dd::{decompose, Preconditioner, SchwarzPreconditioner};
use latdd::fgmres::SolveStats;
use latdd::lattice::{
    gauge_checksum, generate_gauge, read_gauge, write_gauge, GaugeField, LatticeGeometry, Rng, SpinorField, AXIS_NAMES, ND,
};
use latdd::partition::{cost_compare, plan_nonuniform, plan_uniform, PartitionPlan};
use latdd::perf::{model_report, ChipModel, WorkingSetSpec, DEFAULT_FMA_FRACTION, DEFAULT_OVERHEAD};
use latdd::solver::solve_wilson;
use latdd::wilson::{count_flops, FlopConvention};
use latdd::Precision;
use serde::Serialize;

use crate::config::{GaugeKindName, RunConfig};
use crate::oracle::run_suites;
use crate::{CliError, Outcome, Record, EXIT_INTERNAL, EXIT_NOT_CONVERGED, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "latdd", version, about = "Domain-decomposed Wilson-Clover solver and machine models")]
pub struct Cli {
    /// Print record lines instead of the text report.
    #[arg(long, global = true)]
    pub json: bool,
    /// Also append record lines to this file.
    #[arg(long, global = true, value_name = "PATH")]
    pub record: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a gauge configuration file.
    Generate(GenerateArgs),
    /// Solve the Wilson-Clover system for a random source.
    Solve(Box<SolveArgs>),
    /// Partition a lattice over ranks and report the load.
    Plan(PlanArgs),
    /// Build a communication schedule and simulate its timeline.
    Schedule(ScheduleArgs),
    /// Machine performance model.
    Perfmodel(PerfArgs),
    /// Run the self-check suites.
    Oracle(OracleArgs),
}

pub fn parse_extents(s: &str) -> Result<[usize; ND], String> {
    let v: Vec<usize> = s.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"))).collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<usize>| format!("expected {ND} comma-separated extents, got {}", v.len()))
}

pub fn parse_axis(s: &str) -> Result<usize, String> {
    let t = s.trim();
    AXIS_NAMES
        .iter()
        .position(|c| t.len() == 1 && t.starts_with(*c))
        .or_else(|| t.parse::<usize>().ok().filter(|&a| a < ND))
        .ok_or_else(|| format!("unknown axis `{t}`, expected one of x, y, z, t"))
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "double" => Ok(Precision::Double),
        "single" => Ok(Precision::Single),
        "half" => Ok(Precision::Half),
        _ => Err(format!("unknown precision `{s}`")),
    }
}

fn parse_schedule_kind(s: &str) -> Result<ScheduleKind, String> {
    match s {
        "overlapped" => Ok(ScheduleKind::Overlapped),
        "naive" => Ok(ScheduleKind::Naive),
        _ => Err(format!("unknown schedule `{s}`, expected overlapped or naive")),
    }
}

fn extents(v: [usize; ND]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x")
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = parse_extents, default_value = "8,8,8,8")]
    pub dims: [usize; ND],
    #[arg(long, value_enum, default_value = "weak")]
    pub kind: GaugeKindName,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_parser = parse_precision, default_value = "double")]
    pub precision: Precision,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Serialize)]
struct GenerateRecord {
    path: String,
    dims: [usize; ND],
    kind: GaugeKindName,
    eps: Option<f64>,
    seed: u64,
    precision: Precision,
    bytes: u64,
    plaquette: f64,
    checksum: String,
}

pub fn generate(a: &GenerateArgs) -> Result<Outcome, CliError> {
    let mut cfg = RunConfig::default();
    cfg.gauge.kind = a.kind;
    cfg.gauge.eps = a.eps;
    let geo = LatticeGeometry::new(a.dims)?;
    let field = generate_gauge(cfg.gauge.kind(), &geo, &mut Rng::new(a.seed))?.to_precision(a.precision);
    write_gauge(&field, &a.output)?;
    let rec = GenerateRecord {
        path: a.output.display().to_string(),
        dims: a.dims,
        kind: a.kind,
        eps: (a.kind == GaugeKindName::Weak).then_some(a.eps),
        seed: a.seed,
        precision: a.precision,
        bytes: std::fs::metadata(&a.output).map_err(|e| CliError::Config(e.to_string()))?.len(),
        plaquette: field.average_plaquette(),
        checksum: gauge_checksum(&field),
    };
    let text = format!(
        "wrote {} ({} bytes, {})\nplaquette {:.12}\nchecksum {}\n",
        rec.path,
        rec.bytes,
        extents(a.dims),
        rec.plaquette,
        rec.checksum
    );
    Ok(Outcome::ok(text, vec![Record::new("generate", &rec)]))
}

#[derive(Debug, Default, Args)]
pub struct SolveArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_extents)]
    pub dims: Option<[usize; ND]>,
    #[arg(long, value_parser = parse_extents)]
    pub domain: Option<[usize; ND]>,
    #[arg(long, value_enum)]
    pub gauge_kind: Option<GaugeKindName>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub gauge_seed: Option<u64>,
    /// Read the gauge configuration from a file.
    #[arg(long)]
    pub gauge: Option<PathBuf>,
    #[arg(long)]
    pub source_seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mass: Option<f64>,
    #[arg(long)]
    pub csw: Option<f64>,
    #[arg(long)]
    pub n_schwarz: Option<usize>,
    #[arg(long)]
    pub n_mr: Option<usize>,
    /// Solve domain blocks without even-odd reduction.
    #[arg(long)]
    pub no_eo: bool,
    /// Store domain gauge and clover fields in half precision.
    #[arg(long)]
    pub half_domain_storage: bool,
    /// Plain FGMRES-DR without the Schwarz preconditioner.
    #[arg(long)]
    pub no_precond: bool,
    /// Cap on concurrent domain solves.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub restart: Option<usize>,
    #[arg(long)]
    pub deflation: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_parser = parse_precision)]
    pub precision: Option<Precision>,
    /// Simulated ranks, split along t first.
    #[arg(long)]
    pub ranks: Option<usize>,
    #[arg(long, value_parser = parse_extents)]
    pub rank_grid: Option<[usize; ND]>,
    #[arg(long)]
    pub nc: Option<usize>,
    #[arg(long, value_parser = parse_schedule_kind)]
    pub schedule: Option<ScheduleKind>,
    /// Also solve without preconditioner and report the iteration ratio.
    #[arg(long)]
    pub compare: bool,
}

impl SolveArgs {
    /// The configuration file (or defaults) with flags applied.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(c.lattice.dims, self.dims);
        set!(c.lattice.domain, self.domain);
        set!(c.gauge.kind, self.gauge_kind);
        set!(c.gauge.eps, self.eps);
        set!(c.gauge.seed, self.gauge_seed);
        if self.gauge.is_some() {
            c.gauge.path = self.gauge.clone();
        }
        set!(c.source.seed, self.source_seed);
        set!(c.operator.mass, self.mass);
        set!(c.operator.csw, self.csw);
        set!(c.schwarz.n_schwarz, self.n_schwarz);
        set!(c.schwarz.n_mr, self.n_mr);
        if self.no_eo {
            c.schwarz.eo = false;
        }
        if self.half_domain_storage {
            c.schwarz.half_storage = true;
        }
        if self.no_precond {
            c.schwarz.enabled = false;
        }
        if self.workers.is_some() {
            c.schwarz.workers = self.workers;
        }
        set!(c.outer.restart, self.restart);
        set!(c.outer.deflation, self.deflation);
        set!(c.outer.tol, self.tol);
        set!(c.outer.max_iter, self.max_iter);
        set!(c.outer.precision, self.precision);
        set!(c.plan.ranks, self.ranks);
        if self.rank_grid.is_some() {
            c.plan.grid = self.rank_grid;
        }
        set!(c.plan.nc, self.nc);
        set!(c.schedule.kind, self.schedule);
        Ok(c)
    }
}

#[derive(Debug, Serialize)]
struct MessageTotals {
    schwarz_messages: usize,
    schwarz_bytes: usize,
    operator_messages: usize,
    operator_bytes: usize,
}

#[derive(Debug, Serialize)]
struct Timing {
    workers: usize,
    seconds: f64,
    gflops: f64,
    model_peak_gflops: f64,
    model_efficiency: f64,
}

#[derive(Debug, Serialize)]
struct SolveRecord {
    dims: [usize; ND],
    domain: [usize; ND],
    gauge_checksum: String,
    source_seed: u64,
    mass: f64,
    csw: f64,
    preconditioned: bool,
    n_schwarz: usize,
    n_mr: usize,
    eo: bool,
    half_storage: bool,
    ranks: usize,
    rank_grid: [usize; ND],
    schedule: ScheduleKind,
    restart: usize,
    deflation: usize,
    tol: f64,
    precision: Precision,
    converged: bool,
    iterations: usize,
    cycles: usize,
    final_true_residual: f64,
    op_applications: usize,
    precond_applications: usize,
    flops_per_site: u64,
    operator_flops: f64,
    precond_flops_estimate: f64,
    messages: Option<MessageTotals>,
    unpreconditioned_iterations: Option<usize>,
    iteration_ratio: Option<f64>,
    residual_history: Vec<f64>,
    timing: Timing,
}

fn load_gauge(cfg: &RunConfig) -> Result<GaugeField<f64>, CliError> {
    match &cfg.gauge.path {
        Some(p) => {
            let g = read_gauge(p)?;
            if g.geometry().dims() != cfg.lattice.dims {
                return Err(CliError::Config(format!(
                    "{} holds a {} lattice, config asks for {}",
                    p.display(),
                    extents(g.geometry().dims()),
                    extents(cfg.lattice.dims)
                )));
            }
            Ok(g)
        }
        None => {
            let geo = LatticeGeometry::new(cfg.lattice.dims)?;
            Ok(generate_gauge(cfg.gauge.kind(), &geo, &mut Rng::new(cfg.gauge.seed))?)
        }
    }
}

fn in_pool<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Internal(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Solve as configured. `compare` adds an unpreconditioned reference solve.
pub fn solve_config(cfg: &RunConfig, compare: bool) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let gauge = load_gauge(cfg)?;
    let geo = gauge.geometry().clone();
    let b = SpinorField::<f64>::random(geo.clone(), &mut Rng::new(cfg.source.seed));
    let op = cfg.operator()?;
    let fgmres = cfg.fgmres_params();
    let grid = cfg.rank_grid()?;
    let ranks: usize = grid.iter().product();
    if ranks > 1 && !cfg.schwarz.enabled {
        return Err(CliError::Config("multi-rank runs need the Schwarz preconditioner".into()));
    }
    let started = Instant::now();
    let (stats, messages, workers) = in_pool(cfg.schwarz.workers, || -> Result<_, CliError> {
        let workers = rayon::current_num_threads();
        if ranks > 1 {
            let plan = plan_uniform(cfg.lattice.dims, cfg.lattice.domain, grid, cfg.plan.nc)?;
            let mcfg = MultiRankConfig {
                op,
                domain: cfg.lattice.domain,
                schwarz: cfg.schwarz_params(),
                fgmres: fgmres.clone(),
                half_storage: cfg.schwarz.half_storage,
                schedule: cfg.schedule.kind,
            };
            let res = run_multirank(&plan, &gauge, &b, &mcfg)?;
            let totals = MessageTotals {
                schwarz_messages: res.ranks.iter().map(|r| r.schwarz_sent).sum(),
                schwarz_bytes: res.ranks.iter().map(|r| r.schwarz_bytes).sum(),
                operator_messages: res.ranks.iter().map(|r| r.operator_sent).sum(),
                operator_bytes: res.ranks.iter().map(|r| r.operator_bytes).sum(),
            };
            return Ok((res.stats, Some(totals), workers));
        }
        let stats = if cfg.schwarz.enabled {
            let pre = SchwarzPreconditioner::new(decompose(&geo, cfg.lattice.domain)?, &gauge, &op, cfg.schwarz_params())?;
            if cfg.schwarz.half_storage {
                let half = pre.compress()?;
                solve_wilson(&gauge, &op, &b, Some(&half as &dyn Preconditioner), &fgmres)?.1
            } else {
                solve_wilson(&gauge, &op, &b, Some(&pre as &dyn Preconditioner), &fgmres)?.1
            }
        } else {
            solve_wilson(&gauge, &op, &b, None, &fgmres)?.1
        };
        Ok((stats, None, workers))
    })??;
    let seconds = started.elapsed().as_secs_f64();
    let reference: Option<SolveStats> = if compare && cfg.schwarz.enabled {
        Some(in_pool(cfg.schwarz.workers, || solve_wilson(&gauge, &op, &b, None, &fgmres))??.1)
    } else {
        None
    };

    let per_site = count_flops(&op, FlopConvention::Hermitian)?.flops_per_site;
    let vol = geo.volume() as f64;
    let operator_flops = stats.op_applications as f64 * vol * per_site as f64;
    // every MR step is counted as one block operator application
    let precond_flops = if cfg.schwarz.enabled {
        stats.precond_applications as f64 * (cfg.schwarz.n_schwarz * cfg.schwarz.n_mr) as f64 * vol * per_site as f64
    } else {
        0.0
    };
    let gflops = (operator_flops + precond_flops) / seconds.max(1e-12) / 1e9;
    let model_peak = ChipModel::default().peak_per_core(Precision::Single)? * workers as f64;
    let rec = SolveRecord {
        dims: cfg.lattice.dims,
        domain: cfg.lattice.domain,
        gauge_checksum: gauge_checksum(&gauge),
        source_seed: cfg.source.seed,
        mass: cfg.operator.mass,
        csw: cfg.operator.csw,
        preconditioned: cfg.schwarz.enabled,
        n_schwarz: cfg.schwarz.n_schwarz,
        n_mr: cfg.schwarz.n_mr,
        eo: cfg.schwarz.eo,
        half_storage: cfg.schwarz.half_storage,
        ranks,
        rank_grid: grid,
        schedule: cfg.schedule.kind,
        restart: cfg.outer.restart,
        deflation: cfg.outer.deflation,
        tol: cfg.outer.tol,
        precision: cfg.outer.precision,
        converged: stats.converged,
        iterations: stats.iterations,
        cycles: stats.cycles,
        final_true_residual: stats.final_true_residual,
        op_applications: stats.op_applications,
        precond_applications: stats.precond_applications,
        flops_per_site: per_site,
        operator_flops,
        precond_flops_estimate: precond_flops,
        messages,
        unpreconditioned_iterations: reference.as_ref().map(|r| r.iterations),
        iteration_ratio: reference.as_ref().map(|r| stats.iterations as f64 / r.iterations.max(1) as f64),
        residual_history: stats.residual_history.clone(),
        timing: Timing { workers, seconds, gflops, model_peak_gflops: model_peak, model_efficiency: gflops / model_peak },
    };

    let mut t = String::new();
    let _ = writeln!(
        t,
        "lattice {}  domain {}  ranks {} ({})  {}",
        extents(rec.dims),
        extents(rec.domain),
        ranks,
        extents(grid),
        if rec.preconditioned {
            format!(
                "Schwarz {}x{} MR{}{}",
                rec.n_schwarz,
                rec.n_mr,
                if rec.eo { " eo" } else { "" },
                if rec.half_storage { " half" } else { "" }
            )
        } else {
            "unpreconditioned".into()
        }
    );
    for (i, r) in rec.residual_history.iter().enumerate() {
        let _ = writeln!(t, "  {i:4}  {r:.6e}");
    }
    let _ = writeln!(
        t,
        "{} after {} iterations ({} cycles), true residual {:.3e}",
        if rec.converged { "converged" } else { "NOT converged" },
        rec.iterations,
        rec.cycles,
        rec.final_true_residual
    );
    if let (Some(n), Some(q)) = (rec.unpreconditioned_iterations, rec.iteration_ratio) {
        let _ = writeln!(t, "unpreconditioned: {n} iterations, ratio {q:.3}");
    }
    if let Some(m) = &rec.messages {
        let _ = writeln!(
            t,
            "messages: {} Schwarz ({} bytes), {} operator ({} bytes)",
            m.schwarz_messages, m.schwarz_bytes, m.operator_messages, m.operator_bytes
        );
    }
    let _ = writeln!(
        t,
        "flops: {:.3e} operator + {:.3e} preconditioner (estimate), {:.2} Gflop/s on {} workers, {:.2}% of model peak",
        rec.operator_flops,
        rec.precond_flops_estimate,
        gflops,
        workers,
        100.0 * rec.timing.model_efficiency
    );
    let exit = if rec.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    Ok(Outcome { text: t, records: vec![Record::new("solve", &rec)], exit, record_to: cfg.output.record.clone() })
}

pub fn solve(a: &SolveArgs) -> Result<Outcome, CliError> {
    solve_config(&a.resolve()?, a.compare)
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, value_parser = parse_extents, default_value = "64,64,64,128")]
    pub global: [usize; ND],
    #[arg(long, value_parser = parse_extents, default_value = "8,4,4,4")]
    pub domain: [usize; ND],
    /// Ranks per axis for the uniform split.
    #[arg(long, value_parser = parse_extents, default_value = "4,4,8,8")]
    pub grid: [usize; ND],
    /// Cores per rank.
    #[arg(long, default_value_t = 60)]
    pub nc: usize,
    /// Also search a non-uniform split along this axis and compare.
    #[arg(long, value_parser = parse_axis)]
    pub nonuniform: Option<usize>,
}

#[derive(Debug, Serialize)]
struct PlanRecord<'a> {
    label: &'static str,
    #[serde(flatten)]
    plan: &'a PartitionPlan,
}

pub fn plan(a: &PlanArgs) -> Result<Outcome, CliError> {
    let uniform = plan_uniform(a.global, a.domain, a.grid, a.nc)?;
    let mut text = format!("uniform\n{uniform}\n");
    let mut records = vec![Record::new("plan", &PlanRecord { label: "uniform", plan: &uniform })];
    if let Some(axis) = a.nonuniform {
        let p = plan_nonuniform(a.global, a.domain, a.grid, a.nc, axis)?;
        let cmp = cost_compare(&p, &uniform)?;
        let _ = write!(text, "\nnon-uniform along {}\n{p}\n\n{cmp}\n", AXIS_NAMES[axis]);
        records.push(Record::new("plan", &PlanRecord { label: "nonuniform", plan: &p }));
        records.push(Record::new("cost", &cmp));
    }
    Ok(Outcome::ok(text, records))
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Split axes, e.g. `t,z`.
    #[arg(long, default_value = "t,z", value_delimiter = ',', value_parser = parse_axis)]
    pub split: Vec<usize>,
    /// Domains per rank along each axis.
    #[arg(long, value_parser = parse_extents, default_value = "2,2,4,8")]
    pub grid: [usize; ND],
    /// Domain extents, for message sizes.
    #[arg(long, value_parser = parse_extents, default_value = "8,4,4,4")]
    pub domain: [usize; ND],
    /// Send every face after the last group.
    #[arg(long)]
    pub naive: bool,
    /// Seconds of compute per domain; a group costs this times its size.
    #[arg(long, default_value_t = 1e-5)]
    pub domain_cost: f64,
    /// Bytes per face site in a message.
    #[arg(long, default_value_t = 96.0)]
    pub site_bytes: f64,
    #[arg(long, default_value_t = DEFAULT_LATENCY)]
    pub latency: f64,
    /// Bytes per second.
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
    pub bandwidth: f64,
    #[arg(long, default_value_t = 2)]
    pub ranks: usize,
    #[arg(long, default_value_t = 4)]
    pub iterations: usize,
    /// Bandwidth sweep points around the threshold (0 disables).
    #[arg(long, default_value_t = 0)]
    pub sweep: usize,
    /// Width of the text Gantt chart (0 disables).
    #[arg(long, default_value_t = 72)]
    pub gantt: usize,
}

#[derive(Debug, Serialize)]
struct TimelineRecord {
    ranks: usize,
    iterations: usize,
    latency: f64,
    bandwidth: f64,
    message_bytes: Vec<f64>,
    windows: Vec<f64>,
    transits: Vec<f64>,
    makespan: f64,
    idle: Vec<f64>,
    steady_idle: Vec<f64>,
    threshold_bandwidth: f64,
}

#[derive(Debug, Serialize)]
struct SweepRecord {
    bandwidth: f64,
    steady_idle: f64,
    hidden: bool,
}

fn message_bytes(s: &CommSchedule, domain: [usize; ND], site_bytes: f64) -> Vec<f64> {
    let vol: usize = domain.iter().product();
    s.sends.iter().map(|e| (s.part_domains(e.axis, e.part) * vol / domain[e.axis]) as f64 * site_bytes).collect()
}

pub fn schedule(a: &ScheduleArgs) -> Result<Outcome, CliError> {
    let mut split = [false; ND];
    for &ax in &a.split {
        split[ax] = true;
    }
    let s = if a.naive { build_naive_schedule(split, a.grid)? } else { build_schedule(split, a.grid)? };
    let violations = validate_schedule(&s);
    let bytes = message_bytes(&s, a.domain, a.site_bytes);
    let costs: Vec<f64> =
        (1..=s.groups).map(|g| s.group_of.iter().filter(|&&x| x == g).count() as f64 * a.domain_cost).collect();
    let cfg = TimelineConfig {
        ranks: a.ranks,
        iterations: a.iterations,
        group_costs: vec![costs.clone()],
        latency: a.latency,
        bandwidth: a.bandwidth,
        message_bytes: bytes.clone(),
    };
    let tl = simulate_timeline(&s, &cfg)?;
    let threshold = threshold_bandwidth(&s, &costs, a.latency, &bytes);
    let windows: Vec<f64> = s.sends.iter().map(|e| latdd::comm::overlap_window(&s, e, &costs)).collect();
    let transits: Vec<f64> = (0..s.sends.len()).map(|k| cfg.transit(k)).collect();

    let mut t = format!("{s}\n");
    if violations.is_empty() {
        t.push_str("validation: no violations\n");
    } else {
        for v in &violations {
            let _ = writeln!(t, "violation: {v:?}");
        }
    }
    for (k, e) in s.sends.iter().enumerate() {
        let _ = writeln!(
            t,
            "({}) {:.0} bytes, window {:.3e} s, transit {:.3e} s{}",
            e.letter,
            bytes[k],
            windows[k],
            transits[k],
            if transits[k] <= windows[k] { "" } else { "  EXPOSED" }
        );
    }
    let worst_steady = tl.steady_idle.iter().cloned().fold(0.0, f64::max);
    let _ = writeln!(t, "makespan {:.3e} s, steady idle per rank {:.3e} s", tl.makespan, worst_steady);
    if threshold.is_finite() {
        let _ = writeln!(t, "bandwidth needed to hide all transfers: {threshold:.3e} B/s");
    } else {
        t.push_str("some transfer has no window; no bandwidth hides it\n");
    }
    if a.gantt > 0 {
        t.push_str(&tl.gantt(a.gantt));
        t.push('\n');
    }
    let mut records = vec![Record::new("schedule", &s)];
    records.push(Record::new(
        "violations",
        &serde_json::json!({ "count": violations.len(), "violations": violations }),
    ));
    records.push(Record::new(
        "timeline",
        &TimelineRecord {
            ranks: a.ranks,
            iterations: a.iterations,
            latency: a.latency,
            bandwidth: a.bandwidth,
            message_bytes: bytes.clone(),
            windows,
            transits,
            makespan: tl.makespan,
            idle: tl.idle.clone(),
            steady_idle: tl.steady_idle.clone(),
            threshold_bandwidth: threshold,
        },
    ));
    if a.sweep > 0 {
        let center = if threshold.is_finite() && threshold > 0.0 { threshold } else { a.bandwidth };
        t.push_str("bandwidth sweep (B/s, steady idle s):\n");
        for i in 0..a.sweep {
            let x = if a.sweep == 1 { 0.0 } else { -3.0 + 6.0 * i as f64 / (a.sweep - 1) as f64 };
            let bw = center * 2f64.powf(x);
            let run = simulate_timeline(&s, &TimelineConfig { bandwidth: bw, ..cfg.clone() })?;
            let idle = run.steady_idle.iter().cloned().fold(0.0, f64::max);
            let hidden = idle <= 1e-12 * run.makespan;
            let _ = writeln!(t, "  {bw:.3e}  {idle:.3e}{}", if hidden { "  hidden" } else { "" });
            records.push(Record::new("sweep", &SweepRecord { bandwidth: bw, steady_idle: idle, hidden }));
        }
    }
    Ok(Outcome::ok(t, records))
}

#[derive(Debug, Args)]
pub struct PerfArgs {
    /// Fraction of floating-point work that maps onto FMAs.
    #[arg(long, default_value_t = DEFAULT_FMA_FRACTION)]
    pub fma_fraction: f64,
    /// Remaining efficiency after non-FMA overheads.
    #[arg(long, default_value_t = DEFAULT_OVERHEAD)]
    pub overhead: f64,
    /// Domain extents for the working set.
    #[arg(long, value_parser = parse_extents, default_value = "8,4,4,4")]
    pub domain: [usize; ND],
    #[arg(long)]
    pub cores: Option<usize>,
    #[arg(long)]
    pub clock_ghz: Option<f64>,
}

pub fn perfmodel(a: &PerfArgs) -> Result<Outcome, CliError> {
    let mut chip = ChipModel::default();
    if let Some(c) = a.cores {
        chip.cores = c;
        chip.usable_cores = chip.usable_cores.min(c);
    }
    if let Some(g) = a.clock_ghz {
        chip.clock_ghz = g;
    }
    chip.validate()?;
    let r = model_report(&chip, a.fma_fraction, a.overhead, &WorkingSetSpec::new(a.domain))?;
    Ok(Outcome::ok(format!("{r}\n"), vec![Record::new("perfmodel", &r)]))
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Suites to run: dense, gamma5, dispersion, layout, schwarz (all by default).
    #[arg(long, value_delimiter = ',')]
    pub suite: Vec<String>,
}

pub fn oracle(a: &OracleArgs) -> Result<Outcome, CliError> {
    let checks = run_suites(&a.suite)?;
    let mut t = String::new();
    let mut records = Vec::new();
    for c in &checks {
        let _ = writeln!(
            t,
            "{} {:<10} {:<40} {:.3e} < {:.0e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.suite,
            c.name,
            c.value,
            c.tolerance
        );
        records.push(Record::new("oracle", c));
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    let _ = writeln!(t, "{} checks, {failed} failed", checks.len());
    Ok(Outcome { text: t, records, exit: if failed == 0 { EXIT_OK } else { EXIT_INTERNAL }, record_to: None })
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Plan(a) => plan(a),
        Command::Schedule(a) => schedule(a),
        Command::Perfmodel(a) => perfmodel(a),
        Command::Oracle(a) => oracle(a),
    }
}
