//! Python bindings. Fields are passed around as opaque handles; plans,
//! schedules and reports come back as plain Python objects through JSON.

use latdd::comm::{build_naive_schedule, build_schedule, run_multirank, validate_schedule, CommSchedule, MultiRankConfig, ScheduleKind};
use latdd::dd::{decompose, Preconditioner, SchwarzParams, SchwarzPreconditioner};
use latdd::fgmres::FgmresParams;
use latdd::lattice::{gauge_checksum, generate_gauge, read_gauge, write_gauge, GaugeKind, LatticeGeometry, Rng, ND};
use latdd::partition::{self, plan_nonuniform, plan_uniform, PartitionPlan};
use latdd::perf::{model_report, ChipModel, WorkingSetSpec, DEFAULT_FMA_FRACTION, DEFAULT_OVERHEAD};
use latdd::solver::solve_wilson;
use latdd::wilson::{apply_dirac, build_clover, count_flops, FlopConvention, OperatorParams};
use latdd::{Error, Precision};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::DegenerateDraw(_)
        | Error::HalfOverflow(_)
        | Error::NonFinite(_)
        | Error::Schedule(_)
        | Error::Message(_)
        | Error::Deadlock(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_obj(py: Python<'_>, v: &impl Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyModule::import(py, "json")?.call_method1("loads", (text,))?.unbind())
}

fn precision(name: &str) -> PyResult<Precision> {
    match name {
        "double" => Ok(Precision::Double),
        "single" => Ok(Precision::Single),
        "half" => Ok(Precision::Half),
        _ => Err(PyValueError::new_err(format!("unknown precision {name:?}"))),
    }
}

fn gauge_kind(kind: &str, eps: f64) -> PyResult<GaugeKind> {
    match kind {
        "free" => Ok(GaugeKind::Free),
        "random" => Ok(GaugeKind::Random),
        "weak" => Ok(GaugeKind::Weak { eps }),
        _ => Err(PyValueError::new_err(format!("unknown gauge kind {kind:?}, expected free, random or weak"))),
    }
}

/// SU(3) link field in double precision.
#[pyclass(module = "latdd_py", frozen)]
pub struct GaugeField {
    inner: latdd::lattice::GaugeField<f64>,
}

#[pymethods]
impl GaugeField {
    #[staticmethod]
    #[pyo3(signature = (dims, kind = "weak", eps = 0.1, seed = 1))]
    fn generate(dims: [usize; ND], kind: &str, eps: f64, seed: u64) -> PyResult<Self> {
        let geo = LatticeGeometry::new(dims).map_err(to_py)?;
        let inner = generate_gauge(gauge_kind(kind, eps)?, &geo, &mut Rng::new(seed)).map_err(to_py)?;
        Ok(GaugeField { inner })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(GaugeField { inner: read_gauge(path).map_err(to_py)? })
    }

    #[pyo3(signature = (path, precision = "double"))]
    fn write(&self, path: &str, precision: &str) -> PyResult<()> {
        let p = self::precision(precision)?;
        write_gauge(&self.inner.to_precision(p), path).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> [usize; ND] {
        self.inner.geometry().dims()
    }

    fn plaquette(&self) -> f64 {
        self.inner.average_plaquette()
    }

    /// SHA-256 of the field written as a double-precision file.
    fn checksum(&self) -> String {
        gauge_checksum(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("GaugeField(dims={:?}, plaquette={:.6})", self.dims(), self.plaquette())
    }
}

/// Spinor field, 12 complex components per site.
#[pyclass(module = "latdd_py", frozen)]
pub struct SpinorField {
    inner: latdd::lattice::SpinorField<f64>,
}

#[pymethods]
impl SpinorField {
    #[staticmethod]
    #[pyo3(signature = (dims, seed = 2))]
    fn random(dims: [usize; ND], seed: u64) -> PyResult<Self> {
        let geo = LatticeGeometry::new(dims).map_err(to_py)?;
        Ok(SpinorField { inner: latdd::lattice::SpinorField::random(geo, &mut Rng::new(seed)) })
    }

    #[getter]
    fn dims(&self) -> [usize; ND] {
        self.inner.geometry().dims()
    }

    fn norm(&self) -> f64 {
        self.inner.norm_sqr().sqrt()
    }

    /// Components in `site*12 + spin*3 + color` order.
    fn to_list(&self) -> Vec<(f64, f64)> {
        self.inner.as_slice().iter().map(|z| (z.re, z.im)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.as_slice().len()
    }
}

/// Apply the Wilson-Clover operator.
#[pyfunction]
#[pyo3(signature = (gauge, psi, mass = 0.1, csw = 1.0))]
fn apply_operator(gauge: &GaugeField, psi: &SpinorField, mass: f64, csw: f64) -> PyResult<SpinorField> {
    let op = OperatorParams::new(mass, csw).map_err(to_py)?;
    let clover = build_clover::<f64>(&gauge.inner, &op).map_err(to_py)?;
    Ok(SpinorField { inner: apply_dirac(&gauge.inner, &clover, &psi.inner).map_err(to_py)? })
}

#[pyclass(module = "latdd_py", frozen, get_all)]
pub struct SolveResult {
    solution: Py<SpinorField>,
    converged: bool,
    iterations: usize,
    cycles: usize,
    final_true_residual: f64,
    residual_history: Vec<f64>,
    precond_applications: usize,
    op_applications: usize,
}

#[pymethods]
impl SolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(converged={}, iterations={}, final_true_residual={:e})",
            if self.converged { "True" } else { "False" },
            self.iterations,
            self.final_true_residual
        )
    }
}

/// DD-preconditioned FGMRES-DR. `precondition=False` runs plain FGMRES-DR;
/// `rank_grid` other than all ones runs the simulated multi-rank solver.
#[pyfunction]
#[pyo3(signature = (
    gauge, source, mass = 0.1, csw = 1.0, *, domain = [4, 4, 4, 4], n_schwarz = 16, n_mr = 5,
    precondition = true, half_storage = false, restart = 16, deflation = 4, tol = 1e-8,
    max_iter = 5000, rank_grid = [1, 1, 1, 1]
))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    gauge: &GaugeField,
    source: &SpinorField,
    mass: f64,
    csw: f64,
    domain: [usize; ND],
    n_schwarz: usize,
    n_mr: usize,
    precondition: bool,
    half_storage: bool,
    restart: usize,
    deflation: usize,
    tol: f64,
    max_iter: usize,
    rank_grid: [usize; ND],
) -> PyResult<SolveResult> {
    let op = OperatorParams::new(mass, csw).map_err(to_py)?;
    let schwarz = SchwarzParams { n_schwarz, n_mr, ..SchwarzParams::default() };
    let fgmres = FgmresParams { restart, deflation, tol, max_iter, ..FgmresParams::default() };
    let (g, b) = (&gauge.inner, &source.inner);
    let (x, stats) = py
        .detach(|| -> latdd::Result<_> {
            if rank_grid.iter().product::<usize>() > 1 {
                let plan = plan_uniform(g.geometry().dims(), domain, rank_grid, 60)?;
                let cfg = MultiRankConfig { op, domain, schwarz, fgmres, half_storage, schedule: ScheduleKind::Overlapped };
                let r = run_multirank(&plan, g, b, &cfg)?;
                return Ok((r.solution, r.stats));
            }
            if !precondition {
                return solve_wilson(g, &op, b, None, &fgmres);
            }
            let pre = SchwarzPreconditioner::new(decompose(g.geometry(), domain)?, g, &op, schwarz)?;
            if half_storage {
                let half = pre.compress()?;
                solve_wilson(g, &op, b, Some(&half as &dyn Preconditioner), &fgmres)
            } else {
                solve_wilson(g, &op, b, Some(&pre as &dyn Preconditioner), &fgmres)
            }
        })
        .map_err(to_py)?;
    Ok(SolveResult {
        solution: Py::new(py, SpinorField { inner: x })?,
        converged: stats.converged,
        iterations: stats.iterations,
        cycles: stats.cycles,
        final_true_residual: stats.final_true_residual,
        residual_history: stats.residual_history,
        precond_applications: stats.precond_applications,
        op_applications: stats.op_applications,
    })
}

/// Rank partition of a global lattice with its load figures.
#[pyclass(module = "latdd_py", frozen)]
pub struct Plan {
    inner: PartitionPlan,
}

#[pymethods]
impl Plan {
    #[staticmethod]
    #[pyo3(signature = (global_dims, domain, grid, nc = 60))]
    fn uniform(global_dims: [usize; ND], domain: [usize; ND], grid: [usize; ND], nc: usize) -> PyResult<Self> {
        Ok(Plan { inner: plan_uniform(global_dims, domain, grid, nc).map_err(to_py)? })
    }

    /// Search uneven extents along `axis` (0..3 for x..t).
    #[staticmethod]
    #[pyo3(signature = (global_dims, domain, grid, nc = 60, axis = 3))]
    fn nonuniform(global_dims: [usize; ND], domain: [usize; ND], grid: [usize; ND], nc: usize, axis: usize) -> PyResult<Self> {
        Ok(Plan { inner: plan_nonuniform(global_dims, domain, grid, nc, axis).map_err(to_py)? })
    }

    #[getter]
    fn rank_count(&self) -> usize {
        self.inner.rank_count
    }

    #[getter]
    fn average_load(&self) -> f64 {
        self.inner.average_load
    }

    #[getter]
    fn splits(&self) -> Vec<Vec<usize>> {
        self.inner.splits.to_vec()
    }

    /// Relative saving of this plan against `other`: `1 - R_self / R_other`.
    fn cost_reduction(&self, other: &Plan) -> PyResult<f64> {
        Ok(partition::cost_compare(&self.inner, &other.inner).map_err(to_py)?.cost_reduction)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_obj(py, &self.inner)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

/// Average busy-core fraction for `nd` domains on `nc` cores.
#[pyfunction]
fn load(nd: usize, nc: usize) -> PyResult<f64> {
    partition::load(nd, nc).map_err(to_py)
}

/// Communication schedule for one rank.
#[pyclass(module = "latdd_py", frozen)]
pub struct Schedule {
    inner: CommSchedule,
}

#[pymethods]
impl Schedule {
    /// `split` names the split axes, e.g. "tz"; `grid` is domains per rank.
    #[new]
    #[pyo3(signature = (split, grid, naive = false))]
    fn new(split: &str, grid: [usize; ND], naive: bool) -> PyResult<Self> {
        let mut axes = [false; ND];
        for c in split.chars() {
            let a = "xyzt".find(c).ok_or_else(|| PyValueError::new_err(format!("unknown axis {c:?}")))?;
            axes[a] = true;
        }
        let inner = if naive { build_naive_schedule(axes, grid) } else { build_schedule(axes, grid) }.map_err(to_py)?;
        Ok(Schedule { inner })
    }

    #[getter]
    fn groups(&self) -> usize {
        self.inner.groups
    }

    /// Groups each send overlaps with, keyed by its letter.
    fn windows(&self) -> Vec<(char, Vec<usize>)> {
        self.inner.sends.iter().map(|e| (e.letter, self.inner.overlap_groups(e))).collect()
    }

    fn violations(&self) -> Vec<String> {
        validate_schedule(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_obj(py, &self.inner)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

/// Per-site flop breakdown; `convention` is "hermitian" or "dense".
#[pyfunction]
#[pyo3(signature = (mass = 0.1, csw = 1.0, convention = "hermitian"))]
fn flops(py: Python<'_>, mass: f64, csw: f64, convention: &str) -> PyResult<Py<PyAny>> {
    let conv: FlopConvention = convention.parse().map_err(to_py)?;
    let r = count_flops(&OperatorParams::new(mass, csw).map_err(to_py)?, conv).map_err(to_py)?;
    json_obj(py, &r)
}

/// Chip and working-set model with the default chip parameters.
#[pyfunction]
#[pyo3(signature = (fma_fraction = DEFAULT_FMA_FRACTION, overhead = DEFAULT_OVERHEAD, domain = [8, 4, 4, 4]))]
fn perf_model(py: Python<'_>, fma_fraction: f64, overhead: f64, domain: [usize; ND]) -> PyResult<Py<PyAny>> {
    let r = model_report(&ChipModel::default(), fma_fraction, overhead, &WorkingSetSpec::new(domain)).map_err(to_py)?;
    json_obj(py, &r)
}

#[pymodule]
pub fn latdd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GaugeField>()?;
    m.add_class::<SpinorField>()?;
    m.add_class::<SolveResult>()?;
    m.add_class::<Plan>()?;
    m.add_class::<Schedule>()?;
    m.add_function(wrap_pyfunction!(apply_operator, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(flops, m)?)?;
    m.add_function(wrap_pyfunction!(perf_model, m)?)?;
    Ok(())
}
