//! Wilson-Clover solve: FGMRES-DR outer iteration with an optional Schwarz
//! right preconditioner.

use num_complex::Complex;

use crate::dd::Preconditioner;
use crate::error::{Error, Result};
use crate::fgmres::{fgmres_dr, FgmresParams, LinearMap, SolveStats};
use crate::lattice::{GaugeField, SpinorField};
use crate::precision::{Precision, Real};
use crate::wilson::{apply_dirac_slice, build_clover, count_flops, FlopConvention, OperatorParams};

/// Solve `A x = b`. The outer vectors use `params.precision`; the
/// preconditioner always works in single precision.
pub fn solve_wilson(
    gauge: &GaugeField<f64>,
    op: &OperatorParams,
    b: &SpinorField<f64>,
    precond: Option<&dyn Preconditioner>,
    params: &FgmresParams,
) -> Result<(SpinorField<f64>, SolveStats)> {
    if gauge.geometry() != b.geometry() {
        return Err(Error::GeometryMismatch("gauge and right-hand side differ".into()));
    }
    let mut params = params.clone();
    if params.op_flops == 0.0 {
        let per_site = count_flops(op, FlopConvention::Hermitian)?.flops_per_site as f64;
        params.op_flops = per_site * b.geometry().volume() as f64;
    }
    match params.precision {
        Precision::Double => run::<f64>(gauge, op, b, precond, &params),
        Precision::Single => run::<f32>(gauge, op, b, precond, &params),
        Precision::Half => Err(Error::InvalidParameter("outer vectors cannot be half precision".into())),
    }
}

fn run<T: Real>(
    gauge: &GaugeField<f64>,
    op: &OperatorParams,
    b: &SpinorField<f64>,
    precond: Option<&dyn Preconditioner>,
    params: &FgmresParams,
) -> Result<(SpinorField<f64>, SolveStats)> {
    let geo = b.geometry().clone();
    let g: GaugeField<T> = gauge.cast();
    let cl = build_clover::<T>(gauge, op)?;
    let bt = b.cast::<T>();
    let mut a = |v: &[Complex<T>], out: &mut [Complex<T>]| apply_dirac_slice(&g, &cl, v, out);
    let mut m = |v: &[Complex<T>], out: &mut [Complex<T>]| -> Result<()> {
        let pre = precond.expect("closure only used with a preconditioner");
        let r = SpinorField::<T>::from_vec(geo.clone(), v.to_vec())?.cast::<f32>();
        let (z, _) = pre.apply(&r)?;
        let z = z.cast::<T>();
        out.copy_from_slice(z.as_slice());
        Ok(())
    };
    let mref: Option<&mut LinearMap<'_, T>> = if precond.is_some() { Some(&mut m) } else { None };
    let (x, stats) = fgmres_dr(&mut a, mref, bt.as_slice(), params)?;
    Ok((SpinorField::from_vec(geo, x)?.cast::<f64>(), stats))
}
