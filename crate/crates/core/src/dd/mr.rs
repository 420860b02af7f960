//! Minimal-residual block solves, optionally on the even-odd reduced system.

use super::operator::{DomainOperator, C32};
use crate::error::{Error, Result};
use crate::lattice::SITE_COMPONENTS;
use crate::precision::Storage;

#[derive(Debug, Clone)]
pub struct MrResult {
    /// Approximate solution on all domain sites.
    pub solution: Vec<C32>,
    /// `rhs - A_DD solution`; zero on odd sites with even-odd.
    pub residual: Vec<C32>,
    /// Norm of the (reduced) residual before each step and after the last.
    pub history: Vec<f64>,
    /// `<Ar, Ar> = 0` with a nonzero residual.
    pub breakdown: bool,
}

fn dot_sites(a: &[C32], b: &[C32], sites: &[usize]) -> (f64, f64) {
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for &l in sites {
        for k in l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS {
            // a^H b
            re += a[k].re as f64 * b[k].re as f64 + a[k].im as f64 * b[k].im as f64;
            im += a[k].re as f64 * b[k].im as f64 - a[k].im as f64 * b[k].re as f64;
        }
    }
    (re, im)
}

fn norm_sites(a: &[C32], sites: &[usize]) -> f64 {
    dot_sites(a, a, sites).0.sqrt()
}

/// MR iteration `x += α r`, `α = <Ar, r>/<Ar, Ar>`, from `x = 0`.
pub fn mr_solve_domain<S: Storage>(dop: &DomainOperator<S>, rhs: &[C32], n_mr: usize, eo: bool) -> Result<MrResult> {
    let shape = dop.shape();
    let n = shape.volume * SITE_COMPONENTS;
    if rhs.len() != n {
        return Err(Error::GeometryMismatch(format!("rhs has {} components, domain {}", rhs.len(), n)));
    }
    if n_mr == 0 {
        return Err(Error::InvalidParameter("n_mr must be at least 1".into()));
    }
    if rhs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("block solve right-hand side"));
    }
    let all: Vec<usize> = (0..shape.volume).collect();
    let sites: &[usize] = if eo { &shape.even } else { &all };
    let zero = C32::new(0.0, 0.0);
    let mut x = vec![zero; n];
    let mut r = vec![zero; n];
    let mut tmp = vec![zero; n];
    let mut p = vec![zero; n];
    if eo {
        dop.schur_rhs(rhs, &mut tmp, &mut r);
    } else {
        r.copy_from_slice(rhs);
    }
    let mut history = vec![norm_sites(&r, sites)];
    let mut breakdown = false;
    for _ in 0..n_mr {
        if history.last() == Some(&0.0) {
            break;
        }
        if eo {
            dop.apply_schur(&r, &mut tmp, &mut p);
        } else {
            dop.apply(&r, &mut p);
        }
        let pp = dot_sites(&p, &p, sites).0;
        if pp == 0.0 {
            breakdown = true;
            break;
        }
        let (nr, ni) = dot_sites(&p, &r, sites);
        let alpha = C32::new((nr / pp) as f32, (ni / pp) as f32);
        for &l in sites {
            for k in l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS {
                x[k] += alpha * r[k];
                r[k] -= alpha * p[k];
            }
        }
        history.push(norm_sites(&r, sites));
    }
    if eo {
        dop.odd_from_even(rhs, &x, &mut tmp);
        for &l in &shape.odd {
            let s = l * SITE_COMPONENTS..(l + 1) * SITE_COMPONENTS;
            x[s.clone()].copy_from_slice(&tmp[s.clone()]);
            r[s].iter_mut().for_each(|v| *v = zero);
        }
    }
    Ok(MrResult { solution: x, residual: r, history, breakdown })
}
