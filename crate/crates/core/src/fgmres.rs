//! Flexible GMRES with deflated restarts (FGMRES-DR).
//!
//! Outer vectors are stored in `T` (single or double); every inner product
//! and the small dense problems are accumulated in double precision.
//!
//! A cycle builds the flexible Arnoldi relation `A Z_m = V_{m+1} H̄_m` with
//! preconditioned vectors `z_j = M v_j` kept explicitly. The least-squares
//! problem `min |c - H̄ y|` is triangularized by Givens rotations as columns
//! arrive. At a restart with `k > 0` the `k` harmonic Ritz vectors of smallest
//! modulus, together with the least-squares residual, span the start of the
//! next cycle:
//!
//! ```text
//! (H_m + |h_{m+1,m}|² H_m^{-H} e_m e_mᵀ) g = θ g
//! P_{k+1} = orth([g_1 .. g_k ; 0], c - H̄ y)
//! V ← V P_{k+1},  Z ← Z P_k,  H̄ ← P_{k+1}^H H̄ P_k
//! ```

use nalgebra::{DMatrix, DVector};
use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{inner, norm_sqr};
use crate::precision::{Precision, Real};

/// `out = A v` or `out = M v`.
pub type LinearMap<'a, T> = dyn FnMut(&[Complex<T>], &mut [Complex<T>]) -> Result<()> + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgmresParams {
    /// Restart length m_r.
    pub restart: usize,
    /// Deflation subspace size k (0 disables deflation).
    pub deflation: usize,
    /// Relative residual tolerance.
    pub tol: f64,
    /// Budget of outer (Arnoldi) iterations.
    pub max_iter: usize,
    /// Precision of the stored outer vectors.
    #[serde(default = "default_precision")]
    pub precision: Precision,
    /// Reorthogonalize when `max |<v_i, w>| / |w|` exceeds this after one pass.
    #[serde(default = "default_reorth")]
    pub reorth_threshold: f64,
    /// Keep the iterate at the end of every cycle.
    #[serde(default)]
    pub record_iterates: bool,
    /// Flops of one operator application (for the estimate in the stats).
    #[serde(default)]
    pub op_flops: f64,
    /// Flops of one preconditioner application.
    #[serde(default)]
    pub precond_flops: f64,
}

fn default_precision() -> Precision {
    Precision::Double
}

fn default_reorth() -> f64 {
    1e-3
}

impl Default for FgmresParams {
    fn default() -> Self {
        FgmresParams {
            restart: 16,
            deflation: 4,
            tol: 1e-8,
            max_iter: 5000,
            precision: Precision::Double,
            reorth_threshold: 1e-3,
            record_iterates: false,
            op_flops: 0.0,
            precond_flops: 0.0,
        }
    }
}

impl FgmresParams {
    pub fn validate(&self) -> Result<()> {
        if self.restart == 0 || self.deflation >= self.restart {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= k < m_r, got k = {}, m_r = {}",
                self.deflation, self.restart
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.precision == Precision::Half {
            return Err(Error::InvalidParameter("outer vectors cannot be half precision".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    /// Outer (Arnoldi) iterations, one preconditioner application each.
    pub iterations: usize,
    pub cycles: usize,
    /// Relative recursive residual: initial value, then one per iteration.
    pub residual_history: Vec<f64>,
    /// Relative recursive residual at the end of every cycle.
    pub cycle_residuals: Vec<f64>,
    /// `(recursive, true)` relative residuals at every restart boundary.
    pub restart_residuals: Vec<(f64, f64)>,
    pub final_true_residual: f64,
    pub converged: bool,
    pub lucky_breakdown: bool,
    pub precond_applications: usize,
    pub op_applications: usize,
    pub reorthogonalizations: usize,
    pub flop_estimate: f64,
    #[serde(skip)]
    pub iterates: Vec<Vec<Complex64>>,
}

fn check_finite<T: Real>(v: &[Complex<T>], what: &'static str) -> Result<()> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

#[inline]
fn to_t<T: Real>(z: Complex64) -> Complex<T> {
    Complex::new(T::of(z.re), T::of(z.im))
}

fn axpy<T: Real>(alpha: Complex64, x: &[Complex<T>], y: &mut [Complex<T>]) {
    let a = to_t::<T>(alpha);
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

fn scale<T: Real>(alpha: f64, x: &mut [Complex<T>]) {
    let a = T::of(alpha);
    for v in x.iter_mut() {
        *v = *v * a;
    }
}

/// `|b - A x| / |b|` with double accumulation.
pub fn true_residual<T: Real>(op: &mut LinearMap<'_, T>, x: &[Complex<T>], b: &[Complex<T>]) -> Result<f64> {
    if x.len() != b.len() {
        return Err(Error::GeometryMismatch(format!("x has {} entries, b {}", x.len(), b.len())));
    }
    let mut ax = vec![Complex::new(T::zero(), T::zero()); b.len()];
    op(x, &mut ax)?;
    let mut num = 0.0f64;
    for (bi, ai) in b.iter().zip(&ax) {
        let d = Complex64::new(bi.re.f64() - ai.re.f64(), bi.im.f64() - ai.im.f64());
        num += d.norm_sqr();
    }
    let den = norm_sqr(b);
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

/// Complex Givens rotation `[c s; -s̄ c]` zeroing the second entry.
#[derive(Debug, Clone, Copy)]
struct Givens {
    row: usize,
    c: f64,
    s: Complex64,
}

impl Givens {
    fn new(row: usize, a: Complex64, b: Complex64) -> Self {
        let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if r == 0.0 {
            return Givens { row, c: 1.0, s: Complex64::new(0.0, 0.0) };
        }
        if a.norm() == 0.0 {
            return Givens { row, c: 0.0, s: b.conj() / b.norm() };
        }
        let c = a.norm() / r;
        let s = (a / a.norm()) * b.conj() / r;
        Givens { row, c, s }
    }

    fn apply(&self, x: &mut [Complex64]) {
        let (a, b) = (x[self.row], x[self.row + 1]);
        x[self.row] = a * self.c + self.s * b;
        x[self.row + 1] = -self.s.conj() * a + b * self.c;
    }
}

/// Incrementally triangularized least-squares problem `min |c - H̄ y|`.
struct LeastSquares {
    /// Columns of H̄ as they arrived (untouched).
    h: Vec<Vec<Complex64>>,
    /// Rotated columns (upper triangular part).
    r: Vec<Vec<Complex64>>,
    rotations: Vec<Givens>,
    /// Rotated right-hand side.
    g: Vec<Complex64>,
    /// Unrotated right-hand side.
    c: Vec<Complex64>,
}

impl LeastSquares {
    fn new(c: Vec<Complex64>) -> Self {
        LeastSquares { h: Vec::new(), r: Vec::new(), rotations: Vec::new(), g: c.clone(), c }
    }

    /// Add a column with entries in rows `0..col.len()` and rotate it.
    fn push(&mut self, col: Vec<Complex64>) {
        let j = self.h.len();
        let rows = col.len();
        if self.g.len() < rows {
            self.g.resize(rows, Complex64::new(0.0, 0.0));
        }
        let mut x = col.clone();
        x.resize(self.g.len().max(rows), Complex64::new(0.0, 0.0));
        for rot in &self.rotations {
            if rot.row + 1 < x.len() {
                rot.apply(&mut x);
            }
        }
        // zero everything below the diagonal, bottom up
        for i in (j + 1..x.len()).rev() {
            if x[i] != Complex64::new(0.0, 0.0) {
                let rot = Givens::new(i - 1, x[i - 1], x[i]);
                rot.apply(&mut x);
                x[i] = Complex64::new(0.0, 0.0);
                rot.apply(&mut self.g);
                self.rotations.push(rot);
            }
        }
        x.truncate(j + 1);
        self.h.push(col);
        self.r.push(x);
    }

    fn columns(&self) -> usize {
        self.h.len()
    }

    fn residual(&self) -> f64 {
        self.g[self.columns()..].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn solve(&self) -> Vec<Complex64> {
        let n = self.columns();
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut s = self.g[i];
            for j in i + 1..n {
                s -= self.r[j][i] * y[j];
            }
            y[i] = s / self.r[i][i];
        }
        y
    }

    /// H̄ as a dense `(n+1) x n` matrix.
    fn dense(&self) -> DMatrix<Complex64> {
        let n = self.columns();
        let mut m = DMatrix::zeros(n + 1, n);
        for (j, col) in self.h.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

/// Eigenvectors of the `k` harmonic Ritz values of smallest modulus, or
/// `None` when the small problem is singular.
fn harmonic_ritz(hbar: &DMatrix<Complex64>, k: usize) -> Option<Vec<DVector<Complex64>>> {
    let m = hbar.ncols();
    let hm = hbar.rows(0, m).into_owned();
    let h = hbar[(m, m - 1)];
    let mut em = DVector::zeros(m);
    em[m - 1] = Complex64::new(1.0, 0.0);
    let f = hm.adjoint().lu().solve(&em)?;
    let mut g = hm.clone();
    for i in 0..m {
        g[(i, m - 1)] += f[i] * h.norm_sqr();
    }
    let (q, t) = nalgebra::linalg::Schur::try_new(g, 1e-14, 10_000)?.unpack();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| t[(a, a)].norm().total_cmp(&t[(b, b)].norm()));
    let scale = t.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut out = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let lambda = t[(i, i)];
        let mut u = DVector::zeros(m);
        u[i] = Complex64::new(1.0, 0.0);
        for r in (0..i).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for c in r + 1..=i {
                s += t[(r, c)] * u[c];
            }
            let mut d = t[(r, r)] - lambda;
            if d.norm() < 1e-14 * scale {
                d = Complex64::new(1e-14 * scale, 0.0);
            }
            u[r] = -s / d;
        }
        out.push(&q * u);
    }
    Some(out)
}

/// Orthonormalize columns in order (two Gram-Schmidt passes); drops
/// columns that become numerically dependent.
fn orthonormalize(cols: Vec<DVector<Complex64>>) -> Vec<DVector<Complex64>> {
    let mut out: Vec<DVector<Complex64>> = Vec::with_capacity(cols.len());
    for mut v in cols {
        let n0 = v.norm();
        for _ in 0..2 {
            for q in &out {
                let c = q.dotc(&v);
                v -= q * c;
            }
        }
        let n = v.norm();
        if n > 1e-12 * n0.max(1e-300) {
            out.push(v / Complex64::new(n, 0.0));
        }
    }
    out
}

struct Solver<'s, 'a, T: Real> {
    op: &'s mut LinearMap<'a, T>,
    precond: Option<&'s mut LinearMap<'a, T>>,
    params: &'s FgmresParams,
    n: usize,
    stats: SolveStats,
}

impl<T: Real> Solver<'_, '_, T> {
    fn apply_op(&mut self, v: &[Complex<T>], out: &mut [Complex<T>]) -> Result<()> {
        self.stats.op_applications += 1;
        (self.op)(v, out)?;
        check_finite(out, "operator application")
    }

    fn apply_precond(&mut self, v: &[Complex<T>], out: &mut [Complex<T>]) -> Result<()> {
        self.stats.precond_applications += 1;
        match self.precond.as_mut() {
            Some(m) => m(v, out)?,
            None => out.copy_from_slice(v),
        }
        check_finite(out, "preconditioner application")
    }

    /// Modified Gram-Schmidt of `w` against `basis`, with one extra pass when
    /// orthogonality is lost. Returns the coefficients.
    fn orthogonalize(&mut self, basis: &[Vec<Complex<T>>], w: &mut [Complex<T>]) -> Vec<Complex64> {
        let mut h = Vec::with_capacity(basis.len() + 1);
        for v in basis {
            let c = inner(v, w);
            axpy(-c, v, w);
            h.push(c);
        }
        let wn = norm_sqr(w).sqrt();
        let second: Vec<Complex64> = basis.iter().map(|v| inner(v, w)).collect();
        let loss = second.iter().map(|c| c.norm()).fold(0.0, f64::max) / wn.max(1e-300);
        if loss > self.params.reorth_threshold {
            self.stats.reorthogonalizations += 1;
            for (i, v) in basis.iter().enumerate() {
                let c = inner(v, w);
                axpy(-c, v, w);
                h[i] += c;
            }
        }
        self.stats.flop_estimate += (16 * self.n * basis.len()) as f64;
        h
    }

    fn run(&mut self, b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        let p = self.params;
        let n = self.n;
        let zero = Complex::new(T::zero(), T::zero());
        let bnorm = norm_sqr(b).sqrt();
        let mut x = vec![zero; n];
        self.stats.residual_history.push(1.0);
        if bnorm == 0.0 {
            self.stats.converged = true;
            return Ok(x);
        }
        let m = p.restart;
        let mut r = b.to_vec();
        let mut beta = bnorm;
        let mut v: Vec<Vec<Complex<T>>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<Complex<T>>> = Vec::with_capacity(m);
        let mut ls = LeastSquares::new(vec![Complex64::new(beta, 0.0)]);
        scale(1.0 / beta, &mut r);
        v.push(r);
        let mut w = vec![zero; n];
        loop {
            self.stats.cycles += 1;
            // Arnoldi from the current basis size
            let mut done = false;
            while z.len() < m {
                if self.stats.iterations >= p.max_iter {
                    break;
                }
                let j = z.len();
                let mut zj = vec![zero; n];
                self.apply_precond(&v[j], &mut zj)?;
                self.apply_op(&zj, &mut w)?;
                z.push(zj);
                let mut col = self.orthogonalize(&v, &mut w);
                let hn = norm_sqr(&w).sqrt();
                col.push(Complex64::new(hn, 0.0));
                let scale_ref = col.iter().map(|c| c.norm()).fold(0.0, f64::max);
                ls.push(col);
                self.stats.iterations += 1;
                let res = ls.residual() / bnorm;
                self.stats.residual_history.push(res);
                if hn <= 1e-14 * scale_ref {
                    self.stats.lucky_breakdown = true;
                    done = true;
                    break;
                }
                let mut vn = w.clone();
                scale(1.0 / hn, &mut vn);
                v.push(vn);
                if res <= p.tol {
                    done = true;
                    break;
                }
            }
            // update the iterate
            let y = ls.solve();
            for (yj, zj) in y.iter().zip(&z) {
                axpy(*yj, zj, &mut x);
            }
            let rec = ls.residual() / bnorm;
            self.stats.cycle_residuals.push(rec);
            if p.record_iterates {
                self.stats.iterates.push(x.iter().map(|c| Complex64::new(c.re.f64(), c.im.f64())).collect());
            }
            // true residual at the cycle boundary
            let mut ax = vec![zero; n];
            self.apply_op(&x, &mut ax)?;
            let mut rt: Vec<Complex<T>> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
            let tnorm = norm_sqr(&rt).sqrt();
            let tres = tnorm / bnorm;
            self.stats.final_true_residual = tres;
            if tres <= p.tol || (self.stats.lucky_breakdown && done) {
                self.stats.converged = tres <= p.tol;
                return Ok(x);
            }
            if self.stats.iterations >= p.max_iter {
                return Ok(x);
            }
            self.stats.restart_residuals.push((rec, tres));
            self.stats.lucky_breakdown = false;

            let deflated = if p.deflation > 0 && z.len() == m && v.len() == m + 1 {
                self.deflate(&ls, &y, &mut v, &mut z)
            } else {
                None
            };
            match deflated {
                Some(next) => ls = next,
                None => {
                    // plain restart from the true residual
                    beta = tnorm;
                    scale(1.0 / beta, &mut rt);
                    v.clear();
                    z.clear();
                    v.push(rt);
                    ls = LeastSquares::new(vec![Complex64::new(beta, 0.0)]);
                }
            }
        }
    }

    /// Deflated restart; rewrites `v` (k+1 vectors) and `z` (k vectors).
    fn deflate(
        &mut self,
        ls: &LeastSquares,
        y: &[Complex64],
        v: &mut Vec<Vec<Complex<T>>>,
        z: &mut Vec<Vec<Complex<T>>>,
    ) -> Option<LeastSquares> {
        let k = self.params.deflation;
        let m = z.len();
        let hbar = ls.dense();
        let ritz = harmonic_ritz(&hbar, k)?;
        // least-squares residual vector in the small space
        let mut c = DVector::zeros(m + 1);
        for (i, v) in ls.c.iter().enumerate() {
            c[i] = *v;
        }
        let yv = DVector::from_row_slice(y);
        let s = &c - &hbar * &yv;
        let mut cols: Vec<DVector<Complex64>> = ritz
            .into_iter()
            .map(|g| {
                let mut e = DVector::zeros(m + 1);
                e.rows_mut(0, m).copy_from(&g);
                e
            })
            .collect();
        cols.push(s.clone());
        let pk1 = orthonormalize(cols);
        if pk1.len() != k + 1 {
            return None;
        }
        let pmat = DMatrix::from_columns(&pk1);
        let pk = pmat.view((0, 0), (m, k)).into_owned();
        let hnew = pmat.adjoint() * &hbar * &pk;
        let cnew = pmat.adjoint() * &s;

        let combine = |basis: &[Vec<Complex<T>>], coef: &DMatrix<Complex64>| -> Vec<Vec<Complex<T>>> {
            (0..coef.ncols())
                .map(|col| {
                    let mut acc = vec![Complex64::new(0.0, 0.0); self.n];
                    for (i, bv) in basis.iter().enumerate() {
                        let a = coef[(i, col)];
                        for (o, x) in acc.iter_mut().zip(bv) {
                            *o += a * Complex64::new(x.re.f64(), x.im.f64());
                        }
                    }
                    acc.into_iter().map(to_t::<T>).collect()
                })
                .collect()
        };
        let vnew = combine(v, &pmat);
        let znew = combine(z, &pk);
        self.stats.flop_estimate += (8 * self.n * (m + 1) * (2 * k + 1)) as f64;
        *v = vnew;
        *z = znew;
        let mut next = LeastSquares::new(cnew.iter().copied().collect());
        for j in 0..k {
            next.push((0..=k).map(|i| hnew[(i, j)]).collect());
        }
        Some(next)
    }
}

/// Solve `A x = b` with optional right preconditioner `M`, starting from 0.
pub fn fgmres_dr<'a, T: Real>(
    op: &mut LinearMap<'a, T>,
    precond: Option<&mut LinearMap<'a, T>>,
    b: &[Complex<T>],
    params: &FgmresParams,
) -> Result<(Vec<Complex<T>>, SolveStats)> {
    params.validate()?;
    check_finite(b, "right-hand side")?;
    let mut s = Solver { op, precond, params, n: b.len(), stats: SolveStats::default() };
    let x = s.run(b)?;
    let mut stats = s.stats;
    stats.flop_estimate +=
        stats.op_applications as f64 * params.op_flops + stats.precond_applications as f64 * params.precond_flops;
    Ok((x, stats))
}
