//! Clover term: site-local, block diagonal in the chiral basis.
//!
//! `C(x) = (4 + m) + (i c_sw / 2) Σ_{μ<ν} σμν ⊗ F̂μν(x)` where `F̂μν` is the
//! traceless anti-Hermitian part of the four-leaf plaquette sum divided by 8.
//! Each of the two 6x6 chiral blocks is Hermitian and is stored packed:
//! six real diagonal entries plus the 15 complex entries above the diagonal.

use num_complex::{Complex, Complex64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::gamma::sigma;
use crate::lattice::geometry::{Dir, LatticeGeometry, ND};
use crate::lattice::{GaugeField, Su3};
use crate::precision::{cast_complex, Real};

/// Mass and clover coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub mass: f64,
    pub csw: f64,
}

impl OperatorParams {
    pub fn new(mass: f64, csw: f64) -> Result<Self> {
        let p = OperatorParams { mass, csw };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.csw >= 0.0) || !self.mass.is_finite() || !self.csw.is_finite() {
            return Err(Error::InvalidParameter(format!("need finite mass and c_sw >= 0, got {self:?}")));
        }
        Ok(())
    }

    /// Constant diagonal `4 + m`.
    pub fn diagonal(&self) -> f64 {
        4.0 + self.mass
    }

    /// Hopping parameter of the equivalent `1 - κ D` normalization.
    pub fn kappa(&self) -> f64 {
        1.0 / (2.0 * self.diagonal())
    }
}

/// Packed Hermitian 6x6 block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianBlock<T: Real> {
    pub diag: [T; 6],
    pub upper: [Complex<T>; 15],
}

#[inline(always)]
pub const fn packed_index(i: usize, j: usize) -> usize {
    // i < j
    i * 6 - i * (i + 1) / 2 + (j - i - 1)
}

pub type Block6 = [[Complex64; 6]; 6];

impl<T: Real> HermitianBlock<T> {
    pub fn constant(d: T) -> Self {
        HermitianBlock { diag: [d; 6], upper: [Complex::new(T::zero(), T::zero()); 15] }
    }

    /// Pack the Hermitian part `(B + B†)/2` of a dense block.
    pub fn pack(b: &Block6) -> Self {
        let mut out = Self::constant(T::zero());
        for i in 0..6 {
            out.diag[i] = T::of(b[i][i].re);
            for j in (i + 1)..6 {
                out.upper[packed_index(i, j)] = cast_complex((b[i][j] + b[j][i].conj()) * 0.5);
            }
        }
        out
    }

    pub fn dense(&self) -> Block6 {
        let mut b = [[Complex64::new(0.0, 0.0); 6]; 6];
        for i in 0..6 {
            b[i][i] = Complex64::new(self.diag[i].f64(), 0.0);
            for j in (i + 1)..6 {
                let z = cast_complex::<T, f64>(self.upper[packed_index(i, j)]);
                b[i][j] = z;
                b[j][i] = z.conj();
            }
        }
        b
    }

    #[inline(always)]
    pub fn apply(&self, x: &[Complex<T>]) -> [Complex<T>; 6] {
        let mut y = [Complex::new(T::zero(), T::zero()); 6];
        for i in 0..6 {
            y[i] = x[i] * self.diag[i];
        }
        let mut k = 0;
        for i in 0..6 {
            for j in (i + 1)..6 {
                let a = self.upper[k];
                y[i] += a * x[j];
                y[j] += a.conj() * x[i];
                k += 1;
            }
        }
        y
    }

    pub fn cast<U: Real>(&self) -> HermitianBlock<U> {
        HermitianBlock { diag: self.diag.map(|v| U::of(v.f64())), upper: self.upper.map(cast_complex) }
    }

    /// Reals in storage order: 6 diagonal then 15 `(re, im)` pairs.
    pub fn to_reals(&self) -> [T; 36] {
        let mut out = [T::zero(); 36];
        out[..6].copy_from_slice(&self.diag);
        for (k, z) in self.upper.iter().enumerate() {
            out[6 + 2 * k] = z.re;
            out[7 + 2 * k] = z.im;
        }
        out
    }

    pub fn from_reals(r: &[T]) -> Self {
        let mut out = Self::constant(T::zero());
        out.diag.copy_from_slice(&r[..6]);
        for k in 0..15 {
            out.upper[k] = Complex::new(r[6 + 2 * k], r[7 + 2 * k]);
        }
        out
    }

    /// Inverse via Gauss-Jordan on the dense block (in double precision).
    pub fn inverse(&self) -> Result<Self> {
        let mut a = self.dense();
        let mut inv = [[Complex64::new(0.0, 0.0); 6]; 6];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = Complex64::new(1.0, 0.0);
        }
        for col in 0..6 {
            let pivot = (col..6)
                .max_by(|&p, &q| a[p][col].norm().total_cmp(&a[q][col].norm()))
                .expect("non-empty range");
            if a[pivot][col].norm() < 1e-300 {
                return Err(Error::InvalidParameter("singular clover block".into()));
            }
            a.swap(col, pivot);
            inv.swap(col, pivot);
            let p = a[col][col].inv();
            for j in 0..6 {
                a[col][j] *= p;
                inv[col][j] *= p;
            }
            for r in 0..6 {
                if r != col {
                    let f = a[r][col];
                    if f != Complex64::new(0.0, 0.0) {
                        for j in 0..6 {
                            let (ac, ic) = (a[col][j], inv[col][j]);
                            a[r][j] -= f * ac;
                            inv[r][j] -= f * ic;
                        }
                    }
                }
            }
        }
        Ok(Self::pack(&inv))
    }
}

/// Clover term of one site: upper (spins 0,1) and lower (spins 2,3) blocks.
pub type CloverSite<T> = [HermitianBlock<T>; 2];

/// Apply a site's clover term to a 12-component spinor.
#[inline(always)]
pub fn apply_clover_site<T: Real>(c: &CloverSite<T>, psi: &[Complex<T>]) -> [Complex<T>; 12] {
    let up = c[0].apply(&psi[0..6]);
    let lo = c[1].apply(&psi[6..12]);
    let mut out = [Complex::new(T::zero(), T::zero()); 12];
    out[..6].copy_from_slice(&up);
    out[6..].copy_from_slice(&lo);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloverField<T: Real> {
    geometry: LatticeGeometry,
    sites: Vec<CloverSite<T>>,
    hermiticity_deviation: f64,
}

impl<T: Real> CloverField<T> {
    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    #[inline(always)]
    pub fn site(&self, s: usize) -> &CloverSite<T> {
        &self.sites[s]
    }

    pub fn sites(&self) -> &[CloverSite<T>] {
        &self.sites
    }

    /// Largest `|B - B†|` entry seen before packing.
    pub fn hermiticity_deviation(&self) -> f64 {
        self.hermiticity_deviation
    }

    pub fn cast<U: Real>(&self) -> CloverField<U> {
        CloverField {
            geometry: self.geometry.clone(),
            sites: self.sites.iter().map(|c| [c[0].cast(), c[1].cast()]).collect(),
            hermiticity_deviation: self.hermiticity_deviation,
        }
    }
}

/// Four-leaf clover sum `Q_μν(x)`.
fn clover_leaves(g: &GaugeField<f64>, x: usize, mu: usize, nu: usize) -> Su3<f64> {
    let geo = g.geometry();
    let step = |s: usize, axis: usize, fwd: bool| geo.neighbor(s, Dir::new(axis, fwd)).0;
    let u = |s: usize, axis: usize| *g.link(s, axis);
    let xp_mu = step(x, mu, true);
    let xp_nu = step(x, nu, true);
    let xm_mu = step(x, mu, false);
    let xm_nu = step(x, nu, false);
    let xm_mu_p_nu = step(xm_mu, nu, true);
    let xm_mu_m_nu = step(xm_mu, nu, false);
    let xm_nu_p_mu = step(xm_nu, mu, true);

    let p1 = u(x, mu) * u(xp_mu, nu) * u(xp_nu, mu).adjoint() * u(x, nu).adjoint();
    let p2 = u(x, nu) * u(xm_mu_p_nu, mu).adjoint() * u(xm_mu, nu).adjoint() * u(xm_mu, mu);
    let p3 = u(xm_mu, mu).adjoint() * u(xm_mu_m_nu, nu).adjoint() * u(xm_mu_m_nu, mu) * u(xm_nu, nu);
    let p4 = u(xm_nu, nu).adjoint() * u(xm_nu, mu) * u(xm_nu_p_mu, nu) * u(x, mu).adjoint();
    p1.add(&p2).add(&p3).add(&p4)
}

/// Traceless anti-Hermitian field strength `F̂μν(x)`.
pub fn field_strength(g: &GaugeField<f64>, x: usize, mu: usize, nu: usize) -> Su3<f64> {
    let q = clover_leaves(g, x, mu, nu);
    let mut f = q.sub(&q.adjoint()).scale(Complex64::new(0.125, 0.0));
    let tr = f.trace() / 3.0;
    for i in 0..3 {
        f.0[i][i] -= tr;
    }
    f
}

/// Dense 6x6 blocks of the clover term at one site, before packing.
pub fn clover_blocks_dense(g: &GaugeField<f64>, x: usize, params: &OperatorParams) -> [Block6; 2] {
    let mut blocks = [[[Complex64::new(0.0, 0.0); 6]; 6]; 2];
    for (b, block) in blocks.iter_mut().enumerate() {
        for i in 0..6 {
            block[i][i] = Complex64::new(params.diagonal(), 0.0);
        }
        if params.csw == 0.0 {
            continue;
        }
        for mu in 0..ND {
            for nu in (mu + 1)..ND {
                let f = field_strength(g, x, mu, nu);
                let s = sigma(mu, nu);
                let coeff = Complex64::new(0.0, 0.5 * params.csw);
                for s1 in 0..2 {
                    for s2 in 0..2 {
                        let sv = s[2 * b + s1][2 * b + s2];
                        if sv == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        for c1 in 0..3 {
                            for c2 in 0..3 {
                                block[3 * s1 + c1][3 * s2 + c2] += coeff * sv * f.0[c1][c2];
                            }
                        }
                    }
                }
            }
        }
    }
    blocks
}

/// Build the clover field from a double-precision gauge field.
pub fn build_clover<T: Real>(gauge: &GaugeField<f64>, params: &OperatorParams) -> Result<CloverField<T>> {
    params.validate()?;
    let geo = gauge.geometry().clone();
    let built: Vec<(CloverSite<T>, f64)> = (0..geo.volume())
        .into_par_iter()
        .map(|x| {
            let dense = clover_blocks_dense(gauge, x, params);
            let mut dev = 0.0f64;
            for b in &dense {
                for i in 0..6 {
                    for j in 0..6 {
                        dev = dev.max((b[i][j] - b[j][i].conj()).norm());
                    }
                }
            }
            ([HermitianBlock::pack(&dense[0]), HermitianBlock::pack(&dense[1])], dev)
        })
        .collect();
    let hermiticity_deviation = built.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    Ok(CloverField { geometry: geo, sites: built.into_iter().map(|(c, _)| c).collect(), hermiticity_deviation })
}
