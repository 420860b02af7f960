use std::ops::Mul;

use num_complex::{Complex, Complex64};

use super::rng::Rng;
use crate::error::{Error, Result};
use crate::precision::{cast_complex, Real};

/// A 3x3 complex matrix, row-major. Gauge links are special unitary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su3<T: Real>(pub [[Complex<T>; 3]; 3]);

pub type ColorVector<T> = [Complex<T>; 3];

const MAX_DRAWS: usize = 100;

impl<T: Real> Su3<T> {
    pub fn zero() -> Self {
        Su3([[Complex::new(T::zero(), T::zero()); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut a = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                a.0[i][j] = self.0[j][i].conj();
            }
        }
        a
    }

    #[inline(always)]
    pub fn mul_vec(&self, v: &ColorVector<T>) -> ColorVector<T> {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// `U† v` without forming the adjoint.
    #[inline(always)]
    pub fn adj_mul_vec(&self, v: &ColorVector<T>) -> ColorVector<T> {
        let m = &self.0;
        [
            m[0][0].conj() * v[0] + m[1][0].conj() * v[1] + m[2][0].conj() * v[2],
            m[0][1].conj() * v[0] + m[1][1].conj() * v[1] + m[2][1].conj() * v[2],
            m[0][2].conj() * v[0] + m[1][2].conj() * v[1] + m[2][2].conj() * v[2],
        ]
    }

    pub fn trace(&self) -> Complex<T> {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> Complex<T> {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// `max |(U†U - I)_ij|`.
    pub fn unitarity_deviation(&self) -> f64 {
        let p = self.adjoint() * *self;
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                let d = cast_complex::<T, f64>(p.0[i][j]) - Complex64::new(target, 0.0);
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    pub fn det_deviation(&self) -> f64 {
        (cast_complex::<T, f64>(self.det()) - Complex64::new(1.0, 0.0)).norm()
    }

    pub fn cast<U: Real>(&self) -> Su3<U> {
        let mut out = Su3::<U>::zero();
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = cast_complex(self.0[i][j]);
            }
        }
        out
    }

    /// Row-major `(re, im)` pairs.
    pub fn to_reals(&self) -> [T; 18] {
        let mut out = [T::zero(); 18];
        for i in 0..3 {
            for j in 0..3 {
                out[2 * (3 * i + j)] = self.0[i][j].re;
                out[2 * (3 * i + j) + 1] = self.0[i][j].im;
            }
        }
        out
    }

    pub fn from_reals(r: &[T]) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = Complex::new(r[2 * (3 * i + j)], r[2 * (3 * i + j) + 1]);
            }
        }
        m
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut m = *self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] += o.0[i][j];
            }
        }
        m
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut m = *self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] -= o.0[i][j];
            }
        }
        m
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for z in row.iter_mut() {
                *z *= s;
            }
        }
        m
    }
}

impl<T: Real> Mul for Su3<T> {
    type Output = Su3<T>;
    fn mul(self, rhs: Su3<T>) -> Su3<T> {
        let mut c = Su3::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = Complex::new(T::zero(), T::zero());
                for k in 0..3 {
                    acc += self.0[i][k] * rhs.0[k][j];
                }
                c.0[i][j] = acc;
            }
        }
        c
    }
}

fn dot(a: &[Complex64; 3], b: &[Complex64; 3]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Gram-Schmidt on the rows, then multiply the third row by `conj(det)` so
/// that `det U = 1`. Returns `None` if the rows are nearly dependent.
fn orthonormalize_rows(rows: [[Complex64; 3]; 3]) -> Option<Su3<f64>> {
    let mut out = [[Complex64::new(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        let mut v = rows[i];
        // two passes keep the rows orthogonal to double precision
        for _ in 0..2 {
            for prev in out.iter().take(i) {
                let p = dot(prev, &v);
                for k in 0..3 {
                    v[k] -= p * prev[k];
                }
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(n > 1e-8) {
            return None;
        }
        for z in v.iter_mut() {
            *z /= n;
        }
        out[i] = v;
    }
    let mut u = Su3(out);
    let d = u.det();
    let fix = (d / d.norm()).conj();
    for z in u.0[2].iter_mut() {
        *z *= fix;
    }
    Some(u)
}

/// Random SU(3) matrix from Gaussian complex rows.
pub fn random_su3(rng: &mut Rng) -> Result<Su3<f64>> {
    for _ in 0..MAX_DRAWS {
        let mut rows = [[Complex64::new(0.0, 0.0); 3]; 3];
        for row in rows.iter_mut() {
            for z in row.iter_mut() {
                *z = rng.complex_normal();
            }
        }
        if let Some(u) = orthonormalize_rows(rows) {
            return Ok(u);
        }
    }
    Err(Error::DegenerateDraw(MAX_DRAWS))
}

/// Project a near-unitary matrix back onto SU(3).
pub fn reunitarize(u: &Su3<f64>) -> Option<Su3<f64>> {
    orthonormalize_rows(u.0)
}

/// Random traceless Hermitian matrix with Gaussian Gell-Mann coefficients.
pub fn random_hermitian_traceless(rng: &mut Rng) -> Su3<f64> {
    let c: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
    let z = |re: f64, im: f64| Complex64::new(re, im);
    let s3 = 1.0 / 3f64.sqrt();
    // sum_a c_a λ_a / 2
    let m = [
        [z(0.5 * (c[2] + c[7] * s3), 0.0), z(0.5 * c[0], -0.5 * c[1]), z(0.5 * c[3], -0.5 * c[4])],
        [z(0.5 * c[0], 0.5 * c[1]), z(0.5 * (-c[2] + c[7] * s3), 0.0), z(0.5 * c[5], -0.5 * c[6])],
        [z(0.5 * c[3], 0.5 * c[4]), z(0.5 * c[5], 0.5 * c[6]), z(-c[7] * s3, 0.0)],
    ];
    Su3(m)
}

/// Matrix exponential by Taylor series, run until terms underflow.
pub fn expm(x: &Su3<f64>) -> Su3<f64> {
    let mut sum = Su3::<f64>::identity();
    let mut term = Su3::<f64>::identity();
    for k in 1..60 {
        term = (term * *x).scale(Complex64::new(1.0 / k as f64, 0.0));
        sum = sum.add(&term);
        let size: f64 = term.0.iter().flatten().map(|z| z.norm()).sum();
        if size < 1e-18 {
            break;
        }
    }
    sum
}
