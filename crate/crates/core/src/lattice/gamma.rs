//! Euclidean gamma matrices in a chiral (DeGrand-Rossi) basis.
//!
//! | matrix | row 0      | row 1      | row 2      | row 3      |
//! |--------|------------|------------|------------|------------|
//! | γx     | +i at col3 | +i at col2 | -i at col1 | -i at col0 |
//! | γy     | -1 at col3 | +1 at col2 | +1 at col1 | -1 at col0 |
//! | γz     | +i at col2 | -i at col3 | -i at col0 | +i at col1 |
//! | γt     | +1 at col2 | +1 at col3 | +1 at col0 | +1 at col1 |
//!
//! γ5 = γx γy γz γt = diag(1, 1, -1, -1), so σμν and the clover term are
//! block diagonal in the upper (spins 0,1) and lower (spins 2,3) halves.
//! Every γμ has exactly one non-zero entry per row, so it is stored as a
//! permutation plus a unit phase and applied without rounding.

use num_complex::Complex;

use crate::precision::Real;

/// Unit phase in {1, -1, i, -i}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    One,
    MinusOne,
    I,
    MinusI,
}

impl Phase {
    #[inline(always)]
    pub fn apply<T: Real>(self, z: Complex<T>) -> Complex<T> {
        match self {
            Phase::One => z,
            Phase::MinusOne => -z,
            Phase::I => Complex::new(-z.im, z.re),
            Phase::MinusI => Complex::new(z.im, -z.re),
        }
    }

    pub fn value(self) -> Complex<f64> {
        self.apply(Complex::new(1.0, 0.0))
    }

    pub fn neg(self) -> Phase {
        match self {
            Phase::One => Phase::MinusOne,
            Phase::MinusOne => Phase::One,
            Phase::I => Phase::MinusI,
            Phase::MinusI => Phase::I,
        }
    }
}

/// A gamma matrix as `(γψ)_s = phase[s] * ψ_{perm[s]}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gamma {
    pub perm: [usize; 4],
    pub phase: [Phase; 4],
}

use Phase::*;

pub const GAMMA: [Gamma; 4] = [
    Gamma { perm: [3, 2, 1, 0], phase: [I, I, MinusI, MinusI] },
    Gamma { perm: [3, 2, 1, 0], phase: [MinusOne, One, One, MinusOne] },
    Gamma { perm: [2, 3, 0, 1], phase: [I, MinusI, MinusI, I] },
    Gamma { perm: [2, 3, 0, 1], phase: [One, One, One, One] },
];

/// Diagonal of γ5.
pub const GAMMA5_DIAG: [f64; 4] = [1.0, 1.0, -1.0, -1.0];

pub type SpinMatrix = [[Complex<f64>; 4]; 4];

impl Gamma {
    pub fn dense(&self) -> SpinMatrix {
        let mut m = [[Complex::new(0.0, 0.0); 4]; 4];
        for r in 0..4 {
            m[r][self.perm[r]] = self.phase[r].value();
        }
        m
    }
}

/// The four γμ and γ5 as dense 4x4 matrices.
#[derive(Debug, Clone)]
pub struct GammaBasis {
    pub gamma: [SpinMatrix; 4],
    pub gamma5: SpinMatrix,
}

impl Default for GammaBasis {
    fn default() -> Self {
        let gamma = [GAMMA[0].dense(), GAMMA[1].dense(), GAMMA[2].dense(), GAMMA[3].dense()];
        let g5 = spin_mul(&spin_mul(&gamma[0], &gamma[1]), &spin_mul(&gamma[2], &gamma[3]));
        GammaBasis { gamma, gamma5: g5 }
    }
}

pub fn spin_mul(a: &SpinMatrix, b: &SpinMatrix) -> SpinMatrix {
    let mut c = [[Complex::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn spin_identity() -> SpinMatrix {
    let mut m = [[Complex::new(0.0, 0.0); 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Complex::new(1.0, 0.0);
    }
    m
}

/// σμν = (i/2)[γμ, γν].
pub fn sigma(mu: usize, nu: usize) -> SpinMatrix {
    let b = GammaBasis::default();
    let ab = spin_mul(&b.gamma[mu], &b.gamma[nu]);
    let ba = spin_mul(&b.gamma[nu], &b.gamma[mu]);
    let mut s = [[Complex::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            s[i][j] = Complex::new(0.0, 0.5) * (ab[i][j] - ba[i][j]);
        }
    }
    s
}
