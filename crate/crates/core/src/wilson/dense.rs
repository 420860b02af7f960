//! Brute-force dense matrix of the operator, assembled directly from the
//! defining formula with full 4x4 spin matrices (no spin projection), for
//! use as a test oracle.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::clover::{clover_blocks_dense, OperatorParams};
use crate::error::{Error, Result};
use crate::lattice::gamma::{spin_identity, GammaBasis};
use crate::lattice::geometry::{Dir, ND};
use crate::lattice::{GaugeField, Su3, SITE_COMPONENTS};

/// Largest volume for which a dense matrix may be assembled.
pub const MAX_DENSE_VOLUME: usize = 4096;

/// Dense operator with row/column index `site * 12 + spin * 3 + color`.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: DMatrix<Complex64>,
    pub dims: [usize; ND],
}

impl DenseOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let x = nalgebra::DVector::from_column_slice(v);
        (&self.matrix * x).as_slice().to_vec()
    }

    /// `Γ5 A Γ5 - A†`, largest entry.
    pub fn gamma5_hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let g5 = |i: usize| if (i % SITE_COMPONENTS) < 6 { 1.0 } else { -1.0 };
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let lhs = self.matrix[(i, j)] * (g5(i) * g5(j));
                worst = worst.max((lhs - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Text dump: a header line, then `row col re im` for every non-zero entry.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# dense wilson-clover operator dim {} dims {} {} {} {} index site*12+spin*3+color",
            self.dim(),
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.dims[3]
        )?;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                let z = self.matrix[(i, j)];
                if z != Complex64::new(0.0, 0.0) {
                    writeln!(w, "{i} {j} {:e} {:e}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

fn kron_add(m: &mut DMatrix<Complex64>, row: usize, col: usize, spin: &[[Complex64; 4]; 4], color: &Su3<f64>, scale: Complex64) {
    for s1 in 0..4 {
        for s2 in 0..4 {
            let sv = spin[s1][s2];
            if sv == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c1 in 0..3 {
                for c2 in 0..3 {
                    m[(row * 12 + 3 * s1 + c1, col * 12 + 3 * s2 + c2)] += scale * sv * color.0[c1][c2];
                }
            }
        }
    }
}

pub fn dense_matrix(gauge: &GaugeField<f64>, params: &OperatorParams) -> Result<DenseOperator> {
    params.validate()?;
    let geo = gauge.geometry();
    let v = geo.volume();
    if v > MAX_DENSE_VOLUME {
        return Err(Error::TooLarge(12 * v));
    }
    let n = SITE_COMPONENTS * v;
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let basis = GammaBasis::default();
    let id = spin_identity();
    for x in 0..v {
        let blocks = clover_blocks_dense(gauge, x, params);
        for (b, block) in blocks.iter().enumerate() {
            for i in 0..6 {
                for j in 0..6 {
                    m[(12 * x + 6 * b + i, 12 * x + 6 * b + j)] += block[i][j];
                }
            }
        }
        for mu in 0..ND {
            let mut minus = id;
            let mut plus = id;
            for i in 0..4 {
                for j in 0..4 {
                    minus[i][j] -= basis.gamma[mu][i][j];
                    plus[i][j] += basis.gamma[mu][i][j];
                }
            }
            let (fwd, ph_f) = geo.neighbor(x, Dir::new(mu, true));
            let (bwd, ph_b) = geo.neighbor(x, Dir::new(mu, false));
            kron_add(&mut m, x, fwd, &minus, gauge.link(x, mu), Complex64::new(-0.5 * ph_f, 0.0));
            kron_add(&mut m, x, bwd, &plus, &gauge.link(bwd, mu).adjoint(), Complex64::new(-0.5 * ph_b, 0.0));
        }
    }
    Ok(DenseOperator { matrix: m, dims: geo.dims() })
}
