//! Scalar precision plumbing: the arithmetic trait shared by double and
//! single precision code paths, storage tags, and binary16 storage.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use half::f16;
use num_complex::Complex;
use num_traits::{Float, FloatConst, NumAssign};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage precision tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Double,
    Single,
    Half,
}

impl Precision {
    /// Code used in the gauge file header.
    pub fn code(self) -> u32 {
        match self {
            Precision::Double => 0,
            Precision::Single => 1,
            Precision::Half => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Precision::Double),
            1 => Some(Precision::Single),
            2 => Some(Precision::Half),
            _ => None,
        }
    }

    /// Bytes per real component.
    pub fn bytes(self) -> usize {
        match self {
            Precision::Double => 8,
            Precision::Single => 4,
            Precision::Half => 2,
        }
    }

    /// Round a double to this precision, returned as a double.
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::Double => v,
            Precision::Single => v as f32 as f64,
            Precision::Half => f16::from_f64(v).to_f64(),
        }
    }

    /// Tolerance for unitarity/unimodularity checks at this precision.
    pub fn su3_tolerance(self) -> f64 {
        match self {
            Precision::Double => 1e-12,
            Precision::Single => 1e-6,
            Precision::Half => 4e-3,
        }
    }
}

/// Arithmetic scalar: implemented for `f32` and `f64`.
pub trait Real:
    Float + FloatConst + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    const PRECISION: Precision;
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;
    #[inline(always)]
    fn of(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;
    #[inline(always)]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn f64(self) -> f64 {
        self as f64
    }
}

#[inline(always)]
pub fn cast_complex<A: Real, B: Real>(z: Complex<A>) -> Complex<B> {
    Complex::new(B::of(z.re.f64()), B::of(z.im.f64()))
}

/// Storage scalar for domain data: loaded into `f32` for arithmetic.
pub trait Storage: Copy + Default + Debug + Send + Sync + 'static {
    const PRECISION: Precision;
    fn load(self) -> f32;
    fn store(v: f32) -> Result<Self>;
}

impl Storage for f32 {
    const PRECISION: Precision = Precision::Single;
    #[inline(always)]
    fn load(self) -> f32 {
        self
    }
    #[inline(always)]
    fn store(v: f32) -> Result<Self> {
        Ok(v)
    }
}

impl Storage for f16 {
    const PRECISION: Precision = Precision::Half;
    #[inline(always)]
    fn load(self) -> f32 {
        self.to_f32()
    }
    fn store(v: f32) -> Result<Self> {
        let h = f16::from_f32(v);
        if h.is_infinite() || h.is_nan() {
            return Err(Error::HalfOverflow(v as f64));
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_store_rejects_overflow() {
        assert!(<f16 as Storage>::store(1.0e6).is_err());
        assert_eq!(<f16 as Storage>::store(1.0).unwrap().load(), 1.0);
        assert_eq!(<f16 as Storage>::store(0.0).unwrap().load(), 0.0);
    }

    #[test]
    fn precision_codes_roundtrip() {
        for p in [Precision::Double, Precision::Single, Precision::Half] {
            assert_eq!(Precision::from_code(p.code()), Some(p));
        }
        assert_eq!(Precision::from_code(7), None);
    }
}
