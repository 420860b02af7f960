//! Analytic per-site flop and instruction counts for one application of the
//! operator in single precision.
//!
//! Arithmetic rules: complex multiply 6 flops, complex add 2 flops, a fused
//! multiply-add is one instruction worth 2 flops. A complex multiply is
//! 2 MUL + 2 FMA instructions; a complex multiply-accumulate is 4 FMA.
//!
//! Breakdown for the `hermitian` convention:
//!
//! | component                          | flops | instructions | FMA |
//! |------------------------------------|------:|-------------:|----:|
//! | spin projection, 8 dirs x 6 cadd   |    96 |           96 |   0 |
//! | SU(3) x 2 color vectors, 8 dirs    |  1056 |          576 | 480 |
//! | accumulate 8 hop spinors (7 x 12)  |   168 |          168 |   0 |
//! | clover, 2 packed Hermitian blocks  |   504 |          264 | 240 |
//! | combine clover and hop sum         |    24 |           24 |   0 |
//! | total                              |  1848 |         1128 | 720 |
//!
//! FMA instruction fraction 720/1128 = 0.638. The first three rows are the
//! standard 1320-flop Wilson hopping term. Each Hermitian 6x6 row costs one
//! real-times-complex (2 MUL) plus five complex multiply-accumulates
//! (20 FMA); each off-diagonal element is used once as stored and once
//! conjugated. The `dense` convention instead treats each block as a full
//! complex 6x6 matrix (per row 1 complex multiply plus 5 complex
//! multiply-accumulates, 46 flops). With `c_sw = 0` the clover product
//! disappears and the site term is `(4+m) ψ - ½ hop`, 24 FMA.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::clover::OperatorParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlopConvention {
    /// Packed Hermitian clover blocks.
    Hermitian,
    /// Clover blocks as general complex 6x6 matrices.
    Dense,
}

impl FromStr for FlopConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hermitian" => Ok(FlopConvention::Hermitian),
            "dense" => Ok(FlopConvention::Dense),
            other => Err(Error::UnknownConvention(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopComponent {
    pub name: String,
    pub flops: u64,
    pub instructions: u64,
    pub fma_instructions: u64,
}

impl FlopComponent {
    fn new(name: &str, plain: u64, fma: u64) -> Self {
        FlopComponent { name: name.into(), flops: plain + 2 * fma, instructions: plain + fma, fma_instructions: fma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopReport {
    pub convention: FlopConvention,
    pub flops_per_site: u64,
    /// Flops executed inside fused multiply-adds.
    pub fma_flops: u64,
    pub instructions: u64,
    pub fma_instructions: u64,
    /// Fraction of arithmetic instructions that are FMAs.
    pub fma_fraction: f64,
    pub components: Vec<FlopComponent>,
}

impl FlopReport {
    pub fn component(&self, name: &str) -> Option<&FlopComponent> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn hopping_flops(&self) -> u64 {
        ["spin_projection", "su3_multiply", "hop_accumulate"]
            .iter()
            .filter_map(|n| self.component(n))
            .map(|c| c.flops)
            .sum()
    }
}

pub fn count_flops(params: &OperatorParams, convention: FlopConvention) -> Result<FlopReport> {
    params.validate()?;
    const DIRS: u64 = 8;
    let mut components = vec![
        FlopComponent::new("spin_projection", DIRS * 12, 0),
        // per color vector: 3 rows x (2 MUL + 10 FMA); two vectors per direction
        FlopComponent::new("su3_multiply", DIRS * 2 * 3 * 2, DIRS * 2 * 3 * 10),
        FlopComponent::new("hop_accumulate", 7 * 24, 0),
    ];
    if params.csw == 0.0 {
        components.push(FlopComponent::new("clover", 0, 0));
        components.push(FlopComponent::new("site_term", 0, 24));
    } else {
        let per_block = match convention {
            // 6 rows x (2 MUL, 20 FMA)
            FlopConvention::Hermitian => (6 * 2, 6 * 20),
            // 6 rows x (2 MUL + 2 FMA first product, 20 FMA)
            FlopConvention::Dense => (6 * 2, 6 * 22),
        };
        components.push(FlopComponent::new("clover", 2 * per_block.0, 2 * per_block.1));
        components.push(FlopComponent::new("site_term", 24, 0));
    }
    let flops_per_site = components.iter().map(|c| c.flops).sum();
    let instructions = components.iter().map(|c| c.instructions).sum();
    let fma_instructions: u64 = components.iter().map(|c| c.fma_instructions).sum();
    Ok(FlopReport {
        convention,
        flops_per_site,
        fma_flops: 2 * fma_instructions,
        instructions,
        fma_instructions,
        fma_fraction: fma_instructions as f64 / instructions as f64,
        components,
    })
}
