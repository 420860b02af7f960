//! Binary gauge-configuration files.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset | size | field                                            |
//! |--------|------|--------------------------------------------------|
//! | 0      | 4    | magic `QPL2`                                     |
//! | 4      | 4    | format version, u32 = 1                          |
//! | 8      | 16   | dims Lx, Ly, Lz, Lt as u32                       |
//! | 24     | 4    | precision code (0 double, 1 single, 2 half)      |
//! | 28     | 4    | reserved, zero                                   |
//! | 32     | 8    | payload byte count, u64                          |
//! | 40     | ...  | payload                                          |
//!
//! The payload holds links in site-lexicographic order (x fastest),
//! direction-major within a site (x, y, z, t), each matrix row-major as
//! `(re, im)` pairs in IEEE 754 at the stated precision.

use std::fs;
use std::path::Path;

use half::f16;
use sha2::{Digest, Sha256};

use super::field::GaugeField;
use super::geometry::{LatticeGeometry, ND};
use super::su3::Su3;
use crate::error::{Error, Result};
use crate::precision::Precision;

pub const MAGIC: &[u8; 4] = b"QPL2";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 40;
const REALS_PER_LINK: usize = 18;

/// Exact file size for a field of the given volume and precision.
pub fn file_size(volume: usize, precision: Precision) -> usize {
    HEADER_BYTES + volume * ND * REALS_PER_LINK * precision.bytes()
}

pub fn encode_gauge(field: &GaugeField<f64>) -> Vec<u8> {
    let g = field.geometry();
    let precision = field.precision();
    let payload = (g.volume() * ND * REALS_PER_LINK * precision.bytes()) as u64;
    let mut out = Vec::with_capacity(HEADER_BYTES + payload as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in g.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&precision.code().to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&payload.to_le_bytes());
    for u in field.links() {
        for v in u.to_reals() {
            match precision {
                Precision::Double => out.extend_from_slice(&v.to_le_bytes()),
                Precision::Single => out.extend_from_slice(&(v as f32).to_le_bytes()),
                Precision::Half => out.extend_from_slice(&f16::from_f64(v).to_le_bytes()),
            }
        }
    }
    out
}

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"))
}

pub fn decode_gauge(bytes: &[u8]) -> Result<GaugeField<f64>> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Header(format!("file has {} bytes, header needs {HEADER_BYTES}", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Header(format!("bad magic {:?}", &bytes[0..4])));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Version(version));
    }
    let mut dims = [0usize; ND];
    for (axis, d) in dims.iter_mut().enumerate() {
        *d = u32_at(bytes, 8 + 4 * axis) as usize;
    }
    let code = u32_at(bytes, 24);
    let precision = Precision::from_code(code).ok_or_else(|| Error::Header(format!("unknown precision code {code}")))?;
    let declared = u64::from_le_bytes(bytes[32..40].try_into().expect("8 bytes"));
    let expected = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .and_then(|v| v.checked_mul((ND * REALS_PER_LINK * precision.bytes()) as u64))
        .ok_or(Error::DimensionOverflow)?;
    if usize::try_from(expected).is_err() {
        return Err(Error::DimensionOverflow);
    }
    if declared != expected {
        return Err(Error::Header(format!("payload count {declared} does not match dims ({expected})")));
    }
    let found = (bytes.len() - HEADER_BYTES) as u64;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::Header(format!("{} trailing bytes after payload", found - expected)));
    }
    let geometry = LatticeGeometry::new(dims).map_err(|e| Error::Header(e.to_string()))?;
    let payload = &bytes[HEADER_BYTES..];
    let w = precision.bytes();
    let reals: Vec<f64> = payload
        .chunks_exact(w)
        .map(|c| match precision {
            Precision::Double => f64::from_le_bytes(c.try_into().expect("8 bytes")),
            Precision::Single => f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64,
            Precision::Half => f16::from_le_bytes(c.try_into().expect("2 bytes")).to_f64(),
        })
        .collect();
    let links = reals.chunks_exact(REALS_PER_LINK).map(Su3::from_reals).collect();
    GaugeField::from_links(geometry, links, precision)
}

pub fn write_gauge(field: &GaugeField<f64>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_gauge(field))?;
    Ok(())
}

pub fn read_gauge(path: impl AsRef<Path>) -> Result<GaugeField<f64>> {
    decode_gauge(&fs::read(path)?)
}

/// SHA-256 of the encoded file, hex.
pub fn gauge_checksum(field: &GaugeField<f64>) -> String {
    let digest = Sha256::digest(encode_gauge(field));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
