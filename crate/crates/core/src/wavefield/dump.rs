//! Binary field dumps and harmonic-curve CSV.
//!
//! Field dump layout (all little-endian):
//!
//! | offset | size | content                    |
//! |--------|------|----------------------------|
//! | 0      | 8    | magic `NARSFLD1`           |
//! | 8      | 8    | `n_harm` as u64            |
//! | 16     | 8    | `n_r` as u64               |
//! | 24     | 8    | `z` as f64                 |
//! | 32     | ...  | `(re, im)` f64 pairs, harmonic-major |

use std::fmt::Write as _;

use num_complex::Complex64;

use super::HarmonicField;
use crate::error::{Error, Result};

pub const FIELD_MAGIC: &[u8; 8] = b"NARSFLD1";

impl HarmonicField {
    pub fn to_dump_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 16 * self.amplitudes().len());
        out.extend_from_slice(FIELD_MAGIC);
        out.extend_from_slice(&(self.n_harm() as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_r() as u64).to_le_bytes());
        out.extend_from_slice(&self.z.to_le_bytes());
        for a in self.amplitudes() {
            out.extend_from_slice(&a.re.to_le_bytes());
            out.extend_from_slice(&a.im.to_le_bytes());
        }
        out
    }

    /// Parses a dump. The radial spacing is not part of the format and is supplied by the caller.
    pub fn from_dump_bytes(bytes: &[u8], dr: f64) -> Result<Self> {
        if bytes.len() < 32 || &bytes[..8] != FIELD_MAGIC {
            return Err(Error::Data("not a NARSFLD1 field dump".into()));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let n_harm = u64_at(8) as usize;
        let n_r = u64_at(16) as usize;
        let z = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let body = &bytes[32..];
        if body.len() != 16 * n_harm * n_r {
            return Err(Error::Data(format!(
                "field dump body has {} bytes, header promises {}",
                body.len(),
                16 * n_harm * n_r
            )));
        }
        let amps = body
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        HarmonicField::from_parts(n_harm, n_r, dr, z, amps)
    }
}

/// CSV with columns `z,B1..Bn`; each row is `(z, ratios)`.
pub fn harmonic_curve_csv(rows: &[(f64, Vec<f64>)]) -> String {
    let n = rows.first().map_or(0, |r| r.1.len());
    let mut s = String::from("z");
    for i in 1..=n {
        let _ = write!(s, ",B{i}");
    }
    s.push('\n');
    for (z, b) in rows {
        let _ = write!(s, "{z:.9e}");
        for v in b {
            let _ = write!(s, ",{v:.9e}");
        }
        s.push('\n');
    }
    s
}
