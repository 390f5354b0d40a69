use serde::{Deserialize, Serialize};

use super::pq::PqCodebook;
use crate::error::{Error, Result};

/// Largest storable LUT entry.
pub const LUT_MAX: u16 = u16::MAX;

/// Fixed-point lookup table of partial distances between one `q − c` vector
/// and every codeword, flattened so that entry `(column, code)` lives at
/// `column · kstar + code`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lut {
    m: usize,
    kstar: usize,
    entries: Vec<u16>,
    /// Multiply a real distance by this to get fixed-point units.
    scale: f64,
}

/// Real partial distances `‖(qc)_i − B_i[j]‖²`, flattened like [`Lut`].
pub fn real_entries(qc: &[f32], codebook: &PqCodebook) -> Result<Vec<f32>> {
    if qc.len() != codebook.dim() {
        return Err(Error::InvalidArgument(format!(
            "query residual has length {} but codebook dimension is {}",
            qc.len(),
            codebook.dim()
        )));
    }
    if let Some(p) = qc.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite query component at {p}")));
    }
    let dsub = codebook.dsub();
    let mut out = Vec::with_capacity(codebook.m() * codebook.kstar());
    for i in 0..codebook.m() {
        let seg = &qc[i * dsub..(i + 1) * dsub];
        for cw in codebook.sub_codebook(i).chunks_exact(dsub) {
            out.push(super::l2_sq(seg, cw));
        }
    }
    Ok(out)
}

/// Scale that maps `max_entry` to [`LUT_MAX`].
pub fn scale_for_max(max_entry: f32) -> f64 {
    if max_entry > 0.0 {
        LUT_MAX as f64 / max_entry as f64
    } else {
        1.0
    }
}

impl Lut {
    /// Builds a LUT whose own largest entry maps to [`LUT_MAX`].
    pub fn build(qc: &[f32], codebook: &PqCodebook) -> Result<Self> {
        let real = real_entries(qc, codebook)?;
        let max = real.iter().copied().fold(0f32, f32::max);
        Ok(Self::quantize(&real, codebook.m(), codebook.kstar(), scale_for_max(max)))
    }

    /// Builds a LUT with a caller-chosen scale, shared by every cluster a query
    /// probes so that fixed-point distances compare across clusters.
    pub fn build_with_scale(qc: &[f32], codebook: &PqCodebook, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("LUT scale must be positive, got {scale}")));
        }
        let real = real_entries(qc, codebook)?;
        Ok(Self::quantize(&real, codebook.m(), codebook.kstar(), scale))
    }

    /// Rounds real entries to fixed point, saturating at [`LUT_MAX`].
    pub fn quantize(real: &[f32], m: usize, kstar: usize, scale: f64) -> Self {
        debug_assert_eq!(real.len(), m * kstar);
        let entries = real
            .iter()
            .map(|&r| (r as f64 * scale).round().clamp(0.0, LUT_MAX as f64) as u16)
            .collect();
        Self {
            m,
            kstar,
            entries,
            scale,
        }
    }

    /// Wraps raw fixed-point entries.
    pub fn from_entries(m: usize, kstar: usize, entries: Vec<u16>, scale: f64) -> Result<Self> {
        if entries.len() != m * kstar {
            return Err(Error::InvalidArgument(format!(
                "{} entries for an {m}×{kstar} LUT",
                entries.len()
            )));
        }
        Ok(Self {
            m,
            kstar,
            entries,
            scale,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kstar(&self) -> usize {
        self.kstar
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn entries(&self) -> &[u16] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, column: usize, code: u8) -> u16 {
        self.entries[column * self.kstar + code as usize]
    }

    /// Converts a fixed-point distance back to real units.
    pub fn dequantize(&self, value: u32) -> f64 {
        value as f64 / self.scale
    }
}

/// `Σ_i LUT[i][code_i]` in exact integer arithmetic.
#[inline]
pub fn adc_distance(code: &[u8], lut: &Lut) -> u32 {
    debug_assert_eq!(code.len(), lut.m);
    let kstar = lut.kstar;
    code.iter()
        .enumerate()
        .map(|(i, &c)| lut.entries[i * kstar + c as usize] as u32)
        .sum()
}
