//! Ternary gradient quantization with cyclic wrapping and a sparse wire
//! format.
//!
//! A gradient g is mapped to s·t with t ∈ {−1, 0, +1}: s is the largest
//! magnitude (or a common scale shared by all clients in a round) and each
//! t_i is sign(g_i) with probability |g_i|/s, else 0. Only non-zero digits
//! go on the wire.
//!
//! Wire layout, little-endian:
//!
//! ```text
//! u32  magic 0x54475144
//! u8   version (1)
//! u32  param_count
//! f32  scale
//! u32  entry_count
//! u32  entry, repeated: bit 31 = negative, bits 0..=30 = parameter index
//! ```

use rand::Rng;
use thiserror::Error;

pub const MAGIC: u32 = 0x5447_5144;
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 17;
pub const ENTRY_BYTES: usize = 4;
const SIGN_BIT: u32 = 1 << 31;
const MAX_INDEX: u32 = SIGN_BIT - 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TernError {
    #[error("gradient vector is empty")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("buffer too short: {0} bytes")]
    Truncated(usize),
    #[error("bad magic {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("declared {declared} entries, buffer holds {actual}")]
    EntryCount { declared: usize, actual: usize },
    #[error("entries not strictly increasing or out of range at position {0}")]
    BadEntries(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("client count must be positive")]
    NoClients,
}

/// Sparse ternary update: a scale and the signed non-zero positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryUpdate {
    pub scale: f32,
    pub param_count: u32,
    /// (index, negative) with strictly increasing indices.
    pub entries: Vec<(u32, bool)>,
}

impl TernaryUpdate {
    /// Dense digits in {−1, 0, +1}.
    pub fn digits(&self) -> Vec<i8> {
        let mut d = vec![0i8; self.param_count as usize];
        for &(i, neg) in &self.entries {
            d[i as usize] = if neg { -1 } else { 1 };
        }
        d
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.len()
    }

    /// Fraction of zero digits.
    pub fn sparsity(&self) -> f64 {
        if self.param_count == 0 {
            return 1.0;
        }
        1.0 - self.entries.len() as f64 / f64::from(self.param_count)
    }

    pub fn wire_size(&self) -> usize {
        wire_size(self.entries.len())
    }

    /// s·t as reals.
    pub fn dequantize(&self) -> Vec<f64> {
        self.digits()
            .iter()
            .map(|&t| f64::from(self.scale) * f64::from(t))
            .collect()
    }
}

pub fn wire_size(nonzero: usize) -> usize {
    HEADER_BYTES + ENTRY_BYTES * nonzero
}

fn check_finite(g: &[f64]) -> Result<(), TernError> {
    match g.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(TernError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Maps each entry into [−period/2, period/2).
pub fn cyclic_wrap(g: &[f64], period: f64) -> Result<Vec<f64>, TernError> {
    if !(period.is_finite() && period > 0.0) {
        return Err(TernError::BadPeriod(period));
    }
    check_finite(g)?;
    Ok(g.iter().map(|&v| wrap_scalar(v, period)).collect())
}

pub fn wrap_scalar(v: f64, period: f64) -> f64 {
    let half = period / 2.0;
    if (-half..half).contains(&v) {
        return v;
    }
    let w = (v + half).rem_euclid(period) - half;
    // rem_euclid can return `period` itself through rounding.
    if w >= half {
        w - period
    } else {
        w
    }
}

/// Quantizes against the vector's own max magnitude.
pub fn ternarize<R: Rng + ?Sized>(g: &[f64], rng: &mut R) -> Result<TernaryUpdate, TernError> {
    if g.is_empty() {
        return Err(TernError::Empty);
    }
    check_finite(g)?;
    let s = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if s == 0.0 {
        return Ok(TernaryUpdate {
            scale: 0.0,
            param_count: g.len() as u32,
            entries: vec![],
        });
    }
    ternarize_with_scale(g, scale_at_least(s), rng)
}

/// Smallest f32 not below `m`, so no entry is clipped by the scale.
pub fn scale_at_least(m: f64) -> f32 {
    let s = m as f32;
    if f64::from(s) < m {
        s.next_up()
    } else {
        s
    }
}

/// Quantizes against a given scale. Entries larger than the scale are
/// clipped to it, which biases them toward zero.
pub fn ternarize_with_scale<R: Rng + ?Sized>(
    g: &[f64],
    scale: f32,
    rng: &mut R,
) -> Result<TernaryUpdate, TernError> {
    if g.is_empty() {
        return Err(TernError::Empty);
    }
    if g.len() > MAX_INDEX as usize {
        return Err(TernError::BadEntries(MAX_INDEX as usize));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(TernError::BadScale(f64::from(scale)));
    }
    check_finite(g)?;
    let s = f64::from(scale);
    let mut entries = Vec::new();
    for (i, &v) in g.iter().enumerate() {
        let p = (v.abs() / s).min(1.0);
        // Draw for every coordinate so the stream does not depend on g.
        let u: f64 = rng.gen();
        if u < p {
            entries.push((i as u32, v < 0.0));
        }
    }
    Ok(TernaryUpdate {
        scale,
        param_count: g.len() as u32,
        entries,
    })
}

/// G_i = s · sum_i / N.
pub fn dequantize(sum: &[i64], scale: f64, n_clients: usize) -> Result<Vec<f64>, TernError> {
    if n_clients == 0 {
        return Err(TernError::NoClients);
    }
    Ok(sum
        .iter()
        .map(|&t| scale * t as f64 / n_clients as f64)
        .collect())
}

pub fn serialize(update: &TernaryUpdate) -> Vec<u8> {
    let mut out = Vec::with_capacity(update.wire_size());
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.push(VERSION);
    out.extend_from_slice(&update.param_count.to_le_bytes());
    out.extend_from_slice(&update.scale.to_le_bytes());
    out.extend_from_slice(&(update.entries.len() as u32).to_le_bytes());
    for &(i, neg) in &update.entries {
        let word = i | if neg { SIGN_BIT } else { 0 };
        out.extend_from_slice(&word.to_le_bytes());
    }
    out
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

pub fn deserialize(bytes: &[u8]) -> Result<TernaryUpdate, TernError> {
    if bytes.len() < HEADER_BYTES {
        return Err(TernError::Truncated(bytes.len()));
    }
    let magic = read_u32(bytes, 0);
    if magic != MAGIC {
        return Err(TernError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(TernError::BadVersion(bytes[4]));
    }
    let param_count = read_u32(bytes, 5);
    let scale = f32::from_le_bytes(bytes[9..13].try_into().unwrap());
    let count = read_u32(bytes, 13) as usize;
    let body = &bytes[HEADER_BYTES..];
    if body.len() != count * ENTRY_BYTES {
        return Err(TernError::EntryCount {
            declared: count,
            actual: body.len() / ENTRY_BYTES,
        });
    }
    let mut entries = Vec::with_capacity(count);
    for k in 0..count {
        let word = read_u32(body, k * ENTRY_BYTES);
        let idx = word & MAX_INDEX;
        let in_order = entries.last().is_none_or(|&(prev, _)| idx > prev);
        if idx >= param_count || !in_order {
            return Err(TernError::BadEntries(k));
        }
        entries.push((idx, word & SIGN_BIT != 0));
    }
    Ok(TernaryUpdate {
        scale,
        param_count,
        entries,
    })
}
