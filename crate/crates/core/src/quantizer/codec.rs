//! The `TNQ1` wire/file format.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "TNQ1" (0x54 0x4E 0x51 0x31)
//!      4     1  version (1)
//!      5     1  scheme tag (0 = TNQ, 1 = TUQ, 2 = NQ, 3 = UQ)
//!      6     1  bits per coordinate b
//!      7     1  reserved (0)
//!      8     8  alpha, f64 little-endian
//!     16     8  gamma, f64 little-endian
//!     24     8  d, u64 little-endian
//!     32     -  ceil(d * b / 8) bytes of level indices
//! ```
//!
//! Index `j` occupies stream bits `[j*b, (j+1)*b)`, where stream bit `n` is
//! bit `n % 8` (LSB first) of byte `n / 8`.
//!
//! A header with `alpha = gamma = 0` and no payload marks an all-zero layer
//! that was not quantized.

use rand::Rng;

use super::{clip, quantize_indices, GradientVector, QuantConfig, QuantizationGrid, Scheme, MAX_BITS};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TNQ1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 32;
pub const HEADER_BITS: u64 = (HEADER_LEN as u64) * 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub scheme: Scheme,
    pub bits: u8,
    pub alpha: f64,
    pub gamma: f64,
    pub dim: u64,
}

impl Header {
    pub fn levels(&self) -> usize {
        super::levels_for_bits(self.bits)
    }

    pub fn is_zero_marker(&self) -> bool {
        self.alpha == 0.0 && self.gamma == 0.0
    }

    /// Payload size implied by this header.
    pub fn payload_len(&self) -> usize {
        if self.is_zero_marker() {
            0
        } else {
            packed_len(self.dim as usize, self.bits)
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.scheme.tag());
        out.push(self.bits);
        out.push(0);
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.extend_from_slice(&self.gamma.to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Length { expected: HEADER_LEN, found: bytes.len() });
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:02x?}", &bytes[0..4])));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", bytes[4])));
        }
        let scheme = Scheme::from_tag(bytes[5])
            .ok_or_else(|| Error::Format(format!("unknown scheme tag {}", bytes[5])))?;
        let bits = bytes[6];
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::Format(format!("bits {bits} outside 1..={MAX_BITS}")));
        }
        if bytes[7] != 0 {
            return Err(Error::Format(format!("reserved byte is {}", bytes[7])));
        }
        let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let alpha = f(8);
        let gamma = f(16);
        let dim = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
        if !(alpha.is_finite() && alpha >= 0.0 && gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Format(format!("invalid alpha {alpha} or gamma {gamma}")));
        }
        if dim == 0 {
            return Err(Error::Format("dimension is zero".into()));
        }
        Ok(Self { scheme, bits, alpha, gamma, dim })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedGradient {
    pub header: Header,
    pub payload: Vec<u8>,
}

impl EncodedGradient {
    /// Header-only record for a layer whose gradient is identically zero.
    pub fn zero_marker(scheme: Scheme, bits: u8, dim: usize) -> Self {
        let header = Header { scheme, bits, alpha: 0.0, gamma: 0.0, dim: dim as u64 };
        Self { header, payload: Vec::new() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        self.header.write(&mut out);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = Header::parse(bytes)?;
        let expected = HEADER_LEN + header.payload_len();
        if bytes.len() != expected {
            return Err(Error::Length { expected, found: bytes.len() });
        }
        Ok(Self { header, payload: bytes[HEADER_LEN..].to_vec() })
    }

    /// Unpacked level indices, each checked against `s`.
    pub fn indices(&self) -> Result<Vec<u32>> {
        let dim = self.header.dim as usize;
        if self.header.is_zero_marker() {
            return Err(Error::Format("zero marker carries no indices".into()));
        }
        let expected = self.header.payload_len();
        if self.payload.len() != expected {
            return Err(Error::Length { expected, found: self.payload.len() });
        }
        let idx = unpack_indices(&self.payload, self.header.bits, dim)?;
        let s = self.header.levels() as u32;
        if let Some((j, &k)) = idx.iter().enumerate().find(|(_, &k)| k > s) {
            return Err(Error::Corrupt(format!("coordinate {j} has index {k} > {s}")));
        }
        Ok(idx)
    }

    /// Uplink cost: header plus exactly `d * b` payload bits.
    pub fn wire_bits(&self) -> u64 {
        if self.header.is_zero_marker() {
            HEADER_BITS
        } else {
            HEADER_BITS + self.header.dim * u64::from(self.header.bits)
        }
    }
}

pub(crate) fn packed_len(count: usize, bits: u8) -> usize {
    (count * usize::from(bits)).div_ceil(8)
}

/// Packs `indices` at `bits` bits each, LSB first.
pub fn pack_indices(indices: &[u32], bits: u8) -> Vec<u8> {
    debug_assert!((1..=32).contains(&bits));
    let mask = if bits == 32 { u32::MAX } else { (1u32 << bits) - 1 };
    let mut out = Vec::with_capacity(packed_len(indices.len(), bits));
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for &v in indices {
        acc |= u64::from(v & mask) << filled;
        filled += u32::from(bits);
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    out
}

pub fn unpack_indices(payload: &[u8], bits: u8, count: usize) -> Result<Vec<u32>> {
    let expected = packed_len(count, bits);
    if payload.len() < expected {
        return Err(Error::Length { expected, found: payload.len() });
    }
    let mask = if bits == 32 { u64::from(u32::MAX) } else { (1u64 << bits) - 1 };
    let mut out = Vec::with_capacity(count);
    let mut acc: u64 = 0;
    let mut avail = 0u32;
    let mut bytes = payload.iter();
    for _ in 0..count {
        while avail < u32::from(bits) {
            acc |= u64::from(*bytes.next().expect("length checked")) << avail;
            avail += 8;
        }
        out.push((acc & mask) as u32);
        acc >>= bits;
        avail -= u32::from(bits);
    }
    Ok(out)
}

/// Truncates `g` at the configured threshold, quantizes every coordinate
/// onto `grid` and packs the indices.
pub fn encode<R: Rng + ?Sized>(
    g: &GradientVector,
    config: &QuantConfig,
    grid: &QuantizationGrid,
    rng: &mut R,
) -> Result<EncodedGradient> {
    if grid.levels() != config.levels() {
        return Err(Error::InvalidParameter(format!(
            "grid has {} levels but {} bits imply {}",
            grid.levels(),
            config.bits,
            config.levels()
        )));
    }
    let alpha = config.threshold;
    if clip(grid.upper(), alpha) != grid.upper() || clip(grid.lower(), alpha) != grid.lower() {
        return Err(Error::InvalidParameter(format!(
            "grid [{}, {}] extends past the threshold {alpha}",
            grid.lower(),
            grid.upper()
        )));
    }
    let indices = quantize_indices(g, alpha, grid, rng)?;
    let header = Header {
        scheme: config.scheme,
        bits: config.bits,
        alpha,
        gamma: config.scale,
        dim: g.dim() as u64,
    };
    Ok(EncodedGradient { header, payload: pack_indices(&indices, config.bits) })
}

/// Maps every index back to its grid point.
pub fn decode(e: &EncodedGradient, grid: &QuantizationGrid) -> Result<GradientVector> {
    if e.header.is_zero_marker() {
        return GradientVector::zeros(e.header.dim as usize);
    }
    if grid.levels() != e.header.levels() {
        return Err(Error::InvalidParameter(format!(
            "grid has {} levels, header expects {}",
            grid.levels(),
            e.header.levels()
        )));
    }
    let pts = grid.points();
    let values = e.indices()?.into_iter().map(|k| pts[k as usize]).collect();
    GradientVector::new(values)
}
