//! Two-stage gradient compression: truncation to `[-α, α]` followed by
//! unbiased stochastic rounding onto a (possibly non-uniform) grid.

mod codec;
mod grid;

pub use codec::{
    decode, encode, pack_indices, unpack_indices, EncodedGradient, Header, HEADER_BITS,
    HEADER_LEN, MAGIC, VERSION,
};
pub use grid::{build_grid, DensityFunction, QuantizationGrid};

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::pdf::{self, Pdf};

/// A finite, non-empty gradient (or gradient slice for one layer).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("coordinate {j} is {v}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Neg for &GradientVector {
    type Output = GradientVector;

    fn neg(self) -> GradientVector {
        GradientVector(self.0.iter().map(|v| -v).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Truncated non-uniform.
    Tnq,
    /// Truncated uniform.
    Tuq,
    /// Non-uniform, range set to the largest magnitude.
    Nq,
    /// Uniform, range set to the largest magnitude.
    Uq,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Tnq, Scheme::Tuq, Scheme::Nq, Scheme::Uq];

    pub fn tag(self) -> u8 {
        match self {
            Scheme::Tnq => 0,
            Scheme::Tuq => 1,
            Scheme::Nq => 2,
            Scheme::Uq => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(usize::from(tag)).copied()
    }

    pub fn truncates(self) -> bool {
        matches!(self, Scheme::Tnq | Scheme::Tuq)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Tnq => "tnq",
            Scheme::Tuq => "tuq",
            Scheme::Nq => "nq",
            Scheme::Uq => "uq",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tnq" => Ok(Scheme::Tnq),
            "tuq" => Ok(Scheme::Tuq),
            "nq" => Ok(Scheme::Nq),
            "uq" => Ok(Scheme::Uq),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Largest supported bit width per coordinate.
pub const MAX_BITS: u8 = 16;

/// Level count `s = 2^b - 1` for a `b`-bit budget.
pub fn levels_for_bits(bits: u8) -> usize {
    (1usize << bits) - 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantConfig {
    pub scheme: Scheme,
    pub bits: u8,
    /// Truncation threshold α; the grid spans `[-α, α]`.
    pub threshold: f64,
    /// Laplace scale the grid was designed for (0 when unused).
    pub scale: f64,
}

impl QuantConfig {
    pub fn new(scheme: Scheme, bits: u8, threshold: f64, scale: f64) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::InvalidParameter(format!(
                "bits must be in 1..={MAX_BITS}, got {bits}"
            )));
        }
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::InvalidParameter(format!("threshold must be positive, got {threshold}")));
        }
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidParameter(format!("scale must be nonnegative, got {scale}")));
        }
        Ok(Self { scheme, bits, threshold, scale })
    }

    pub fn levels(&self) -> usize {
        levels_for_bits(self.bits)
    }
}

#[inline]
pub(crate) fn clip(x: f64, alpha: f64) -> f64 {
    if x.abs() <= alpha {
        x
    } else {
        alpha.copysign(x)
    }
}

/// Clips every coordinate to `[-α, α]`.
pub fn truncate(g: &GradientVector, alpha: f64) -> Result<GradientVector> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("truncation threshold must be positive, got {alpha}")));
    }
    Ok(GradientVector(g.0.iter().map(|&x| clip(x, alpha)).collect()))
}

/// Rounds `x` to one of the two grid points around it so that the
/// dequantized value is `x` in expectation.
///
/// A point that coincides with a grid point is returned deterministically.
pub fn stochastic_quantize<R: Rng + ?Sized>(x: f64, grid: &QuantizationGrid, rng: &mut R) -> Result<usize> {
    let pts = grid.points();
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    if !(x >= lo && x <= hi) {
        return Err(Error::OutOfRange { value: x, lo, hi });
    }
    // number of points <= x, so pts[upper - 1] <= x < pts[upper]
    let upper = pts.partition_point(|&l| l <= x);
    if upper == pts.len() {
        return Ok(pts.len() - 1);
    }
    let left = upper - 1;
    let base = pts[left];
    if x == base {
        return Ok(left);
    }
    let p = (x - base) / (pts[upper] - base);
    if rng.random::<f64>() < p {
        Ok(upper)
    } else {
        Ok(left)
    }
}

pub fn dequantize(index: usize, grid: &QuantizationGrid) -> Result<f64> {
    grid.points()
        .get(index)
        .copied()
        .ok_or(Error::IndexOutOfRange { index, levels: grid.levels() })
}

/// Worst-case quantization variance `Σ_k P_k |Δ_k|² / 4` of `grid` under `pdf`.
pub fn variance_bound(grid: &QuantizationGrid, pdf: &dyn Pdf) -> Result<f64> {
    let total = pdf::total_mass(pdf)?;
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidDensity(format!("pdf integrates to {total}, expected 1")));
    }
    let mut bound = 0.0;
    for w in grid.points().windows(2) {
        let p = pdf::mass(pdf, w[0], w[1], 1e-12)?;
        bound += p * (w[1] - w[0]).powi(2) / 4.0;
    }
    Ok(bound)
}

/// Truncates and quantizes every coordinate, returning level indices.
pub fn quantize_indices<R: Rng + ?Sized>(
    g: &GradientVector,
    alpha: f64,
    grid: &QuantizationGrid,
    rng: &mut R,
) -> Result<Vec<u32>> {
    g.0.iter()
        .map(|&x| stochastic_quantize(clip(x, alpha), grid, rng).map(|k| k as u32))
        .collect()
}
