//! Probability densities over gradient coordinates.

use crate::error::{Error, Result};
use crate::quad;

/// A probability density on the real line.
pub trait Pdf: Send + Sync {
    fn density(&self, x: f64) -> f64;

    /// Closed support; infinite ends allowed.
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Points where the density has a kink or jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// `∫_a^∞ (g - a)² p(g) dg`, when known in closed form.
    fn upper_clip_loss(&self, _a: f64) -> Option<f64> {
        None
    }

    /// `∫_{-∞}^{-a} (g + a)² p(g) dg`, when known in closed form.
    fn lower_clip_loss(&self, _a: f64) -> Option<f64> {
        None
    }
}

/// Uniform density on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPdf {
    pub lo: f64,
    pub hi: f64,
}

impl UniformPdf {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!("uniform support [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }
}

impl Pdf for UniformPdf {
    fn density(&self, x: f64) -> f64 {
        if x >= self.lo && x <= self.hi {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }

    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// Probability mass of `[a, b]`.
pub fn mass(pdf: &dyn Pdf, a: f64, b: f64, tol: f64) -> Result<f64> {
    integral_over(pdf, a, b, tol, |_| 1.0)
}

/// `∫_a^b w(x) p(x) dx`, with infinite limits and support clipping handled.
pub fn integral_over<W: Fn(f64) -> f64>(
    pdf: &dyn Pdf,
    a: f64,
    b: f64,
    tol: f64,
    weight: W,
) -> Result<f64> {
    let (lo, hi) = pdf.support();
    let a = a.max(lo);
    let b = b.min(hi);
    if a >= b {
        return Ok(0.0);
    }
    let f = |x: f64| weight(x) * pdf.density(x);
    match (a.is_finite(), b.is_finite()) {
        (true, true) => {
            Ok(quad::integrate_with_breaks(f, a, b, &pdf.breakpoints(), tol)?.value)
        }
        (true, false) => {
            let pivot = pdf.breakpoints().into_iter().fold(a, f64::max);
            let head = quad::integrate_with_breaks(&f, a, pivot, &pdf.breakpoints(), tol / 2.0)?;
            let tail = quad::integrate_upper_tail(&f, pivot, tol / 2.0)?;
            Ok(head.value + tail.value)
        }
        (false, true) => {
            let pivot = pdf.breakpoints().into_iter().fold(b, f64::min);
            let tail = quad::integrate_lower_tail(&f, pivot, tol / 2.0)?;
            let head = quad::integrate_with_breaks(&f, pivot, b, &pdf.breakpoints(), tol / 2.0)?;
            Ok(head.value + tail.value)
        }
        (false, false) => {
            let bps = pdf.breakpoints();
            let left = bps.iter().copied().fold(0.0, f64::min);
            let right = bps.iter().copied().fold(0.0, f64::max);
            let lower = quad::integrate_lower_tail(&f, left, tol / 3.0)?;
            let mid = quad::integrate_with_breaks(&f, left, right, &bps, tol / 3.0)?;
            let upper = quad::integrate_upper_tail(&f, right, tol / 3.0)?;
            Ok(lower.value + mid.value + upper.value)
        }
    }
}

/// Total probability mass, used to check the normalization precondition.
pub fn total_mass(pdf: &dyn Pdf) -> Result<f64> {
    mass(pdf, f64::NEG_INFINITY, f64::INFINITY, 1e-11)
}

/// Expected squared clipping loss `E[(g - T_α(g))²]` over both tails.
pub fn clip_loss(pdf: &dyn Pdf, alpha: f64, tol: f64) -> Result<f64> {
    let upper = match pdf.upper_clip_loss(alpha) {
        Some(v) => v,
        None => integral_over(pdf, alpha, f64::INFINITY, tol / 2.0, |g| (g - alpha).powi(2))?,
    };
    let lower = match pdf.lower_clip_loss(alpha) {
        Some(v) => v,
        None => integral_over(pdf, f64::NEG_INFINITY, -alpha, tol / 2.0, |g| (g + alpha).powi(2))?,
    };
    Ok(upper + lower)
}
