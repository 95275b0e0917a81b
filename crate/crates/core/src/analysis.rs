//! Error and convergence expressions for the four compression schemes.
//!
//! The compression error of a truncated quantizer splits into a variance
//! term, `(d/4N) ∫_{-α}^{α} p/λ²`, and a truncation bias term,
//! `(d/N) E[(g - T_α(g))²]`. Under a Laplace model both have closed forms;
//! the general routines evaluate them by quadrature.

use crate::error::{Error, Result};
use crate::laplace::{self, LaplaceModel};
use crate::pdf::{self, Pdf};
use crate::quad;
use crate::quantizer::{levels_for_bits, DensityFunction, Scheme};

const SQRT6: f64 = 2.449_489_742_783_178;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBreakdown {
    pub variance: f64,
    pub bias: f64,
    pub total: f64,
}

impl ErrorBreakdown {
    pub fn new(variance: f64, bias: f64) -> Self {
        Self { variance, bias, total: variance + bias }
    }

    fn scaled(self, k: f64) -> Self {
        Self::new(self.variance * k, self.bias * k)
    }
}

/// Compression error of a truncated quantizer with point density `density`
/// applied to coordinates drawn from `pdf`.
pub fn error_tnq_general(
    pdf: &dyn Pdf,
    density: &DensityFunction,
    alpha: f64,
    levels: usize,
    dim: usize,
    clients: usize,
) -> Result<ErrorBreakdown> {
    if (density.alpha() - alpha).abs() > 1e-12 * alpha.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "density range {} does not match alpha {alpha}",
            density.alpha()
        )));
    }
    if (density.budget() - levels as f64).abs() > 1e-6 * levels as f64 {
        return Err(Error::Normalization { integral: density.budget(), budget: levels as f64 });
    }
    let scale = dim as f64 / clients as f64;
    let spread = pdf::integral_over(pdf, -alpha, alpha, 1e-13, |g| {
        let l = density.eval(g);
        1.0 / (l * l)
    })?;
    let clip = pdf::clip_loss(pdf, alpha, 1e-13)?;
    Ok(ErrorBreakdown::new(scale * spread / 4.0, scale * clip))
}

/// Cube-root density `λ(g) = s p(g)^{1/3} / ∫ p^{1/3}` on `[-α, α]`.
pub fn optimal_density_general<P: Pdf + Clone + 'static>(
    pdf: &P,
    alpha: f64,
    levels: usize,
) -> Result<DensityFunction> {
    if !(alpha.is_finite() && alpha > 0.0) || levels == 0 {
        return Err(Error::InvalidParameter(format!(
            "need alpha > 0 and s >= 1, got alpha = {alpha}, s = {levels}"
        )));
    }
    for i in 0..=512 {
        let x = -alpha + 2.0 * alpha * i as f64 / 512.0;
        if !(pdf.density(x) > 0.0) {
            return Err(Error::Degenerate(format!("pdf vanishes at g = {x} inside [-{alpha}, {alpha}]")));
        }
    }
    let norm = cube_root_mass(pdf, alpha, 1e-13)?;
    let p = pdf.clone();
    let s = levels as f64;
    DensityFunction::new(move |g| s * p.density(g).cbrt() / norm, alpha, s)
}

fn cube_root_mass(pdf: &dyn Pdf, alpha: f64, tol: f64) -> Result<f64> {
    let mut bps = pdf.breakpoints();
    bps.push(0.0);
    Ok(quad::integrate_with_breaks(|g| pdf.density(g).cbrt(), -alpha, alpha, &bps, tol)?.value)
}

/// Closed-form truncated non-uniform error under the Laplace model.
pub fn error_tnq_laplace_breakdown(alpha: f64, levels: usize, gamma: f64, dim: usize, clients: usize) -> ErrorBreakdown {
    let s = levels as f64;
    let g2 = gamma * gamma;
    let shrink = -(-alpha / (3.0 * gamma)).exp_m1();
    let variance = 27.0 * g2 / (s * s) * shrink.powi(3);
    let bias = 2.0 * g2 * (-alpha / gamma).exp();
    ErrorBreakdown::new(variance, bias).scaled(dim as f64 / clients as f64)
}

/// `(27dγ²/(Ns²)) (1 - e^{-α/3γ})³ + (2dγ²/N) e^{-α/γ}`.
pub fn error_tnq_laplace(alpha: f64, levels: usize, gamma: f64, dim: usize, clients: usize) -> f64 {
    error_tnq_laplace_breakdown(alpha, levels, gamma, dim, clients).total
}

/// `27dγ² / (N (s + 3√6/2)²)`: the truncated non-uniform error at its
/// optimal threshold.
pub fn theorem1_bound(levels: usize, gamma: f64, dim: usize, clients: usize) -> f64 {
    let denom = levels as f64 + 1.5 * SQRT6;
    27.0 * dim as f64 * gamma * gamma / (clients as f64 * denom * denom)
}

/// Non-uniform quantization without truncation: `27dγ²/(Ns²)`.
pub fn error_nq(levels: usize, gamma: f64, dim: usize, clients: usize) -> f64 {
    let s = levels as f64;
    27.0 * dim as f64 * gamma * gamma / (clients as f64 * s * s)
}

/// Truncated uniform quantization: `dα²/(Ns²) + (2dγ²/N) e^{-α/γ}`.
pub fn error_tuq(alpha: f64, levels: usize, gamma: f64, dim: usize, clients: usize) -> ErrorBreakdown {
    let s = levels as f64;
    let variance = alpha * alpha / (s * s);
    let bias = 2.0 * gamma * gamma * (-alpha / gamma).exp();
    ErrorBreakdown::new(variance, bias).scaled(dim as f64 / clients as f64)
}

/// Truncated uniform error at `α = v(s)γ`, i.e. `dγ²(v² + 2v)/(Ns²)`.
pub fn error_tuq_optimal(levels: usize, gamma: f64, dim: usize, clients: usize) -> Result<f64> {
    let v = laplace::solve_v(levels)?.value;
    let s = levels as f64;
    Ok(dim as f64 * gamma * gamma * (v * v + 2.0 * v) / (clients as f64 * s * s))
}

/// Uniform quantization over the full range: `4dγ²(ln 2d)²/(Ns²)`.
pub fn error_uq(levels: usize, gamma: f64, dim: usize, clients: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let s = levels as f64;
    dim as f64 * linf_bound(gamma, dim) / (clients as f64 * s * s)
}

/// Bound on `E[‖g‖∞²]` for `d` Laplace coordinates: `4γ²(ln 2d)²`.
pub fn linf_bound(gamma: f64, dim: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let l = (2.0 * dim as f64).ln();
    4.0 * gamma * gamma * l * l
}

/// Range used for the untruncated schemes when a grid must be built from
/// the model alone: `2γ ln(2d)`, the root of [`linf_bound`].
pub fn untruncated_range(gamma: f64, dim: usize) -> f64 {
    2.0 * gamma * (2.0 * dim.max(1) as f64).ln()
}

/// A scheme's error at its model-optimal parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeError {
    pub scheme: Scheme,
    pub bits: u8,
    pub levels: usize,
    pub gamma: f64,
    pub dim: usize,
    pub clients: usize,
    pub alpha: f64,
    pub breakdown: ErrorBreakdown,
}

impl SchemeError {
    pub fn value(&self) -> f64 {
        self.breakdown.total
    }

    /// Error in units of `dγ²/N`.
    pub fn normalized(&self) -> f64 {
        self.value() * self.clients as f64 / (self.dim as f64 * self.gamma * self.gamma)
    }
}

pub fn scheme_error(scheme: Scheme, bits: u8, gamma: f64, dim: usize, clients: usize) -> Result<SchemeError> {
    if bits == 0 || bits > crate::quantizer::MAX_BITS {
        return Err(Error::InvalidParameter(format!("bits must be in 1..=16, got {bits}")));
    }
    if dim == 0 || clients == 0 {
        return Err(Error::InvalidParameter("dimension and client count must be positive".into()));
    }
    let model = LaplaceModel::new(gamma)?;
    let s = levels_for_bits(bits);
    let (alpha, breakdown) = match scheme {
        Scheme::Tnq => {
            let a = laplace::optimal_alpha_tnq(s, &model);
            (a, error_tnq_laplace_breakdown(a, s, gamma, dim, clients))
        }
        Scheme::Tuq => {
            let a = laplace::optimal_alpha_tuq(s, &model)?;
            (a, error_tuq(a, s, gamma, dim, clients))
        }
        Scheme::Nq => (
            untruncated_range(gamma, dim),
            ErrorBreakdown::new(error_nq(s, gamma, dim, clients), 0.0),
        ),
        Scheme::Uq => (
            untruncated_range(gamma, dim),
            ErrorBreakdown::new(error_uq(s, gamma, dim, clients), 0.0),
        ),
    };
    Ok(SchemeError { scheme, bits, levels: s, gamma, dim, clients, alpha, breakdown })
}

/// One row per `(scheme, b)`, schemes in TNQ, TUQ, NQ, UQ order.
pub fn scheme_table(gamma: f64, dim: usize, clients: usize, bits: &[u8]) -> Result<Vec<SchemeError>> {
    let mut rows = Vec::with_capacity(bits.len() * 4);
    for scheme in Scheme::ALL {
        for &b in bits {
            rows.push(scheme_error(scheme, b, gamma, dim, clients)?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceParams {
    pub clients: usize,
    pub batch: usize,
    pub dim: usize,
    pub grad_variance: f64,
    pub smoothness: f64,
    pub lr: f64,
    pub rounds: usize,
    pub init_gap: f64,
}

impl ConvergenceParams {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 || self.batch == 0 || self.dim == 0 || self.rounds == 0 {
            return Err(Error::Contract("clients, batch, dim and rounds must be positive".into()));
        }
        if !(self.smoothness > 0.0) || !(self.lr > 0.0) {
            return Err(Error::Contract("smoothness and learning rate must be positive".into()));
        }
        if self.lr > 1.0 / self.smoothness {
            return Err(Error::Contract(format!(
                "learning rate {} exceeds 1/smoothness = {}",
                self.lr,
                1.0 / self.smoothness
            )));
        }
        if !(self.grad_variance >= 0.0) || !(self.init_gap >= 0.0) {
            return Err(Error::Contract("variance and initial gap must be nonnegative".into()));
        }
        Ok(())
    }

    /// Uncompressed distributed SGD floor `2ΔF/(Tη) + σ²/(NB)`.
    pub fn dsgd_error(&self) -> f64 {
        2.0 * self.init_gap / (self.rounds as f64 * self.lr)
            + self.grad_variance / (self.clients * self.batch) as f64
    }
}

/// Upper bound on the average squared gradient norm over `T` rounds.
pub fn convergence_bound(p: &ConvergenceParams, quant_error: f64) -> Result<f64> {
    p.validate()?;
    Ok(p.dsgd_error() + quant_error)
}

/// Minimizes a function on `[lo, hi]` by golden-section search.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSearch {
    pub alpha: f64,
    pub error: f64,
    /// False when the minimum sat on the search boundary, so the result is
    /// only the best point found.
    pub bracketed: bool,
}

/// Threshold minimizing `(1/4s²)[∫_{-α}^{α} p^{1/3}]³ + E[(g - T_α(g))²]`,
/// the error with the cube-root density rebuilt at every candidate α.
pub fn argmin_alpha_numeric(pdf: &dyn Pdf, levels: usize, interval: (f64, f64)) -> Result<AlphaSearch> {
    let (lo, hi) = interval;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || levels == 0 {
        return Err(Error::InvalidParameter(format!(
            "search interval ({lo}, {hi}) must satisfy 0 < lo < hi, s >= 1"
        )));
    }
    let s = levels as f64;
    let objective = |alpha: f64| -> Result<f64> {
        let m = cube_root_mass(pdf, alpha, 1e-13)?;
        Ok(m.powi(3) / (4.0 * s * s) + pdf::clip_loss(pdf, alpha, 1e-13)?)
    };

    const SCAN: usize = 64;
    let xs: Vec<f64> = (0..=SCAN).map(|i| lo + (hi - lo) * i as f64 / SCAN as f64).collect();
    let mut values = Vec::with_capacity(xs.len());
    for &x in &xs {
        values.push(objective(x)?);
    }
    let best = (0..values.len())
        .min_by(|&i, &j| values[i].total_cmp(&values[j]))
        .expect("scan is non-empty");
    let bracketed = best != 0 && best != SCAN;
    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + 1).min(SCAN)];

    let mut failure = None;
    let (alpha, error) = golden_section(
        |x| match objective(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        a,
        b,
        1e-6,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(AlphaSearch { alpha, error, bracketed })
}
