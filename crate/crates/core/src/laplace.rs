//! Laplace gradient model `p(g) = exp(-|g|/γ) / (2γ)` and the closed-form
//! quantizer parameters it yields.

use rand::Rng;

use crate::error::{Error, Result};
use crate::pdf::Pdf;
use crate::quantizer::{DensityFunction, GradientVector};

const SQRT6: f64 = 2.449_489_742_783_178;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceModel {
    scale: f64,
}

impl LaplaceModel {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!("Laplace scale must be positive, got {scale}")));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn pdf(&self, g: f64) -> f64 {
        (-g.abs() / self.scale).exp() / (2.0 * self.scale)
    }

    pub fn cdf(&self, g: f64) -> f64 {
        if g < 0.0 {
            0.5 * (g / self.scale).exp()
        } else {
            1.0 - 0.5 * (-g / self.scale).exp()
        }
    }

    /// One draw by inverting the CDF.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // u in (-1/2, 1/2]; 1 - 2|u| stays in [0, 1) so guard the log.
        let u = 0.5 - rng.random::<f64>();
        let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
        -self.scale * u.signum() * tail.ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, dim: usize) -> Result<GradientVector> {
        GradientVector::new((0..dim).map(|_| self.draw(rng)).collect())
    }
}

impl Pdf for LaplaceModel {
    fn density(&self, x: f64) -> f64 {
        self.pdf(x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn upper_clip_loss(&self, a: f64) -> Option<f64> {
        // ∫_a^∞ (g-a)² e^{-g/γ}/(2γ) dg = γ² e^{-a/γ} for a >= 0
        (a >= 0.0).then(|| self.scale * self.scale * (-a / self.scale).exp())
    }

    fn lower_clip_loss(&self, a: f64) -> Option<f64> {
        self.upper_clip_loss(a)
    }
}

/// Maximum-likelihood scale: the mean absolute coordinate.
pub fn estimate_gamma(g: &GradientVector) -> Result<LaplaceModel> {
    let mean_abs = g.as_slice().iter().map(|v| v.abs()).sum::<f64>() / g.dim() as f64;
    if mean_abs == 0.0 {
        return Err(Error::Degenerate("all-zero gradient has no Laplace scale".into()));
    }
    LaplaceModel::new(mean_abs)
}

/// Truncation threshold minimizing the truncated non-uniform error:
/// `α = 3 ln(1 + √6 s / 9) γ`.
pub fn optimal_alpha_tnq(levels: usize, model: &LaplaceModel) -> f64 {
    3.0 * (1.0 + SQRT6 * levels as f64 / 9.0).ln() * model.scale
}

/// Coefficient `C` of `λ(g) = C e^{-|g|/(3γ)}` that makes `∫_{-α}^{α} λ = s`.
pub fn optimal_density_coefficient(levels: usize, model: &LaplaceModel, alpha: f64) -> f64 {
    let gamma = model.scale;
    levels as f64 / (6.0 * gamma * (-(-alpha / (3.0 * gamma)).exp_m1()))
}

/// Cube-root Laplace density `λ(g) = C e^{-|g|/(3γ)}` on `[-α, α]`.
///
/// At the optimal threshold `C = (3√6 + 2s) / (12γ)`.
pub fn optimal_density_tnq(levels: usize, model: &LaplaceModel, alpha: f64) -> Result<DensityFunction> {
    if levels == 0 {
        return Err(Error::InvalidParameter("level count must be at least 1".into()));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let coef = optimal_density_coefficient(levels, model, alpha);
    let decay = 1.0 / (3.0 * model.scale);
    DensityFunction::new(move |g: f64| coef * (-g.abs() * decay).exp(), alpha, levels as f64)
        .map_err(|e| match e {
            Error::Normalization { integral, budget } => Error::Numerical(format!(
                "optimal density integrates to {integral}, expected {budget}"
            )),
            other => other,
        })
}

/// Root `v` of `v e^v = s²` with its residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSolution {
    pub value: f64,
    pub residual: f64,
}

/// Solves `v e^v = s²` by Newton's method inside the bracket
/// `[0, 2 ln(s²) + 2]`, bisecting whenever a step leaves it.
pub fn solve_v(levels: usize) -> Result<RootSolution> {
    if levels == 0 {
        return Err(Error::InvalidParameter("level count must be at least 1".into()));
    }
    let target = (levels as f64).powi(2);
    let f = |v: f64| v * v.exp() - target;
    let mut lo = 0.0;
    let mut hi = 2.0 * target.ln() + 2.0;
    let l = target.ln();
    let mut v = (l - (l + 1.0).ln() + 1.0).clamp(lo, hi);
    let tol = 1e-10 * target;
    for _ in 0..100 {
        let fv = f(v);
        if fv.abs() < tol {
            return Ok(RootSolution { value: v, residual: fv.abs() });
        }
        if fv > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let step = v - fv / ((1.0 + v) * v.exp());
        v = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
    }
    Err(Error::Numerical(format!("v e^v = {target} did not converge after 100 iterations")))
}

/// Truncation threshold for the truncated uniform quantizer, `α = v(s) γ`.
pub fn optimal_alpha_tuq(levels: usize, model: &LaplaceModel) -> Result<f64> {
    Ok(solve_v(levels)?.value * model.scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};

    #[test]
    fn estimate_gamma_examples() {
        let g = GradientVector::new(vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(estimate_gamma(&g).unwrap().scale(), 1.0);
        let g = GradientVector::new(vec![0.0, 2.0]).unwrap();
        assert_eq!(estimate_gamma(&g).unwrap().scale(), 1.0);
        let g = GradientVector::zeros(3).unwrap();
        assert!(matches!(estimate_gamma(&g), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pdf_values() {
        let m = LaplaceModel::new(1.0).unwrap();
        assert_eq!(m.pdf(0.0), 0.5);
        let m = LaplaceModel::new(2.0).unwrap();
        assert!((m.pdf(2.0) - (-1f64).exp() / 4.0).abs() < 1e-16);
        assert!(LaplaceModel::new(0.0).is_err());
        assert!(LaplaceModel::new(f64::NAN).is_err());
    }

    #[test]
    fn alpha_tnq_constants() {
        let m = LaplaceModel::new(1.0).unwrap();
        assert!((optimal_alpha_tnq(3, &m) - 1.79).abs() < 0.005);
        assert!((optimal_alpha_tnq(7, &m) - 3.20).abs() < 0.005);
        assert!((optimal_alpha_tnq(15, &m) - 4.88).abs() < 0.005);
        let m2 = LaplaceModel::new(2.0).unwrap();
        assert!((optimal_alpha_tnq(3, &m2) - 3.58).abs() < 0.01);
    }

    #[test]
    fn density_coefficient_closed_form() {
        let m = LaplaceModel::new(1.0).unwrap();
        for s in [1usize, 3, 7, 15, 255] {
            let a = optimal_alpha_tnq(s, &m);
            let c = optimal_density_coefficient(s, &m, a);
            let closed = (3.0 * SQRT6 + 2.0 * s as f64) / 12.0;
            assert!((c - closed).abs() < 1e-12 * closed, "s={s}: {c} vs {closed}");
        }
        let c3 = optimal_density_coefficient(3, &m, optimal_alpha_tnq(3, &m));
        assert!((c3 - 1.1124).abs() < 1e-4);
    }

    #[test]
    fn density_ratio_matches_threshold() {
        let m = LaplaceModel::new(1.3).unwrap();
        let s = 7;
        let a = optimal_alpha_tnq(s, &m);
        let d = optimal_density_tnq(s, &m, a).unwrap();
        let ratio = d.eval(0.0) / d.eval(a);
        assert!((ratio - (1.0 + SQRT6 * s as f64 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn solve_v_examples() {
        assert!((solve_v(3).unwrap().value - 1.68).abs() < 0.005);
        assert!((solve_v(7).unwrap().value - 2.85).abs() < 0.005);
        assert!((solve_v(15).unwrap().value - 4.02).abs() < 0.005);
        // Omega constant, by bisection on [0, 1].
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() > 1.0 { hi = mid } else { lo = mid }
        }
        assert!((solve_v(1).unwrap().value - lo).abs() < 1e-10);
        assert!((lo - 0.567_143).abs() < 1e-6);
        assert!(solve_v(0).is_err());
    }

    #[test]
    fn solve_v_large_levels() {
        let mut prev = 0.0;
        for s in [1usize, 2, 10, 255, 1023, 4095, 65_535] {
            let r = solve_v(s).unwrap();
            let t = (s as f64).powi(2);
            assert!(r.residual < 1e-10 * t);
            assert!(r.value > prev);
            prev = r.value;
        }
    }

    #[test]
    fn alpha_tuq_scaling() {
        let m = LaplaceModel::new(0.5).unwrap();
        assert!((optimal_alpha_tuq(15, &m).unwrap() - 2.01).abs() < 0.005);
    }

    #[test]
    fn sample_moments() {
        let m = LaplaceModel::new(1.0).unwrap();
        let mut r = rng::global(11, Purpose::Test);
        let x = m.sample(&mut r, 1_000_000).unwrap();
        let n = x.dim() as f64;
        let mean = x.as_slice().iter().sum::<f64>() / n;
        let mabs = x.as_slice().iter().map(|v| v.abs()).sum::<f64>() / n;
        assert!(mean.abs() < 0.01);
        assert!((mabs - 1.0).abs() < 0.01);
    }

    #[test]
    fn mle_is_consistent() {
        let m = LaplaceModel::new(0.5).unwrap();
        let x = m.sample(&mut rng::global(12, Purpose::Test), 1_000_000).unwrap();
        assert!((estimate_gamma(&x).unwrap().scale() - 0.5).abs() < 0.002);
    }
}
