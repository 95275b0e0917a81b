use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;

/// Relative tolerance for the `∫ λ = s` budget check.
const BUDGET_RTOL: f64 = 1e-6;
/// Tolerance on the cumulative integral when placing grid points.
const ROOT_TOL: f64 = 1e-11;
/// Quadrature tolerance for the short pieces used while placing points.
const PIECE_TOL: f64 = 1e-13;
const POSITIVITY_PROBES: usize = 257;

/// Density of quantization points `λ(g)` on `[-α, α]`, integrating to the
/// level count `s`. The local interval width around `g` is about `1/λ(g)`.
#[derive(Clone)]
pub struct DensityFunction {
    func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    alpha: f64,
    budget: f64,
    symmetric: bool,
}

impl fmt::Debug for DensityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFunction")
            .field("alpha", &self.alpha)
            .field("budget", &self.budget)
            .field("symmetric", &self.symmetric)
            .finish_non_exhaustive()
    }
}

impl DensityFunction {
    /// Wraps `func` after checking it is positive on `(-α, α)` and integrates
    /// to `budget` there.
    pub fn new<F>(func: F, alpha: f64, budget: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::InvalidParameter(format!("budget must be positive, got {budget}")));
        }
        let mut symmetric = true;
        for i in 1..POSITIVITY_PROBES {
            let x = -alpha + 2.0 * alpha * i as f64 / POSITIVITY_PROBES as f64;
            let v = func(x);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidDensity(format!("density is {v} at g = {x}")));
            }
            let mirrored = func(-x);
            if (v - mirrored).abs() > 1e-14 * v {
                symmetric = false;
            }
        }
        let density = Self { func: Arc::new(func), alpha, budget, symmetric };
        let integral = density.integral(-alpha, alpha, 1e-12)?;
        if (integral - budget).abs() > BUDGET_RTOL * budget {
            return Err(Error::Normalization { integral, budget });
        }
        Ok(density)
    }

    /// `λ(g) = s / (2α)`.
    pub fn uniform(alpha: f64, levels: usize) -> Result<Self> {
        let height = levels as f64 / (2.0 * alpha);
        Self::new(move |_| height, alpha, levels as f64)
    }

    pub fn eval(&self, g: f64) -> f64 {
        (self.func)(g)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `∫_a^b λ`, split at zero where most densities here have a kink.
    pub fn integral(&self, a: f64, b: f64, tol: f64) -> Result<f64> {
        Ok(quad::integrate_with_breaks(|g| (self.func)(g), a, b, &[0.0], tol)?.value)
    }

    /// `∫_{-α}^{x} λ`.
    pub fn cumulative(&self, x: f64) -> Result<f64> {
        self.integral(-self.alpha, x, 1e-12)
    }
}

/// Sorted quantization points `l_0 < l_1 < ... < l_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationGrid {
    points: Vec<f64>,
}

impl QuantizationGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("grid points must be finite".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "grid points must strictly increase: {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self { points })
    }

    /// Evenly spaced grid on `[-α, α]`; exactly symmetric.
    pub fn uniform(alpha: f64, levels: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) || levels == 0 {
            return Err(Error::InvalidParameter(format!(
                "uniform grid needs alpha > 0 and s >= 1, got alpha = {alpha}, s = {levels}"
            )));
        }
        let s = levels as f64;
        let points = (0..=levels)
            .map(|k| match k {
                0 => -alpha,
                k if k == levels => alpha,
                k => alpha * (2.0 * k as f64 - s) / s,
            })
            .collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Level count `s` (number of intervals).
    pub fn levels(&self) -> usize {
        self.points.len() - 1
    }

    pub fn lower(&self) -> f64 {
        self.points[0]
    }

    pub fn upper(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| w[1] - w[0])
    }

    /// Largest `|l_k + l_{s-k}|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|k| (self.points[k] + self.points[n - 1 - k]).abs())
            .fold(0.0, f64::max)
    }
}

/// Places `l_k` where `∫_{-α}^{l_k} λ = k`, so each interval holds one unit
/// of density and its width is `1/λ` to first order.
pub fn build_grid(density: &DensityFunction, alpha: f64, levels: usize) -> Result<QuantizationGrid> {
    if levels == 0 {
        return Err(Error::InvalidParameter("level count must be at least 1".into()));
    }
    if (alpha - density.alpha).abs() > 1e-12 * alpha.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "density is defined on [-{}, {}] but alpha = {alpha}",
            density.alpha, density.alpha
        )));
    }
    let s = levels as f64;
    if (density.budget - s).abs() > BUDGET_RTOL * s {
        return Err(Error::Normalization { integral: density.budget, budget: s });
    }

    let mut points = vec![0.0; levels + 1];
    points[0] = -alpha;
    points[levels] = alpha;
    if levels == 1 {
        return QuantizationGrid::new(points);
    }

    if density.symmetric {
        // Solve the upper half from zero and mirror, keeping l_k = -l_{s-k} exact.
        let half = s / 2.0;
        let first = levels / 2 + 1;
        let mut x = 0.0;
        let mut acc = 0.0;
        for k in first..levels {
            let target = k as f64 - half;
            let (next, piece) = place_point(density, x, acc, target, alpha)?;
            points[k] = next;
            points[levels - k] = -next;
            x = next;
            acc += piece;
        }
    } else {
        let mut x = -alpha;
        let mut acc = 0.0;
        for (k, slot) in points.iter_mut().enumerate().take(levels).skip(1) {
            let (next, piece) = place_point(density, x, acc, k as f64, alpha)?;
            *slot = next;
            x = next;
            acc += piece;
        }
    }
    QuantizationGrid::new(points)
}

/// Finds `x` in `(from, hi)` with `acc + ∫_from^x λ = target`.
/// Newton steps on the cumulative integral, bisection when a step leaves the bracket.
fn place_point(
    density: &DensityFunction,
    from: f64,
    acc: f64,
    target: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    let need = target - acc;
    let mut lo_b = from;
    let mut hi_b = hi;
    let mut x = from + need / density.eval(from).max(f64::MIN_POSITIVE);
    if !(x > lo_b && x < hi_b) {
        x = 0.5 * (lo_b + hi_b);
    }
    for _ in 0..200 {
        let piece = quad::integrate(|g| density.eval(g), from, x, PIECE_TOL)?.value;
        let resid = piece - need;
        if resid.abs() < ROOT_TOL {
            return Ok((x, piece));
        }
        if resid > 0.0 {
            hi_b = x;
        } else {
            lo_b = x;
        }
        let newton = x - resid / density.eval(x);
        x = if newton > lo_b && newton < hi_b {
            newton
        } else {
            0.5 * (lo_b + hi_b)
        };
        if hi_b - lo_b <= f64::EPSILON * hi.abs().max(1.0) {
            let mid = 0.5 * (lo_b + hi_b);
            let piece = quad::integrate(|g| density.eval(g), from, mid, PIECE_TOL)?.value;
            return Ok((mid, piece));
        }
    }
    Err(Error::Numerical(format!(
        "grid point for cumulative level {target} did not converge"
    )))
}
