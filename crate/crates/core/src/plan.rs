//! Scheme-specific thresholds and grids for one layer.
//!
//! | scheme | threshold α            | grid                      |
//! |--------|------------------------|---------------------------|
//! | TNQ    | `3 ln(1 + √6 s/9) γ̂`   | cube-root Laplace density |
//! | TUQ    | `v(s) γ̂`               | uniform                   |
//! | NQ     | `max_j |g_j|`          | cube-root Laplace density |
//! | UQ     | `max_j |g_j|`          | uniform                   |
//!
//! The encoded header carries `(α, γ̂)`, which is all a receiver needs to
//! rebuild the same grid.

use rand::Rng;

use crate::error::{Error, Result};
use crate::laplace::{self, LaplaceModel};
use crate::quantizer::{
    self, build_grid, levels_for_bits, EncodedGradient, GradientVector, QuantConfig,
    QuantizationGrid, Scheme,
};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    pub config: QuantConfig,
    pub grid: QuantizationGrid,
}

/// Rebuilds the grid a sender used from the header fields.
pub fn grid_for(scheme: Scheme, bits: u8, alpha: f64, gamma: f64) -> Result<QuantizationGrid> {
    let s = levels_for_bits(bits);
    match scheme {
        Scheme::Tuq | Scheme::Uq => QuantizationGrid::uniform(alpha, s),
        Scheme::Tnq | Scheme::Nq => {
            let model = LaplaceModel::new(gamma)?;
            let density = laplace::optimal_density_tnq(s, &model, alpha)?;
            build_grid(&density, alpha, s)
        }
    }
}

/// Picks α and the grid for `g`. Returns `None` for an all-zero gradient,
/// which has no Laplace scale and is sent as a zero marker instead.
pub fn plan_layer(scheme: Scheme, bits: u8, g: &GradientVector) -> Result<Option<LayerPlan>> {
    let model = match laplace::estimate_gamma(g) {
        Ok(m) => m,
        Err(Error::Degenerate(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let s = levels_for_bits(bits);
    let alpha = match scheme {
        Scheme::Tnq => laplace::optimal_alpha_tnq(s, &model),
        Scheme::Tuq => laplace::optimal_alpha_tuq(s, &model)?,
        Scheme::Nq | Scheme::Uq => g.max_abs(),
    };
    let config = QuantConfig::new(scheme, bits, alpha, model.scale())?;
    let grid = grid_for(scheme, bits, alpha, model.scale())?;
    Ok(Some(LayerPlan { config, grid }))
}

/// Plans and encodes one layer.
pub fn compress_layer<R: Rng + ?Sized>(
    scheme: Scheme,
    bits: u8,
    g: &GradientVector,
    rng: &mut R,
) -> Result<EncodedGradient> {
    match plan_layer(scheme, bits, g)? {
        Some(plan) => quantizer::encode(g, &plan.config, &plan.grid, rng),
        None => Ok(EncodedGradient::zero_marker(scheme, bits, g.dim())),
    }
}

/// Decodes a layer using only what its header carries.
pub fn decompress_layer(e: &EncodedGradient) -> Result<GradientVector> {
    if e.header.is_zero_marker() {
        return GradientVector::zeros(e.header.dim as usize);
    }
    let grid = grid_for(e.header.scheme, e.header.bits, e.header.alpha, e.header.gamma)?;
    quantizer::decode(e, &grid)
}
