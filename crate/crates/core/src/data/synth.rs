//! Least-squares tasks whose per-sample gradients at the planted parameters
//! have iid Laplace coordinates.
//!
//! Targets are `y = W* x + b* + ε` with `ε ~ Laplace(0, γ)` per output, so
//! the per-sample bias gradient at `(W*, b*)` is exactly `-ε`. With no inputs
//! the task is mean estimation.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::laplace::LaplaceModel;

#[derive(Debug, Clone)]
pub struct SynthTask {
    pub dataset: Dataset,
    /// Parameters the data were generated from, laid out as the linear
    /// regression layers `[W (outputs x inputs), b]`.
    pub planted: Vec<f64>,
    /// Exact least-squares minimizer in the same layout.
    pub optimum: Vec<f64>,
    /// `(1/2n) Σ ‖ŷ - y‖²` at the optimum.
    pub optimal_loss: f64,
}

/// Mean-estimation task with `dim` Laplace-noised outputs.
pub fn synth_laplace_task<R: Rng + ?Sized>(dim: usize, n: usize, gamma: f64, rng: &mut R) -> Result<SynthTask> {
    synth_regression_task(0, dim, n, gamma, rng)
}

pub fn synth_regression_task<R: Rng + ?Sized>(
    inputs: usize,
    outputs: usize,
    n: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<SynthTask> {
    if outputs == 0 || n == 0 {
        return Err(Error::InvalidParameter("synthetic task needs outputs >= 1 and n >= 1".into()));
    }
    let noise = LaplaceModel::new(gamma)?;
    let w_scale = if inputs > 0 { 1.0 / (inputs as f64).sqrt() } else { 0.0 };
    let weights: Vec<f64> = (0..outputs * inputs)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            w_scale * z
        })
        .collect();
    let bias: Vec<f64> = (0..outputs).map(|_| rng.random_range(-1.0..1.0)).collect();

    let features: Vec<f64> = (0..n * inputs).map(|_| StandardNormal.sample(rng)).collect();
    let mut targets = Vec::with_capacity(n * outputs);
    for i in 0..n {
        let x = &features[i * inputs..(i + 1) * inputs];
        for o in 0..outputs {
            let w = &weights[o * inputs..(o + 1) * inputs];
            let clean: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias[o];
            targets.push(clean + noise.draw(rng));
        }
    }

    let design = DMatrix::from_fn(n, inputs + 1, |i, j| if j < inputs { features[i * inputs + j] } else { 1.0 });
    let rhs = DMatrix::from_fn(n, outputs, |i, o| targets[i * outputs + o]);
    let solution = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;

    let mut optimum = Vec::with_capacity(outputs * (inputs + 1));
    for o in 0..outputs {
        for j in 0..inputs {
            optimum.push(solution[(j, o)]);
        }
    }
    for o in 0..outputs {
        optimum.push(solution[(inputs, o)]);
    }
    let residual = &design * &solution - &rhs;
    let optimal_loss = residual.norm_squared() / (2.0 * n as f64);

    let mut planted = weights;
    planted.extend_from_slice(&bias);
    let dataset = Dataset::new(
        format!("synthetic-laplace-{inputs}x{outputs}"),
        features,
        inputs,
        Targets::Values { values: targets, width: outputs },
    )?;
    Ok(SynthTask { dataset, planted, optimum, optimal_loss })
}

/// Two-class points in `[-1, 1]²` labelled by the side of a random line
/// through the origin, with points inside a margin of 0.1 rejected.
pub fn synth_separable_task<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("separable task needs n >= 1".into()));
    }
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (nx, ny) = (angle.cos(), angle.sin());
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    while labels.len() < n {
        let x: f64 = rng.random_range(-1.0..1.0);
        let y: f64 = rng.random_range(-1.0..1.0);
        let side = nx * x + ny * y;
        if side.abs() < 0.1 {
            continue;
        }
        features.extend([x, y]);
        labels.push(u32::from(side > 0.0));
    }
    Dataset::new("synthetic-separable-2d", features, 2, Targets::Classes { labels, classes: 2 })
}
