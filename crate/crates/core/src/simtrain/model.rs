//! Small dense models with hand-written backpropagation.
//!
//! Parameters are kept per layer, where every weight matrix and every bias
//! vector is its own layer (and is quantized independently).

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
    Mlp,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" | "linear_regression" => Ok(ModelKind::LinearRegression),
            "logistic" | "logistic_regression" => Ok(ModelKind::LogisticRegression),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::InvalidParameter(format!("unknown model '{other}'"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::LinearRegression => "linear",
            ModelKind::LogisticRegression => "logistic",
            ModelKind::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerShape {
    pub name: String,
    pub len: usize,
}

/// Per-layer parameter (or gradient) vectors.
pub type Params = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy)]
struct Affine {
    inputs: usize,
    outputs: usize,
    weight: Option<usize>,
    bias: usize,
}

/// `layer_dims = [d_in, hidden..., d_out]`; hidden layers use ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub layer_dims: Vec<usize>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, layer_dims: Vec<usize>) -> Result<Self> {
        let ok_len = match kind {
            ModelKind::LinearRegression | ModelKind::LogisticRegression => layer_dims.len() == 2,
            ModelKind::Mlp => layer_dims.len() >= 3,
        };
        if !ok_len {
            return Err(Error::Config(format!("{kind} model cannot have layer dims {layer_dims:?}")));
        }
        // an input width of zero is an intercept-only regression
        let min_in = usize::from(kind != ModelKind::LinearRegression);
        if layer_dims[0] < min_in || layer_dims[1..].contains(&0) {
            return Err(Error::Config(format!("layer dims {layer_dims:?} contain an empty layer")));
        }
        if kind != ModelKind::LinearRegression && *layer_dims.last().unwrap() < 2 {
            return Err(Error::Config("classifiers need at least 2 classes".into()));
        }
        Ok(Self { kind, layer_dims })
    }

    fn affines(&self) -> Vec<Affine> {
        let mut idx = 0;
        self.layer_dims
            .windows(2)
            .map(|w| {
                let weight = (w[0] > 0).then(|| {
                    idx += 1;
                    idx - 1
                });
                idx += 1;
                Affine { inputs: w[0], outputs: w[1], weight, bias: idx - 1 }
            })
            .collect()
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut out = Vec::new();
        for (l, a) in self.affines().iter().enumerate() {
            if a.weight.is_some() {
                out.push(LayerShape { name: format!("w{l}"), len: a.inputs * a.outputs });
            }
            out.push(LayerShape { name: format!("b{l}"), len: a.outputs });
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.len).sum()
    }

    pub fn zeros(&self) -> Params {
        self.layers().iter().map(|l| vec![0.0; l.len]).collect()
    }

    /// Zero init for the convex models; uniform `±1/sqrt(fan_in)` weights
    /// for the MLP.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Params {
        let mut params = self.zeros();
        if self.kind == ModelKind::Mlp {
            for a in self.affines() {
                if let Some(w) = a.weight {
                    let bound = 1.0 / (a.inputs as f64).sqrt();
                    params[w].iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
                }
            }
        }
        params
    }

    pub fn check_data(&self, ds: &Dataset) -> Result<()> {
        if ds.dim() != self.layer_dims[0] {
            return Err(Error::Config(format!(
                "data has {} inputs, model expects {}",
                ds.dim(),
                self.layer_dims[0]
            )));
        }
        let out = *self.layer_dims.last().unwrap();
        match (self.kind, ds.targets()) {
            (ModelKind::LinearRegression, Targets::Values { width, .. }) if *width == out => Ok(()),
            (ModelKind::LogisticRegression | ModelKind::Mlp, Targets::Classes { classes, .. })
                if *classes <= out =>
            {
                Ok(())
            }
            _ => Err(Error::Config(format!("{} model does not fit dataset '{}'", self.kind, ds.name))),
        }
    }

    fn forward(&self, params: &Params, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.clear();
        acts.push(x.to_vec());
        let affines = self.affines();
        let last = affines.len() - 1;
        for (l, a) in affines.iter().enumerate() {
            let input = &acts[l];
            let mut z = params[a.bias].clone();
            if let Some(w) = a.weight {
                let wm = &params[w];
                for (o, zo) in z.iter_mut().enumerate() {
                    let row = &wm[o * a.inputs..(o + 1) * a.inputs];
                    *zo += row.iter().zip(input).map(|(p, q)| p * q).sum::<f64>();
                }
            }
            if l < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
    }

    /// Loss of one sample and the output-layer error `∂loss/∂z`.
    fn output_loss(&self, ds: &Dataset, i: usize, z: &[f64], delta: &mut Vec<f64>) -> f64 {
        delta.clear();
        match self.kind {
            ModelKind::LinearRegression => {
                let y = ds.target_row(i).expect("regression targets");
                let mut loss = 0.0;
                for (zo, yo) in z.iter().zip(y) {
                    let r = zo - yo;
                    loss += 0.5 * r * r;
                    delta.push(r);
                }
                loss
            }
            ModelKind::LogisticRegression | ModelKind::Mlp => {
                let y = ds.label(i).expect("class labels") as usize;
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
                let lse = max + sum.ln();
                delta.extend(z.iter().map(|v| (v - lse).exp()));
                delta[y] -= 1.0;
                lse - z[y]
            }
        }
    }

    /// Mean loss and gradient over `indices` (repeats allowed).
    pub fn loss_and_grad(&self, params: &Params, ds: &Dataset, indices: &[usize]) -> Result<(f64, Params)> {
        if indices.is_empty() {
            return Err(Error::Config("gradient requested on an empty batch".into()));
        }
        let affines = self.affines();
        let mut grad = self.zeros();
        let mut acts = Vec::new();
        let mut delta = Vec::new();
        let mut loss = 0.0;
        for &i in indices {
            self.forward(params, ds.row(i), &mut acts);
            loss += self.output_loss(ds, i, acts.last().unwrap(), &mut delta);
            for (l, a) in affines.iter().enumerate().rev() {
                for (g, d) in grad[a.bias].iter_mut().zip(&delta) {
                    *g += d;
                }
                let Some(w) = a.weight else { continue };
                let input = &acts[l];
                let gw = &mut grad[w];
                for (o, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        let row = &mut gw[o * a.inputs..(o + 1) * a.inputs];
                        row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                    }
                }
                if l > 0 {
                    let wm = &params[w];
                    let mut back = vec![0.0; a.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &wm[o * a.inputs..(o + 1) * a.inputs];
                        back.iter_mut().zip(row).for_each(|(b, p)| *b += d * p);
                    }
                    // ReLU derivative from the stored activation
                    back.iter_mut().zip(input).for_each(|(b, act)| {
                        if *act <= 0.0 {
                            *b = 0.0
                        }
                    });
                    delta = back;
                }
            }
        }
        let scale = 1.0 / indices.len() as f64;
        grad.iter_mut().flatten().for_each(|g| *g *= scale);
        Ok((loss * scale, grad))
    }

    pub fn loss(&self, params: &Params, ds: &Dataset) -> f64 {
        let mut acts = Vec::new();
        let mut delta = Vec::new();
        let total: f64 = (0..ds.len())
            .map(|i| {
                self.forward(params, ds.row(i), &mut acts);
                self.output_loss(ds, i, acts.last().unwrap(), &mut delta)
            })
            .sum();
        total / ds.len() as f64
    }

    /// Classification accuracy, or the coefficient of determination R² for
    /// regression.
    pub fn score(&self, params: &Params, ds: &Dataset) -> f64 {
        let mut acts = Vec::new();
        match ds.targets() {
            Targets::Classes { labels, .. } => {
                let hits = (0..ds.len())
                    .filter(|&i| {
                        self.forward(params, ds.row(i), &mut acts);
                        let z = acts.last().unwrap();
                        let arg = (0..z.len()).max_by(|&a, &b| z[a].total_cmp(&z[b])).unwrap();
                        arg == labels[i] as usize
                    })
                    .count();
                hits as f64 / ds.len() as f64
            }
            Targets::Values { values, width } => {
                // all target entries pooled into one vector
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let sst: f64 = values.iter().map(|t| (t - mean) * (t - mean)).sum();
                let mut sse = 0.0;
                for i in 0..ds.len() {
                    self.forward(params, ds.row(i), &mut acts);
                    let y = &values[i * width..(i + 1) * width];
                    sse += acts.last().unwrap().iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
                }
                if sst == 0.0 {
                    if sse == 0.0 { 1.0 } else { f64::NEG_INFINITY }
                } else {
                    1.0 - sse / sst
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};

    #[test]
    fn layer_layout() {
        let m = ModelSpec::new(ModelKind::Mlp, vec![784, 32, 10]).unwrap();
        let shapes: Vec<usize> = m.layers().iter().map(|l| l.len).collect();
        assert_eq!(shapes, vec![784 * 32, 32, 320, 10]);
        let lr = ModelSpec::new(ModelKind::LogisticRegression, vec![784, 10]).unwrap();
        assert_eq!(lr.num_params(), 7850);
        let mean = ModelSpec::new(ModelKind::LinearRegression, vec![0, 5]).unwrap();
        assert_eq!(mean.layers().len(), 1);
        assert!(ModelSpec::new(ModelKind::Mlp, vec![3, 2]).is_err());
        assert!(ModelSpec::new(ModelKind::LogisticRegression, vec![3, 0]).is_err());
    }

    #[test]
    fn linear_regression_single_sample_closed_form() {
        let ds = Dataset::new("one", vec![2.0, -1.0], 2, Targets::Values { values: vec![3.0], width: 1 }).unwrap();
        let m = ModelSpec::new(ModelKind::LinearRegression, vec![2, 1]).unwrap();
        let params = vec![vec![0.5, 1.0], vec![0.25]];
        // prediction 1 - 1 + 0.25 = 0.25, residual -2.75
        let (loss, g) = m.loss_and_grad(&params, &ds, &[0]).unwrap();
        assert!((loss - 0.5 * 2.75 * 2.75).abs() < 1e-15);
        assert_eq!(g, vec![vec![-5.5, 2.75], vec![-2.75]]);
    }

    #[test]
    fn repeated_sample_batch_matches_single() {
        let ds = Dataset::new(
            "two",
            vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6],
            3,
            Targets::Classes { labels: vec![1, 0], classes: 3 },
        )
        .unwrap();
        let m = ModelSpec::new(ModelKind::Mlp, vec![3, 4, 3]).unwrap();
        let p = m.init(&mut rng::global(1, Purpose::Init));
        let (l1, g1) = m.loss_and_grad(&p, &ds, &[1]).unwrap();
        let (l4, g4) = m.loss_and_grad(&p, &ds, &[1, 1, 1, 1]).unwrap();
        assert!((l1 - l4).abs() < 1e-15);
        for (a, b) in g1.iter().flatten().zip(g4.iter().flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(m.loss_and_grad(&p, &ds, &[]).is_err());
    }

    #[test]
    fn score_accuracy_and_r2() {
        let ds = Dataset::new("c", vec![1.0, -1.0], 1, Targets::Classes { labels: vec![1, 0], classes: 2 }).unwrap();
        let m = ModelSpec::new(ModelKind::LogisticRegression, vec![1, 2]).unwrap();
        let p = vec![vec![-1.0, 1.0], vec![0.0, 0.0]];
        assert_eq!(m.score(&p, &ds), 1.0);
        let ds = Dataset::new("r", vec![], 0, Targets::Values { values: vec![1.0, 3.0], width: 1 }).unwrap();
        let m = ModelSpec::new(ModelKind::LinearRegression, vec![0, 1]).unwrap();
        assert!((m.score(&vec![vec![2.0]], &ds) - 0.0).abs() < 1e-15);
        assert!((m.loss(&vec![vec![2.0]], &ds) - 0.5).abs() < 1e-15);
    }
}
