//! Datasets, IDX ingestion, synthetic tasks and client partitioning.

mod idx;
mod partition;
mod synth;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels};
pub use partition::{partition, Partition, PartitionMode};
pub use synth::{synth_laplace_task, synth_regression_task, synth_separable_task, SynthTask};

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<u32>, classes: usize },
    /// Row-major `n x width` regression targets.
    Values { values: Vec<f64>, width: usize },
}

/// Row-major feature matrix plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Vec<f64>,
    dim: usize,
    len: usize,
    targets: Targets,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<f64>, dim: usize, targets: Targets) -> Result<Self> {
        let len = match &targets {
            Targets::Classes { labels, classes } => {
                if let Some(l) = labels.iter().find(|&&l| l as usize >= *classes) {
                    return Err(Error::Consistency(format!("label {l} outside {classes} classes")));
                }
                labels.len()
            }
            Targets::Values { values, width } => {
                if *width == 0 || values.len() % width != 0 {
                    return Err(Error::Consistency(format!(
                        "{} target values do not form rows of width {width}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Consistency("non-finite regression target".into()));
                }
                values.len() / width
            }
        };
        if len == 0 {
            return Err(Error::EmptyInput);
        }
        if features.len() != len * dim {
            return Err(Error::Consistency(format!(
                "{} feature values for {len} rows of width {dim}",
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Consistency("non-finite feature".into()));
        }
        Ok(Self { name: name.into(), features, dim, len, targets })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Input width `d_in`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> Option<u32> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels[i]),
            Targets::Values { .. } => None,
        }
    }

    pub fn target_row(&self, i: usize) -> Option<&[f64]> {
        match &self.targets {
            Targets::Values { values, width } => Some(&values[i * width..(i + 1) * width]),
            Targets::Classes { .. } => None,
        }
    }

    /// Output width: class count or regression target width.
    pub fn outputs(&self) -> usize {
        match &self.targets {
            Targets::Classes { classes, .. } => *classes,
            Targets::Values { width, .. } => *width,
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len {
                return Err(Error::InvalidParameter(format!("row {i} out of {}", self.len)));
            }
            features.extend_from_slice(self.row(i));
        }
        let targets = match &self.targets {
            Targets::Classes { labels, classes } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            Targets::Values { values, width } => Targets::Values {
                values: indices
                    .iter()
                    .flat_map(|&i| values[i * width..(i + 1) * width].iter().copied())
                    .collect(),
                width: *width,
            },
        };
        Dataset::new(self.name.clone(), features, self.dim, targets)
    }

    /// Random `(train, test)` split with `round(test_fraction * n)` test rows.
    pub fn split<R: Rng + ?Sized>(&self, test_fraction: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1)")));
        }
        let mut order: Vec<usize> = (0..self.len).collect();
        order.shuffle(rng);
        let n_test = ((self.len as f64) * test_fraction).round() as usize;
        if n_test == 0 || n_test >= self.len {
            return Err(Error::Config(format!(
                "test fraction {test_fraction} leaves an empty split of {} rows",
                self.len
            )));
        }
        let (test, train) = order.split_at(n_test);
        Ok((self.select(train)?, self.select(test)?))
    }

    /// CSV with columns `x0..x{d-1}` followed by `label` or `y0..`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        match &self.targets {
            Targets::Classes { .. } => header.push("label".into()),
            Targets::Values { width, .. } => header.extend((0..*width).map(|j| format!("y{j}"))),
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len {
            let mut cells: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            match &self.targets {
                Targets::Classes { labels, .. } => cells.push(labels[i].to_string()),
                Targets::Values { .. } => {
                    cells.extend(self.target_row(i).unwrap().iter().map(|v| v.to_string()))
                }
            }
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}
