//! Plain-text experiment configuration: one `key = value` per line, `#`
//! starts a comment. Relative paths resolve against the config file's
//! directory.
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `dataset` | `mnist`, `synthetic`, `separable` | required |
//! | `images`, `labels` | IDX paths (mnist) | required for mnist |
//! | `subset` | rows kept from the IDX files | all |
//! | `test_fraction` | held-out share (mnist, separable) | 0.2 |
//! | `synth_inputs` | input width of the synthetic regression | 0 |
//! | `synth_outputs` | output width of the synthetic regression | 100 |
//! | `synth_samples` | training rows (synthetic, separable) | 100 |
//! | `synth_test_samples` | test rows (synthetic); 0 scores on the training rows | 100 |
//! | `synth_gamma` | Laplace noise scale (synthetic) | 1.0 |
//! | `data_seed` | seed for data generation and splits | `seed` |
//! | `model` | `linear`, `logistic`, `mlp` | by dataset |
//! | `hidden` | comma list of hidden widths (mlp) | 32 |
//! | `clients` | N | 4 |
//! | `batch` | `full` or B | 32 |
//! | `lr`, `momentum`, `weight_decay` | optimizer | 0.01, 0.9, 0.0005 |
//! | `rounds` | T | 100 |
//! | `scheme` | `dsgd`, `tnq`, `tuq`, `nq`, `uq` | dsgd |
//! | `bits` | b | 3 |
//! | `weights` | `equal`, `shards` or a comma list | equal |
//! | `partition` | `equal` or a comma list of shard weights | equal |
//! | `seed` | run seed | 0 |
//! | `eval_every`, `tail` | loss evaluation cadence, averaging window | 1, 1 |
//! | `metrics`, `gammas` | output CSV paths | none |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::model::{ModelKind, ModelSpec};
use super::train::{Batch, Compression, TrainConfig, WeightMode};
use crate::data::{self, Dataset, PartitionMode};
use crate::error::{Error, Result};
use crate::quantizer::Scheme;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Idx { images: PathBuf, labels: PathBuf, subset: Option<usize>, test_fraction: f64 },
    Synthetic { inputs: usize, outputs: usize, samples: usize, test_samples: usize, gamma: f64 },
    Separable { samples: usize, test_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub data_seed: Option<u64>,
    pub model: ModelKind,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub metrics: Option<PathBuf>,
    pub gammas: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "dataset", "images", "labels", "subset", "test_fraction", "synth_inputs", "synth_outputs", "synth_samples",
    "synth_test_samples", "synth_gamma", "data_seed", "model", "hidden", "clients", "batch", "lr", "momentum",
    "weight_decay", "rounds", "scheme", "bits", "weights", "partition", "seed", "eval_every", "tail", "metrics",
    "gammas",
];

struct Entries<'a> {
    map: BTreeMap<&'a str, &'a str>,
    base: &'a Path,
}

impl Entries<'_> {
    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| Error::Config(format!("key '{key}': cannot parse '{raw}'"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, raw: &str) -> Result<Vec<T>> {
        raw.split(',')
            .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("key '{key}': cannot parse '{raw}'"))))
            .collect()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.map.get(key).map(|p| self.base.join(p))
    }

    fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key).ok_or_else(|| Error::Config(format!("key '{key}' is required")))
    }
}

/// Parses config text; `base` is the directory relative paths resolve to.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key = value, got '{line}'", n + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key '{key}' on line {}", n + 1)));
        }
        if map.insert(key, value).is_some() {
            return Err(Error::Config(format!("key '{key}' given twice")));
        }
    }
    let e = Entries { map, base };

    let dataset: String = e.get("dataset", String::new())?;
    let test_fraction = e.get("test_fraction", 0.2)?;
    let samples = e.get("synth_samples", 100usize)?;
    let (data, default_model) = match dataset.as_str() {
        "mnist" => (
            DataSource::Idx {
                images: e.required_path("images")?,
                labels: e.required_path("labels")?,
                subset: e.map.get("subset").map(|_| e.get("subset", 0usize)).transpose()?,
                test_fraction,
            },
            ModelKind::LogisticRegression,
        ),
        "synthetic" => (
            DataSource::Synthetic {
                inputs: e.get("synth_inputs", 0)?,
                outputs: e.get("synth_outputs", 100)?,
                samples,
                test_samples: e.get("synth_test_samples", 100)?,
                gamma: e.get("synth_gamma", 1.0)?,
            },
            ModelKind::LinearRegression,
        ),
        "separable" => (DataSource::Separable { samples, test_fraction }, ModelKind::LogisticRegression),
        "" => return Err(Error::Config("key 'dataset' is required".into())),
        other => return Err(Error::Config(format!("key 'dataset': unknown dataset '{other}'"))),
    };

    let model = match e.map.get("model") {
        Some(raw) => raw.parse().map_err(|_| Error::Config(format!("key 'model': unknown model '{raw}'")))?,
        None => default_model,
    };
    let hidden = match e.map.get("hidden") {
        Some(raw) => e.list("hidden", raw)?,
        None => vec![32],
    };

    let batch = match e.map.get("batch") {
        Some(&"full") => Batch::Full,
        _ => Batch::Sampled(e.get("batch", 32)?),
    };
    let compression = match e.map.get("scheme").copied().unwrap_or("dsgd") {
        "dsgd" | "none" => Compression::None,
        raw => Compression::Quantized {
            scheme: raw.parse::<Scheme>().map_err(|_| Error::Config(format!("key 'scheme': unknown scheme '{raw}'")))?,
            bits: e.get("bits", 3u8)?,
        },
    };
    let weights = match e.map.get("weights").copied().unwrap_or("equal") {
        "equal" => WeightMode::Equal,
        "shards" => WeightMode::ShardSizes,
        raw => WeightMode::Explicit(e.list("weights", raw)?),
    };
    let partition = match e.map.get("partition").copied().unwrap_or("equal") {
        "equal" => PartitionMode::IidEqual,
        raw => PartitionMode::IidSized(e.list("partition", raw)?),
    };
    let d = TrainConfig::default();
    let train = TrainConfig {
        clients: e.get("clients", d.clients)?,
        batch,
        lr: e.get("lr", d.lr)?,
        momentum: e.get("momentum", d.momentum)?,
        weight_decay: e.get("weight_decay", d.weight_decay)?,
        rounds: e.get("rounds", d.rounds)?,
        compression,
        weights,
        partition,
        seed: e.get("seed", d.seed)?,
        eval_every: e.get("eval_every", d.eval_every)?,
        tail: e.get("tail", d.tail)?,
    };
    train.validate()?;
    Ok(ExperimentConfig {
        data,
        data_seed: e.map.get("data_seed").map(|_| e.get("data_seed", 0u64)).transpose()?,
        model,
        hidden,
        train,
        metrics: e.path("metrics"),
        gammas: e.path("gammas"),
    })
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        parse_config(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.train.seed)
    }

    /// Loads or generates `(train, test)`. A synthetic task with
    /// `synth_test_samples = 0` has no test set.
    pub fn load_data(&self) -> Result<(Dataset, Option<Dataset>)> {
        let seed = self.data_seed();
        match &self.data {
            DataSource::Idx { images, labels, subset, test_fraction } => {
                let mut all = data::load_idx(images, labels)?;
                if let Some(n) = subset {
                    if *n == 0 || *n > all.len() {
                        return Err(Error::Config(format!("key 'subset': {n} outside 1..={}", all.len())));
                    }
                    let mut order: Vec<usize> = (0..all.len()).collect();
                    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng::global(seed, Purpose::Split));
                    order.truncate(*n);
                    order.sort_unstable();
                    all = all.select(&order)?;
                }
                let (train, test) = all.split(*test_fraction, &mut rng::global(seed, Purpose::Split))?;
                Ok((train, Some(test)))
            }
            DataSource::Synthetic { inputs, outputs, samples, test_samples, gamma } => {
                let task = data::synth_regression_task(
                    *inputs,
                    *outputs,
                    samples + test_samples,
                    *gamma,
                    &mut rng::global(seed, Purpose::Synthetic),
                )?;
                let train: Vec<usize> = (0..*samples).collect();
                let test: Vec<usize> = (*samples..samples + test_samples).collect();
                let test = if test.is_empty() { None } else { Some(task.dataset.select(&test)?) };
                Ok((task.dataset.select(&train)?, test))
            }
            DataSource::Separable { samples, test_fraction } => {
                let all = data::synth_separable_task(*samples, &mut rng::global(seed, Purpose::Synthetic))?;
                let (train, test) = all.split(*test_fraction, &mut rng::global(seed, Purpose::Split))?;
                Ok((train, Some(test)))
            }
        }
    }

    pub fn model_spec(&self, train: &Dataset) -> Result<ModelSpec> {
        let mut dims = vec![train.dim()];
        if self.model == ModelKind::Mlp {
            dims.extend(&self.hidden);
        }
        dims.push(train.outputs());
        ModelSpec::new(self.model, dims)
    }
}
