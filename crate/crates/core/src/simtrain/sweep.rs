use std::io::Write;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::train::{self, Compression, FLOAT_BITS};
use crate::error::Result;
use crate::quantizer::Scheme;

/// Grid of `(scheme, bits, seed)` runs. `None` in `schemes` is the
/// uncompressed baseline, run once per seed and reported with 32 bits.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub schemes: Vec<Option<Scheme>>,
    pub bits: Vec<u8>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub label: String,
    pub bits: u8,
    pub seed: u64,
    pub final_loss: f64,
    pub final_score: f64,
    pub total_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub label: String,
    pub bits: u8,
    pub loss_mean: f64,
    pub loss_std: f64,
    pub score_mean: f64,
    pub score_std: f64,
    pub bits_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub summaries: Vec<CellSummary>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

impl SweepReport {
    pub fn summary(&self, label: &str, bits: u8) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| s.label == label && s.bits == bits)
    }

    /// Per-seed rows followed by `mean` and `std` rows for every cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "scheme,bits,seed,final_loss,final_score,total_bits")?;
        for c in &self.cells {
            writeln!(w, "{},{},{},{:e},{:e},{}", c.label, c.bits, c.seed, c.final_loss, c.final_score, c.total_bits)?;
        }
        for s in &self.summaries {
            writeln!(w, "{},{},mean,{:e},{:e},{:e}", s.label, s.bits, s.loss_mean, s.score_mean, s.bits_mean)?;
            writeln!(w, "{},{},std,{:e},{:e},", s.label, s.bits, s.loss_std, s.score_std)?;
        }
        Ok(())
    }
}

/// Runs every cell; rows come out in `(scheme, bits, seed)` order whatever
/// the scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    let mut jobs: Vec<(Compression, u8, u64)> = Vec::new();
    for scheme in &spec.schemes {
        match scheme {
            None => jobs.extend(spec.seeds.iter().map(|&s| (Compression::None, FLOAT_BITS as u8, s))),
            Some(scheme) => {
                for &bits in &spec.bits {
                    jobs.extend(spec.seeds.iter().map(|&s| (Compression::Quantized { scheme: *scheme, bits }, bits, s)));
                }
            }
        }
    }

    let datasets = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = spec.base.clone();
            cfg.train.seed = seed;
            let (train, test) = cfg.load_data()?;
            let model = cfg.model_spec(&train)?;
            Ok((seed, train, test, model))
        })
        .collect::<Result<Vec<_>>>()?;

    let cells = jobs
        .par_iter()
        .map(|&(compression, bits, seed)| {
            let (_, data, test, model) = datasets.iter().find(|d| d.0 == seed).unwrap();
            let mut cfg = spec.base.train.clone();
            cfg.seed = seed;
            cfg.compression = compression;
            let m = train::run(&cfg, model, data, test.as_ref())?;
            Ok(SweepCell {
                label: compression.label(),
                bits,
                seed,
                final_loss: m.final_loss(),
                final_score: m.final_score(),
                total_bits: m.total_bits(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summaries = Vec::new();
    for chunk in cells.chunk_by(|a, b| a.label == b.label && a.bits == b.bits) {
        let losses: Vec<f64> = chunk.iter().map(|c| c.final_loss).collect();
        let scores: Vec<f64> = chunk.iter().map(|c| c.final_score).collect();
        let bits: Vec<f64> = chunk.iter().map(|c| c.total_bits as f64).collect();
        let (loss_mean, loss_std) = mean_std(&losses);
        let (score_mean, score_std) = mean_std(&scores);
        summaries.push(CellSummary {
            label: chunk[0].label.clone(),
            bits: chunk[0].bits,
            loss_mean,
            loss_std,
            score_mean,
            score_std,
            bits_mean: mean_std(&bits).0,
        });
    }
    Ok(SweepReport { cells, summaries })
}
