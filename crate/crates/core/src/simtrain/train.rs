use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use super::model::{ModelSpec, Params};
use crate::data::{partition, Dataset, Partition, PartitionMode};
use crate::error::{Error, Result};
use crate::plan;
use crate::quantizer::{EncodedGradient, GradientVector, Scheme};
use crate::rng::{self, Purpose};

/// Loss above which a run is aborted.
pub const DIVERGENCE_LOSS: f64 = 1e6;
/// Uplink cost of one uncompressed coordinate.
pub const FLOAT_BITS: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batch {
    /// The whole shard, every round.
    Full,
    /// `B` indices drawn uniformly with replacement from the shard.
    Sampled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    /// Uncompressed DSGD baseline.
    None,
    Quantized { scheme: Scheme, bits: u8 },
}

impl Compression {
    pub fn label(&self) -> String {
        match self {
            Compression::None => "dsgd".into(),
            Compression::Quantized { scheme, .. } => scheme.name().to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightMode {
    Equal,
    ShardSizes,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub clients: usize,
    pub batch: Batch,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub rounds: usize,
    pub compression: Compression,
    pub weights: WeightMode,
    pub partition: PartitionMode,
    pub seed: u64,
    /// Training loss is evaluated every `eval_every` rounds, plus the tail.
    pub eval_every: usize,
    /// Number of final rounds averaged into the final loss and score.
    pub tail: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            clients: 4,
            batch: Batch::Sampled(32),
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            rounds: 100,
            compression: Compression::None,
            weights: WeightMode::Equal,
            partition: PartitionMode::IidEqual,
            seed: 0,
            eval_every: 1,
            tail: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.clients == 0 {
            return bad("clients must be at least 1".into());
        }
        if self.batch == Batch::Sampled(0) {
            return bad("batch must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay {} must be nonnegative", self.weight_decay));
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1".into());
        }
        if self.tail == 0 || self.tail > self.rounds {
            return bad(format!("tail {} must lie in 1..={}", self.tail, self.rounds));
        }
        if let Compression::Quantized { bits, .. } = self.compression {
            if !(1..=crate::quantizer::MAX_BITS).contains(&bits) {
                return bad(format!("bits {bits} outside 1..={}", crate::quantizer::MAX_BITS));
            }
        }
        Ok(())
    }

    fn client_weights(&self, part: &Partition) -> Result<Vec<f64>> {
        let w = match &self.weights {
            WeightMode::Equal => vec![1.0 / self.clients as f64; self.clients],
            WeightMode::ShardSizes => part.weights(),
            WeightMode::Explicit(w) => {
                if w.len() != self.clients || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::Config(format!("need {} nonnegative weights, got {w:?}", self.clients)));
                }
                w.clone()
            }
        };
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("client weights sum to {sum}, not 1")));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    pub params: Params,
    pub buffers: Params,
    pub round: usize,
}

impl RoundState {
    pub fn new(params: Params) -> Self {
        let buffers = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self { params, buffers, round: 0 }
    }
}

/// `buf ← m·buf + (ḡ + wd·θ)`, `θ ← θ − η·buf`.
pub fn server_update(state: &mut RoundState, update: &Params, lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
    if update.len() != state.params.len() || update.iter().zip(&state.params).any(|(u, p)| u.len() != p.len()) {
        return Err(Error::Protocol("update shape does not match the model".into()));
    }
    for ((theta, buf), g) in state.params.iter_mut().zip(&mut state.buffers).zip(update) {
        for ((t, b), gj) in theta.iter_mut().zip(buf.iter_mut()).zip(g) {
            *b = momentum * *b + (gj + weight_decay * *t);
            *t -= lr * *b;
        }
    }
    state.round += 1;
    Ok(())
}

/// Minibatch gradient on one client's shard.
pub fn client_gradient<R: Rng + ?Sized>(
    model: &ModelSpec,
    params: &Params,
    data: &Dataset,
    shard: &[usize],
    batch: Batch,
    rng: &mut R,
) -> Result<(f64, Params)> {
    if shard.is_empty() {
        return Err(Error::Config("client shard is empty".into()));
    }
    match batch {
        Batch::Full => model.loss_and_grad(params, data, shard),
        Batch::Sampled(b) => {
            let idx: Vec<usize> = (0..b).map(|_| shard[rng.random_range(0..shard.len())]).collect();
            model.loss_and_grad(params, data, &idx)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientUpload {
    Raw(Params),
    Encoded(Vec<EncodedGradient>),
}

impl ClientUpload {
    pub fn wire_bits(&self) -> u64 {
        match self {
            ClientUpload::Raw(p) => p.iter().map(|l| FLOAT_BITS * l.len() as u64).sum(),
            ClientUpload::Encoded(e) => e.iter().map(EncodedGradient::wire_bits).sum(),
        }
    }

    /// Per-layer γ̂ carried in the headers (mean |g| for raw uploads).
    pub fn gammas(&self) -> Vec<f64> {
        match self {
            ClientUpload::Raw(p) => p
                .iter()
                .map(|l| l.iter().map(|v| v.abs()).sum::<f64>() / l.len().max(1) as f64)
                .collect(),
            ClientUpload::Encoded(e) => e.iter().map(|l| l.header.gamma).collect(),
        }
    }

    fn decode(&self) -> Result<Params> {
        match self {
            ClientUpload::Raw(p) => Ok(p.clone()),
            ClientUpload::Encoded(e) => e
                .iter()
                .map(|l| plan::decompress_layer(l).map(GradientVector::into_inner))
                .collect(),
        }
    }
}

/// Each weight matrix and bias vector is quantized independently.
pub fn compress_per_layer<R: Rng + ?Sized>(grads: Params, compression: Compression, rng: &mut R) -> Result<ClientUpload> {
    match compression {
        Compression::None => Ok(ClientUpload::Raw(grads)),
        Compression::Quantized { scheme, bits } => grads
            .into_iter()
            .map(|layer| plan::compress_layer(scheme, bits, &GradientVector::new(layer)?, rng))
            .collect::<Result<Vec<_>>>()
            .map(ClientUpload::Encoded),
    }
}

/// `ḡ = Σ_i w_i ĝ_i` over decoded uploads.
pub fn aggregate(uploads: &[ClientUpload], weights: &[f64]) -> Result<Params> {
    if uploads.is_empty() || uploads.len() != weights.len() {
        return Err(Error::Protocol(format!("{} uploads for {} weights", uploads.len(), weights.len())));
    }
    let mut total: Option<Params> = None;
    for (upload, &w) in uploads.iter().zip(weights) {
        let decoded = upload.decode()?;
        match &mut total {
            None => total = Some(decoded.into_iter().map(|l| l.into_iter().map(|v| w * v).collect()).collect()),
            Some(acc) => {
                if acc.len() != decoded.len() || acc.iter().zip(&decoded).any(|(a, d)| a.len() != d.len()) {
                    return Err(Error::Protocol("clients uploaded different layer shapes".into()));
                }
                for (a, d) in acc.iter_mut().zip(&decoded) {
                    a.iter_mut().zip(d).for_each(|(x, y)| *x += w * y);
                }
            }
        }
    }
    Ok(total.unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRow {
    pub round: usize,
    /// `F(θ_t) = Σ w_i F_i(θ_t)` on the training shards.
    pub loss: Option<f64>,
    /// `‖∇F(θ_t)‖²`.
    pub grad_sq_norm: Option<f64>,
    /// Test accuracy (classification) or R² (regression).
    pub test_score: Option<f64>,
    /// Uplink bits of all clients in the round that produced `θ_t`.
    pub bits_round: u64,
    pub bits_cum: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaRow {
    pub round: usize,
    pub layer: usize,
    pub gamma_mean: f64,
    pub gamma_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub label: String,
    /// Row `t` describes `θ_t`; row 0 is the initial model.
    pub rows: Vec<RoundRow>,
    pub gammas: Vec<GammaRow>,
    pub tail: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl RunMetrics {
    fn tail_rows(&self) -> &[RoundRow] {
        &self.rows[self.rows.len() - self.tail..]
    }

    /// Mean training loss over the last `tail` rounds.
    pub fn final_loss(&self) -> f64 {
        mean(self.tail_rows().iter().filter_map(|r| r.loss)).unwrap_or(f64::NAN)
    }

    /// Mean test score over the last `tail` rounds.
    pub fn final_score(&self) -> f64 {
        mean(self.tail_rows().iter().filter_map(|r| r.test_score)).unwrap_or(f64::NAN)
    }

    pub fn total_bits(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.bits_cum)
    }

    /// Mean of `‖∇F(θ_t)‖²` over evaluated rounds `t < T`.
    pub fn mean_grad_sq_norm(&self) -> f64 {
        mean(self.rows[..self.rows.len() - 1].iter().filter_map(|r| r.grad_sq_norm)).unwrap_or(f64::NAN)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        writeln!(w, "round,loss,grad_sq_norm,test_acc,bits_round,bits_cum")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.round,
                cell(r.loss),
                cell(r.grad_sq_norm),
                cell(r.test_score),
                r.bits_round,
                r.bits_cum
            )?;
        }
        Ok(())
    }

    pub fn write_gamma_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "round,layer,gamma_mean,gamma_max")?;
        for g in &self.gammas {
            writeln!(w, "{},{},{:e},{:e}", g.round, g.layer, g.gamma_mean, g.gamma_max)?;
        }
        Ok(())
    }
}

struct Evaluation {
    loss: f64,
    grad_sq_norm: f64,
}

fn evaluate(model: &ModelSpec, params: &Params, data: &Dataset, part: &Partition, weights: &[f64]) -> Result<Evaluation> {
    let per_client = part
        .shards
        .par_iter()
        .map(|shard| model.loss_and_grad(params, data, shard))
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut grad = model.zeros();
    for ((l, g), w) in per_client.into_iter().zip(weights) {
        loss += w * l;
        for (a, b) in grad.iter_mut().zip(&g) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += w * y);
        }
    }
    let grad_sq_norm = grad.iter().flatten().map(|v| v * v).sum();
    Ok(Evaluation { loss, grad_sq_norm })
}

/// Runs `config.rounds` rounds of download, local gradients, compression,
/// aggregation and server update.
pub fn run(config: &TrainConfig, model: &ModelSpec, train: &Dataset, test: Option<&Dataset>) -> Result<RunMetrics> {
    config.validate()?;
    model.check_data(train)?;
    if let Some(t) = test {
        model.check_data(t)?;
    }
    let part = partition(train.len(), config.clients, &config.partition, &mut rng::global(config.seed, Purpose::Partition))?;
    let weights = config.client_weights(&part)?;
    let mut state = RoundState::new(model.init(&mut rng::global(config.seed, Purpose::Init)));
    let rounds = config.rounds;
    let evaluated = |t: usize| t % config.eval_every == 0 || t + config.tail > rounds;

    let mut rows = Vec::with_capacity(rounds + 1);
    let mut gammas = Vec::new();
    let mut bits_cum = 0u64;
    let mut bits_round = 0u64;
    for t in 0..=rounds {
        let mut row = RoundRow { round: t, loss: None, grad_sq_norm: None, test_score: None, bits_round, bits_cum };
        if evaluated(t) {
            let eval = evaluate(model, &state.params, train, &part, &weights)?;
            if !eval.loss.is_finite() || eval.loss > DIVERGENCE_LOSS {
                return Err(Error::Diverged { round: t, loss: eval.loss });
            }
            row.loss = Some(eval.loss);
            row.grad_sq_norm = Some(eval.grad_sq_norm);
            row.test_score = Some(model.score(&state.params, test.unwrap_or(train)));
        }
        rows.push(row);
        if t == rounds {
            break;
        }

        let round = u32::try_from(t).map_err(|_| Error::Config("too many rounds".into()))?;
        let params = &state.params;
        let uploads = part
            .shards
            .par_iter()
            .enumerate()
            .map(|(i, shard)| {
                let client = i as u32;
                let mut batch_rng = rng::stream(config.seed, Purpose::Batch, client, round);
                let (_, grads) = client_gradient(model, params, train, shard, config.batch, &mut batch_rng)?;
                let mut q_rng = rng::stream(config.seed, Purpose::Quantize, client, round);
                compress_per_layer(grads, config.compression, &mut q_rng)
            })
            .collect::<Result<Vec<_>>>()?;

        bits_round = uploads.iter().map(ClientUpload::wire_bits).sum();
        bits_cum += bits_round;
        let per_client: Vec<Vec<f64>> = uploads.iter().map(ClientUpload::gammas).collect();
        for layer in 0..per_client[0].len() {
            let values = per_client.iter().map(|g| g[layer]);
            gammas.push(GammaRow {
                round: t,
                layer,
                gamma_mean: values.clone().sum::<f64>() / per_client.len() as f64,
                gamma_max: values.fold(0.0, f64::max),
            });
        }
        let update = aggregate(&uploads, &weights)?;
        server_update(&mut state, &update, config.lr, config.momentum, config.weight_decay)?;
        if state.params.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { round: t + 1, loss: f64::NAN });
        }
    }
    Ok(RunMetrics { label: config.compression.label(), rows, gammas, tail: config.tail })
}
