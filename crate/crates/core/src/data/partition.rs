use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionMode {
    /// Shard sizes differ by at most one.
    IidEqual,
    /// Shard sizes proportional to the given weights (largest remainder).
    IidSized(Vec<f64>),
}

/// Disjoint client shards covering `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub shards: Vec<Vec<usize>>,
}

impl Partition {
    pub fn sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }

    /// `w_i = |D_i| / Σ_j |D_j|`.
    pub fn weights(&self) -> Vec<f64> {
        let total: usize = self.shards.iter().map(Vec::len).sum();
        self.shards.iter().map(|s| s.len() as f64 / total as f64).collect()
    }
}

pub fn partition<R: Rng + ?Sized>(n: usize, clients: usize, mode: &PartitionMode, rng: &mut R) -> Result<Partition> {
    if clients == 0 {
        return Err(Error::Config("at least one client is required".into()));
    }
    if clients > n {
        return Err(Error::Config(format!("{clients} clients for {n} samples")));
    }
    let sizes = match mode {
        PartitionMode::IidEqual => (0..clients)
            .map(|i| n / clients + usize::from(i < n % clients))
            .collect::<Vec<_>>(),
        PartitionMode::IidSized(weights) => sized(n, weights, clients)?,
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut shards = Vec::with_capacity(clients);
    let mut rest = order.as_slice();
    for size in sizes {
        let (head, tail) = rest.split_at(size);
        let mut shard = head.to_vec();
        shard.sort_unstable();
        shards.push(shard);
        rest = tail;
    }
    Ok(Partition { shards })
}

fn sized(n: usize, weights: &[f64], clients: usize) -> Result<Vec<usize>> {
    if weights.len() != clients {
        return Err(Error::Config(format!("{} weights for {clients} clients", weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Config("partition weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..clients).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - sizes[b] as f64)
            .total_cmp(&(exact[a] - sizes[a] as f64))
            .then(a.cmp(&b))
    });
    let short = n - sizes.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        sizes[i] += 1;
    }
    if sizes.contains(&0) {
        return Err(Error::Config("a partition weight leaves a client with no samples".into()));
    }
    Ok(sizes)
}
