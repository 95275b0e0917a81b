//! Federated training simulator: clients compute minibatch gradients,
//! compress them per layer, and a server aggregates and applies momentum SGD.

mod config;
mod model;
mod sweep;
mod train;

pub use config::{parse_config, DataSource, ExperimentConfig};
pub use model::{LayerShape, ModelKind, ModelSpec, Params};
pub use sweep::{run_sweep, SweepCell, SweepReport, SweepSpec};
pub use train::{
    aggregate, client_gradient, compress_per_layer, run, server_update, Batch, ClientUpload, Compression,
    RoundRow, RoundState, RunMetrics, TrainConfig, WeightMode,
};
