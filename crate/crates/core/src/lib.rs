//! Station-level short-term demand forecasting with gated graph convolutions.
//!
//! The crate is organised as a pipeline:
//!
//! - [`ingest`]: trip/weather CSV parsing, hourly aggregation, feature assembly,
//!   min-max scaling and the chronological split.
//! - [`access`]: cumulative-opportunity accessibility per station.
//! - [`graph`]: Pearson-correlation adjacency (static and trailing-window) and
//!   the renormalized propagation operator.
//! - [`neuro`]: dense tensors, a reverse-mode tape, GRU / GCN / gated layers and
//!   model assembly.
//! - [`train`]: MSE loss, Adam, the training loop and finite-difference checks.
//! - [`evalbench`]: metrics, baselines and the planted-structure generator.
//! - [`container`]: the binary tensor/checkpoint container shared by all stages.

pub mod access;
pub mod container;
pub mod evalbench;
pub mod graph;
pub mod ingest;
pub mod neuro;
pub mod train;

pub use access::{AccessConfig, AccessVectors, GeoPoint, OpportunityPoint};
pub use evalbench::{MetricsReport, SyntheticSpec};
pub use graph::{AdjacencyMatrix, AdjacencySeries, Channel, PropagationOperator};
pub use ingest::{DemandTensor, FeatureKind, FeatureTensor, MinMaxScaler, SlotRange, SplitSpec, StationRegistry};
pub use neuro::{GgcnnModel, ModelSpec, Tensor};
pub use train::{TrainConfig, TrainLog};
