//! Demand-correlation graphs and the renormalized propagation operator.

mod adjacency;
mod operator;
mod pearson;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adjacency::{dynamic_adjacency, static_adjacency, AdjacencyMatrix, AdjacencySeries, GraphConfig};
pub use operator::{laplacian, propagation_operator, PropagationOperator};
pub use pearson::pearson;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series of length {0} is too short for a correlation")]
    TooShort(usize),
    #[error("window {window} exceeds the {slots} available slots")]
    WindowTooLarge { window: usize, slots: usize },
    #[error("window must be at least 2 slots, got {0}")]
    WindowTooSmall(usize),
    #[error("matrix entry ({0}, {1}) is not finite")]
    NonFiniteEntry(usize, usize),
    #[error("node {0} has zero degree")]
    ZeroDegreeNode(usize),
    #[error("matrix is not square/symmetric: {0}")]
    InvalidMatrix(String),
}

/// Which demand channel feeds the correlation series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    In,
    #[default]
    Out,
    Sum,
}

impl Channel {
    pub(crate) fn value(self, demand: &crate::ingest::DemandTensor, slot: usize, station: usize) -> f64 {
        use crate::ingest::{IN_CHANNEL, OUT_CHANNEL};
        match self {
            Channel::In => demand.get(slot, station, IN_CHANNEL),
            Channel::Out => demand.get(slot, station, OUT_CHANNEL),
            Channel::Sum => demand.get(slot, station, IN_CHANNEL) + demand.get(slot, station, OUT_CHANNEL),
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in" => Ok(Channel::In),
            "out" => Ok(Channel::Out),
            "sum" => Ok(Channel::Sum),
            other => Err(format!("unknown channel `{other}` (expected in|out|sum)")),
        }
    }
}
