use std::rc::Rc;

use crate::graph::{propagation_operator, AdjacencySeries, PropagationOperator};
use crate::ingest::{fit_scaler, DemandTensor, FeatureKind, FeatureTensor, MinMaxScaler, SplitSpec, IN_CHANNEL, OUT_CHANNEL};
use crate::neuro::{Batch, ModelSpec, Tensor};

use super::TrainError;

/// Scaled, split and graph-annotated samples ready for any model.
///
/// Sample `t` (for `t ≥ 1`) pairs the features of slot `t`, which carry the
/// weather at `t` and demand at `t − 1`, with the propagation operator of
/// the correlation window ending at `t − 1` and the demand of slot `t` as
/// target. Scalers are fitted on slots before the split point only.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub stations: Vec<String>,
    pub feature_names: Vec<String>,
    pub feature_scaler: MinMaxScaler,
    pub target_scaler: MinMaxScaler,
    pub demand: DemandTensor,
    /// First test slot.
    pub cut: usize,
    pub train_slots: Vec<usize>,
    pub val_slots: Vec<usize>,
    pub test_slots: Vec<usize>,
    n: usize,
    f: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    normalized: Vec<Vec<f64>>,
    raw: Vec<Vec<f64>>,
    op_index: Vec<usize>,
}

impl PreparedData {
    pub fn new(
        features: &FeatureTensor,
        demand: &DemandTensor,
        adjacency: &AdjacencySeries,
        split: &SplitSpec,
        validation_fraction: f64,
    ) -> Result<Self, TrainError> {
        let (t_total, n) = (features.n_slots(), features.n_stations());
        if demand.n_slots() != t_total || demand.n_stations() != n {
            return Err(TrainError::Dataset(format!(
                "features cover {t_total}×{n} but demand covers {}×{}",
                demand.n_slots(),
                demand.n_stations()
            )));
        }
        if adjacency.is_empty() || adjacency.n() != n || adjacency.n_slots() != t_total {
            return Err(TrainError::Dataset(format!(
                "adjacency series ({} matrices of {} nodes over {} slots) does not cover the dataset",
                adjacency.len(),
                adjacency.n(),
                adjacency.n_slots()
            )));
        }
        let cut = split.cut(t_total)?;
        let f = features.n_features();
        let feature_scaler = fit_scaler(features, split)?;
        let target_scaler = MinMaxScaler::fit_rows(2, demand.values()[..cut * n * 2].chunks_exact(2));

        let x = feature_scaler.transform(features).values().to_vec();
        let y = demand.values().chunks_exact(2).flat_map(|r| [target_scaler.transform_value(0, r[0]), target_scaler.transform_value(1, r[1])]).collect();

        let normalized = adjacency
            .matrices()
            .iter()
            .map(|a| propagation_operator(a).map(|op| op.values().to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let raw = adjacency.matrices().iter().map(|a| a.values().to_vec()).collect();
        let first = adjacency.first_full_slot();
        let last = adjacency.len() - 1;
        let op_index = (0..t_total).map(|t| t.saturating_sub(1).saturating_sub(first).min(last)).collect();

        let pool: Vec<usize> = (1..cut).collect();
        let n_val = (validation_fraction * pool.len() as f64).floor() as usize;
        let (train_slots, val_slots) = pool.split_at(pool.len() - n_val);

        Ok(Self {
            stations: features.stations().to_vec(),
            feature_names: features.layout().names().iter().map(|s| s.to_string()).collect(),
            feature_scaler,
            target_scaler,
            demand: demand.clone(),
            cut,
            train_slots: train_slots.to_vec(),
            val_slots: val_slots.to_vec(),
            test_slots: (cut..t_total).collect(),
            n,
            f,
            x,
            y,
            normalized,
            raw,
            op_index,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.f
    }

    pub fn n_slots(&self) -> usize {
        self.op_index.len()
    }

    /// Scaled feature rows of slot `t`, `N × F`.
    pub fn x_slot(&self, t: usize) -> &[f64] {
        &self.x[t * self.n * self.f..(t + 1) * self.n * self.f]
    }

    /// Scaled targets of slot `t`, `N × 2`.
    pub fn y_slot(&self, t: usize) -> &[f64] {
        &self.y[t * self.n * 2..(t + 1) * self.n * 2]
    }

    /// Normalized operator used for sample `t`.
    pub fn operator(&self, t: usize) -> PropagationOperator {
        PropagationOperator::from_raw(self.n, self.normalized[self.op_index[t]].clone()).expect("validated on construction")
    }

    /// Stacks the given samples into a batch for `spec`, plus its `(B·N) × 2` target.
    pub fn batch(&self, slots: &[usize], spec: &ModelSpec) -> (Batch, Tensor) {
        let (n, f) = (self.n, self.f);
        let mut x = Vec::with_capacity(slots.len() * n * f);
        let mut y = Vec::with_capacity(slots.len() * n * 2);
        for &t in slots {
            x.extend_from_slice(self.x_slot(t));
            y.extend_from_slice(self.y_slot(t));
        }
        let ops = spec.uses_graph().then(|| {
            let source = if spec.raw_messages() { &self.raw } else { &self.normalized };
            let mut o = Vec::with_capacity(slots.len() * n * n);
            for &t in slots {
                o.extend_from_slice(&source[self.op_index[t]]);
            }
            Rc::new(Tensor::from_vec(&[slots.len(), n, n], o).expect("sizes match"))
        });
        let b = slots.len();
        (
            Batch { x: Tensor::matrix(b * n, f, x).expect("sizes match"), ops },
            Tensor::matrix(b * n, 2, y).expect("sizes match"),
        )
    }

    /// Inputs for the slot after the last one: weather carried forward from
    /// the final slot, lag columns set to the final observed demand, and the
    /// operator of the window ending at the final slot.
    pub fn forecast_batch(&self, spec: &ModelSpec) -> Batch {
        let (n, f) = (self.n, self.f);
        let last = self.n_slots() - 1;
        let mut x = self.x_slot(last).to_vec();
        for (kind, channel) in [(FeatureKind::LastInTrips, IN_CHANNEL), (FeatureKind::LastOutTrips, OUT_CHANNEL)] {
            if let Some(c) = self.feature_names.iter().position(|name| name == kind.name()) {
                for s in 0..n {
                    x[s * f + c] = self.feature_scaler.transform_value(c, self.demand.get(last, s, channel));
                }
            }
        }
        let ops = spec.uses_graph().then(|| {
            let source = if spec.raw_messages() { &self.raw } else { &self.normalized };
            Rc::new(Tensor::from_vec(&[1, n, n], source[source.len() - 1].clone()).expect("sizes match"))
        });
        Batch { x: Tensor::matrix(n, f, x).expect("sizes match"), ops }
    }

    /// Count-space targets for the given slots, `slot × station × channel`.
    pub fn counts(&self, slots: &[usize]) -> Vec<f64> {
        let n = self.n;
        slots.iter().flat_map(|&t| self.demand.values()[t * n * 2..(t + 1) * n * 2].iter().copied()).collect()
    }

    /// Scaled targets for the given slots, `slot × station × channel`.
    pub fn scaled_targets(&self, slots: &[usize]) -> Vec<f64> {
        slots.iter().flat_map(|&t| self.y_slot(t).iter().copied()).collect()
    }

    /// Maps scaled predictions (`… × 2`) back to counts.
    pub fn to_counts(&self, scaled: &[f64]) -> Vec<f64> {
        scaled.chunks_exact(2).flat_map(|r| [self.target_scaler.inverse_value(0, r[0]), self.target_scaler.inverse_value(1, r[1])]).collect()
    }

    /// Maps counts (`… × 2`) into the scaled target space.
    pub fn to_scaled(&self, counts: &[f64]) -> Vec<f64> {
        counts.chunks_exact(2).flat_map(|r| [self.target_scaler.transform_value(0, r[0]), self.target_scaler.transform_value(1, r[1])]).collect()
    }
}
