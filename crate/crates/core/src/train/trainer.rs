use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::neuro::{Model, Tensor};

use super::adam::{adam_step, AdamState};
use super::data::PreparedData;
use super::log::{EpochRecord, TrainLog};
use super::{mse_loss, TrainConfig, TrainError};

const EVAL_CHUNK: usize = 256;

/// Scaled predictions for the given samples, `slot × station × 2`.
pub fn predict_slots(model: &Model, data: &PreparedData, slots: &[usize]) -> Result<Vec<f64>, TrainError> {
    let mut out = Vec::with_capacity(slots.len() * data.n_stations() * 2);
    for chunk in slots.chunks(EVAL_CHUNK) {
        let (batch, _) = data.batch(chunk, &model.spec);
        out.extend_from_slice(model.predict(&batch)?.data());
    }
    Ok(out)
}

fn scaled_mse(model: &Model, data: &PreparedData, slots: &[usize]) -> Result<Option<f64>, TrainError> {
    if slots.is_empty() {
        return Ok(None);
    }
    let pred = predict_slots(model, data, slots)?;
    let target = data.scaled_targets(slots);
    let len = pred.len();
    Ok(Some(mse_loss(&Tensor::from_vec(&[len], pred)?, &Tensor::from_vec(&[len], target)?)?))
}

fn clip(grads: &mut [Tensor], max_norm: f64) {
    let norm = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
}

/// Mini-batch Adam over shuffled training samples. The parameters with the
/// lowest validation loss (training loss when there is no validation set)
/// are restored before returning.
pub fn train(mut model: Model, data: &PreparedData, cfg: &TrainConfig) -> Result<(Model, TrainLog), TrainError> {
    cfg.validate()?;
    if data.train_slots.is_empty() {
        return Err(TrainError::Dataset("no training samples".into()));
    }
    if model.spec.input() != data.n_features() {
        return Err(TrainError::Dataset(format!(
            "model expects {} features, dataset has {}",
            model.spec.input(),
            data.n_features()
        )));
    }
    model.feature_order = data.feature_names.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params);
    let mut order = data.train_slots.clone();
    let initial = scaled_mse(&model, data, &data.train_slots)?.unwrap_or(f64::NAN);
    let mut log = TrainLog {
        model: model.spec.name().to_string(),
        param_count: model.param_count(),
        initial_train_loss: initial,
        ..Default::default()
    };
    let mut best: Option<(f64, usize, Model)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (batch, target) = data.batch(chunk, &model.spec);
            let (loss, mut grads) = model.loss_and_grads(&batch, &target)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::DivergedLoss { epoch, batch: b, value: loss });
            }
            if let Some(c) = cfg.grad_clip {
                clip(&mut grads, c);
            }
            adam_step(&mut model.params, &grads, &mut adam, cfg);
            weighted += loss * chunk.len() as f64;
        }
        let train_loss = weighted / order.len() as f64;
        let val_loss = scaled_mse(&model, data, &data.val_slots)?;
        let score = val_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(TrainError::DivergedLoss { epoch, batch: usize::MAX, value: score });
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: cfg.record_wall_time.then(|| started.elapsed().as_secs_f64()),
        });
        log::debug!("{} epoch {epoch}: train {train_loss:.6} val {val_loss:?}", model.spec.name());
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.early_stop_patience.is_some_and(|p| since_best >= p) {
                log.stopped_early = true;
                break;
            }
        }
    }

    if let Some((_, epoch, m)) = best {
        model = m;
        log.best_epoch = epoch;
    }
    log.best_val_loss = scaled_mse(&model, data, &data.val_slots)?;
    log.final_train_mse = scaled_mse(&model, data, &data.train_slots)?.unwrap_or(f64::NAN);
    log.final_val_mse = log.best_val_loss;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AdjacencyMatrix, AdjacencySeries, GraphConfig};
    use crate::ingest::{parse_timestamp, DemandTensor, FeatureLayout, FeatureTensor, SlotRange, SplitSpec};
    use crate::neuro::ModelSpec;

    fn constant_graph_data(t: usize, n: usize, demand: impl Fn(usize, usize) -> f64) -> PreparedData {
        let r = SlotRange::new(parse_timestamp("2019-01-01 00:00:00").unwrap(), t).unwrap();
        let ids: Vec<String> = (0..n).map(|s| format!("{s}")).collect();
        let mut d = DemandTensor::zeros(r, ids.clone());
        for k in 0..t {
            for s in 0..n {
                d.set(k, s, 0, demand(k, s));
                d.set(k, s, 1, demand(k, s) * 0.5);
            }
        }
        let layout = FeatureLayout::default();
        let nf = layout.len();
        let vals = (0..t * n * nf).map(|i| ((i * 7919) % 101) as f64 / 10.0).collect();
        let f = FeatureTensor::from_values(layout, r, ids, vals).unwrap();
        let adj = AdjacencySeries::constant(AdjacencyMatrix::identity(n), t, GraphConfig::default());
        PreparedData::new(&f, &d, &adj, &SplitSpec::default(), 0.1).unwrap()
    }

    #[test]
    fn zero_targets_are_learned_quickly() {
        let data = constant_graph_data(60, 3, |_, _| 0.0);
        let model = Model::new(ModelSpec::ggcnn(8), 1).unwrap();
        let cfg = TrainConfig { epochs: 20, batch_size: 8, ..Default::default() };
        let (_, log) = train(model, &data, &cfg).unwrap();
        assert_eq!(log.epochs.len(), 20);
        assert!(log.final_train_mse < 1e-4, "{}", log.final_train_mse);
    }

    #[test]
    fn single_sample_loss_decreases() {
        let data = constant_graph_data(4, 1, |k, _| k as f64 + 1.0);
        assert_eq!(data.train_slots, [1]);
        let model = Model::new(ModelSpec::ggcnn(8), 3).unwrap();
        let cfg = TrainConfig { epochs: 6, ..Default::default() };
        let (_, log) = train(model, &data, &cfg).unwrap();
        let losses: Vec<f64> = log.epochs.iter().map(|e| e.train_loss).collect();
        for w in losses[..6].windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let data = constant_graph_data(50, 3, |k, s| ((k * 3 + s) % 5) as f64);
        let cfg = TrainConfig { epochs: 3, batch_size: 16, ..Default::default() };
        let a = train(Model::new(ModelSpec::gcn(8), 5).unwrap(), &data, &cfg).unwrap();
        let b = train(Model::new(ModelSpec::gcn(8), 5).unwrap(), &data, &cfg).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.to_container().to_bytes().unwrap(), b.0.to_container().to_bytes().unwrap());
    }

    #[test]
    fn patience_stops_early() {
        let data = constant_graph_data(40, 2, |_, _| 0.0);
        let cfg = TrainConfig { epochs: 50, early_stop_patience: Some(2), learning_rate: 0.5, ..Default::default() };
        let (_, log) = train(Model::new(ModelSpec::mlp(8), 0).unwrap(), &data, &cfg).unwrap();
        assert!(log.epochs.len() <= 50);
        assert!(log.best_epoch >= 1);
    }

    #[test]
    fn overflowing_updates_abort_with_diverged_loss() {
        let data = constant_graph_data(20, 2, |k, _| k as f64);
        let cfg = TrainConfig { epochs: 5, batch_size: 1, learning_rate: 1e300, ..Default::default() };
        let err = train(Model::new(ModelSpec::mlp(8), 0).unwrap(), &data, &cfg);
        assert!(matches!(err, Err(TrainError::DivergedLoss { .. })), "{err:?}");
    }
}
