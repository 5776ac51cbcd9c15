use ggcnn_core::container::Container;
use ggcnn_core::evalbench::{generate_synthetic, SyntheticSpec};
use ggcnn_core::graph::{dynamic_adjacency, AdjacencySeries, GraphConfig};
use ggcnn_core::ingest::{DemandTensor, FeatureTensor, SplitSpec};
use ggcnn_core::neuro::{GatedLayerSpec, Model, ModelSpec};
use ggcnn_core::train::{predict_slots, train, PreparedData, TrainConfig};

fn small_spec() -> SyntheticSpec {
    SyntheticSpec { n_stations: 6, n_slots: 240, window_slots: 24, ..SyntheticSpec::default() }
}

fn ggcnn(input: usize) -> ModelSpec {
    ModelSpec::Ggcnn {
        input,
        layers: vec![GatedLayerSpec { hidden: 12, steps: 2 }, GatedLayerSpec { hidden: 12, steps: 2 }],
        readout_hidden: vec![16],
        output: 2,
        raw_messages: false,
    }
}

fn graph_cfg() -> GraphConfig {
    GraphConfig { window_slots: 24, top_k: Some(3), ..GraphConfig::default() }
}

/// Scrambles every value from `cut` on.
fn scramble(features: &FeatureTensor, demand: &DemandTensor, cut: usize) -> (FeatureTensor, DemandTensor) {
    let n = demand.n_stations();
    let f = features.n_features();
    let feats = features.map_values(|i, v| if i / (n * f) >= cut { v * 7.0 + 100.0 } else { v });
    let mut d = demand.clone();
    for t in cut..d.n_slots() {
        for s in 0..n {
            for c in 0..2 {
                d.set(t, s, c, d.get(t, s, c) * 3.0 + 50.0);
            }
        }
    }
    (feats, d)
}

#[test]
fn test_slots_do_not_leak_into_fitting() {
    let data = generate_synthetic(&small_spec()).unwrap();
    let split = SplitSpec::default();
    let cut = split.cut(data.demand.n_slots()).unwrap();
    let (feats2, demand2) = scramble(&data.features, &data.demand, cut);
    let adj1 = dynamic_adjacency(&data.demand, &graph_cfg()).unwrap();
    let adj2 = dynamic_adjacency(&demand2, &graph_cfg()).unwrap();

    let a = PreparedData::new(&data.features, &data.demand, &adj1, &split, 0.1).unwrap();
    let b = PreparedData::new(&feats2, &demand2, &adj2, &split, 0.1).unwrap();
    assert_eq!(a.feature_scaler, b.feature_scaler);
    assert_eq!(a.target_scaler, b.target_scaler);
    assert_eq!(a.train_slots, b.train_slots);
    assert_eq!(a.val_slots, b.val_slots);

    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let spec = ggcnn(a.n_features());
    let (ma, la) = train(Model::new(spec.clone(), 3).unwrap(), &a, &cfg).unwrap();
    let (mb, lb) = train(Model::new(spec, 3).unwrap(), &b, &cfg).unwrap();
    assert_eq!(la, lb);
    assert_eq!(ma, mb);

    // Sanity check that the scrambling reached the test slots at all.
    let pa = predict_slots(&ma, &a, &a.test_slots).unwrap();
    let pb = predict_slots(&mb, &b, &b.test_slots).unwrap();
    assert_ne!(pa, pb);
}

#[test]
fn artifacts_survive_a_container_round_trip() {
    let data = generate_synthetic(&small_spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let p = dir.path().join("demand.bin");
    data.demand.to_container().write(&p).unwrap();
    assert_eq!(DemandTensor::from_container(&Container::read(&p).unwrap()).unwrap(), data.demand);

    let p = dir.path().join("features.bin");
    data.features.to_container().write(&p).unwrap();
    assert_eq!(FeatureTensor::from_container(&Container::read(&p).unwrap()).unwrap(), data.features);

    let p = dir.path().join("adjacency.bin");
    data.adjacency.to_container().write(&p).unwrap();
    let back = AdjacencySeries::from_container(&Container::read(&p).unwrap()).unwrap();
    assert_eq!(back.matrices(), data.adjacency.matrices());
    assert_eq!(back.window(), data.adjacency.window());

    let model = Model::new(ggcnn(data.features.n_features()), 5).unwrap();
    let p = dir.path().join("model.ckpt");
    model.to_container().write(&p).unwrap();
    let restored = Model::from_container(&Container::read(&p).unwrap()).unwrap();
    assert_eq!(restored, model);
}

#[test]
fn training_reduces_loss_on_planted_data() {
    let data = generate_synthetic(&small_spec()).unwrap();
    let prepared = PreparedData::new(&data.features, &data.demand, &data.adjacency, &SplitSpec::default(), 0.1).unwrap();
    let cfg = TrainConfig { epochs: 15, ..TrainConfig::default() };
    let (_, log) = train(Model::new(ggcnn(prepared.n_features()), 1).unwrap(), &prepared, &cfg).unwrap();
    assert!(log.final_train_mse < log.initial_train_loss, "{} vs {}", log.final_train_mse, log.initial_train_loss);
}
