//! Run configuration, read from one TOML file.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Flags given on the command line take precedence.

use std::path::{Path, PathBuf};

use ggcnn_core::evalbench::{ModelKind, SyntheticSpec};
use ggcnn_core::graph::GraphConfig;
use ggcnn_core::ingest::{parse_timestamp, SplitSpec, TripSchema};
use ggcnn_core::neuro::GatedLayerSpec;
use ggcnn_core::{AccessConfig, ModelSpec, TrainConfig};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CliError, Result};

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<PathBuf>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(PathBuf),
        Many(Vec<PathBuf>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(p) => vec![p],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(deserialize_with = "one_or_many")]
    pub trips: Vec<PathBuf>,
    pub weather: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub employment: Option<PathBuf>,
    /// `station_id,lat,lon` rows for exports that carry no coordinates.
    pub stations: Option<PathBuf>,
    pub workdir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { trips: Vec::new(), weather: None, population: None, employment: None, stations: None, workdir: "work".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub min_annual_demand: u64,
    pub include_humidity: bool,
    /// `YYYY-MM-DD HH:MM:SS`; both bounds or neither.
    pub start: Option<String>,
    pub end: Option<String>,
    pub train_fraction: f64,
    pub columns: TripSchema,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            min_annual_demand: 1000,
            include_humidity: false,
            start: None,
            end: None,
            train_fraction: SplitSpec::default().train_fraction,
            columns: TripSchema::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnedKind {
    Ggcnn,
    Gcn,
    Mlp,
}

impl From<LearnedKind> for ModelKind {
    fn from(k: LearnedKind) -> Self {
        match k {
            LearnedKind::Ggcnn => ModelKind::Ggcnn,
            LearnedKind::Gcn => ModelKind::Gcn,
            LearnedKind::Mlp => ModelKind::Mlp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: LearnedKind,
    /// Widths of the gated (or convolutional) layers.
    pub hidden: Vec<usize>,
    /// Propagation steps per gated layer.
    pub steps: Vec<usize>,
    pub readout_hidden: Vec<usize>,
    pub raw_messages: bool,
    pub mlp_hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: LearnedKind::Ggcnn,
            hidden: vec![32, 32],
            steps: vec![4, 3],
            readout_hidden: vec![64],
            raw_messages: false,
            mlp_hidden: vec![32, 32, 64],
        }
    }
}

impl ModelSection {
    pub fn spec(&self, kind: LearnedKind, input: usize) -> Result<ModelSpec> {
        let spec = match kind {
            LearnedKind::Ggcnn => {
                if self.hidden.len() != self.steps.len() {
                    return Err(CliError::Usage(format!(
                        "model.hidden has {} layers but model.steps has {}",
                        self.hidden.len(),
                        self.steps.len()
                    )));
                }
                ModelSpec::Ggcnn {
                    input,
                    layers: self.hidden.iter().zip(&self.steps).map(|(&hidden, &steps)| GatedLayerSpec { hidden, steps }).collect(),
                    readout_hidden: self.readout_hidden.clone(),
                    output: 2,
                    raw_messages: self.raw_messages,
                }
            }
            LearnedKind::Gcn => ModelSpec::Gcn { input, layers: self.hidden.clone(), readout_hidden: self.readout_hidden.clone(), output: 2 },
            LearnedKind::Mlp => ModelSpec::Mlp { input, hidden: self.mlp_hidden.clone(), output: 2 },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(alias = "learning_rate")]
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub patience: Option<usize>,
    pub grad_clip: Option<f64>,
    pub validation_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.learning_rate,
            beta1: c.adam_beta1,
            beta2: c.adam_beta2,
            eps: c.adam_epsilon,
            seed: c.seed,
            patience: c.early_stop_patience,
            grad_clip: c.grad_clip,
            validation_fraction: c.validation_fraction,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            adam_beta1: self.beta1,
            adam_beta2: self.beta2,
            adam_epsilon: self.eps,
            seed: self.seed,
            early_stop_patience: self.patience,
            grad_clip: self.grad_clip,
            validation_fraction: self.validation_fraction,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub models: Vec<ModelKind>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { models: ModelKind::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckSection {
    /// Number of training samples in the checked batch.
    pub samples: usize,
    pub epsilon: f64,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        Self { samples: 2, epsilon: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `train.seed` and `synth.seed` when set.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub ingest: IngestSection,
    pub access: AccessConfig,
    pub graph: GraphConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub synth: SyntheticSpec,
    pub grad_check: GradCheckSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::Input { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.rebase(&base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.paths.trips.iter_mut().for_each(fix);
        for p in [&mut self.paths.weather, &mut self.paths.population, &mut self.paths.employment, &mut self.paths.stations]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.paths.workdir);
    }

    /// Applies the global seed and checks cross-field consistency.
    pub fn finalize(mut self, seed: Option<u64>, workdir: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.train.seed = s;
            self.synth.seed = s;
        }
        if let Some(w) = workdir {
            self.paths.workdir = w;
        }
        if !(self.ingest.train_fraction > 0.0 && self.ingest.train_fraction < 1.0) {
            return Err(CliError::Usage(format!("ingest.train_fraction {} must lie in (0, 1)", self.ingest.train_fraction)));
        }
        if self.ingest.start.is_some() != self.ingest.end.is_some() {
            return Err(CliError::Usage("ingest.start and ingest.end must be given together".into()));
        }
        for t in [&self.ingest.start, &self.ingest.end].into_iter().flatten() {
            if parse_timestamp(t).is_none() {
                return Err(CliError::Usage(format!("ingest: cannot parse timestamp `{t}`")));
            }
        }
        if self.eval.models.is_empty() {
            return Err(CliError::Usage("eval.models is empty".into()));
        }
        self.train.to_config().validate()?;
        self.access.validate()?;
        Ok(self)
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.ingest.train_fraction }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.graph.window_slots, 168);
        assert_eq!(c.access.budget_minutes, 15.0);
        assert_eq!(c.train.to_config(), TrainConfig::default());
    }

    #[test]
    fn namespaced_keys() {
        let c = RunConfig::from_toml(
            r#"
            seed = 7
            [paths]
            trips = "a.csv"
            [access]
            budget_minutes = 10.0
            walking_speed_kmh = 4.5
            [graph]
            window_slots = 24
            channel = "sum"
            clip_negative = false
            top_k = 3
            [train]
            epochs = 5
            lr = 0.01
            patience = 2
            [eval]
            models = ["persistence", "ols"]
            "#,
        )
        .unwrap()
        .finalize(None, None)
        .unwrap();
        assert_eq!(c.paths.trips, [PathBuf::from("a.csv")]);
        assert_eq!(c.access.walking_speed_kmh, 4.5);
        assert_eq!(c.graph.top_k, Some(3));
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.synth.seed, 7);
        assert_eq!(c.train.to_config().early_stop_patience, Some(2));
        assert_eq!(c.eval.models, [ModelKind::Persistence, ModelKind::Ols]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[train]\nepoch = 3").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn flag_seed_beats_file_seed() {
        let c = RunConfig::from_toml("seed = 7").unwrap().finalize(Some(9), None).unwrap();
        assert_eq!(c.train.seed, 9);
    }

    #[test]
    fn model_spec_from_section() {
        let m = ModelSection::default();
        assert_eq!(m.spec(LearnedKind::Ggcnn, 8).unwrap(), ModelSpec::ggcnn(8));
        assert_eq!(m.spec(LearnedKind::Gcn, 8).unwrap(), ModelSpec::gcn(8));
        assert_eq!(m.spec(LearnedKind::Mlp, 8).unwrap(), ModelSpec::mlp(8));
        let bad = ModelSection { steps: vec![4], ..Default::default() };
        assert!(bad.spec(LearnedKind::Ggcnn, 8).is_err());
    }
}
