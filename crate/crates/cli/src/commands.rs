//! The pipeline stages. Each reads its upstream artifacts from the workdir,
//! writes its own, and records both in the manifest.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ggcnn_core::access::{access_vectors, read_opportunities, SummaryStats};
use ggcnn_core::container::Container;
use ggcnn_core::evalbench::{evaluate_model, generate_synthetic, Comparison, ModelKind, Space};
use ggcnn_core::graph::dynamic_adjacency;
use ggcnn_core::ingest::{
    aggregate_hourly, filter_stations, format_timestamp, join_weather, parse_timestamp, parse_trips, parse_weather, FeatureLayout,
    SlotRange, IN_CHANNEL, OUT_CHANNEL,
};
use ggcnn_core::neuro::Model;
use ggcnn_core::train::{grad_check, train, PreparedData};
use ggcnn_core::{AccessVectors, AdjacencySeries, DemandTensor, FeatureTensor, GeoPoint, StationRegistry};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{LearnedKind, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest::{run_stage, StagePlan};

pub const DEMAND: &str = "demand.bin";
pub const FEATURES: &str = "features.bin";
pub const STATIONS: &str = "stations.csv";
pub const INGEST_SUMMARY: &str = "ingest_summary.json";
pub const ACCESS_CSV: &str = "access.csv";
pub const ACCESS_JSON: &str = "access_summary.json";
pub const ACCESS_TXT: &str = "access_summary.txt";
pub const ADJACENCY: &str = "adjacency.bin";
pub const GRAPH_SUMMARY: &str = "graph_summary.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_LOG_CSV: &str = "train_log.csv";
pub const TRAIN_LOG_JSON: &str = "train_log.json";
pub const EVAL_JSON: &str = "eval_report.json";
pub const EVAL_CSV: &str = "eval_report.csv";
pub const EVAL_STATIONS: &str = "eval_stations.csv";
pub const EVAL_TXT: &str = "eval_report.txt";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const PREDICTIONS_JSON: &str = "predictions.json";
pub const GRAD_CHECK_JSON: &str = "grad_check.json";
pub const GRAD_CHECK_TXT: &str = "grad_check.txt";

const DATASET_STAGE: &str = "ingest` or `synth";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub source: String,
    pub trips_read: Option<usize>,
    pub trips_skipped: Option<usize>,
    pub weather_rows: Option<usize>,
    pub weather_skipped: Option<usize>,
    pub stations: usize,
    pub slots: usize,
    pub start: String,
    pub end: String,
    pub features: Vec<String>,
    pub out_trips: f64,
    pub in_trips: f64,
}

pub struct Context {
    pub cfg: RunConfig,
    pub workdir: PathBuf,
    pub force: bool,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

fn require_file(p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = p.as_ref().ok_or_else(|| CliError::Usage(format!("paths.{key} is not set")))?;
    check_exists(p)?;
    Ok(p.clone())
}

fn check_exists(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Input { path: p.to_path_buf(), message: "file not found".into() })
    }
}

impl Context {
    pub fn new(cfg: RunConfig, force: bool) -> Self {
        let workdir = cfg.paths.workdir.clone();
        Self { cfg, workdir, force }
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }

    fn upstream(&self, name: &str, stage: &'static str) -> Result<PathBuf> {
        let p = self.artifact(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::MissingUpstreamArtifact { stage, path: p })
        }
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.artifact(name);
        fs::write(&p, contents).map_err(CliError::io(p))
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.artifact(name);
        Ok(BufWriter::new(File::create(&p).map_err(CliError::io(p))?))
    }

    fn write_container(&self, name: &str, c: &Container) -> Result<()> {
        let p = self.artifact(name);
        c.write(&p).map_err(CliError::container(p))
    }

    fn read_container(&self, name: &str, stage: &'static str) -> Result<Container> {
        let p = self.upstream(name, stage)?;
        Container::read(&p).map_err(CliError::container(p))
    }

    fn stage(&self, plan: StagePlan, body: impl FnOnce() -> Result<()>) -> Result<bool> {
        run_stage(&self.workdir, self.force, plan, body)
    }

    fn load_demand(&self) -> Result<DemandTensor> {
        let c = self.read_container(DEMAND, DATASET_STAGE)?;
        DemandTensor::from_container(&c).map_err(CliError::container(self.artifact(DEMAND)))
    }

    fn load_features(&self) -> Result<FeatureTensor> {
        let c = self.read_container(FEATURES, DATASET_STAGE)?;
        FeatureTensor::from_container(&c).map_err(CliError::container(self.artifact(FEATURES)))
    }

    fn load_adjacency(&self) -> Result<AdjacencySeries> {
        let c = self.read_container(ADJACENCY, "graph")?;
        AdjacencySeries::from_container(&c).map_err(CliError::container(self.artifact(ADJACENCY)))
    }

    fn load_registry(&self) -> Result<StationRegistry> {
        let p = self.upstream(STATIONS, DATASET_STAGE)?;
        let f = File::open(&p).map_err(CliError::io(&p))?;
        StationRegistry::read_csv(f).map_err(|e| CliError::Input { path: p, message: e.to_string() })
    }

    fn load_model(&self) -> Result<Model> {
        let c = self.read_container(CHECKPOINT, "train")?;
        Ok(Model::from_container(&c)?)
    }

    fn prepared(&self) -> Result<PreparedData> {
        let (features, demand, adjacency) = (self.load_features()?, self.load_demand()?, self.load_adjacency()?);
        Ok(PreparedData::new(&features, &demand, &adjacency, &self.cfg.split(), self.cfg.train.validation_fraction)?)
    }

    fn dataset_inputs(&self) -> Result<Vec<PathBuf>> {
        Ok(vec![self.upstream(FEATURES, DATASET_STAGE)?, self.upstream(DEMAND, DATASET_STAGE)?, self.upstream(ADJACENCY, "graph")?])
    }

    fn write_dataset(&self, registry: &StationRegistry, demand: &DemandTensor, features: &FeatureTensor, summary: &IngestSummary) -> Result<()> {
        self.write_container(DEMAND, &demand.to_container())?;
        self.write_container(FEATURES, &features.to_container())?;
        registry.write_csv(self.create(STATIONS)?).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.write(INGEST_SUMMARY, to_json(summary))?;
        println!(
            "{}: {} stations, {} hourly slots ({} .. {}), {} features",
            summary.source,
            summary.stations,
            summary.slots,
            summary.start,
            summary.end,
            summary.features.len()
        );
        Ok(())
    }
}

fn dataset_summary(source: &str, demand: &DemandTensor, features: &FeatureTensor) -> IngestSummary {
    let slots = demand.slots();
    IngestSummary {
        source: source.to_string(),
        trips_read: None,
        trips_skipped: None,
        weather_rows: None,
        weather_skipped: None,
        stations: demand.n_stations(),
        slots: slots.len,
        start: format_timestamp(slots.start),
        end: format_timestamp(slots.end()),
        features: features.layout().names().iter().map(|s| s.to_string()).collect(),
        out_trips: demand.channel_total(OUT_CHANNEL),
        in_trips: demand.channel_total(IN_CHANNEL),
    }
}

/// Applies `station_id,lat,lon` rows to the registry.
fn apply_station_file(registry: &mut StationRegistry, path: &Path) -> Result<()> {
    #[derive(Deserialize)]
    struct Row {
        station_id: String,
        lat: f64,
        lon: f64,
        name: Option<String>,
    }
    let bad = |message: String| CliError::Input { path: path.to_path_buf(), message };
    let f = File::open(path).map_err(CliError::io(path))?;
    for (i, row) in csv::Reader::from_reader(f).deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        let p = GeoPoint::new(row.lat, row.lon);
        if !p.is_valid() {
            return Err(bad(format!("row {}: invalid coordinates", i + 1)));
        }
        registry.set_location(&row.station_id, p, row.name.as_deref());
    }
    Ok(())
}

fn access_table(vectors: &AccessVectors) -> (serde_json::Value, String) {
    let rows = [("access_population", SummaryStats::of(&vectors.population)), ("access_employment", SummaryStats::of(&vectors.employment))];
    let mut text = format!("{:<18}  {:>14}  {:>14}  {:>14}  {:>14}\n", "Attribute", "Mean", "Std", "Min", "Max");
    for (name, s) in &rows {
        let _ = writeln!(text, "{name:<18}  {:>14.3}  {:>14.3}  {:>14.3}  {:>14.3}", s.mean, s.std, s.min, s.max);
    }
    let json = json!({ "stations": vectors.population.len(), "attributes": rows.iter().map(|(n, s)| json!({"name": n, "stats": s})).collect::<Vec<_>>() });
    (json, text)
}

pub fn cmd_ingest(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    if cfg.paths.trips.is_empty() {
        return Err(CliError::Usage("paths.trips is not set".into()));
    }
    for p in &cfg.paths.trips {
        check_exists(p)?;
    }
    let weather_path = require_file(&cfg.paths.weather, "weather")?;
    let pop_path = require_file(&cfg.paths.population, "population")?;
    let emp_path = require_file(&cfg.paths.employment, "employment")?;
    let mut inputs = cfg.paths.trips.clone();
    inputs.extend([weather_path.clone(), pop_path.clone(), emp_path.clone()]);
    if let Some(s) = &cfg.paths.stations {
        check_exists(s)?;
        inputs.push(s.clone());
    }
    let plan = StagePlan {
        name: "ingest",
        config: json!({ "ingest": value(&cfg.ingest), "access": value(&cfg.access) }),
        inputs,
        outputs: vec![DEMAND, FEATURES, STATIONS, INGEST_SUMMARY],
    };
    ctx.stage(plan, || {
        let mut trips = Vec::new();
        let mut skipped = 0;
        for p in &cfg.paths.trips {
            let parsed = parse_trips(p, &cfg.ingest.columns)?;
            skipped += parsed.skipped;
            trips.extend(parsed.records);
        }
        trips.sort_by_key(|r| r.start_time);
        let read = trips.len();
        let mut registry = filter_stations(&trips, cfg.ingest.min_annual_demand)?;
        if let Some(s) = &cfg.paths.stations {
            apply_station_file(&mut registry, s)?;
        }
        let range = match (&cfg.ingest.start, &cfg.ingest.end) {
            (Some(a), Some(b)) => SlotRange::between(parse_timestamp(a).expect("validated"), parse_timestamp(b).expect("validated"))?,
            _ => {
                let retained: Vec<_> = trips
                    .iter()
                    .filter(|t| registry.index_of(&t.start_station_id).is_some() || registry.index_of(&t.end_station_id).is_some())
                    .collect();
                let first = retained.iter().map(|t| t.start_time).min().expect("registry is non-empty");
                let last = retained.iter().map(|t| t.end_time).max().expect("registry is non-empty");
                SlotRange::covering(first, last)?
            }
        };
        let demand = aggregate_hourly(&trips, &registry, range);
        let weather = parse_weather(&weather_path)?;
        let access = access_vectors(&registry, &read_opportunities(&pop_path)?, &read_opportunities(&emp_path)?, &cfg.access)?;
        let layout = FeatureLayout::with_humidity(cfg.ingest.include_humidity);
        let features = join_weather(&demand, &weather.records, &access.population, &access.employment, &layout)?;
        let summary = IngestSummary {
            trips_read: Some(read),
            trips_skipped: Some(skipped),
            weather_rows: Some(weather.records.len()),
            weather_skipped: Some(weather.skipped),
            ..dataset_summary("ingest", &demand, &features)
        };
        println!("ingest: {read} trip rows read, {skipped} skipped");
        ctx.write_dataset(&registry, &demand, &features, &summary)
    })
}

pub fn cmd_synth(ctx: &Context) -> Result<bool> {
    let spec = &ctx.cfg.synth;
    let plan = StagePlan {
        name: "synth",
        config: json!({ "synth": value(spec) }),
        inputs: Vec::new(),
        outputs: vec![DEMAND, FEATURES, STATIONS, INGEST_SUMMARY],
    };
    ctx.stage(plan, || {
        let data = generate_synthetic(spec)?;
        let summary = dataset_summary("synth", &data.demand, &data.features);
        ctx.write_dataset(&data.registry, &data.demand, &data.features, &summary)
    })
}

pub fn cmd_access(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let stations = ctx.upstream(STATIONS, DATASET_STAGE)?;
    let pop_path = require_file(&cfg.paths.population, "population")?;
    let emp_path = require_file(&cfg.paths.employment, "employment")?;
    let plan = StagePlan {
        name: "access",
        config: json!({ "access": value(&cfg.access) }),
        inputs: vec![stations, pop_path.clone(), emp_path.clone()],
        outputs: vec![ACCESS_CSV, ACCESS_JSON, ACCESS_TXT],
    };
    ctx.stage(plan, || {
        let registry = ctx.load_registry()?;
        let vectors = access_vectors(&registry, &read_opportunities(&pop_path)?, &read_opportunities(&emp_path)?, &cfg.access)?;
        vectors.write_csv(&registry, ctx.create(ACCESS_CSV)?).map_err(|e| CliError::Runtime(e.to_string()))?;
        let (json, text) = access_table(&vectors);
        ctx.write(ACCESS_JSON, to_json(&json))?;
        ctx.write(ACCESS_TXT, &text)?;
        print!("{text}");
        Ok(())
    })
}

pub fn cmd_graph(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let plan = StagePlan {
        name: "graph",
        config: json!({ "graph": value(&cfg.graph) }),
        inputs: vec![ctx.upstream(DEMAND, DATASET_STAGE)?],
        outputs: vec![ADJACENCY, GRAPH_SUMMARY],
    };
    ctx.stage(plan, || {
        let demand = ctx.load_demand()?;
        let series = dynamic_adjacency(&demand, &cfg.graph)?;
        ctx.write_container(ADJACENCY, &series.to_container())?;
        let n = series.n();
        let last = series.at(demand.n_slots() - 1);
        let off: Vec<f64> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| last.get(i, j)).collect();
        let edges = off.iter().filter(|v| **v != 0.0).count();
        let summary = json!({
            "nodes": n,
            "slots": series.n_slots(),
            "matrices": series.len(),
            "window_slots": series.window(),
            "first_full_slot": series.first_full_slot(),
            "last_matrix_edge_density": if off.is_empty() { 0.0 } else { edges as f64 / off.len() as f64 },
            "last_matrix_mean_weight": if off.is_empty() { 0.0 } else { off.iter().sum::<f64>() / off.len() as f64 },
        });
        ctx.write(GRAPH_SUMMARY, to_json(&summary))?;
        println!("graph: {} matrices over {n} stations (window {})", series.len(), series.window());
        Ok(())
    })
}

pub fn cmd_train(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let plan = StagePlan {
        name: "train",
        config: json!({ "model": value(&cfg.model), "train": value(&cfg.train), "split": cfg.ingest.train_fraction }),
        inputs: ctx.dataset_inputs()?,
        outputs: vec![CHECKPOINT, TRAIN_LOG_CSV, TRAIN_LOG_JSON],
    };
    ctx.stage(plan, || {
        let data = ctx.prepared()?;
        let spec = cfg.model.spec(cfg.model.kind, data.n_features())?;
        let tcfg = cfg.train.to_config();
        let (model, log) = train(Model::new(spec, tcfg.seed)?, &data, &tcfg)?;
        ctx.write_container(CHECKPOINT, &model.to_container())?;
        log.write_csv(ctx.create(TRAIN_LOG_CSV)?).map_err(CliError::io(ctx.artifact(TRAIN_LOG_CSV)))?;
        ctx.write(TRAIN_LOG_JSON, log.to_json() + "\n")?;
        println!(
            "train: {} ({} params), {} epochs, best epoch {}, train mse {:.6}, val mse {}",
            log.model,
            log.param_count,
            log.epochs.len(),
            log.best_epoch,
            log.final_train_mse,
            log.final_val_mse.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
        );
        Ok(())
    })
}

fn learned(kind: ModelKind) -> Option<LearnedKind> {
    match kind {
        ModelKind::Ggcnn => Some(LearnedKind::Ggcnn),
        ModelKind::Gcn => Some(LearnedKind::Gcn),
        ModelKind::Mlp => Some(LearnedKind::Mlp),
        ModelKind::Persistence | ModelKind::Ols => None,
    }
}

pub fn render_report(c: &Comparison) -> String {
    format!("Test-set accuracy, scaled targets\n{}\nTest-set accuracy, trip counts\n{}", c.render_table(Space::Scaled), c.render_table(Space::Counts))
}

pub fn cmd_eval(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let mut inputs = ctx.dataset_inputs()?;
    let ckpt = ctx.artifact(CHECKPOINT);
    let needs_model = cfg.eval.models.iter().any(|k| learned(*k).is_some());
    if needs_model && ckpt.is_file() {
        inputs.push(ckpt.clone());
    }
    let plan = StagePlan {
        name: "eval",
        config: json!({ "model": value(&cfg.model), "train": value(&cfg.train), "eval": value(&cfg.eval), "split": cfg.ingest.train_fraction }),
        inputs,
        outputs: vec![EVAL_JSON, EVAL_CSV, EVAL_STATIONS, EVAL_TXT],
    };
    ctx.stage(plan, || {
        let data = ctx.prepared()?;
        let tcfg = cfg.train.to_config();
        let saved = if needs_model && ckpt.is_file() { Some(ctx.load_model()?) } else { None };
        let mut comparison = Comparison::default();
        for &kind in &cfg.eval.models {
            let trained = match learned(kind) {
                None => None,
                Some(lk) => {
                    let spec = cfg.model.spec(lk, data.n_features())?;
                    match &saved {
                        Some(m) if m.spec == spec && m.feature_order == data.feature_names => Some(m.clone()),
                        _ => Some(train(Model::new(spec, tcfg.seed)?, &data, &tcfg)?.0),
                    }
                }
            };
            let out = evaluate_model(kind, &data, &tcfg, trained.as_ref())?;
            comparison.reports.push(out.scaled);
            comparison.reports.push(out.counts);
        }
        let text = render_report(&comparison);
        ctx.write(EVAL_JSON, comparison.to_json() + "\n")?;
        comparison.write_csv(ctx.create(EVAL_CSV)?).map_err(|e| CliError::Runtime(e.to_string()))?;
        comparison.write_station_csv(ctx.create(EVAL_STATIONS)?).map_err(|e| CliError::Runtime(e.to_string()))?;
        ctx.write(EVAL_TXT, &text)?;
        print!("{text}");
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationForecast {
    pub station_id: String,
    pub predicted_in: f64,
    pub predicted_out: f64,
    pub predicted_in_scaled: f64,
    pub predicted_out_scaled: f64,
}

pub fn cmd_predict(ctx: &Context) -> Result<bool> {
    let mut inputs = ctx.dataset_inputs()?;
    inputs.push(ctx.upstream(CHECKPOINT, "train")?);
    let plan = StagePlan {
        name: "predict",
        config: json!({ "split": ctx.cfg.ingest.train_fraction, "validation_fraction": ctx.cfg.train.validation_fraction }),
        inputs,
        outputs: vec![PREDICTIONS_CSV, PREDICTIONS_JSON],
    };
    ctx.stage(plan, || {
        let data = ctx.prepared()?;
        let model = ctx.load_model()?;
        if model.spec.input() != data.n_features() || (!model.feature_order.is_empty() && model.feature_order != data.feature_names) {
            return Err(CliError::Input {
                path: ctx.artifact(CHECKPOINT),
                message: format!("checkpoint expects features {:?}, dataset has {:?}", model.feature_order, data.feature_names),
            });
        }
        let scaled = model.predict(&data.forecast_batch(&model.spec))?.into_data();
        let counts = data.to_counts(&scaled);
        let rows: Vec<StationForecast> = data
            .stations
            .iter()
            .enumerate()
            .map(|(s, id)| StationForecast {
                station_id: id.clone(),
                predicted_in: counts[s * 2 + IN_CHANNEL],
                predicted_out: counts[s * 2 + OUT_CHANNEL],
                predicted_in_scaled: scaled[s * 2 + IN_CHANNEL],
                predicted_out_scaled: scaled[s * 2 + OUT_CHANNEL],
            })
            .collect();
        let slot = format_timestamp(data.demand.slots().end());
        let mut w = csv::Writer::from_writer(ctx.create(PREDICTIONS_CSV)?);
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        w.flush().map_err(CliError::io(ctx.artifact(PREDICTIONS_CSV)))?;
        ctx.write(PREDICTIONS_JSON, to_json(&json!({ "slot": slot, "model": model.spec.name(), "stations": rows })))?;
        println!("predict: {} forecasts for {slot}", rows.len());
        Ok(())
    })
}

pub fn cmd_grad_check(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let plan = StagePlan {
        name: "grad-check",
        config: json!({ "model": value(&cfg.model), "seed": cfg.train.seed, "grad_check": value(&cfg.grad_check), "split": cfg.ingest.train_fraction }),
        inputs: ctx.dataset_inputs()?,
        outputs: vec![GRAD_CHECK_JSON, GRAD_CHECK_TXT],
    };
    ctx.stage(plan, || {
        let data = ctx.prepared()?;
        let spec = cfg.model.spec(cfg.model.kind, data.n_features())?;
        let take = cfg.grad_check.samples.clamp(1, data.train_slots.len().max(1));
        let slots = &data.train_slots[..take.min(data.train_slots.len())];
        let model = Model::new(spec.clone(), cfg.train.seed)?;
        let (batch, target) = data.batch(slots, &spec);
        let report = grad_check(&model, &batch, &target, cfg.grad_check.epsilon)?;
        let text = report.render();
        ctx.write(GRAD_CHECK_JSON, to_json(&json!({ "passed": report.passed(), "max_rel_error": report.max_rel_error(), "report": report })))?;
        ctx.write(GRAD_CHECK_TXT, &text)?;
        print!("{text}");
        println!("grad-check: max relative error {:.3e}", report.max_rel_error());
        if !report.passed() {
            return Err(CliError::Runtime(format!("gradient check failed for: {}", report.failing().join(", "))));
        }
        Ok(())
    })
}
