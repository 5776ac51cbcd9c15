use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STATIONS: [(&str, f64, f64); 4] = [("2", 41.881, -87.630), ("7", 41.886, -87.641), ("10", 41.875, -87.624), ("31", 41.892, -87.620)];
const HOURS: usize = 120;

/// Writes trips, weather, opportunities, station locations and a config into
/// `dir` and returns the config path.
fn fixture(dir: &Path, extra: &str) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut trips = String::from("trip_id,start_time,end_time,from_station_id,from_station_name,to_station_id,to_station_name,usertype\n");
    let mut id = 0;
    for h in 0..HOURS {
        let busy = if (7..10).contains(&(h % 24)) || (16..19).contains(&(h % 24)) { 6 } else { 2 };
        for _ in 0..rng.random_range(0..=busy) {
            let a = STATIONS[rng.random_range(0..4)].0;
            let b = STATIONS[rng.random_range(0..4)].0;
            let (day, hour, min) = (1 + h / 24, h % 24, rng.random_range(0..40));
            id += 1;
            let _ = writeln!(
                trips,
                "{id},2019-01-{day:02} {hour:02}:{min:02}:00,2019-01-{day:02} {hour:02}:{:02}:00,{a},Station {a},{b},Station {b},Subscriber",
                min + 15
            );
        }
    }
    trips.push_str("999999,2019-01-02 03:10:00,2019-01-02 03:20:00,99,Lonely,99,Lonely,Customer\n");
    trips.push_str("1000000,not a time,2019-01-02 03:20:00,2,Station 2,7,Station 7,Customer\n");
    fs::write(dir.join("trips.csv"), trips).unwrap();

    let mut weather = String::from("slot,temperature,wind_speed,humidity,precipitation,pressure\n");
    for h in 0..HOURS {
        let _ = writeln!(weather, "2019-01-{:02} {:02}:00:00,{:.1},{:.1},70,0.0,1015", 1 + h / 24, h % 24, -3.0 + (h % 24) as f64 * 0.3, 10.0 + (h % 7) as f64);
    }
    fs::write(dir.join("weather.csv"), weather).unwrap();
    fs::write(dir.join("population.csv"), "lat,lon,weight\n41.880,-87.631,1200\n41.887,-87.640,800\n41.950,-87.700,5000\n").unwrap();
    fs::write(dir.join("employment.csv"), "lat,lon,weight\n41.876,-87.625,3000\n41.891,-87.621,400\n").unwrap();
    let mut stations = String::from("station_id,lat,lon,name\n");
    for (s, lat, lon) in STATIONS {
        let _ = writeln!(stations, "{s},{lat},{lon},Station {s}");
    }
    fs::write(dir.join("stations.csv"), stations).unwrap();

    let config = format!(
        r#"seed = 4
[paths]
trips = "trips.csv"
weather = "weather.csv"
population = "population.csv"
employment = "employment.csv"
stations = "stations.csv"
workdir = "work"
[ingest]
min_annual_demand = 20
[graph]
window_slots = 24
[model]
hidden = [8, 8]
readout_hidden = [16]
[train]
epochs = 3
{extra}"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    path
}

fn ggcnn(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggcnn")).arg("--config").arg(config).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(o), stderr(o));
}

#[test]
fn missing_trip_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), "");
    fs::remove_file(dir.path().join("trips.csv")).unwrap();
    let out = ggcnn(&cfg, &["ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("trips.csv"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), "[train]\nepoch = 2\n");
    let out = ggcnn(&cfg, &["ingest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_records_outputs_and_skips_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), "");
    let work = dir.path().join("work");
    assert_ok(&ggcnn(&cfg, &["ingest"]));

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(work.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["stages"]["ingest"]["outputs"].as_object().unwrap().clone();
    assert_eq!(outputs.len(), 4);
    for name in ["demand.bin", "features.bin", "stations.csv", "ingest_summary.json"] {
        assert!(outputs.contains_key(name), "{name} missing from manifest");
    }

    let ids: Vec<String> = fs::read_to_string(work.join("stations.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(ids, ["2", "7", "10", "31"]);

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(work.join("ingest_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["trips_skipped"], 1);

    let again = ggcnn(&cfg, &["ingest"]);
    assert_ok(&again);
    assert!(stdout(&again).contains("ingest: up-to-date"), "{}", stdout(&again));
    let manifest2: serde_json::Value = serde_json::from_str(&fs::read_to_string(work.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest2["stages"]["ingest"]["outputs"], manifest["stages"]["ingest"]["outputs"]);

    let forced = ggcnn(&cfg, &["--force", "ingest"]);
    assert_ok(&forced);
    assert!(!stdout(&forced).contains("up-to-date"));
}

#[test]
fn downstream_stage_without_upstream_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), "");
    let out = ggcnn(&cfg, &["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing upstream artifact"), "{}", stderr(&out));
}

#[test]
fn locked_workdir_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), "");
    fs::create_dir_all(dir.path().join("work")).unwrap();
    fs::write(dir.path().join("work/.ggcnn.lock"), "pid 1\n").unwrap();
    let out = ggcnn(&cfg, &["ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("locked"), "{}", stderr(&out));
}

#[test]
fn full_pipeline_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), "");
    let work = dir.path().join("work");
    for stage in ["ingest", "access", "graph", "train"] {
        assert_ok(&ggcnn(&cfg, &[stage]));
    }

    let access = fs::read_to_string(work.join("access.csv")).unwrap();
    assert_eq!(access.lines().count(), 1 + STATIONS.len());

    let out = ggcnn(&cfg, &["eval", "--models", "persistence"]);
    assert_ok(&out);
    let table = fs::read_to_string(work.join("eval_report.txt")).unwrap();
    let header = table.lines().find(|l| l.starts_with("Model")).unwrap();
    for col in ["Model", "R2", "MSE", "RMSE"] {
        assert!(header.split_whitespace().any(|c| c == col), "{header}");
    }
    let rows: Vec<&str> = table.lines().filter(|l| l.starts_with("Persistence")).collect();
    assert_eq!(rows.len(), 2, "one row per table:\n{table}");
    assert!(!table.contains("GGCNN"));

    assert_ok(&ggcnn(&cfg, &["predict"]));
    let preds = fs::read_to_string(work.join("predictions.csv")).unwrap();
    let lines: Vec<&str> = preds.lines().collect();
    assert_eq!(lines[0], "station_id,predicted_in,predicted_out,predicted_in_scaled,predicted_out_scaled");
    assert_eq!(lines.len(), 1 + STATIONS.len());
    for l in &lines[1..] {
        assert!(l.split(',').skip(1).all(|v| v.parse::<f64>().unwrap().is_finite()));
    }

    let gc = ggcnn(&cfg, &["grad-check"]);
    assert_ok(&gc);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(work.join("grad_check.json")).unwrap()).unwrap();
    assert!(report.to_string().contains("max_rel"), "{report}");
}

#[test]
fn checkpoint_mismatch_after_config_change_retrains_for_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), "");
    for stage in ["ingest", "graph", "train"] {
        assert_ok(&ggcnn(&cfg, &[stage]));
    }
    let again = ggcnn(&cfg, &["train"]);
    assert_ok(&again);
    assert!(stdout(&again).contains("train: up-to-date"));
    let text = fs::read_to_string(&cfg).unwrap().replace("epochs = 3", "epochs = 2");
    fs::write(&cfg, text).unwrap();
    let retrain = ggcnn(&cfg, &["train"]);
    assert_ok(&retrain);
    assert!(!stdout(&retrain).contains("up-to-date"));
    let log = fs::read_to_string(dir.path().join("work/train_log.csv")).unwrap();
    assert!(log.lines().count() <= 3);
}
