use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{mse, r_squared};
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Scaled,
    Counts,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Scaled => "scaled",
            Space::Counts => "counts",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` when the targets have zero variance.
    pub r2: Option<f64>,
    pub mse: f64,
    pub rmse: f64,
}

impl Metrics {
    pub fn of(pred: &[f64], actual: &[f64]) -> Result<Self, EvalError> {
        let m = mse(pred, actual)?;
        let r2 = if actual.len() >= 2 { r_squared(pred, actual)? } else { None };
        Ok(Self { r2, mse: m, rmse: m.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMetrics {
    pub station: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Test-set accuracy of one model in one space, pooled over every
/// `(slot, station, channel)` triple plus a per-station breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub attributes: String,
    pub space: Space,
    pub n_test_slots: usize,
    pub aggregate: Metrics,
    pub per_station: Vec<StationMetrics>,
}

impl MetricsReport {
    /// `pred` and `actual` are laid out `slot × station × channel` with two channels.
    pub fn from_predictions(
        model: &str,
        attributes: &str,
        space: Space,
        stations: &[String],
        pred: &[f64],
        actual: &[f64],
    ) -> Result<Self, EvalError> {
        let n = stations.len();
        if pred.len() != actual.len() {
            return Err(EvalError::LengthMismatch(pred.len(), actual.len()));
        }
        if n == 0 || pred.len() % (2 * n) != 0 {
            return Err(EvalError::Shape(format!("{} values do not tile {n} stations × 2 channels", pred.len())));
        }
        let n_slots = pred.len() / (2 * n);
        let aggregate = Metrics::of(pred, actual)?;
        let mut per_station = Vec::with_capacity(n);
        for (s, id) in stations.iter().enumerate() {
            let pick = |v: &[f64]| -> Vec<f64> {
                (0..n_slots).flat_map(|t| [v[(t * n + s) * 2], v[(t * n + s) * 2 + 1]]).collect()
            };
            per_station.push(StationMetrics { station: id.clone(), metrics: Metrics::of(&pick(pred), &pick(actual))? });
        }
        Ok(Self {
            model: model.to_string(),
            attributes: attributes.to_string(),
            space,
            n_test_slots: n_slots,
            aggregate,
            per_station,
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

/// A set of reports rendered side by side.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<MetricsReport>,
}

impl Comparison {
    pub fn find(&self, model: &str, space: Space) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.model == model && r.space == space)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports are serializable")
    }

    /// One row per model and space.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "space", "r2", "mse", "rmse", "n_test_slots", "attributes"])?;
        for r in &self.reports {
            out.write_record([
                r.model.as_str(),
                r.space.name(),
                &r.aggregate.r2.map(|v| v.to_string()).unwrap_or_default(),
                &r.aggregate.mse.to_string(),
                &r.aggregate.rmse.to_string(),
                &r.n_test_slots.to_string(),
                r.attributes.as_str(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Per-station rows for every report.
    pub fn write_station_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "space", "station_id", "r2", "mse", "rmse"])?;
        for r in &self.reports {
            for s in &r.per_station {
                out.write_record([
                    r.model.as_str(),
                    r.space.name(),
                    s.station.as_str(),
                    &s.metrics.r2.map(|v| v.to_string()).unwrap_or_default(),
                    &s.metrics.mse.to_string(),
                    &s.metrics.rmse.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Aligned plain-text table for one space.
    pub fn render_table(&self, space: Space) -> String {
        let rows: Vec<[String; 5]> = self
            .reports
            .iter()
            .filter(|r| r.space == space)
            .map(|r| {
                [
                    r.model.clone(),
                    fmt_opt(r.aggregate.r2),
                    format!("{:.6}", r.aggregate.mse),
                    format!("{:.6}", r.aggregate.rmse),
                    r.attributes.clone(),
                ]
            })
            .collect();
        let header = ["Model", "R2", "MSE", "RMSE", "Attributes"];
        let mut widths = header.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, cells: [&str; 5]| {
            let _ = writeln!(
                s,
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}  {}",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                cells[4],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            );
        };
        line(&mut s, header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut s, [&rule[0], &rule[1], &rule[2], &rule[3], &rule[4]]);
        for row in &rows {
            line(&mut s, [&row[0], &row[1], &row[2], &row[3], &row[4]]);
        }
        s
    }
}
