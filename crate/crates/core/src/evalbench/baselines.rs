use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::neuro::{Model, ModelSpec};
use crate::train::{predict_slots, train, PreparedData, TrainConfig, TrainLog};

use super::report::{MetricsReport, Space};
use super::EvalError;

/// Ridge strength used when the normal equations are singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Whether the ridge fallback was needed.
    pub regularized: bool,
}

impl OlsFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }
}

/// In-place Cholesky solve of `a x = b` for a symmetric `k × k` matrix.
/// Returns `None` when a pivot is not safely positive.
fn cholesky_solve(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let scale = (0..k).map(|i| a[i * k + i].abs()).fold(0.0, f64::max);
    let tiny = scale * 1e-13;
    let mut l = vec![0.0; k * k];
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= l[j * k + p] * l[j * k + p];
        }
        if !(d > tiny) {
            return None;
        }
        let d = d.sqrt();
        l[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            l[i * k + j] = s / d;
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * k + p] * y[p];
        }
        y[i] = s / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = y[i];
        for p in i + 1..k {
            s -= l[p * k + i] * x[p];
        }
        x[i] = s / l[i * k + i];
    }
    Some(x)
}

/// Least squares with intercept, solved on centred columns via the normal
/// equations. `x` holds `samples × f` rows. With `ridge = None`, a singular
/// system is an error; otherwise `ridge` is added to the diagonal and the
/// solve retried.
pub fn ols_fit(x: &[f64], y: &[f64], f: usize, ridge: Option<f64>) -> Result<OlsFit, EvalError> {
    let n = y.len();
    if f == 0 || x.len() != n * f {
        return Err(EvalError::Shape(format!("{} design values for {n} samples of width {f}", x.len())));
    }
    if n <= f {
        return Err(EvalError::TooShort(n));
    }
    let mut mx = vec![0.0; f];
    for row in x.chunks_exact(f) {
        for (m, v) in mx.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mx {
        *m /= n as f64;
    }
    let my = y.iter().sum::<f64>() / n as f64;
    let mut xtx = vec![0.0; f * f];
    let mut xty = vec![0.0; f];
    let mut c = vec![0.0; f];
    for (row, &yv) in x.chunks_exact(f).zip(y) {
        for j in 0..f {
            c[j] = row[j] - mx[j];
        }
        let dy = yv - my;
        for i in 0..f {
            xty[i] += c[i] * dy;
            for j in 0..=i {
                xtx[i * f + j] += c[i] * c[j];
            }
        }
    }
    for i in 0..f {
        for j in 0..i {
            xtx[j * f + i] = xtx[i * f + j];
        }
    }
    let (beta, regularized) = match cholesky_solve(&xtx, &xty, f) {
        Some(b) => (b, false),
        None => {
            let lambda = ridge.ok_or(EvalError::RankDeficient)?;
            // Relative to the data scale so the fallback behaves the same for any units.
            let scale = (0..f).map(|i| xtx[i * f + i]).fold(0.0, f64::max).max(1.0);
            let mut reg = xtx.clone();
            for i in 0..f {
                reg[i * f + i] += lambda * scale;
            }
            (cholesky_solve(&reg, &xty, f).ok_or(EvalError::RankDeficient)?, true)
        }
    };
    let intercept = my - beta.iter().zip(&mx).map(|(b, m)| b * m).sum::<f64>();
    Ok(OlsFit { coefficients: beta, intercept, regularized })
}

/// Models compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Persistence,
    Ols,
    Mlp,
    Gcn,
    Ggcnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Persistence, ModelKind::Ols, ModelKind::Mlp, ModelKind::Gcn, ModelKind::Ggcnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Persistence => "Persistence",
            ModelKind::Ols => "OLS",
            ModelKind::Mlp => "MLP",
            ModelKind::Gcn => "GCN",
            ModelKind::Ggcnn => "GGCNN",
        }
    }

    pub fn spec(self, input: usize) -> Option<ModelSpec> {
        match self {
            ModelKind::Mlp => Some(ModelSpec::mlp(input)),
            ModelKind::Gcn => Some(ModelSpec::gcn(input)),
            ModelKind::Ggcnn => Some(ModelSpec::ggcnn(input)),
            ModelKind::Persistence | ModelKind::Ols => None,
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "persistence" => Ok(ModelKind::Persistence),
            "ols" => Ok(ModelKind::Ols),
            "mlp" => Ok(ModelKind::Mlp),
            "gcn" => Ok(ModelKind::Gcn),
            "ggcnn" => Ok(ModelKind::Ggcnn),
            other => Err(format!("unknown model `{other}` (expected persistence|ols|mlp|gcn|ggcnn)")),
        }
    }
}

/// Demand of the previous slot, in counts, for each requested sample.
pub fn persistence_predictions(data: &PreparedData, slots: &[usize]) -> Vec<f64> {
    let prev: Vec<usize> = slots.iter().map(|t| t.saturating_sub(1)).collect();
    data.counts(&prev)
}

/// One OLS fit per channel on every training sample (validation included).
pub fn ols_baseline(data: &PreparedData) -> Result<[OlsFit; 2], EvalError> {
    let slots: Vec<usize> = data.train_slots.iter().chain(&data.val_slots).copied().collect();
    let f = data.n_features();
    let x: Vec<f64> = slots.iter().flat_map(|&t| data.x_slot(t).iter().copied()).collect();
    let y = data.scaled_targets(&slots);
    let fit = |c: usize| {
        let yc: Vec<f64> = y.chunks_exact(2).map(|r| r[c]).collect();
        ols_fit(&x, &yc, f, Some(RIDGE_FALLBACK))
    };
    Ok([fit(0)?, fit(1)?])
}

pub fn ols_predictions(fits: &[OlsFit; 2], data: &PreparedData, slots: &[usize]) -> Vec<f64> {
    slots
        .iter()
        .flat_map(|&t| data.x_slot(t).chunks_exact(data.n_features()).flat_map(|row| [fits[0].predict_row(row), fits[1].predict_row(row)]))
        .collect()
}

/// Outcome of evaluating one model on the test slots.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub kind: ModelKind,
    pub scaled: MetricsReport,
    pub counts: MetricsReport,
    pub model: Option<Model>,
    pub log: Option<TrainLog>,
}

/// Trains (when needed) and scores `kind` on the test slots. A supplied
/// `trained` model is used as is instead of training a fresh one.
pub fn evaluate_model(
    kind: ModelKind,
    data: &PreparedData,
    cfg: &TrainConfig,
    trained: Option<&Model>,
) -> Result<Evaluated, EvalError> {
    let slots = &data.test_slots;
    let (scaled_pred, model, log, attributes) = match kind {
        ModelKind::Persistence => {
            let counts = persistence_predictions(data, slots);
            (data.to_scaled(&counts), None, None, "previous-slot demand".to_string())
        }
        ModelKind::Ols => {
            let fits = ols_baseline(data)?;
            (ols_predictions(&fits, data, slots), None, None, "linear, per channel".to_string())
        }
        _ => {
            let (model, log) = match trained {
                Some(m) => (m.clone(), None),
                None => {
                    let spec = kind.spec(data.n_features()).expect("trainable kind");
                    let (m, l) = train(Model::new(spec, cfg.seed)?, data, cfg)?;
                    (m, Some(l))
                }
            };
            let pred = predict_slots(&model, data, slots)?;
            let attributes = format!("{}; {} params", model.spec.describe(), model.param_count());
            (pred, Some(model), log, attributes)
        }
    };
    let name = kind.name();
    let scaled = MetricsReport::from_predictions(name, &attributes, Space::Scaled, &data.stations, &scaled_pred, &data.scaled_targets(slots))?;
    let counts = MetricsReport::from_predictions(name, &attributes, Space::Counts, &data.stations, &data.to_counts(&scaled_pred), &data.counts(slots))?;
    Ok(Evaluated { kind, scaled, counts, model, log })
}
