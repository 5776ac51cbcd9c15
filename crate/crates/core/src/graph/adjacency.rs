use serde::{Deserialize, Serialize};
use serde_json::json;

use super::pearson::pearson;
use super::{Channel, GraphError};
use crate::container::{Container, ContainerError};
use crate::ingest::DemandTensor;

/// Symmetric `N × N` edge weights with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    values: Vec<f64>,
}

impl AdjacencyMatrix {
    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self { n, values }
    }

    /// Validates squareness, finiteness and exact symmetry.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self, GraphError> {
        if values.len() != n * n {
            return Err(GraphError::InvalidMatrix(format!("{} values for n = {n}", values.len())));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() {
                    return Err(GraphError::NonFiniteEntry(i, j));
                }
                if v != values[j * n + i] {
                    return Err(GraphError::InvalidMatrix(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Applies a node relabeling: entry (p[i], p[j]) of the result is entry (i, j) here.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[perm[i] * n + perm[j]] = self.get(i, j);
            }
        }
        Self { n, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub window_slots: usize,
    pub channel: Channel,
    pub clip_negative: bool,
    pub top_k: Option<usize>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { window_slots: 168, channel: Channel::Out, clip_negative: true, top_k: None }
    }
}

/// Turns raw correlations (upper triangle filled, undefined already 0) into an
/// adjacency matrix: optional clipping and top-k, mirrored, unit diagonal.
fn finalize(n: usize, mut corr: Vec<f64>, clip_negative: bool, top_k: Option<usize>) -> AdjacencyMatrix {
    for i in 0..n {
        for j in (i + 1)..n {
            let mut v = corr[i * n + j];
            if clip_negative && v < 0.0 {
                v = 0.0;
            }
            corr[i * n + j] = v;
            corr[j * n + i] = v;
        }
        corr[i * n + i] = 1.0;
    }
    if let Some(k) = top_k {
        let mut keep = vec![false; n * n];
        for i in 0..n {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| corr[i * n + b].total_cmp(&corr[i * n + a]).then(a.cmp(&b)));
            for &j in order.iter().take(k) {
                keep[i * n + j] = true;
                keep[j * n + i] = true;
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !keep[i * n + j] {
                    corr[i * n + j] = 0.0;
                }
            }
        }
    }
    AdjacencyMatrix { n, values: corr }
}

/// Full-history correlation graph.
pub fn static_adjacency(demand: &DemandTensor, channel: Channel, clip_negative: bool) -> Result<AdjacencyMatrix, GraphError> {
    let n = demand.n_stations();
    let t = demand.n_slots();
    if t < 2 {
        return Err(GraphError::TooShort(t));
    }
    let series: Vec<Vec<f64>> = (0..n).map(|s| (0..t).map(|k| channel.value(demand, k, s)).collect()).collect();
    let mut corr = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            corr[i * n + j] = pearson(&series[i], &series[j])?.unwrap_or(0.0);
        }
    }
    Ok(finalize(n, corr, clip_negative, None))
}

/// Per-slot correlation graphs over trailing windows.
///
/// Matrix `k` covers slots `[k, k + window)`; slot `t` maps to the window
/// ending at `t`, and slots before the first full window reuse matrix 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySeries {
    matrices: Vec<AdjacencyMatrix>,
    config: GraphConfig,
    n_slots: usize,
}

impl AdjacencySeries {
    pub fn constant(matrix: AdjacencyMatrix, n_slots: usize, config: GraphConfig) -> Self {
        Self { matrices: vec![matrix], config: GraphConfig { window_slots: n_slots, ..config }, n_slots }
    }

    pub fn window(&self) -> usize {
        self.config.window_slots
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn n(&self) -> usize {
        self.matrices.first().map_or(0, AdjacencyMatrix::n)
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[AdjacencyMatrix] {
        &self.matrices
    }

    /// First slot whose trailing window is complete.
    pub fn first_full_slot(&self) -> usize {
        self.n_slots - self.matrices.len()
    }

    pub fn at(&self, slot: usize) -> &AdjacencyMatrix {
        let idx = slot.saturating_sub(self.first_full_slot()).min(self.matrices.len() - 1);
        &self.matrices[idx]
    }

    pub fn to_container(&self) -> Container {
        let n = self.n();
        let data = self.matrices.iter().flat_map(|m| m.values.iter().copied()).collect();
        Container::new(
            "adjacency",
            vec![self.matrices.len(), n, n],
            json!({
                "n": n,
                "n_slots": self.n_slots,
                "window": self.config.window_slots,
                "channel": self.config.channel,
                "clip_negative": self.config.clip_negative,
                "top_k": self.config.top_k,
                "first_slot": self.first_full_slot(),
            }),
            data,
        )
    }

    pub fn from_container(c: &Container) -> Result<Self, ContainerError> {
        c.expect_kind("adjacency")?;
        let n: usize = c.meta("n")?;
        let n_slots: usize = c.meta("n_slots")?;
        let config = GraphConfig {
            window_slots: c.meta("window")?,
            channel: c.meta("channel")?,
            clip_negative: c.meta("clip_negative")?,
            top_k: c.meta("top_k")?,
        };
        let count = c.header.shape.first().copied().unwrap_or(0);
        if c.header.shape != [count, n, n] || count == 0 || count > n_slots {
            return Err(ContainerError::Meta("shape".into()));
        }
        let matrices = c
            .data
            .chunks_exact(n * n)
            .map(|chunk| AdjacencyMatrix::from_values(n, chunk.to_vec()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ContainerError::Meta(e.to_string()))?;
        Ok(Self { matrices, config, n_slots })
    }
}

/// Trailing-window correlation graphs, one per slot with a full window.
///
/// Window sums slide in O(N²) per slot and are recomputed from scratch once
/// per window length. Series are shifted by the rounded mean of the first
/// window, which keeps integer counts exact. Zero variance is detected exactly by counting
/// value changes inside the window.
pub fn dynamic_adjacency(demand: &DemandTensor, cfg: &GraphConfig) -> Result<AdjacencySeries, GraphError> {
    let n = demand.n_stations();
    let t_total = demand.n_slots();
    let w = cfg.window_slots;
    if w < 2 {
        return Err(GraphError::WindowTooSmall(w));
    }
    if w > t_total {
        return Err(GraphError::WindowTooLarge { window: w, slots: t_total });
    }
    // x[t * n + s]
    let mut x = vec![0.0; t_total * n];
    for s in 0..n {
        // First window only, so later slots cannot reach earlier graphs even through rounding.
        let mean = (0..w).map(|t| cfg.channel.value(demand, t, s)).sum::<f64>() / w as f64;
        let shift = mean.round();
        for t in 0..t_total {
            x[t * n + s] = cfg.channel.value(demand, t, s) - shift;
        }
    }
    let row = |t: usize| &x[t * n..(t + 1) * n];

    let mut sx = vec![0.0; n];
    let mut sxx = vec![0.0; n];
    let mut sxy = vec![0.0; n * n];
    let mut changes = vec![0usize; n];

    let recompute = |end: usize, sx: &mut [f64], sxx: &mut [f64], sxy: &mut [f64], changes: &mut [usize]| {
        sx.fill(0.0);
        sxx.fill(0.0);
        sxy.fill(0.0);
        changes.fill(0);
        let start = end + 1 - w;
        for t in start..=end {
            let r = row(t);
            for i in 0..n {
                sx[i] += r[i];
                sxx[i] += r[i] * r[i];
                for j in (i + 1)..n {
                    sxy[i * n + j] += r[i] * r[j];
                }
                if t > start && r[i] != row(t - 1)[i] {
                    changes[i] += 1;
                }
            }
        }
    };

    let wf = w as f64;
    let mut matrices = Vec::with_capacity(t_total - w + 1);
    for end in (w - 1)..t_total {
        let steps = end - (w - 1);
        if steps % w == 0 {
            recompute(end, &mut sx, &mut sxx, &mut sxy, &mut changes);
        } else {
            let (add, drop) = (row(end), row(end - w));
            let (add_prev, drop_next) = (row(end - 1), row(end - w + 1));
            for i in 0..n {
                sx[i] += add[i] - drop[i];
                sxx[i] += add[i] * add[i] - drop[i] * drop[i];
                for j in (i + 1)..n {
                    sxy[i * n + j] += add[i] * add[j] - drop[i] * drop[j];
                }
                if add[i] != add_prev[i] {
                    changes[i] += 1;
                }
                if drop_next[i] != drop[i] {
                    changes[i] -= 1;
                }
            }
        }
        let var: Vec<f64> = (0..n).map(|i| sxx[i] - sx[i] * sx[i] / wf).collect();
        let mut corr = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                if changes[i] == 0 || changes[j] == 0 || var[i] <= 0.0 || var[j] <= 0.0 {
                    continue;
                }
                let cov = sxy[i * n + j] - sx[i] * sx[j] / wf;
                corr[i * n + j] = (cov / (var[i].sqrt() * var[j].sqrt())).clamp(-1.0, 1.0);
            }
        }
        matrices.push(finalize(n, corr, cfg.clip_negative, cfg.top_k));
    }
    Ok(AdjacencySeries { matrices, config: *cfg, n_slots: t_total })
}
