use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::access::{haversine_minutes, GeoPoint};
use crate::graph::{dynamic_adjacency, propagation_operator, AdjacencyMatrix, AdjacencySeries, GraphConfig};
use crate::ingest::{
    join_weather, parse_timestamp, DemandTensor, FeatureLayout, FeatureTensor, SlotRange, Station, StationRegistry, WeatherRecord,
    IN_CHANNEL, OUT_CHANNEL,
};

use super::EvalError;

/// Planted-structure demand generator.
///
/// For station `s` in community `c` and each channel,
/// `d_t = max(0, μ_s + A_c·w(t)·p_c(t) + α·(P d_{t−1})_s + β·temp_t + σ·ε)`
/// where `p_c` is a daily sinusoid with a semi-diurnal harmonic, `w` a weekly
/// amplitude modulation, `P` the normalized planted graph and `temp_t` the
/// standardized temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_stations: usize,
    pub n_slots: usize,
    pub seed: u64,
    /// Diffusion strength through the planted graph.
    pub alpha: f64,
    /// Temperature effect.
    pub beta: f64,
    /// Noise standard deviation.
    pub noise: f64,
    pub communities: usize,
    /// Nearest neighbours linked inside each community.
    pub neighbors: usize,
    pub base_level: f64,
    pub daily_amplitude: f64,
    /// Relative amplitude of the 12-hour harmonic.
    pub semidiurnal: f64,
    pub weekly_amplitude: f64,
    pub start: String,
    /// Trailing window of the emitted correlation graphs.
    pub window_slots: usize,
    /// Strongest correlations kept per station in the emitted graphs.
    pub graph_top_k: Option<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_stations: 20,
            n_slots: 2000,
            seed: 42,
            alpha: 0.3,
            beta: 0.5,
            noise: 0.2,
            communities: 4,
            neighbors: 3,
            base_level: 1.0,
            daily_amplitude: 1.0,
            semidiurnal: 0.6,
            weekly_amplitude: 0.25,
            start: "2019-07-01 00:00:00".to_string(),
            window_slots: 168,
            graph_top_k: Some(3),
        }
    }
}

impl SyntheticSpec {
    /// Correlation-graph settings used for the emitted adjacency series.
    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig { window_slots: self.window_slots, top_k: self.graph_top_k, ..GraphConfig::default() }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidSpec(m));
        if self.n_stations == 0 || self.communities == 0 || self.communities > self.n_stations {
            return bad(format!("{} stations cannot form {} communities", self.n_stations, self.communities));
        }
        if self.n_slots < self.window_slots.max(2) {
            return bad(format!("{} slots are fewer than the {}-slot window", self.n_slots, self.window_slots));
        }
        if self.alpha.abs() >= 1.0 {
            return bad(format!("diffusion strength {} would not be stable", self.alpha));
        }
        if !(self.noise >= 0.0) || !self.beta.is_finite() {
            return bad("noise must be non-negative and beta finite".into());
        }
        parse_timestamp(&self.start).ok_or_else(|| EvalError::InvalidSpec(format!("bad start timestamp `{}`", self.start)))?;
        Ok(())
    }
}

/// Everything the training pipeline needs plus the planted ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub registry: StationRegistry,
    pub demand: DemandTensor,
    pub features: FeatureTensor,
    pub weather: Vec<WeatherRecord>,
    pub access_population: Vec<f64>,
    pub access_employment: Vec<f64>,
    pub adjacency: AdjacencySeries,
    pub planted: AdjacencyMatrix,
    /// Community of each station.
    pub community: Vec<usize>,
    /// Daily phase per community (out channel; in channel is shifted by π/2).
    pub phase: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// μ per station.
    pub level: Vec<f64>,
    /// Standardized temperature per slot.
    pub temperature_std: Vec<f64>,
}

impl SyntheticData {
    /// Noise-free, diffusion-free, weather-free profile value.
    pub fn profile(&self, spec: &SyntheticSpec, slot: usize, station: usize, channel: usize) -> f64 {
        let c = self.community[station];
        profile(spec, slot, channel, self.level[station], self.amplitude[c], self.phase[c])
    }
}

fn profile(spec: &SyntheticSpec, t: usize, channel: usize, level: f64, amplitude: f64, phase: f64) -> f64 {
    let shift = if channel == IN_CHANNEL { PI / 2.0 } else { 0.0 };
    level + amplitude * weekly(spec, t) * daily(spec, t, phase + shift)
}

fn weekly(spec: &SyntheticSpec, t: usize) -> f64 {
    1.0 + spec.weekly_amplitude * (2.0 * PI * t as f64 / 168.0).sin()
}

fn daily(spec: &SyntheticSpec, t: usize, phase: f64) -> f64 {
    let x = 2.0 * PI * t as f64 / 24.0;
    (x + phase).sin() + spec.semidiurnal * (2.0 * x + 2.0 * phase).sin()
}

/// Symmetrized k-nearest-neighbour graph inside each community, unit weights
/// and unit diagonal.
fn planted_graph(locations: &[GeoPoint], community: &[usize], k: usize) -> AdjacencyMatrix {
    let n = locations.len();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
        let mut peers: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i && community[j] == community[i])
            .map(|j| (haversine_minutes(locations[i], locations[j], 5.0), j))
            .collect();
        peers.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for &(_, j) in peers.iter().take(k) {
            a[i * n + j] = 1.0;
            a[j * n + i] = 1.0;
        }
    }
    AdjacencyMatrix::from_values(n, a).expect("symmetric by construction")
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, EvalError> {
    spec.validate()?;
    let (n, t_total) = (spec.n_stations, spec.n_slots);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");

    // Stations and communities around a city centre.
    let community: Vec<usize> = (0..n).map(|s| s % spec.communities).collect();
    let centres: Vec<GeoPoint> = (0..spec.communities)
        .map(|_| GeoPoint::new(41.88 + rng.random_range(-0.06..0.06), -87.63 + rng.random_range(-0.06..0.06)))
        .collect();
    let locations: Vec<GeoPoint> = community
        .iter()
        .map(|&c| GeoPoint::new(centres[c].lat + rng.random_range(-0.006..0.006), centres[c].lon + rng.random_range(-0.006..0.006)))
        .collect();
    let phase: Vec<f64> = (0..spec.communities).map(|c| 2.0 * PI * c as f64 / spec.communities as f64 + rng.random_range(-0.3..0.3)).collect();
    let amplitude: Vec<f64> = (0..spec.communities).map(|_| spec.daily_amplitude * rng.random_range(0.7..1.3)).collect();
    let level: Vec<f64> = (0..n).map(|_| spec.base_level * rng.random_range(0.8..1.2)).collect();
    let pop_c: Vec<f64> = (0..spec.communities).map(|_| rng.random_range(2_000.0..40_000.0)).collect();
    let emp_c: Vec<f64> = (0..spec.communities).map(|_| rng.random_range(500.0..80_000.0)).collect();
    let access_population: Vec<f64> = community.iter().map(|&c| (pop_c[c] * rng.random_range(0.9..1.1)).round()).collect();
    let access_employment: Vec<f64> = community.iter().map(|&c| (emp_c[c] * rng.random_range(0.9..1.1)).round()).collect();

    let planted = planted_graph(&locations, &community, spec.neighbors);
    let p = propagation_operator(&planted)?;

    // Weather: seasonal drift, daily cycles and AR(1) disturbances.
    let start = parse_timestamp(&spec.start).ok_or_else(|| EvalError::InvalidSpec(format!("bad start timestamp `{}`", spec.start)))?;
    let range = SlotRange::new(start, t_total).map_err(|e| EvalError::InvalidSpec(e.to_string()))?;
    let mut weather = Vec::with_capacity(t_total);
    let (mut temp_ar, mut wind_ar, mut press_walk) = (0.0, 0.0, 0.0);
    let mut raining = 0usize;
    for t in 0..t_total {
        let hour = 2.0 * PI * t as f64 / 24.0;
        temp_ar = 0.9 * temp_ar + 0.8 * unit.sample(&mut rng);
        wind_ar = 0.8 * wind_ar + 1.0 * unit.sample(&mut rng);
        press_walk = 0.995 * press_walk + 0.3 * unit.sample(&mut rng);
        if raining > 0 {
            raining -= 1;
        } else if rng.random_bool(0.01) {
            raining = rng.random_range(1..6);
        }
        let seasonal = 6.0 * (2.0 * PI * t as f64 / (24.0 * 120.0)).sin();
        weather.push(WeatherRecord {
            slot: range.time_of(t),
            temperature: 20.0 + seasonal + 4.0 * (hour - 2.0).sin() + temp_ar,
            wind_speed: (12.0 + 4.0 * hour.cos() + wind_ar).max(0.0),
            humidity: (65.0 - 12.0 * (hour - 2.0).sin() + 2.0 * unit.sample(&mut rng)).clamp(0.0, 100.0),
            precipitation: if raining > 0 { rng.random_range(0.1..4.0) } else { 0.0 },
            pressure: 1013.0 + 1.2 * (2.0 * hour).sin() + press_walk,
        });
    }
    let mean_t = weather.iter().map(|w| w.temperature).sum::<f64>() / t_total as f64;
    let sd_t = (weather.iter().map(|w| (w.temperature - mean_t).powi(2)).sum::<f64>() / t_total as f64).sqrt().max(1e-12);
    let temperature_std: Vec<f64> = weather.iter().map(|w| (w.temperature - mean_t) / sd_t).collect();

    let ids: Vec<String> = (1..=n).map(|s| s.to_string()).collect();
    let mut demand = DemandTensor::zeros(range, ids.clone());
    let mut prev = [level.clone(), level.clone()];
    for t in 0..t_total {
        for (ch, prev_ch) in [OUT_CHANNEL, IN_CHANNEL].into_iter().zip([0, 1]) {
            let mut next = vec![0.0; n];
            for s in 0..n {
                let spread: f64 = (0..n).map(|j| p.get(s, j) * prev[prev_ch][j]).sum();
                let e = unit.sample(&mut rng);
                let c = community[s];
                let v = profile(spec, t, ch, level[s], amplitude[c], phase[c]) + spec.alpha * spread + spec.beta * temperature_std[t] + spec.noise * e;
                next[s] = v.max(0.0);
                demand.set(t, s, ch, next[s]);
            }
            prev[prev_ch] = next;
        }
    }

    let stations: Vec<Station> = (0..n)
        .map(|s| Station {
            id: ids[s].clone(),
            name: format!("Synthetic station {}", ids[s]),
            location: Some(locations[s]),
            annual_demand: (0..t_total).map(|t| demand.get(t, s, 0) + demand.get(t, s, 1)).sum::<f64>().round() as u64,
        })
        .collect();
    let features = join_weather(&demand, &weather, &access_population, &access_employment, &FeatureLayout::default())?;
    let adjacency = dynamic_adjacency(&demand, &spec.graph_config())?;
    Ok(SyntheticData {
        registry: StationRegistry::from_stations(stations),
        demand,
        features,
        weather,
        access_population,
        access_employment,
        adjacency,
        planted,
        community,
        phase,
        amplitude,
        level,
        temperature_std,
    })
}
