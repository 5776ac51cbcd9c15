//! Cumulative-opportunity accessibility: the number of opportunities
//! (residents, jobs) within a walking-time budget of each station.
//!
//! Walking time is great-circle distance at a fixed speed. Everything that
//! depends on the travel-time model goes through [`haversine_minutes`], so a
//! network-based cost can replace it in one place.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::StationRegistry;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error)]
pub enum AccessError {
    #[error("invalid access config: {0}")]
    InvalidConfig(String),
    #[error("station `{0}` has no coordinates")]
    MissingCoordinates(String),
    #[error("{path}: {source}")]
    Csv {
        path: std::path::PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: row {row}: invalid opportunity point")]
    InvalidPoint { path: std::path::PathBuf, row: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn from_options(lat: Option<f64>, lon: Option<f64>) -> Option<Self> {
        Some(Self { lat: lat?, lon: lon? })
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite() && self.lon.is_finite() && self.lat.abs() <= 90.0 && self.lon.abs() <= 180.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpportunityPoint {
    pub lat: f64,
    pub lon: f64,
    pub weight: f64,
}

impl OpportunityPoint {
    pub fn location(&self) -> GeoPoint {
        GeoPoint { lat: self.lat, lon: self.lon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccessConfig {
    pub budget_minutes: f64,
    pub walking_speed_kmh: f64,
}

impl Default for AccessConfig {
    fn default() -> Self {
        Self { budget_minutes: 15.0, walking_speed_kmh: 5.0 }
    }
}

impl AccessConfig {
    pub fn validate(&self) -> Result<(), AccessError> {
        if !(self.budget_minutes > 0.0 && self.budget_minutes.is_finite()) {
            return Err(AccessError::InvalidConfig(format!("budget {} must be positive", self.budget_minutes)));
        }
        if !(self.walking_speed_kmh > 0.0 && self.walking_speed_kmh.is_finite()) {
            return Err(AccessError::InvalidConfig(format!("speed {} must be positive", self.walking_speed_kmh)));
        }
        Ok(())
    }
}

/// Great-circle walking time in minutes.
pub fn haversine_minutes(a: GeoPoint, b: GeoPoint, speed_kmh: f64) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let km = 2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin();
    km / speed_kmh * 60.0
}

/// Sum of weights of points reachable within the budget (inclusive).
pub fn cumulative_access(station: GeoPoint, points: &[OpportunityPoint], cfg: &AccessConfig) -> f64 {
    points
        .iter()
        .filter(|p| haversine_minutes(station, p.location(), cfg.walking_speed_kmh) <= cfg.budget_minutes)
        .map(|p| p.weight)
        .sum()
}

/// Per-station accessibility, in registry index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessVectors {
    pub population: Vec<f64>,
    pub employment: Vec<f64>,
}

impl AccessVectors {
    pub fn write_csv<W: std::io::Write>(&self, registry: &StationRegistry, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["station_id", "access_population", "access_employment"])?;
        for (i, s) in registry.stations().iter().enumerate() {
            out.write_record([s.id.clone(), self.population[i].to_string(), self.employment[i].to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn access_vectors(
    registry: &StationRegistry,
    population: &[OpportunityPoint],
    employment: &[OpportunityPoint],
    cfg: &AccessConfig,
) -> Result<AccessVectors, AccessError> {
    cfg.validate()?;
    let mut out = AccessVectors { population: Vec::with_capacity(registry.len()), employment: Vec::with_capacity(registry.len()) };
    for s in registry.stations() {
        let loc = s.location.filter(GeoPoint::is_valid).ok_or_else(|| AccessError::MissingCoordinates(s.id.clone()))?;
        out.population.push(cumulative_access(loc, population, cfg));
        out.employment.push(cumulative_access(loc, employment, cfg));
    }
    Ok(out)
}

/// Reads `lat,lon,weight` rows.
pub fn read_opportunities(path: &Path) -> Result<Vec<OpportunityPoint>, AccessError> {
    let csv_err = |source| AccessError::Csv { path: path.to_path_buf(), source };
    let file = File::open(path).map_err(|e| csv_err(csv::Error::from(e)))?;
    let mut out = Vec::new();
    for (row, rec) in csv::Reader::from_reader(file).deserialize::<OpportunityPoint>().enumerate() {
        let p = rec.map_err(csv_err)?;
        if !p.location().is_valid() || !(p.weight >= 0.0 && p.weight.is_finite()) {
            return Err(AccessError::InvalidPoint { path: path.to_path_buf(), row: row + 1 });
        }
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    /// Sample statistics; `std` uses the n−1 denominator.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0, min: 0.0, max: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        let std = if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { mean, std, min, max }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Station;

    // Chicago Loop and Hyde Park.
    const LOOP: GeoPoint = GeoPoint { lat: 41.8781, lon: -87.6298 };
    const HYDE_PARK: GeoPoint = GeoPoint { lat: 41.7943, lon: -87.5907 };

    #[test]
    fn identical_points_take_zero_minutes() {
        assert_eq!(haversine_minutes(LOOP, LOOP, 5.0), 0.0);
    }

    #[test]
    fn one_and_a_quarter_km_is_fifteen_minutes() {
        // 1.25 km due north: Δφ = 1.25 / R radians.
        let north = GeoPoint { lat: LOOP.lat + (1.25 / EARTH_RADIUS_KM).to_degrees(), lon: LOOP.lon };
        assert!((haversine_minutes(LOOP, north, 5.0) - 15.0).abs() < 1e-9);
    }

    #[test]
    fn matches_spherical_law_of_cosines() {
        // Independent formula for the same great-circle distance.
        let (p1, p2) = (LOOP.lat.to_radians(), HYDE_PARK.lat.to_radians());
        let dl = (HYDE_PARK.lon - LOOP.lon).to_radians();
        let km = EARTH_RADIUS_KM * (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).acos();
        let expected = km / 5.0 * 60.0;
        let got = haversine_minutes(LOOP, HYDE_PARK, 5.0);
        assert!((got - expected).abs() / expected < 1e-3, "{got} vs {expected}");
        assert!((got - haversine_minutes(HYDE_PARK, LOOP, 5.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_points_give_zero_and_colocated_point_counts() {
        let cfg = AccessConfig::default();
        assert_eq!(cumulative_access(LOOP, &[], &cfg), 0.0);
        let p = OpportunityPoint { lat: LOOP.lat, lon: LOOP.lon, weight: 100.0 };
        assert_eq!(cumulative_access(LOOP, &[p], &cfg), 100.0);
    }

    fn registry(points: &[GeoPoint]) -> StationRegistry {
        StationRegistry::from_stations(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| Station { id: i.to_string(), name: String::new(), location: Some(*p), annual_demand: 1000 })
                .collect(),
        )
    }

    #[test]
    fn table_one_maximum_population_access() {
        let reg = registry(&[LOOP]);
        let near = OpportunityPoint { lat: LOOP.lat + 0.001, lon: LOOP.lon, weight: 37747.0 };
        let v = access_vectors(&reg, &[near], &[], &AccessConfig::default()).unwrap();
        assert_eq!(v.population, [37747.0]);
        assert_eq!(v.employment, [0.0]);
    }

    #[test]
    fn far_station_has_zero_access() {
        let reg = registry(&[HYDE_PARK]);
        let p = OpportunityPoint { lat: LOOP.lat, lon: LOOP.lon, weight: 5.0 };
        let v = access_vectors(&reg, &[p], &[p], &AccessConfig::default()).unwrap();
        assert_eq!((v.population[0], v.employment[0]), (0.0, 0.0));
    }

    #[test]
    fn missing_coordinates_and_bad_config_are_errors() {
        let mut reg = registry(&[LOOP]);
        assert!(access_vectors(&reg, &[], &[], &AccessConfig { budget_minutes: 0.0, ..Default::default() }).is_err());
        reg = StationRegistry::from_stations(vec![Station { id: "x".into(), name: String::new(), location: None, annual_demand: 1 }]);
        assert!(matches!(access_vectors(&reg, &[], &[], &AccessConfig::default()), Err(AccessError::MissingCoordinates(_))));
    }

    #[test]
    fn summary_stats_sample_std() {
        let s = SummaryStats::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((s.mean, s.min, s.max), (2.5, 1.0, 4.0));
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
