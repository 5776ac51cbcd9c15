use serde::{Deserialize, Serialize};
use serde_json::json;

use super::demand::{DemandTensor, IN_CHANNEL, OUT_CHANNEL};
use super::slots::SlotRange;
use super::weather::{fill_weather, WeatherRecord};
use super::{IngestError, Result};
use crate::container::{Container, ContainerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Precipitation,
    Pressure,
    Temperature,
    WindSpeed,
    AccessPopulation,
    AccessEmployment,
    LastInTrips,
    LastOutTrips,
    Humidity,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Precipitation => "precipitation",
            FeatureKind::Pressure => "pressure",
            FeatureKind::Temperature => "temperature",
            FeatureKind::WindSpeed => "wind_speed",
            FeatureKind::AccessPopulation => "access_population",
            FeatureKind::AccessEmployment => "access_employment",
            FeatureKind::LastInTrips => "last_in_trips",
            FeatureKind::LastOutTrips => "last_out_trips",
            FeatureKind::Humidity => "humidity",
        }
    }
}

/// Ordered feature columns. The default is the 8-feature model input; humidity
/// is appended only when requested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureLayout(Vec<FeatureKind>);

impl Default for FeatureLayout {
    fn default() -> Self {
        use FeatureKind::*;
        Self(vec![
            Precipitation,
            Pressure,
            Temperature,
            WindSpeed,
            AccessPopulation,
            AccessEmployment,
            LastInTrips,
            LastOutTrips,
        ])
    }
}

impl FeatureLayout {
    pub fn with_humidity(include: bool) -> Self {
        let mut l = Self::default();
        if include {
            l.0.push(FeatureKind::Humidity);
        }
        l
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.0
    }

    pub fn position(&self, kind: FeatureKind) -> Option<usize> {
        self.0.iter().position(|k| *k == kind)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.0.iter().map(|k| k.name()).collect()
    }
}

/// Model inputs laid out `slot × station × feature`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    values: Vec<f64>,
    layout: FeatureLayout,
    slots: SlotRange,
    stations: Vec<String>,
}

impl FeatureTensor {
    pub fn from_values(layout: FeatureLayout, slots: SlotRange, stations: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let expected = slots.len * stations.len() * layout.len();
        if values.len() != expected {
            return Err(IngestError::ShapeMismatch(format!("feature payload {} != {expected}", values.len())));
        }
        Ok(Self { values, layout, slots, stations })
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn n_features(&self) -> usize {
        self.layout.len()
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn slots(&self) -> SlotRange {
        self.slots
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, slot: usize, station: usize, feature: usize) -> f64 {
        self.values[(slot * self.stations.len() + station) * self.layout.len() + feature]
    }

    /// The `N × F` block for one slot, row-major.
    pub fn slot_rows(&self, slot: usize) -> &[f64] {
        let w = self.stations.len() * self.layout.len();
        &self.values[slot * w..(slot + 1) * w]
    }

    pub fn slice_slots(&self, from: usize, to: usize) -> Self {
        let w = self.stations.len() * self.layout.len();
        Self {
            values: self.values[from * w..to * w].to_vec(),
            layout: self.layout.clone(),
            slots: self.slots.sub_range(from, to),
            stations: self.stations.clone(),
        }
    }

    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let nf = self.layout.len();
        let values = self.values.iter().enumerate().map(|(i, v)| f(i % nf, *v)).collect();
        Self { values, ..self.clone() }
    }

    pub fn to_container(&self) -> Container {
        Container::new(
            "features",
            vec![self.n_slots(), self.n_stations(), self.n_features()],
            json!({"slots": self.slots, "stations": self.stations, "feature_order": self.layout}),
            self.values.clone(),
        )
    }

    pub fn from_container(c: &Container) -> Result<Self, ContainerError> {
        c.expect_kind("features")?;
        let slots: SlotRange = c.meta("slots")?;
        let stations: Vec<String> = c.meta("stations")?;
        let layout: FeatureLayout = c.meta("feature_order")?;
        if c.header.shape != [slots.len, stations.len(), layout.len()] {
            return Err(ContainerError::Meta("shape".into()));
        }
        Ok(Self { values: c.data.clone(), layout, slots, stations })
    }
}

/// Merges hourly weather, per-station access and one-slot-lagged demand into
/// the feature tensor. Lag features at slot 0 are zero.
pub fn join_weather(
    demand: &DemandTensor,
    weather: &[WeatherRecord],
    access_population: &[f64],
    access_employment: &[f64],
    layout: &FeatureLayout,
) -> Result<FeatureTensor> {
    let n = demand.n_stations();
    if access_population.len() != n || access_employment.len() != n {
        return Err(IngestError::ShapeMismatch(format!(
            "access vectors have {}/{} entries for {n} stations",
            access_population.len(),
            access_employment.len()
        )));
    }
    let hourly = fill_weather(weather, demand.slots())?;
    let nf = layout.len();
    let mut values = Vec::with_capacity(demand.n_slots() * n * nf);
    for (t, w) in hourly.iter().enumerate() {
        for s in 0..n {
            for kind in layout.kinds() {
                values.push(match kind {
                    FeatureKind::Precipitation => w.precipitation,
                    FeatureKind::Pressure => w.pressure,
                    FeatureKind::Temperature => w.temperature,
                    FeatureKind::WindSpeed => w.wind_speed,
                    FeatureKind::Humidity => w.humidity,
                    FeatureKind::AccessPopulation => access_population[s],
                    FeatureKind::AccessEmployment => access_employment[s],
                    FeatureKind::LastInTrips if t > 0 => demand.get(t - 1, s, IN_CHANNEL),
                    FeatureKind::LastOutTrips if t > 0 => demand.get(t - 1, s, OUT_CHANNEL),
                    FeatureKind::LastInTrips | FeatureKind::LastOutTrips => 0.0,
                });
            }
        }
    }
    FeatureTensor::from_values(layout.clone(), demand.slots(), demand.stations().to_vec(), values)
}
