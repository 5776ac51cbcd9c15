//! Trip/weather ingestion, hourly aggregation, feature assembly, scaling and
//! the chronological train/test split.

mod demand;
mod features;
mod registry;
mod scale;
mod slots;
mod trips;
mod weather;

use std::path::PathBuf;

use chrono::NaiveDateTime;
use thiserror::Error;

pub use demand::{aggregate_hourly, DemandTensor, IN_CHANNEL, OUT_CHANNEL};
pub use features::{join_weather, FeatureKind, FeatureLayout, FeatureTensor};
pub use registry::{compare_station_ids, filter_stations, Station, StationRegistry};
pub use scale::{fit_scaler, split, MinMaxScaler, SplitSpec, Subset};
pub use slots::{format_timestamp, parse_timestamp, SlotRange};
pub use trips::{parse_trips, ParsedTrips, TripRecord, TripSchema, UserType};
pub use weather::{fill_weather, parse_weather, ParsedWeather, WeatherRecord, MAX_WEATHER_GAP_HOURS};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: required column `{column}` not found in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: file contains no data rows")]
    EmptyFile { path: PathBuf },
    #[error("no station reaches the annual demand threshold of {threshold}")]
    NoStationsRetained { threshold: u64 },
    #[error("weather missing for {hours} consecutive hours starting {from}")]
    WeatherGapTooLarge { from: NaiveDateTime, hours: usize },
    #[error("no weather records at all")]
    NoWeather,
    #[error("split leaves an empty side (train {train} slots, test {test} slots)")]
    DegenerateSplit { train: usize, test: usize },
    #[error("invalid slot range: {0}")]
    InvalidRange(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;
