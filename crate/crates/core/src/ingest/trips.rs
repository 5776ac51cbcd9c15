use std::fs::File;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::slots::parse_timestamp;
use super::{IngestError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserType {
    Customer,
    Subscriber,
    Unknown,
}

impl UserType {
    fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "customer" | "casual" => UserType::Customer,
            "subscriber" | "member" => UserType::Subscriber,
            _ => UserType::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub trip_id: String,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub start_station_id: String,
    pub end_station_id: String,
    pub start_station_name: Option<String>,
    pub end_station_name: Option<String>,
    pub start_lat: Option<f64>,
    pub start_lon: Option<f64>,
    pub end_lat: Option<f64>,
    pub end_lon: Option<f64>,
    pub user_type: UserType,
}

/// Maps trip fields onto CSV header names. Optional fields may be absent from
/// the file; required ones produce [`IngestError::MissingColumn`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripSchema {
    pub trip_id: String,
    pub start_time: String,
    pub end_time: String,
    pub start_station_id: String,
    pub end_station_id: String,
    pub start_station_name: Option<String>,
    pub end_station_name: Option<String>,
    pub start_lat: Option<String>,
    pub start_lon: Option<String>,
    pub end_lat: Option<String>,
    pub end_lon: Option<String>,
    pub user_type: Option<String>,
}

impl Default for TripSchema {
    fn default() -> Self {
        Self::divvy_2019()
    }
}

impl TripSchema {
    /// Column names of the 2019 Divvy quarterly exports.
    pub fn divvy_2019() -> Self {
        Self {
            trip_id: "trip_id".into(),
            start_time: "start_time".into(),
            end_time: "end_time".into(),
            start_station_id: "from_station_id".into(),
            end_station_id: "to_station_id".into(),
            start_station_name: Some("from_station_name".into()),
            end_station_name: Some("to_station_name".into()),
            start_lat: None,
            start_lon: None,
            end_lat: None,
            end_lon: None,
            user_type: Some("usertype".into()),
        }
    }

    /// Column names of the 2020+ Divvy exports, which carry coordinates.
    pub fn divvy_2020() -> Self {
        Self {
            trip_id: "ride_id".into(),
            start_time: "started_at".into(),
            end_time: "ended_at".into(),
            start_station_id: "start_station_id".into(),
            end_station_id: "end_station_id".into(),
            start_station_name: Some("start_station_name".into()),
            end_station_name: Some("end_station_name".into()),
            start_lat: Some("start_lat".into()),
            start_lon: Some("start_lng".into()),
            end_lat: Some("end_lat".into()),
            end_lon: Some("end_lng".into()),
            user_type: Some("member_casual".into()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedTrips {
    pub records: Vec<TripRecord>,
    pub skipped: usize,
}

struct Columns {
    trip_id: usize,
    start_time: usize,
    end_time: usize,
    start_station: usize,
    end_station: usize,
    start_name: Option<usize>,
    end_name: Option<usize>,
    start_lat: Option<usize>,
    start_lon: Option<usize>,
    end_lat: Option<usize>,
    end_lon: Option<usize>,
    user_type: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, schema: &TripSchema, path: &Path) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let required = |name: &str| {
            find(name).ok_or_else(|| IngestError::MissingColumn { path: path.to_path_buf(), column: name.to_string() })
        };
        // Optional columns named in the schema must exist when given.
        let optional = |name: &Option<String>| -> Result<Option<usize>> { name.as_deref().map(required).transpose() };
        Ok(Self {
            trip_id: required(&schema.trip_id)?,
            start_time: required(&schema.start_time)?,
            end_time: required(&schema.end_time)?,
            start_station: required(&schema.start_station_id)?,
            end_station: required(&schema.end_station_id)?,
            start_name: optional(&schema.start_station_name)?,
            end_name: optional(&schema.end_station_name)?,
            start_lat: optional(&schema.start_lat)?,
            start_lon: optional(&schema.start_lon)?,
            end_lat: optional(&schema.end_lat)?,
            end_lon: optional(&schema.end_lon)?,
            user_type: optional(&schema.user_type)?,
        })
    }

    fn record(&self, row: &csv::StringRecord) -> Option<TripRecord> {
        let field = |i: usize| row.get(i).map(str::trim);
        let non_empty = |i: usize| field(i).filter(|s| !s.is_empty()).map(str::to_string);
        let coord = |i: Option<usize>, bound: f64| -> Option<Option<f64>> {
            match i.and_then(field) {
                None | Some("") => Some(None),
                Some(s) => {
                    let v: f64 = s.parse().ok()?;
                    (v.is_finite() && v.abs() <= bound).then_some(Some(v))
                }
            }
        };
        let start_time = parse_timestamp(field(self.start_time)?)?;
        let end_time = parse_timestamp(field(self.end_time)?)?;
        if end_time < start_time {
            return None;
        }
        Some(TripRecord {
            trip_id: non_empty(self.trip_id)?,
            start_time,
            end_time,
            start_station_id: non_empty(self.start_station)?,
            end_station_id: non_empty(self.end_station)?,
            start_station_name: self.start_name.and_then(non_empty),
            end_station_name: self.end_name.and_then(non_empty),
            start_lat: coord(self.start_lat, 90.0)?,
            start_lon: coord(self.start_lon, 180.0)?,
            end_lat: coord(self.end_lat, 90.0)?,
            end_lon: coord(self.end_lon, 180.0)?,
            user_type: self.user_type.and_then(field).map(UserType::parse).unwrap_or(UserType::Unknown),
        })
    }
}

/// Reads a trip CSV. Rows that fail to parse or violate record invariants are
/// counted in `skipped`; the result is sorted by start time (stable).
pub fn parse_trips(path: &Path, schema: &TripSchema) -> Result<ParsedTrips> {
    let file = File::open(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let csv_err = |source| IngestError::Csv { path: path.to_path_buf(), source };
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Err(IngestError::EmptyFile { path: path.to_path_buf() });
    }
    let columns = Columns::resolve(&headers, schema, path)?;

    let mut records = Vec::new();
    let mut skipped = 0usize;
    let mut row = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => match columns.record(&row) {
                Some(r) => records.push(r),
                None => skipped += 1,
            },
            // Undecodable bytes or broken quoting: same treatment as a bad field.
            Err(e) if !matches!(e.kind(), csv::ErrorKind::Io(_)) => skipped += 1,
            Err(e) => return Err(csv_err(e)),
        }
    }
    if records.is_empty() && skipped == 0 {
        return Err(IngestError::EmptyFile { path: path.to_path_buf() });
    }
    records.sort_by_key(|r| r.start_time);
    Ok(ParsedTrips { records, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "trip_id,start_time,end_time,from_station_id,from_station_name,to_station_id,to_station_name,usertype\n";

    #[test]
    fn skips_unparseable_rows_and_sorts() {
        let f = write_tmp(&format!(
            "{HEADER}\
             3,2019-01-01 10:00:00,2019-01-01 10:20:00,1,A,2,B,Subscriber\n\
             1,2019-01-01 08:00:00,2019-01-01 08:10:00,2,B,1,A,Customer\n\
             9,not-a-time,2019-01-01 08:10:00,2,B,1,A,Customer\n\
             2,2019-01-01 09:00:00,2019-01-01 09:05:00,1,A,1,A,Subscriber\n"
        ));
        let parsed = parse_trips(f.path(), &TripSchema::divvy_2019()).unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert_eq!(parsed.skipped, 1);
        let ids: Vec<&str> = parsed.records.iter().map(|r| r.trip_id.as_str()).collect();
        assert_eq!(ids, ["1", "2", "3"]);
        assert_eq!(parsed.records[0].user_type, UserType::Customer);
        assert_eq!(parsed.records[0].start_station_name.as_deref(), Some("B"));
    }

    #[test]
    fn end_before_start_is_malformed() {
        let f = write_tmp(&format!("{HEADER}1,2019-01-01 10:00:00,2019-01-01 09:00:00,1,A,2,B,Subscriber\n2,2019-01-01 10:00:00,2019-01-01 11:00:00,1,A,2,B,Subscriber\n"));
        let parsed = parse_trips(f.path(), &TripSchema::divvy_2019()).unwrap();
        assert_eq!((parsed.records.len(), parsed.skipped), (1, 1));
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("");
        assert!(matches!(parse_trips(f.path(), &TripSchema::default()), Err(IngestError::EmptyFile { .. })));
        let f = write_tmp(HEADER);
        assert!(matches!(parse_trips(f.path(), &TripSchema::default()), Err(IngestError::EmptyFile { .. })));
    }

    #[test]
    fn missing_column_is_named() {
        let f = write_tmp("trip_id,start_time,end_time\n1,2019-01-01 10:00:00,2019-01-01 10:10:00\n");
        match parse_trips(f.path(), &TripSchema::default()) {
            Err(IngestError::MissingColumn { column, .. }) => assert_eq!(column, "from_station_id"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coordinates_out_of_range_are_skipped() {
        let f = write_tmp(
            "ride_id,started_at,ended_at,start_station_id,start_station_name,end_station_id,end_station_name,start_lat,start_lng,end_lat,end_lng,member_casual\n\
             a,2020-01-01 10:00:00,2020-01-01 10:10:00,1,A,2,B,41.9,-87.6,41.8,-87.7,member\n\
             b,2020-01-01 10:00:00,2020-01-01 10:10:00,1,A,2,B,95.0,-87.6,41.8,-87.7,member\n",
        );
        let parsed = parse_trips(f.path(), &TripSchema::divvy_2020()).unwrap();
        assert_eq!((parsed.records.len(), parsed.skipped), (1, 1));
        assert_eq!(parsed.records[0].start_lat, Some(41.9));
        assert_eq!(parsed.records[0].user_type, UserType::Subscriber);
    }
}
