use std::fs::File;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::slots::{floor_hour, parse_timestamp, SlotRange};
use super::{IngestError, Result};

/// Longest run of missing hours that forward-fill may bridge.
pub const MAX_WEATHER_GAP_HOURS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub slot: NaiveDateTime,
    /// °C
    pub temperature: f64,
    /// km/h
    pub wind_speed: f64,
    /// percent
    pub humidity: f64,
    /// mm
    pub precipitation: f64,
    /// hPa
    pub pressure: f64,
}

impl WeatherRecord {
    fn is_valid(&self) -> bool {
        [self.temperature, self.wind_speed, self.humidity, self.precipitation, self.pressure]
            .iter()
            .all(|v| v.is_finite())
            && (0.0..=100.0).contains(&self.humidity)
            && self.precipitation >= 0.0
    }
}

#[derive(Debug, Clone)]
pub struct ParsedWeather {
    pub records: Vec<WeatherRecord>,
    pub skipped: usize,
}

const COLUMNS: [&str; 6] = ["slot", "temperature", "wind_speed", "humidity", "precipitation", "pressure"];

/// Reads `slot,temperature,wind_speed,humidity,precipitation,pressure`.
/// Slots are truncated to the hour; invalid rows are counted and skipped.
pub fn parse_weather(path: &Path) -> Result<ParsedWeather> {
    let file = File::open(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let csv_err = |source| IngestError::Csv { path: path.to_path_buf(), source };
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Err(IngestError::EmptyFile { path: path.to_path_buf() });
    }
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn { path: path.to_path_buf(), column: name.to_string() })?;
    }
    let mut records = Vec::new();
    let mut skipped = 0;
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(csv_err(e)),
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let num = |i: usize| row.get(idx[i]).and_then(|s| s.trim().parse::<f64>().ok());
        let rec = (|| {
            Some(WeatherRecord {
                slot: floor_hour(parse_timestamp(row.get(idx[0])?)?),
                temperature: num(1)?,
                wind_speed: num(2)?,
                humidity: num(3)?,
                precipitation: num(4)?,
                pressure: num(5)?,
            })
        })();
        match rec.filter(WeatherRecord::is_valid) {
            Some(r) => records.push(r),
            None => skipped += 1,
        }
    }
    if records.is_empty() && skipped == 0 {
        return Err(IngestError::EmptyFile { path: path.to_path_buf() });
    }
    records.sort_by_key(|r| r.slot);
    Ok(ParsedWeather { records, skipped })
}

/// Produces exactly one record per slot of `range`. Missing hours take the
/// most recent earlier record; hours before the first record take the first
/// record. Any run of more than [`MAX_WEATHER_GAP_HOURS`] missing hours fails.
/// Duplicate slots keep the first occurrence.
pub fn fill_weather(records: &[WeatherRecord], range: SlotRange) -> Result<Vec<WeatherRecord>> {
    let mut by_slot: Vec<Option<WeatherRecord>> = vec![None; range.len];
    let mut before: Option<WeatherRecord> = None;
    for r in records {
        match range.slot_of(r.slot) {
            Some(t) => {
                if by_slot[t].is_none() {
                    by_slot[t] = Some(*r);
                }
            }
            None if r.slot < range.start => {
                if before.map_or(true, |b| r.slot >= b.slot) {
                    before = Some(*r);
                }
            }
            None => {}
        }
    }
    let first_present = by_slot.iter().position(Option::is_some);
    let seed = before.or_else(|| first_present.and_then(|i| by_slot[i])).ok_or(IngestError::NoWeather)?;

    let mut out = Vec::with_capacity(range.len);
    let mut last = seed;
    let mut gap_start: Option<usize> = None;
    for (t, rec) in by_slot.iter().enumerate() {
        match rec {
            Some(r) => {
                if let Some(g) = gap_start.take() {
                    check_gap(range, g, t)?;
                }
                last = *r;
            }
            None => {
                gap_start.get_or_insert(t);
            }
        }
        out.push(WeatherRecord { slot: range.time_of(t), ..last });
    }
    if let Some(g) = gap_start {
        check_gap(range, g, range.len)?;
    }
    Ok(out)
}

fn check_gap(range: SlotRange, from: usize, to: usize) -> Result<()> {
    let hours = to - from;
    if hours > MAX_WEATHER_GAP_HOURS {
        return Err(IngestError::WeatherGapTooLarge { from: range.time_of(from), hours });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(range: SlotRange, slot: usize, temp: f64) -> WeatherRecord {
        WeatherRecord {
            slot: range.time_of(slot),
            temperature: temp,
            wind_speed: 10.0,
            humidity: 50.0,
            precipitation: 0.0,
            pressure: 1015.0,
        }
    }

    fn range(len: usize) -> SlotRange {
        SlotRange::new(parse_timestamp("2019-01-01 00:00:00").unwrap(), len).unwrap()
    }

    #[test]
    fn forward_fills_short_gaps() {
        let r = range(6);
        let filled = fill_weather(&[rec(r, 0, 1.0), rec(r, 3, 4.0)], r).unwrap();
        let temps: Vec<f64> = filled.iter().map(|w| w.temperature).collect();
        assert_eq!(temps, [1.0, 1.0, 1.0, 4.0, 4.0, 4.0]);
        assert!(filled.iter().enumerate().all(|(t, w)| w.slot == r.time_of(t)));
    }

    #[test]
    fn gap_of_24_is_bridged_but_25_fails() {
        let r = range(40);
        assert!(fill_weather(&[rec(r, 0, 1.0), rec(r, 25, 2.0)], r).is_ok());
        let err = fill_weather(&[rec(r, 0, 1.0), rec(r, 26, 2.0)], r).unwrap_err();
        assert!(matches!(err, IngestError::WeatherGapTooLarge { hours: 25, .. }));
    }

    #[test]
    fn leading_gap_uses_first_record() {
        let r = range(4);
        let filled = fill_weather(&[rec(r, 2, 7.0)], r).unwrap();
        assert!(filled.iter().all(|w| w.temperature == 7.0));
    }

    #[test]
    fn duplicates_keep_first() {
        let r = range(2);
        let filled = fill_weather(&[rec(r, 0, 1.0), rec(r, 0, 9.0), rec(r, 1, 2.0)], r).unwrap();
        assert_eq!(filled[0].temperature, 1.0);
    }

    #[test]
    fn parse_skips_invalid_humidity() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "slot,temperature,wind_speed,humidity,precipitation,pressure").unwrap();
        writeln!(f, "2019-01-01 00:00:00,-3.5,12,80,0.0,1020").unwrap();
        writeln!(f, "2019-01-01 01:00:00,-3.5,12,180,0.0,1020").unwrap();
        writeln!(f, "2019-01-01 02:10:00,-3.0,12,70,0.5,1021").unwrap();
        let parsed = parse_weather(f.path()).unwrap();
        assert_eq!((parsed.records.len(), parsed.skipped), (2, 1));
        assert_eq!(parsed.records[1].slot, parse_timestamp("2019-01-01 02:00:00").unwrap());
    }
}
