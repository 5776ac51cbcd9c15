use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::trips::TripRecord;
use super::{IngestError, Result};
use crate::access::GeoPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub name: String,
    pub location: Option<GeoPoint>,
    pub annual_demand: u64,
}

/// Retained stations with a contiguous index `0..N` in ascending id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Station>", into = "Vec<Station>")]
pub struct StationRegistry {
    stations: Vec<Station>,
    index: HashMap<String, usize>,
}

impl From<Vec<Station>> for StationRegistry {
    fn from(stations: Vec<Station>) -> Self {
        Self::from_stations(stations)
    }
}

impl From<StationRegistry> for Vec<Station> {
    fn from(r: StationRegistry) -> Self {
        r.stations
    }
}

/// Numeric ids compare numerically, everything else lexicographically, so
/// "9" sorts before "10".
pub fn compare_station_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

impl StationRegistry {
    /// Builds a registry; stations are re-sorted by id so the index rule holds
    /// regardless of input order.
    pub fn from_stations(mut stations: Vec<Station>) -> Self {
        stations.sort_by(|a, b| compare_station_ids(&a.id, &b.id));
        let index = stations.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        Self { stations, index }
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn get(&self, idx: usize) -> &Station {
        &self.stations[idx]
    }

    pub fn ids(&self) -> Vec<String> {
        self.stations.iter().map(|s| s.id.clone()).collect()
    }

    /// Fills or overrides coordinates (and names) from an external station list.
    pub fn set_location(&mut self, id: &str, location: GeoPoint, name: Option<&str>) -> bool {
        match self.index.get(id) {
            Some(&i) => {
                self.stations[i].location = Some(location);
                if let Some(n) = name {
                    self.stations[i].name = n.to_string();
                }
                true
            }
            None => false,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "station_id", "name", "lat", "lon", "annual_demand"])?;
        for (i, s) in self.stations.iter().enumerate() {
            let (lat, lon) = s.location.map(|p| (p.lat.to_string(), p.lon.to_string())).unwrap_or_default();
            out.write_record([i.to_string(), s.id.clone(), s.name.clone(), lat, lon, s.annual_demand.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> csv::Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            station_id: String,
            name: String,
            lat: Option<f64>,
            lon: Option<f64>,
            annual_demand: u64,
        }
        let mut stations = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: Row = row?;
            let location = match (row.lat, row.lon) {
                (Some(lat), Some(lon)) => Some(GeoPoint { lat, lon }),
                _ => None,
            };
            stations.push(Station { id: row.station_id, name: row.name, location, annual_demand: row.annual_demand });
        }
        Ok(Self::from_stations(stations))
    }
}

/// Counts, per station, the trips that start or end there (a round trip counts
/// once) and keeps stations at or above `min_annual_demand`.
pub fn filter_stations(trips: &[TripRecord], min_annual_demand: u64) -> Result<StationRegistry> {
    #[derive(Default)]
    struct Acc {
        count: u64,
        name: Option<String>,
        location: Option<GeoPoint>,
    }
    let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
    for t in trips {
        let start = acc.entry(&t.start_station_id).or_default();
        start.count += 1;
        if start.name.is_none() {
            start.name = t.start_station_name.clone();
        }
        if start.location.is_none() {
            start.location = GeoPoint::from_options(t.start_lat, t.start_lon);
        }
        let end = acc.entry(&t.end_station_id).or_default();
        if t.end_station_id != t.start_station_id {
            end.count += 1;
        }
        if end.name.is_none() {
            end.name = t.end_station_name.clone();
        }
        if end.location.is_none() {
            end.location = GeoPoint::from_options(t.end_lat, t.end_lon);
        }
    }
    let stations: Vec<Station> = acc
        .into_iter()
        .filter(|(_, a)| a.count >= min_annual_demand)
        .map(|(id, a)| Station {
            id: id.to_string(),
            name: a.name.unwrap_or_default(),
            location: a.location,
            annual_demand: a.count,
        })
        .collect();
    if stations.is_empty() {
        return Err(IngestError::NoStationsRetained { threshold: min_annual_demand });
    }
    Ok(StationRegistry::from_stations(stations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_timestamp, UserType};

    fn trip(from: &str, to: &str) -> TripRecord {
        let t = parse_timestamp("2019-03-01 12:00:00").unwrap();
        TripRecord {
            trip_id: "x".into(),
            start_time: t,
            end_time: t,
            start_station_id: from.into(),
            end_station_id: to.into(),
            start_station_name: None,
            end_station_name: None,
            start_lat: None,
            start_lon: None,
            end_lat: None,
            end_lon: None,
            user_type: UserType::Unknown,
        }
    }

    #[test]
    fn threshold_boundary_excludes_999() {
        let trips: Vec<_> = (0..999).map(|_| trip("A", "A")).collect();
        assert!(matches!(filter_stations(&trips, 1000), Err(IngestError::NoStationsRetained { threshold: 1000 })));
        let trips: Vec<_> = (0..1000).map(|_| trip("A", "A")).collect();
        assert_eq!(filter_stations(&trips, 1000).unwrap().len(), 1);
    }

    #[test]
    fn keeps_only_busy_station() {
        let mut trips: Vec<_> = (0..1500).map(|_| trip("A", "A")).collect();
        trips.extend((0..500).map(|_| trip("B", "B")));
        let reg = filter_stations(&trips, 1000).unwrap();
        assert_eq!(reg.ids(), ["A"]);
        assert_eq!(reg.get(0).annual_demand, 1500);
    }

    #[test]
    fn indices_follow_numeric_id_order() {
        let trips = vec![trip("10", "9"), trip("2", "10")];
        let reg = filter_stations(&trips, 1).unwrap();
        assert_eq!(reg.ids(), ["2", "9", "10"]);
        assert_eq!(reg.index_of("10"), Some(2));
        assert_eq!(reg.get(2).annual_demand, 2);
    }

    #[test]
    fn csv_round_trip() {
        let mut reg = filter_stations(&[trip("1", "2")], 1).unwrap();
        reg.set_location("2", GeoPoint { lat: 41.88, lon: -87.63 }, Some("Two"));
        let mut buf = Vec::new();
        reg.write_csv(&mut buf).unwrap();
        assert_eq!(StationRegistry::read_csv(buf.as_slice()).unwrap(), reg);
    }
}
