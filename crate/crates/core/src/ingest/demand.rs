use serde_json::json;

use super::registry::StationRegistry;
use super::slots::SlotRange;
use super::trips::TripRecord;
use super::{IngestError, Result};
use crate::container::{Container, ContainerError};

pub const IN_CHANNEL: usize = 0;
pub const OUT_CHANNEL: usize = 1;
const CHANNELS: usize = 2;

/// Hourly in/out trip counts, laid out `slot × station × channel` with
/// channel 0 = in-trips and channel 1 = out-trips.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTensor {
    values: Vec<f64>,
    slots: SlotRange,
    stations: Vec<String>,
}

impl DemandTensor {
    pub fn zeros(slots: SlotRange, stations: Vec<String>) -> Self {
        Self { values: vec![0.0; slots.len * stations.len() * CHANNELS], slots, stations }
    }

    pub fn from_values(slots: SlotRange, stations: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let expected = slots.len * stations.len() * CHANNELS;
        if values.len() != expected {
            return Err(IngestError::ShapeMismatch(format!("demand payload {} != {expected}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(IngestError::ShapeMismatch("demand values must be finite and non-negative".into()));
        }
        Ok(Self { values, slots, stations })
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
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
    fn offset(&self, slot: usize, station: usize, channel: usize) -> usize {
        (slot * self.stations.len() + station) * CHANNELS + channel
    }

    #[inline]
    pub fn get(&self, slot: usize, station: usize, channel: usize) -> f64 {
        self.values[self.offset(slot, station, channel)]
    }

    #[inline]
    pub fn set(&mut self, slot: usize, station: usize, channel: usize, v: f64) {
        let o = self.offset(slot, station, channel);
        self.values[o] = v;
    }

    /// One station's series for one channel.
    pub fn series(&self, station: usize, channel: usize) -> Vec<f64> {
        (0..self.n_slots()).map(|t| self.get(t, station, channel)).collect()
    }

    pub fn channel_total(&self, channel: usize) -> f64 {
        self.values.iter().skip(channel).step_by(CHANNELS).sum()
    }

    pub fn slice_slots(&self, from: usize, to: usize) -> Self {
        let row = self.stations.len() * CHANNELS;
        Self {
            values: self.values[from * row..to * row].to_vec(),
            slots: self.slots.sub_range(from, to),
            stations: self.stations.clone(),
        }
    }

    pub fn to_container(&self) -> Container {
        Container::new(
            "demand",
            vec![self.n_slots(), self.n_stations(), CHANNELS],
            json!({"slots": self.slots, "stations": self.stations, "channels": ["in_trips", "out_trips"]}),
            self.values.clone(),
        )
    }

    pub fn from_container(c: &Container) -> Result<Self, ContainerError> {
        c.expect_kind("demand")?;
        let slots: SlotRange = c.meta("slots")?;
        let stations: Vec<String> = c.meta("stations")?;
        if c.header.shape != [slots.len, stations.len(), CHANNELS] {
            return Err(ContainerError::Meta("shape".into()));
        }
        Ok(Self { values: c.data.clone(), slots, stations })
    }
}

/// Counts out-trips by start station/start hour and in-trips by end
/// station/end hour. Trip ends at unretained stations or outside `range` are
/// dropped independently of the other end.
pub fn aggregate_hourly(trips: &[TripRecord], registry: &StationRegistry, range: SlotRange) -> DemandTensor {
    let mut demand = DemandTensor::zeros(range, registry.ids());
    for trip in trips {
        if let (Some(s), Some(t)) = (registry.index_of(&trip.start_station_id), range.slot_of(trip.start_time)) {
            let o = demand.offset(t, s, OUT_CHANNEL);
            demand.values[o] += 1.0;
        }
        if let (Some(s), Some(t)) = (registry.index_of(&trip.end_station_id), range.slot_of(trip.end_time)) {
            let o = demand.offset(t, s, IN_CHANNEL);
            demand.values[o] += 1.0;
        }
    }
    demand
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{filter_stations, parse_timestamp, UserType};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trip(from: &str, to: &str, start: &str, end: &str) -> TripRecord {
        TripRecord {
            trip_id: "t".into(),
            start_time: parse_timestamp(start).unwrap(),
            end_time: parse_timestamp(end).unwrap(),
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

    fn day() -> SlotRange {
        SlotRange::new(parse_timestamp("2019-06-01 00:00:00").unwrap(), 24).unwrap()
    }

    #[test]
    fn single_trip_lands_in_its_hours() {
        let trips = vec![trip("A", "B", "2019-06-01 09:14:00", "2019-06-01 09:40:00")];
        let reg = filter_stations(&trips, 1).unwrap();
        let d = aggregate_hourly(&trips, &reg, day());
        let (a, b) = (reg.index_of("A").unwrap(), reg.index_of("B").unwrap());
        assert_eq!(d.get(9, a, OUT_CHANNEL), 1.0);
        assert_eq!(d.get(9, b, IN_CHANNEL), 1.0);
        assert_eq!(d.channel_total(IN_CHANNEL) + d.channel_total(OUT_CHANNEL), 2.0);
    }

    #[test]
    fn no_trips_gives_zero_tensor_of_full_shape() {
        let reg = StationRegistry::from_stations(vec![]);
        let d = aggregate_hourly(&[], &reg, day());
        assert_eq!(d.n_slots(), 24);
        assert!(d.values().iter().all(|v| *v == 0.0));
        let reg = filter_stations(&[trip("A", "B", "2019-06-01 01:00:00", "2019-06-01 01:00:00")], 1).unwrap();
        let d = aggregate_hourly(&[], &reg, day());
        assert_eq!(d.values().len(), 24 * 2 * 2);
        assert!(d.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unretained_end_contributes_only_retained_side() {
        let trips = vec![trip("A", "Z", "2019-06-01 03:00:00", "2019-06-01 03:30:00")];
        let reg = StationRegistry::from_stations(vec![crate::ingest::Station {
            id: "A".into(),
            name: String::new(),
            location: None,
            annual_demand: 1,
        }]);
        let d = aggregate_hourly(&trips, &reg, day());
        assert_eq!(d.channel_total(OUT_CHANNEL), 1.0);
        assert_eq!(d.channel_total(IN_CHANNEL), 0.0);
    }

    #[test]
    fn random_trips_conserve_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = parse_timestamp("2019-06-01 00:00:00").unwrap();
        let trips: Vec<_> = (0..200)
            .map(|_| {
                let s = base + chrono::Duration::minutes(rng.random_range(0..20 * 60));
                let e = s + chrono::Duration::minutes(rng.random_range(0..180));
                let mut t = trip("A", "B", "2019-06-01 00:00:00", "2019-06-01 00:00:00");
                t.start_station_id = rng.random_range(0..5).to_string();
                t.end_station_id = rng.random_range(0..5).to_string();
                t.start_time = s;
                t.end_time = e;
                t
            })
            .collect();
        let reg = filter_stations(&trips, 1).unwrap();
        let d = aggregate_hourly(&trips, &reg, day());
        assert_eq!(d.channel_total(OUT_CHANNEL), 200.0);
        assert_eq!(d.channel_total(IN_CHANNEL), 200.0);
    }

    #[test]
    fn container_round_trip() {
        let trips = vec![trip("A", "B", "2019-06-01 09:14:00", "2019-06-01 09:40:00")];
        let reg = filter_stations(&trips, 1).unwrap();
        let d = aggregate_hourly(&trips, &reg, day());
        let c = Container::from_bytes(&d.to_container().to_bytes().unwrap()).unwrap();
        assert_eq!(DemandTensor::from_container(&c).unwrap(), d);
    }
}
