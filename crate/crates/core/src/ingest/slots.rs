use chrono::{Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::{IngestError, Result};

const FORMATS: [&str; 3] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S"];

/// Parses `YYYY-MM-DD HH:MM:SS` (a few close variants are tolerated).
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%d %H:%M:%S").to_string()
}

/// A contiguous run of hourly slots starting at an hour boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRange {
    #[serde(with = "ts_format")]
    pub start: NaiveDateTime,
    pub len: usize,
}

impl SlotRange {
    pub fn new(start: NaiveDateTime, len: usize) -> Result<Self> {
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(IngestError::InvalidRange(format!("start {start} is not on an hour boundary")));
        }
        Ok(Self { start, len })
    }

    /// Slots from the hour containing `first` through the hour containing `last`.
    pub fn covering(first: NaiveDateTime, last: NaiveDateTime) -> Result<Self> {
        if last < first {
            return Err(IngestError::InvalidRange(format!("{last} precedes {first}")));
        }
        let start = floor_hour(first);
        let end = floor_hour(last);
        let len = ((end - start).num_hours() + 1) as usize;
        Ok(Self { start, len })
    }

    /// Slots spanning the half-open date interval `[from, to)`.
    pub fn between(from: NaiveDateTime, to: NaiveDateTime) -> Result<Self> {
        let start = floor_hour(from);
        if to <= start {
            return Err(IngestError::InvalidRange(format!("{to} is not after {from}")));
        }
        let hours = (to - start).num_minutes();
        let len = ((hours + 59) / 60) as usize;
        Self::new(start, len)
    }

    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::hours(self.len as i64)
    }

    pub fn slot_of(&self, t: NaiveDateTime) -> Option<usize> {
        if t < self.start {
            return None;
        }
        let idx = (t - self.start).num_hours() as usize;
        (idx < self.len).then_some(idx)
    }

    pub fn time_of(&self, slot: usize) -> NaiveDateTime {
        self.start + Duration::hours(slot as i64)
    }

    pub fn sub_range(&self, from: usize, to: usize) -> Self {
        assert!(from <= to && to <= self.len);
        Self { start: self.time_of(from), len: to - from }
    }
}

pub fn floor_hour(t: NaiveDateTime) -> NaiveDateTime {
    t.with_minute(0).and_then(|t| t.with_second(0)).and_then(|t| t.with_nanosecond(0)).unwrap()
}

mod ts_format {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(*t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_timestamp(&s).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn covering_includes_both_end_hours() {
        let r = SlotRange::covering(ts("2019-01-01 00:14:00"), ts("2019-01-01 02:59:59")).unwrap();
        assert_eq!(r.len, 3);
        assert_eq!(r.slot_of(ts("2019-01-01 02:30:00")), Some(2));
        assert_eq!(r.slot_of(ts("2019-01-01 03:00:00")), None);
    }

    #[test]
    fn calendar_year_has_8760_slots() {
        let r = SlotRange::between(ts("2019-01-01 00:00:00"), ts("2020-01-01 00:00:00")).unwrap();
        assert_eq!(r.len, 8760);
    }

    #[test]
    fn rejects_unaligned_start() {
        assert!(SlotRange::new(ts("2019-01-01 00:30:00"), 2).is_err());
    }
}
