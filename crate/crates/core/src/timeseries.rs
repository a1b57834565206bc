//! Price series and task instances.
//!
//! Short-term series hold intraday prices sampled every five minutes across
//! the morning (09:00-11:30) and afternoon (12:30-15:00) sessions, stored most
//! recent first. Long-term series hold up to seven previous daily closes,
//! stored oldest first (`7DaysAgo` ... `1DayAgo`).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::price::Yen;

/// Maximum number of intraday points: 31 per session, two sessions.
pub const MAX_SHORT_TERM_POINTS: usize = 62;
/// Number of daily closes in a complete long-term series.
pub const LONG_TERM_POINTS: usize = 7;

const MORNING: (u16, u16) = (9 * 60, 11 * 60 + 30);
const AFTERNOON: (u16, u16) = (12 * 60 + 30, 15 * 60);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("invalid clock time `{0}`: expected HH:MM")]
    InvalidClock(String),
    #[error("clock time {0} is not on a 5-minute boundary")]
    OffGrid(ClockTime),
    #[error("clock time {0} is outside the trading sessions 09:00-11:30 and 12:30-15:00")]
    OutOfSession(ClockTime),
    #[error("day offset {0} is outside 1..=7")]
    DayOffsetOutOfRange(u32),
    #[error("timestamp {timestamp} does not belong in a {kind} series")]
    WrongTimestampKind { kind: SeriesKind, timestamp: Timestamp },
    #[error("non-positive price {price} at {timestamp}")]
    NonPositivePrice { timestamp: Timestamp, price: Yen },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(Timestamp),
    #[error("{kind} series has {count} points, exceeds {max} points")]
    TooManyPoints { kind: SeriesKind, count: usize, max: usize },
    #[error("{kind} series has {count} points, expected exactly {expected}")]
    WrongPointCount { kind: SeriesKind, count: usize, expected: usize },
    #[error("index name must be non-empty and single-line")]
    InvalidIndexName,
    #[error("instance id must be non-empty")]
    EmptyId,
    #[error("reference comment must be non-empty")]
    EmptyReference,
    #[error("short-term point {point} is later than target time {target}")]
    LaterThanTarget { point: ClockTime, target: ClockTime },
    #[error("target time {0} is outside the trading sessions")]
    TargetOutOfSession(ClockTime),
    #[error("instance `{id}`: {field} series has the wrong kind")]
    SeriesKindMismatch { id: String, field: &'static str },
    #[error("unknown split `{0}`: expected train, valid or test")]
    UnknownSplit(String),
}

/// Wall-clock time of an intraday observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockTime {
    hour: u8,
    minute: u8,
}

impl ClockTime {
    pub fn new(hour: u8, minute: u8) -> Result<Self, SeriesError> {
        if hour > 23 || minute > 59 {
            return Err(SeriesError::InvalidClock(alloc::format!("{hour}:{minute}")));
        }
        Ok(ClockTime { hour, minute })
    }

    pub fn hour(self) -> u8 {
        self.hour
    }

    pub fn minute(self) -> u8 {
        self.minute
    }

    pub fn minutes_since_midnight(self) -> u16 {
        u16::from(self.hour) * 60 + u16::from(self.minute)
    }

    pub fn from_minutes(minutes: u16) -> Result<Self, SeriesError> {
        let hour = u8::try_from(minutes / 60).map_err(|_| SeriesError::InvalidClock(alloc::format!("{minutes}")))?;
        ClockTime::new(hour, (minutes % 60) as u8)
    }

    /// True when the time lies on the 5-minute grid of either trading session.
    pub fn is_session_time(self) -> bool {
        let m = self.minutes_since_midnight();
        self.minute.is_multiple_of(5)
            && ((MORNING.0..=MORNING.1).contains(&m) || (AFTERNOON.0..=AFTERNOON.1).contains(&m))
    }

    fn check_session(self) -> Result<(), SeriesError> {
        if !self.minute.is_multiple_of(5) {
            return Err(SeriesError::OffGrid(self));
        }
        if !self.is_session_time() {
            return Err(SeriesError::OutOfSession(self));
        }
        Ok(())
    }

    /// All valid intraday sampling times in ascending order.
    pub fn session_times() -> impl Iterator<Item = ClockTime> {
        (MORNING.0..=MORNING.1)
            .step_by(5)
            .chain((AFTERNOON.0..=AFTERNOON.1).step_by(5))
            .map(|m| ClockTime { hour: (m / 60) as u8, minute: (m % 60) as u8 })
    }
}

impl fmt::Display for ClockTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.hour, self.minute)
    }
}

impl FromStr for ClockTime {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SeriesError::InvalidClock(s.into());
        let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
        if h.is_empty() || h.len() > 2 || m.len() != 2 {
            return Err(bad());
        }
        if !h.bytes().chain(m.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let hour: u8 = h.parse().map_err(|_| bad())?;
        let minute: u8 = m.parse().map_err(|_| bad())?;
        ClockTime::new(hour, minute).map_err(|_| bad())
    }
}

impl Serialize for ClockTime {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClockTime {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Position of a point in a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Timestamp {
    Clock(ClockTime),
    /// Number of trading days before the target day.
    DaysAgo(u8),
}

impl Timestamp {
    pub fn days_ago(days: u32) -> Result<Self, SeriesError> {
        if (1..=LONG_TERM_POINTS as u32).contains(&days) {
            Ok(Timestamp::DaysAgo(days as u8))
        } else {
            Err(SeriesError::DayOffsetOutOfRange(days))
        }
    }

    pub fn as_clock(self) -> Option<ClockTime> {
        match self {
            Timestamp::Clock(c) => Some(c),
            Timestamp::DaysAgo(_) => None,
        }
    }

    pub fn as_days_ago(self) -> Option<u8> {
        match self {
            Timestamp::DaysAgo(d) => Some(d),
            Timestamp::Clock(_) => None,
        }
    }
}

/// Renders `15:00` or `7DaysAgo` / `1DayAgo`.
impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timestamp::Clock(c) => c.fmt(f),
            Timestamp::DaysAgo(1) => f.write_str("1DayAgo"),
            Timestamp::DaysAgo(d) => write!(f, "{d}DaysAgo"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    ShortTerm,
    LongTerm,
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeriesKind::ShortTerm => "short-term",
            SeriesKind::LongTerm => "long-term",
        })
    }
}

/// A validated series in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceSeries {
    kind: SeriesKind,
    points: Vec<(Timestamp, Yen)>,
    index_name: String,
}

impl PriceSeries {
    /// Validates the points and sorts them into canonical order for `kind`.
    ///
    /// Empty series are accepted here (windowing can produce them); loaders
    /// and serializers reject them. Long-term series may hold fewer than seven
    /// points in memory; [`PriceSeries::ensure_complete`] enforces exactly
    /// seven.
    pub fn new(
        kind: SeriesKind,
        mut points: Vec<(Timestamp, Yen)>,
        index_name: impl Into<String>,
    ) -> Result<Self, SeriesError> {
        let index_name = index_name.into();
        if index_name.trim().is_empty() || index_name.contains(['\n', '\r']) {
            return Err(SeriesError::InvalidIndexName);
        }
        for &(timestamp, price) in &points {
            match (kind, timestamp) {
                (SeriesKind::ShortTerm, Timestamp::Clock(c)) => c.check_session()?,
                (SeriesKind::LongTerm, Timestamp::DaysAgo(d)) => {
                    if !(1..=LONG_TERM_POINTS as u8).contains(&d) {
                        return Err(SeriesError::DayOffsetOutOfRange(u32::from(d)));
                    }
                }
                _ => return Err(SeriesError::WrongTimestampKind { kind, timestamp }),
            }
            if !price.is_positive() {
                return Err(SeriesError::NonPositivePrice { timestamp, price });
            }
        }
        points.sort_by_key(|(t, _)| canonical_key(*t));
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(SeriesError::DuplicateTimestamp(w[0].0));
        }
        let max = match kind {
            SeriesKind::ShortTerm => MAX_SHORT_TERM_POINTS,
            SeriesKind::LongTerm => LONG_TERM_POINTS,
        };
        if points.len() > max {
            return Err(SeriesError::TooManyPoints { kind, count: points.len(), max });
        }
        Ok(PriceSeries { kind, points, index_name })
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn points(&self) -> &[(Timestamp, Yen)] {
        &self.points
    }

    pub fn index_name(&self) -> &str {
        &self.index_name
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Price at a given timestamp, if present.
    pub fn price_at(&self, timestamp: Timestamp) -> Option<Yen> {
        self.points.iter().find(|(t, _)| *t == timestamp).map(|(_, p)| *p)
    }

    /// Requires a long-term series to hold all seven daily closes.
    pub fn ensure_complete(&self) -> Result<(), SeriesError> {
        if self.kind == SeriesKind::LongTerm && self.points.len() != LONG_TERM_POINTS {
            return Err(SeriesError::WrongPointCount {
                kind: self.kind,
                count: self.points.len(),
                expected: LONG_TERM_POINTS,
            });
        }
        Ok(())
    }
}

// Sort key: short-term descending by clock, long-term descending by days-ago.
fn canonical_key(t: Timestamp) -> core::cmp::Reverse<u16> {
    match t {
        Timestamp::Clock(c) => core::cmp::Reverse(c.minutes_since_midnight()),
        Timestamp::DaysAgo(d) => core::cmp::Reverse(u16::from(d)),
    }
}

/// Points of a short-term series at or before `target`.
///
/// The window is closed: a point exactly at `target` is kept. Long-term
/// series are returned unchanged.
pub fn window_until(series: &PriceSeries, target: ClockTime) -> PriceSeries {
    let points = series
        .points
        .iter()
        .copied()
        .filter(|(t, _)| match t {
            Timestamp::Clock(c) => *c <= target,
            Timestamp::DaysAgo(_) => true,
        })
        .collect();
    PriceSeries { kind: series.kind, points, index_name: series.index_name.clone() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(SeriesError::UnknownSplit(other.into())),
        }
    }
}

/// One generation target: the two input series and the reference comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskInstance {
    id: String,
    target_time: ClockTime,
    short_term: PriceSeries,
    long_term: PriceSeries,
    reference_comment: String,
    split: Split,
}

impl TaskInstance {
    pub fn new(
        id: impl Into<String>,
        target_time: ClockTime,
        short_term: PriceSeries,
        long_term: PriceSeries,
        reference_comment: impl Into<String>,
        split: Split,
    ) -> Result<Self, SeriesError> {
        let id = id.into();
        let reference_comment = reference_comment.into();
        if id.trim().is_empty() {
            return Err(SeriesError::EmptyId);
        }
        if reference_comment.trim().is_empty() {
            return Err(SeriesError::EmptyReference);
        }
        if !target_time.is_session_time() {
            return Err(SeriesError::TargetOutOfSession(target_time));
        }
        if short_term.kind() != SeriesKind::ShortTerm {
            return Err(SeriesError::SeriesKindMismatch { id, field: "short_term" });
        }
        if long_term.kind() != SeriesKind::LongTerm {
            return Err(SeriesError::SeriesKindMismatch { id, field: "long_term" });
        }
        if let Some(point) = short_term
            .points()
            .iter()
            .filter_map(|(t, _)| t.as_clock())
            .find(|c| *c > target_time)
        {
            return Err(SeriesError::LaterThanTarget { point, target: target_time });
        }
        Ok(TaskInstance { id, target_time, short_term, long_term, reference_comment, split })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn target_time(&self) -> ClockTime {
        self.target_time
    }

    pub fn short_term(&self) -> &PriceSeries {
        &self.short_term
    }

    pub fn long_term(&self) -> &PriceSeries {
        &self.long_term
    }

    pub fn reference_comment(&self) -> &str {
        &self.reference_comment
    }

    pub fn split(&self) -> Split {
        self.split
    }
}
