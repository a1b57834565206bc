//! `timestamp,price` CSV files.
//!
//! Short-term files use `HH:MM` timestamps, long-term files an integer
//! number of days ago. Prices carry exactly two fraction digits.

use std::path::Path;

use tsprompt_core::timeseries::LONG_TERM_POINTS;
use tsprompt_core::{ClockTime, PriceSeries, SeriesError, SeriesKind, Timestamp, Yen};

use crate::error::{Error, Result};

pub const DEFAULT_INDEX_NAME: &str = "Nikkei225";

/// Loads and validates a price file, re-sorting rows into canonical order.
pub fn load_price_csv(path: &Path, kind: SeriesKind) -> Result<PriceSeries> {
    let text = super::read_to_string(path)?;
    parse_price_csv(&text, kind, &path.display().to_string())
}

pub fn parse_price_csv(text: &str, kind: SeriesKind, source_name: &str) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut saw_header = false;
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(source_name, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.iter().all(str::is_empty) {
            continue;
        }
        if !saw_header {
            if row.len() != 2 || &row[0] != "timestamp" || &row[1] != "price" {
                return Err(Error::parse(source_name, line, "expected header `timestamp,price`"));
            }
            saw_header = true;
            continue;
        }
        if row.len() != 2 {
            return Err(Error::parse(source_name, line, format!("expected 2 fields, found {}", row.len())));
        }
        let timestamp = parse_timestamp(&row[0], kind).map_err(|e| Error::parse(source_name, line, e.to_string()))?;
        let price = Yen::parse_strict(&row[1]).map_err(|e| Error::parse(source_name, line, e.to_string()))?;
        if !price.is_positive() {
            return Err(Error::parse(source_name, line, format!("non-positive price {price}")));
        }
        points.push((timestamp, price));
    }
    if points.is_empty() {
        return Err(Error::parse(source_name, 0, "no data rows"));
    }
    let series = PriceSeries::new(kind, points, DEFAULT_INDEX_NAME)
        .map_err(|e| Error::parse(source_name, 0, e.to_string()))?;
    if kind == SeriesKind::LongTerm && series.len() != LONG_TERM_POINTS {
        return Err(Error::parse(
            source_name,
            0,
            format!("wrong point count: long-term series needs exactly {LONG_TERM_POINTS} rows, found {}", series.len()),
        ));
    }
    Ok(series)
}

fn parse_timestamp(field: &str, kind: SeriesKind) -> std::result::Result<Timestamp, SeriesError> {
    match kind {
        SeriesKind::ShortTerm => {
            let clock: ClockTime = field.parse()?;
            if !clock.minute().is_multiple_of(5) {
                return Err(SeriesError::OffGrid(clock));
            }
            if !clock.is_session_time() {
                return Err(SeriesError::OutOfSession(clock));
            }
            Ok(Timestamp::Clock(clock))
        }
        SeriesKind::LongTerm => {
            let days: u32 = field.parse().map_err(|_| SeriesError::InvalidClock(field.into()))?;
            Timestamp::days_ago(days)
        }
    }
}

/// Renders a series back to CSV in canonical order.
pub fn write_price_csv(series: &PriceSeries) -> String {
    let mut out = String::from("timestamp,price\n");
    for (t, p) in series.points() {
        let label = match t {
            Timestamp::Clock(c) => c.to_string(),
            Timestamp::DaysAgo(d) => d.to_string(),
        };
        out.push_str(&format!("{label},{p}\n"));
    }
    out
}
