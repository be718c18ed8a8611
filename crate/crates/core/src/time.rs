//! Timestamp helpers shared by every file format.
//!
//! All files carry ISO-8601 instants in UTC (`2012-06-29T14:00:00Z`).

use chrono::{DateTime, SecondsFormat, Utc};

pub type Instant = DateTime<Utc>;

/// Parses an RFC 3339 / ISO-8601 instant and normalises it to UTC.
pub fn parse_instant(raw: &str) -> Option<Instant> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    DateTime::parse_from_rfc3339(raw)
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

/// Second-precision UTC rendering with a `Z` suffix.
pub fn format_instant(t: &Instant) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn hours_between(start: &Instant, end: &Instant) -> f64 {
    (*end - *start).num_milliseconds() as f64 / 3_600_000.0
}

pub fn minutes_between(start: &Instant, end: &Instant) -> f64 {
    (*end - *start).num_milliseconds() as f64 / 60_000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_formats_utc() {
        let t = parse_instant("2012-06-29T14:00:00Z").unwrap();
        assert_eq!(format_instant(&t), "2012-06-29T14:00:00Z");
    }

    #[test]
    fn offsets_are_normalised() {
        let t = parse_instant("2012-06-29T09:00:00-05:00").unwrap();
        assert_eq!(format_instant(&t), "2012-06-29T14:00:00Z");
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(parse_instant("").is_none());
        assert!(parse_instant("yesterday").is_none());
        assert!(parse_instant("2012-13-40T00:00:00Z").is_none());
    }
}
