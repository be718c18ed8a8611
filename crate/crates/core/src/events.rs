//! Outage-restoration events.
//!
//! An event is a maximal interval during which the count of active outages
//! `C(t) = O(t) - R(t)` stays above zero. Intervals are half-open
//! `[start, end)`; at equal instants onsets are processed before
//! restorations, so an outage that begins exactly when the last active one
//! is restored extends the current event instead of opening a new one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::OutageRecord;
use crate::time::{format_instant, hours_between, parse_instant, Instant};
use crate::zoning::ZonePartition;

pub const EVENT_COLUMNS: [&str; 6] = [
    "event_index",
    "zone_id",
    "first_start",
    "last_restoration",
    "n_outages",
    "total_restoration_hours",
];

#[derive(Debug, thiserror::Error)]
pub enum EventsError {
    #[error("outage '{0}' lies outside the event bounds")]
    MemberOutOfBounds(String),
    #[error("event lists {expected} outages but {actual} member records were supplied")]
    MemberCount { expected: usize, actual: usize },
    #[error("member records do not form a single event (C(t) reaches zero at {0})")]
    Fragmented(String),
    #[error("events table: {0}")]
    Table(String),
}

/// One connected component of the union of `[start, end)` intervals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span<T> {
    pub start: T,
    pub end: T,
    /// Indices into the input slice, in processing order.
    pub members: Vec<usize>,
}

/// Sweep over interval endpoints. Returns spans in chronological order.
/// Intervals with `end <= start` are the caller's responsibility.
pub fn sweep_intervals<T: Ord + Copy>(intervals: &[(T, T)]) -> Vec<Span<T>> {
    // (time, 0 = onset / 1 = restoration, index)
    let mut marks: Vec<(T, u8, usize)> = Vec::with_capacity(intervals.len() * 2);
    for (i, &(s, e)) in intervals.iter().enumerate() {
        marks.push((s, 0, i));
        marks.push((e, 1, i));
    }
    marks.sort_unstable();

    let mut spans = Vec::new();
    let mut active = 0usize;
    let mut current: Option<Span<T>> = None;
    for (t, kind, i) in marks {
        if kind == 0 {
            if active == 0 {
                current = Some(Span {
                    start: t,
                    end: t,
                    members: Vec::new(),
                });
            }
            active += 1;
            if let Some(span) = current.as_mut() {
                span.members.push(i);
            }
        } else {
            active -= 1;
            if active == 0 {
                let mut span = current.take().expect("restoration without onset");
                span.end = t;
                spans.push(span);
            }
        }
    }
    spans
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageRestorationEvent {
    pub event_index: usize,
    pub member_outage_ids: Vec<String>,
    pub first_start: Instant,
    pub last_restoration: Instant,
    pub n_outages: usize,
    pub total_restoration_hours: f64,
    pub zone_id: Option<String>,
}

/// Territory-wide extraction.
pub fn extract_events(outages: &[OutageRecord]) -> Vec<OutageRestorationEvent> {
    extract_refs(&outages.iter().collect::<Vec<_>>(), None)
}

fn extract_refs(
    outages: &[&OutageRecord],
    zone_id: Option<&str>,
) -> Vec<OutageRestorationEvent> {
    // Sort by (start, outage_id) first so that member order and tie handling
    // do not depend on input order.
    let mut ordered: Vec<&OutageRecord> = outages.to_vec();
    ordered.sort_by(|a, b| {
        (a.start, &a.outage_id, a.end).cmp(&(b.start, &b.outage_id, b.end))
    });
    let intervals: Vec<(Instant, Instant)> = ordered.iter().map(|o| (o.start, o.end)).collect();
    sweep_intervals(&intervals)
        .into_iter()
        .enumerate()
        .map(|(k, span)| OutageRestorationEvent {
            event_index: k,
            member_outage_ids: span
                .members
                .iter()
                .map(|&i| ordered[i].outage_id.clone())
                .collect(),
            first_start: span.start,
            last_restoration: span.end,
            n_outages: span.members.len(),
            total_restoration_hours: hours_between(&span.start, &span.end),
            zone_id: zone_id.map(str::to_string),
        })
        .collect()
}

/// Zone-local extraction: outages are assigned to zones first and each zone
/// is swept on its own. Every zone of the partition gets an entry.
pub fn extract_events_by_zone(
    outages: &[OutageRecord],
    partition: &ZonePartition,
) -> BTreeMap<String, Vec<OutageRestorationEvent>> {
    let mut buckets: Vec<Vec<&OutageRecord>> = vec![Vec::new(); partition.len()];
    for o in outages {
        buckets[partition.assign(o.lon_lat()).index].push(o);
    }
    partition
        .zones
        .iter()
        .zip(buckets)
        .map(|(zone, members)| {
            (zone.zone_id.clone(), extract_refs(&members, Some(&zone.zone_id)))
        })
        .collect()
}

/// Step functions of cumulative onsets `O`, restorations `R` and active
/// count `C = O - R`. `o[k]`, `r[k]`, `c[k]` hold on `[breakpoints[k], breakpoints[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTimeline {
    pub breakpoints: Vec<Instant>,
    pub o: Vec<usize>,
    pub r: Vec<usize>,
    pub c: Vec<usize>,
}

impl EventTimeline {
    /// `(O, R, C)` at instant `t` (zero before the first breakpoint).
    pub fn at(&self, t: Instant) -> (usize, usize, usize) {
        match self.breakpoints.partition_point(|b| *b <= t) {
            0 => (0, 0, 0),
            k => (self.o[k - 1], self.r[k - 1], self.c[k - 1]),
        }
    }

    pub fn peak(&self) -> usize {
        self.c.iter().copied().max().unwrap_or(0)
    }
}

pub fn event_timeline(
    event: &OutageRestorationEvent,
    members: &[OutageRecord],
) -> Result<EventTimeline, EventsError> {
    if members.len() != event.n_outages {
        return Err(EventsError::MemberCount {
            expected: event.n_outages,
            actual: members.len(),
        });
    }
    for m in members {
        if m.start < event.first_start || m.end > event.last_restoration {
            return Err(EventsError::MemberOutOfBounds(m.outage_id.clone()));
        }
    }
    let mut deltas: BTreeMap<Instant, (usize, usize)> = BTreeMap::new();
    for m in members {
        deltas.entry(m.start).or_default().0 += 1;
        deltas.entry(m.end).or_default().1 += 1;
    }
    let mut tl = EventTimeline {
        breakpoints: Vec::with_capacity(deltas.len()),
        o: Vec::with_capacity(deltas.len()),
        r: Vec::with_capacity(deltas.len()),
        c: Vec::with_capacity(deltas.len()),
    };
    let (mut o, mut r) = (0usize, 0usize);
    let last = deltas.keys().next_back().copied();
    for (t, (up, down)) in deltas {
        o += up;
        r += down;
        if o == r && Some(t) != last {
            return Err(EventsError::Fragmented(format_instant(&t)));
        }
        tl.breakpoints.push(t);
        tl.o.push(o);
        tl.r.push(r);
        tl.c.push(o - r);
    }
    Ok(tl)
}

pub fn write_events_csv<'a>(events: impl IntoIterator<Item = &'a OutageRestorationEvent>) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(EVENT_COLUMNS).unwrap();
    for e in events {
        wtr.write_record([
            e.event_index.to_string(),
            e.zone_id.clone().unwrap_or_default(),
            format_instant(&e.first_start),
            format_instant(&e.last_restoration),
            e.n_outages.to_string(),
            e.total_restoration_hours.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(wtr.into_inner().unwrap()).unwrap()
}

/// Row of an exported events table (member ids are not exported).
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub event_index: usize,
    pub zone_id: Option<String>,
    pub first_start: Instant,
    pub last_restoration: Instant,
    pub n_outages: usize,
    pub total_restoration_hours: f64,
}

pub fn read_events_csv(text: &str) -> Result<Vec<EventRow>, EventsError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| EventsError::Table(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != EVENT_COLUMNS {
        return Err(EventsError::Table("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| EventsError::Table(e.to_string()))?;
        let bad = |what: &str| EventsError::Table(format!("row {}: bad {what}", i + 1));
        let zone = &rec[1];
        rows.push(EventRow {
            event_index: rec[0].parse().map_err(|_| bad("event_index"))?,
            zone_id: (!zone.is_empty()).then(|| zone.to_string()),
            first_start: parse_instant(&rec[2]).ok_or_else(|| bad("first_start"))?,
            last_restoration: parse_instant(&rec[3]).ok_or_else(|| bad("last_restoration"))?,
            n_outages: rec[4].parse().map_err(|_| bad("n_outages"))?,
            total_restoration_hours: rec[5].parse().map_err(|_| bad("total_restoration_hours"))?,
        });
    }
    Ok(rows)
}
