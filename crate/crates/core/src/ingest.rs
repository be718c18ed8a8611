//! Parsing and cleaning of the four input datasets.
//!
//! Every parser tallies each data row exactly once in a [`CleaningReport`]:
//! rows are either kept or dropped under one rule. Schema problems (a
//! missing header column) are the only fatal errors for the record files;
//! a bad row never aborts a parse.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::hazard::HazardClass;
use crate::time::{format_instant, minutes_between, parse_instant, Instant};

pub const OUTAGE_COLUMNS: [&str; 9] = [
    "outage_id",
    "component_id",
    "latitude",
    "longitude",
    "start",
    "end",
    "restore_minutes",
    "customers",
    "cause_code",
];

pub const WEATHER_COLUMNS: [&str; 7] = [
    "station_id",
    "timestamp",
    "wind_avg_ms",
    "wind_fastest_2min_ms",
    "precip_in",
    "snowfall_in",
    "snow_depth_in",
];

pub const STATION_COLUMNS: [&str; 4] = ["station_id", "latitude", "longitude", "capabilities"];

pub const SEVERE_COLUMNS: [&str; 7] = [
    "event_id",
    "event_type",
    "start",
    "end",
    "latitude",
    "longitude",
    "description",
];

const SAMPLE_IDS_PER_RULE: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{file}: header is missing required column '{column}'")]
    MissingColumn { file: &'static str, column: &'static str },
    #[error("{file}: unreadable header: {source}")]
    Header {
        file: &'static str,
        #[source]
        source: csv::Error,
    },
    #[error("stations: duplicate station_id '{0}'")]
    DuplicateStation(String),
    #[error("stations: row {row}: {reason}")]
    InvalidStation { row: usize, reason: String },
}

/// Thresholds for the "reasonable operational limits" cleaning rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleaningLimits {
    pub max_duration_days: f64,
    pub max_customers: u64,
    /// Allowed excess of `restore_minutes` over the start/end span.
    pub restore_slack_minutes: f64,
}

impl Default for CleaningLimits {
    fn default() -> Self {
        Self {
            max_duration_days: 30.0,
            max_customers: 10_000_000,
            restore_slack_minutes: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DropRule {
    MissingField,
    InconsistentTime,
    OutOfBounds,
    Duplicate,
}

impl DropRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DropRule::MissingField => "missing_field",
            DropRule::InconsistentTime => "inconsistent_time",
            DropRule::OutOfBounds => "out_of_bounds",
            DropRule::Duplicate => "duplicate",
        }
    }
}

/// Audit trail of one cleaning pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub total_rows: usize,
    pub kept: usize,
    pub dropped_missing_field: usize,
    pub dropped_inconsistent_time: usize,
    pub dropped_out_of_bounds: usize,
    pub dropped_duplicate: usize,
    /// Up to ten row identifiers per drop rule.
    pub samples: BTreeMap<String, Vec<String>>,
}

impl CleaningReport {
    pub fn dropped(&self) -> usize {
        self.dropped_missing_field
            + self.dropped_inconsistent_time
            + self.dropped_out_of_bounds
            + self.dropped_duplicate
    }

    pub fn is_balanced(&self) -> bool {
        self.kept + self.dropped() == self.total_rows
    }

    fn drop_row(&mut self, rule: DropRule, id: String) {
        match rule {
            DropRule::MissingField => self.dropped_missing_field += 1,
            DropRule::InconsistentTime => self.dropped_inconsistent_time += 1,
            DropRule::OutOfBounds => self.dropped_out_of_bounds += 1,
            DropRule::Duplicate => self.dropped_duplicate += 1,
        }
        let ids = self.samples.entry(rule.as_str().to_string()).or_default();
        if ids.len() < SAMPLE_IDS_PER_RULE {
            ids.push(id);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageRecord {
    pub outage_id: String,
    pub component_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub start: Instant,
    pub end: Instant,
    pub restore_minutes: f64,
    pub customers: u64,
    pub cause_code: String,
}

impl OutageRecord {
    pub fn lon_lat(&self) -> [f64; 2] {
        [self.longitude, self.latitude]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherObservation {
    pub station_id: String,
    pub timestamp: Instant,
    pub wind_avg: Option<f64>,
    pub wind_fastest_2min: Option<f64>,
    pub precip: Option<f64>,
    pub snowfall: Option<f64>,
    pub snow_depth: Option<f64>,
}

impl WeatherObservation {
    fn present_fields(&self) -> usize {
        [
            self.wind_avg,
            self.wind_fastest_2min,
            self.precip,
            self.snowfall,
            self.snow_depth,
        ]
        .iter()
        .filter(|v| v.is_some())
        .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub station_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub capabilities: BTreeSet<HazardClass>,
}

impl Station {
    pub fn supports(&self, class: HazardClass) -> bool {
        self.capabilities.contains(&class)
    }

    pub fn lon_lat(&self) -> [f64; 2] {
        [self.longitude, self.latitude]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SevereWeatherRecord {
    pub event_id: String,
    pub event_type: String,
    pub start: Instant,
    pub end: Instant,
    pub latitude: f64,
    pub longitude: f64,
    pub description: String,
}

impl SevereWeatherRecord {
    pub fn lon_lat(&self) -> [f64; 2] {
        [self.longitude, self.latitude]
    }
}

/// Column lookup by header name; extra columns are ignored.
struct Columns<const N: usize> {
    index: [usize; N],
}

impl<const N: usize> Columns<N> {
    fn resolve(
        file: &'static str,
        headers: &csv::ByteRecord,
        wanted: &[&'static str; N],
    ) -> Result<Self, IngestError> {
        let names: Vec<String> = headers
            .iter()
            .map(|h| {
                String::from_utf8_lossy(h)
                    .trim_start_matches('\u{feff}')
                    .trim()
                    .to_string()
            })
            .collect();
        let mut index = [0usize; N];
        for (slot, column) in index.iter_mut().zip(wanted) {
            *slot = names
                .iter()
                .position(|n| n == column)
                .ok_or(IngestError::MissingColumn { file, column })?;
        }
        Ok(Self { index })
    }

    fn field<'r>(&self, record: &'r csv::ByteRecord, i: usize) -> Option<&'r str> {
        record
            .get(self.index[i])
            .and_then(|raw| std::str::from_utf8(raw).ok())
            .map(str::trim)
    }
}

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(bytes)
}

fn header_of(
    file: &'static str,
    rdr: &mut csv::Reader<&[u8]>,
) -> Result<csv::ByteRecord, IngestError> {
    rdr.byte_headers()
        .cloned()
        .map_err(|source| IngestError::Header { file, source })
}

fn non_empty(v: Option<&str>) -> Option<&str> {
    v.filter(|s| !s.is_empty())
}

/// Empty cell → `Ok(None)`; unparseable → `Err(MissingField)`.
fn optional_number(v: Option<&str>) -> Result<Option<f64>, DropRule> {
    match non_empty(v) {
        None => Ok(None),
        Some(s) => s.parse::<f64>().map(Some).map_err(|_| DropRule::MissingField),
    }
}

fn required_number(v: Option<&str>) -> Result<f64, DropRule> {
    optional_number(v)?.ok_or(DropRule::MissingField)
}

fn required_instant(v: Option<&str>) -> Result<Instant, DropRule> {
    non_empty(v).and_then(parse_instant).ok_or(DropRule::MissingField)
}

fn in_coordinate_range(lat: f64, lon: f64) -> bool {
    (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
}

fn row_id(primary: Option<&str>, row: usize) -> String {
    match non_empty(primary) {
        Some(id) => id.to_string(),
        None => format!("row {row}"),
    }
}

/// Parses `outages.csv`, dropping rows that violate the record invariants.
pub fn parse_outages(
    bytes: &[u8],
    limits: &CleaningLimits,
) -> Result<(Vec<OutageRecord>, CleaningReport), IngestError> {
    const FILE: &str = "outages";
    let mut rdr = reader(bytes);
    let cols = Columns::resolve(FILE, &header_of(FILE, &mut rdr)?, &OUTAGE_COLUMNS)?;
    let mut report = CleaningReport::default();
    let mut kept = Vec::new();

    for (i, row) in rdr.byte_records().enumerate() {
        let row_no = i + 1;
        report.total_rows += 1;
        let Ok(row) = row else {
            report.drop_row(DropRule::MissingField, format!("row {row_no}"));
            continue;
        };
        match outage_from_row(&cols, &row, limits) {
            Ok(rec) => {
                report.kept += 1;
                kept.push(rec);
            }
            Err(rule) => report.drop_row(rule, row_id(cols.field(&row, 0), row_no)),
        }
    }
    Ok((kept, report))
}

fn outage_from_row(
    cols: &Columns<9>,
    row: &csv::ByteRecord,
    limits: &CleaningLimits,
) -> Result<OutageRecord, DropRule> {
    let text = |i| non_empty(cols.field(row, i)).ok_or(DropRule::MissingField);
    let outage_id = text(0)?.to_string();
    let component_id = text(1)?.to_string();
    let latitude = required_number(cols.field(row, 2))?;
    let longitude = required_number(cols.field(row, 3))?;
    let start = required_instant(cols.field(row, 4))?;
    let end = required_instant(cols.field(row, 5))?;
    let restore_minutes = required_number(cols.field(row, 6))?;
    let customers: i64 = text(7)?.parse().map_err(|_| DropRule::MissingField)?;
    let cause_code = text(8)?.to_string();

    if !in_coordinate_range(latitude, longitude)
        || !restore_minutes.is_finite()
        || restore_minutes < 0.0
        || customers < 0
        || customers as u64 > limits.max_customers
    {
        return Err(DropRule::OutOfBounds);
    }
    if start >= end {
        return Err(DropRule::InconsistentTime);
    }
    let span = minutes_between(&start, &end);
    if restore_minutes > span + limits.restore_slack_minutes {
        return Err(DropRule::InconsistentTime);
    }
    if span > limits.max_duration_days * 24.0 * 60.0 {
        return Err(DropRule::OutOfBounds);
    }
    Ok(OutageRecord {
        outage_id,
        component_id,
        latitude,
        longitude,
        start,
        end,
        restore_minutes,
        customers: customers as u64,
        cause_code,
    })
}

/// Parses `weather.csv`. Output is sorted by `(station_id, timestamp)` with
/// duplicate station-hours collapsed onto the most complete row (ties go to
/// the later row).
pub fn parse_weather(
    bytes: &[u8],
) -> Result<(Vec<WeatherObservation>, CleaningReport), IngestError> {
    const FILE: &str = "weather";
    let mut rdr = reader(bytes);
    let cols = Columns::resolve(FILE, &header_of(FILE, &mut rdr)?, &WEATHER_COLUMNS)?;
    let mut report = CleaningReport::default();
    let mut valid: Vec<(usize, WeatherObservation)> = Vec::new();

    for (i, row) in rdr.byte_records().enumerate() {
        let row_no = i + 1;
        report.total_rows += 1;
        let Ok(row) = row else {
            report.drop_row(DropRule::MissingField, format!("row {row_no}"));
            continue;
        };
        match weather_from_row(&cols, &row) {
            Ok(obs) => valid.push((row_no, obs)),
            Err(rule) => {
                let id = match (non_empty(cols.field(&row, 0)), non_empty(cols.field(&row, 1))) {
                    (Some(s), Some(t)) => format!("{s}@{t}"),
                    _ => format!("row {row_no}"),
                };
                report.drop_row(rule, id);
            }
        }
    }

    valid.sort_by(|(ia, a), (ib, b)| {
        (&a.station_id, a.timestamp, ia).cmp(&(&b.station_id, b.timestamp, ib))
    });
    let mut out: Vec<WeatherObservation> = Vec::with_capacity(valid.len());
    let mut iter = valid.into_iter().peekable();
    while let Some((_, first)) = iter.next() {
        let mut best = first;
        while let Some((_, next)) = iter.next_if(|(_, n)| {
            n.station_id == best.station_id && n.timestamp == best.timestamp
        }) {
            let id = format!("{}@{}", next.station_id, format_instant(&next.timestamp));
            // later rows win ties
            if next.present_fields() >= best.present_fields() {
                best = next;
            }
            report.drop_row(DropRule::Duplicate, id);
        }
        out.push(best);
    }
    report.kept = out.len();
    Ok((out, report))
}

fn weather_from_row(
    cols: &Columns<7>,
    row: &csv::ByteRecord,
) -> Result<WeatherObservation, DropRule> {
    let station_id = non_empty(cols.field(row, 0))
        .ok_or(DropRule::MissingField)?
        .to_string();
    let timestamp = required_instant(cols.field(row, 1))?;
    let mut values = [None; 5];
    for (k, slot) in values.iter_mut().enumerate() {
        *slot = optional_number(cols.field(row, k + 2))?;
    }
    if values.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(DropRule::OutOfBounds);
    }
    let [wind_avg, wind_fastest_2min, precip, snowfall, snow_depth] = values;
    if let (Some(avg), Some(fast)) = (wind_avg, wind_fastest_2min) {
        if fast < avg {
            return Err(DropRule::OutOfBounds);
        }
    }
    Ok(WeatherObservation {
        station_id,
        timestamp,
        wind_avg,
        wind_fastest_2min,
        precip,
        snowfall,
        snow_depth,
    })
}

/// Parses `stations.csv`. Unlike the record files, any bad row is fatal:
/// the station list defines the zoning and must be complete.
///
/// Returns the stations in file order plus warnings (e.g. a hazard class
/// without any capable station).
pub fn parse_stations(bytes: &[u8]) -> Result<(Vec<Station>, Vec<String>), IngestError> {
    const FILE: &str = "stations";
    let mut rdr = reader(bytes);
    let cols = Columns::resolve(FILE, &header_of(FILE, &mut rdr)?, &STATION_COLUMNS)?;
    let mut stations: Vec<Station> = Vec::new();
    let mut seen = HashMap::new();

    for (i, row) in rdr.byte_records().enumerate() {
        let row_no = i + 1;
        let invalid = |reason: &str| IngestError::InvalidStation {
            row: row_no,
            reason: reason.to_string(),
        };
        let row = row.map_err(|e| invalid(&e.to_string()))?;
        let station_id = non_empty(cols.field(&row, 0))
            .ok_or_else(|| invalid("empty station_id"))?
            .to_string();
        let latitude =
            required_number(cols.field(&row, 1)).map_err(|_| invalid("bad latitude"))?;
        let longitude =
            required_number(cols.field(&row, 2)).map_err(|_| invalid("bad longitude"))?;
        if !in_coordinate_range(latitude, longitude) {
            return Err(invalid("coordinates out of range"));
        }
        let mut capabilities = BTreeSet::new();
        for token in cols.field(&row, 3).unwrap_or("").split(';') {
            let token = token.trim();
            if token.is_empty() {
                continue;
            }
            let class = token
                .parse::<HazardClass>()
                .map_err(|e| invalid(&e.to_string()))?;
            capabilities.insert(class);
        }
        if capabilities.is_empty() {
            return Err(invalid("no capabilities"));
        }
        if seen.insert(station_id.clone(), row_no).is_some() {
            return Err(IngestError::DuplicateStation(station_id));
        }
        stations.push(Station {
            station_id,
            latitude,
            longitude,
            capabilities,
        });
    }

    let warnings = HazardClass::ALL
        .iter()
        .filter(|c| !stations.iter().any(|s| s.supports(**c)))
        .map(|c| format!("no station supports the {c} hazard class"))
        .collect();
    Ok((stations, warnings))
}

/// Parses `severe_events.csv`; output sorted by start instant.
pub fn parse_severe(
    bytes: &[u8],
) -> Result<(Vec<SevereWeatherRecord>, CleaningReport), IngestError> {
    const FILE: &str = "severe_events";
    let mut rdr = reader(bytes);
    let cols = Columns::resolve(FILE, &header_of(FILE, &mut rdr)?, &SEVERE_COLUMNS)?;
    let mut report = CleaningReport::default();
    let mut kept = Vec::new();

    for (i, row) in rdr.byte_records().enumerate() {
        let row_no = i + 1;
        report.total_rows += 1;
        let Ok(row) = row else {
            report.drop_row(DropRule::MissingField, format!("row {row_no}"));
            continue;
        };
        match severe_from_row(&cols, &row) {
            Ok(rec) => {
                report.kept += 1;
                kept.push(rec);
            }
            Err(rule) => report.drop_row(rule, row_id(cols.field(&row, 0), row_no)),
        }
    }
    kept.sort_by(|a: &SevereWeatherRecord, b| {
        (a.start, &a.event_id).cmp(&(b.start, &b.event_id))
    });
    Ok((kept, report))
}

fn severe_from_row(
    cols: &Columns<7>,
    row: &csv::ByteRecord,
) -> Result<SevereWeatherRecord, DropRule> {
    let text = |i| non_empty(cols.field(row, i)).ok_or(DropRule::MissingField);
    let event_id = text(0)?.to_string();
    let event_type = text(1)?.to_string();
    let start = required_instant(cols.field(row, 2))?;
    let end = required_instant(cols.field(row, 3))?;
    let latitude = required_number(cols.field(row, 4))?;
    let longitude = required_number(cols.field(row, 5))?;
    let description = cols.field(row, 6).unwrap_or("").to_string();
    if !in_coordinate_range(latitude, longitude) {
        return Err(DropRule::OutOfBounds);
    }
    if end <= start {
        return Err(DropRule::InconsistentTime);
    }
    Ok(SevereWeatherRecord {
        event_id,
        event_type,
        start,
        end,
        latitude,
        longitude,
        description,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(wtr: csv::Writer<Vec<u8>>) -> String {
    let bytes = wtr.into_inner().expect("in-memory writer cannot fail");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

pub fn write_outages(records: &[OutageRecord]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(OUTAGE_COLUMNS).unwrap();
    for r in records {
        wtr.write_record([
            r.outage_id.clone(),
            r.component_id.clone(),
            r.latitude.to_string(),
            r.longitude.to_string(),
            format_instant(&r.start),
            format_instant(&r.end),
            r.restore_minutes.to_string(),
            r.customers.to_string(),
            r.cause_code.clone(),
        ])
        .unwrap();
    }
    finish(wtr)
}

pub fn write_weather(observations: &[WeatherObservation]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(WEATHER_COLUMNS).unwrap();
    for o in observations {
        wtr.write_record([
            o.station_id.clone(),
            format_instant(&o.timestamp),
            fmt_opt(o.wind_avg),
            fmt_opt(o.wind_fastest_2min),
            fmt_opt(o.precip),
            fmt_opt(o.snowfall),
            fmt_opt(o.snow_depth),
        ])
        .unwrap();
    }
    finish(wtr)
}

pub fn write_stations(stations: &[Station]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(STATION_COLUMNS).unwrap();
    for s in stations {
        let caps: Vec<&str> = s.capabilities.iter().map(|c| c.as_str()).collect();
        wtr.write_record([
            s.station_id.clone(),
            s.latitude.to_string(),
            s.longitude.to_string(),
            caps.join(";"),
        ])
        .unwrap();
    }
    finish(wtr)
}

pub fn write_severe(records: &[SevereWeatherRecord]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(SEVERE_COLUMNS).unwrap();
    for r in records {
        wtr.write_record([
            r.event_id.clone(),
            r.event_type.clone(),
            format_instant(&r.start),
            format_instant(&r.end),
            r.latitude.to_string(),
            r.longitude.to_string(),
            r.description.clone(),
        ])
        .unwrap();
    }
    finish(wtr)
}
