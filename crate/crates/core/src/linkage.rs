//! Severe-weather linkage: classify records, place them in zones, merge
//! overlapping windows, attach station intensity and count coincident
//! outages. Each resulting (intensity, outage count) pair is one
//! fragility sample.

use std::collections::BTreeMap;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::hazard::HazardClass;
use crate::ingest::{OutageRecord, SevereWeatherRecord, WeatherObservation};
use crate::time::{format_instant, parse_instant, Instant};
use crate::zoning::{ZoneAssignment, ZonePartition};

pub const SAMPLE_COLUMNS: [&str; 6] = [
    "zone_id",
    "window_start",
    "window_end",
    "intensity",
    "outage_count",
    "source_event_ids",
];

/// Classification of a severe-weather record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventClass {
    Wind,
    Precipitation,
    Excluded,
}

impl EventClass {
    pub fn hazard(self) -> Option<HazardClass> {
        match self {
            EventClass::Wind => Some(HazardClass::Wind),
            EventClass::Precipitation => Some(HazardClass::Precipitation),
            EventClass::Excluded => None,
        }
    }
}

/// Case-insensitive event-type labels per hazard class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardMapping {
    pub wind: Vec<String>,
    pub precipitation: Vec<String>,
}

impl Default for HazardMapping {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            wind: owned(&["tornado", "high wind", "strong wind", "thunderstorm wind"]),
            precipitation: owned(&[
                "flood",
                "flash flood",
                "heavy rain",
                "heavy snow",
                "snowstorm",
                "winter storm",
                "blizzard",
            ]),
        }
    }
}

impl HazardMapping {
    pub fn classify(&self, label: &str) -> EventClass {
        let label = label.trim();
        let hit = |xs: &[String]| xs.iter().any(|x| x.trim().eq_ignore_ascii_case(label));
        if hit(&self.wind) {
            EventClass::Wind
        } else if hit(&self.precipitation) {
            EventClass::Precipitation
        } else {
            EventClass::Excluded
        }
    }
}

pub fn classify_hazard(record: &SevereWeatherRecord, mapping: &HazardMapping) -> EventClass {
    mapping.classify(&record.event_type)
}

pub fn localize(record: &SevereWeatherRecord, partition: &ZonePartition) -> ZoneAssignment {
    partition.assign(record.lon_lat())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedWindow {
    pub start: Instant,
    pub end: Instant,
    pub source_event_ids: Vec<String>,
}

/// Unions closed `[start, end]` windows that overlap or touch.
pub fn merge_windows(records: &[&SevereWeatherRecord]) -> Vec<MergedWindow> {
    let mut sorted: Vec<&SevereWeatherRecord> = records.to_vec();
    sorted.sort_by(|a, b| (a.start, a.end, &a.event_id).cmp(&(b.start, b.end, &b.event_id)));
    let mut merged: Vec<MergedWindow> = Vec::new();
    for r in sorted {
        match merged.last_mut() {
            Some(w) if r.start <= w.end => {
                w.end = w.end.max(r.end);
                w.source_event_ids.push(r.event_id.clone());
            }
            _ => merged.push(MergedWindow {
                start: r.start,
                end: r.end,
                source_event_ids: vec![r.event_id.clone()],
            }),
        }
    }
    merged
}

/// How precipitation records are reduced to one scalar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecipMode {
    /// Liquid-equivalent depth summed over the window.
    #[default]
    Cumulative,
    /// Largest single-hour depth.
    Peak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityReading {
    pub value: f64,
    pub observations_in_range: usize,
    pub observations_with_data: usize,
    /// Diagnostic only; never part of the scalar.
    pub max_snow_depth: Option<f64>,
}

impl IntensityReading {
    pub fn coverage(&self) -> f64 {
        self.observations_with_data as f64 / self.observations_in_range as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntensityDiscard {
    #[error("station {station_id} has no observations between {from} and {to}")]
    NoObservations { station_id: String, from: String, to: String },
    #[error("station {station_id} reports no {class} measurement between {from} and {to}")]
    NoMeasurements {
        station_id: String,
        class: HazardClass,
        from: String,
        to: String,
    },
}

/// Observations whose hour stamp may describe the start of a minute-stamped window.
pub const LOOKBACK: Duration = Duration::hours(1);

/// Measured intensity at `station_id` over `[start - 1h, end]`.
///
/// `observations` must be sorted by `(station_id, timestamp)`, as produced
/// by [`crate::ingest::parse_weather`]. Absent values are skipped, never
/// read as zero.
pub fn intensity(
    observations: &[WeatherObservation],
    station_id: &str,
    start: Instant,
    end: Instant,
    class: HazardClass,
    mode: PrecipMode,
) -> Result<IntensityReading, IntensityDiscard> {
    let from = start - LOOKBACK;
    let lo = observations.partition_point(|o| {
        (o.station_id.as_str(), o.timestamp) < (station_id, from)
    });
    let hi = observations.partition_point(|o| {
        (o.station_id.as_str(), o.timestamp) <= (station_id, end)
    });
    let in_range = &observations[lo..hi.max(lo)];
    let describe = || (format_instant(&from), format_instant(&end));
    if in_range.is_empty() {
        let (from, to) = describe();
        return Err(IntensityDiscard::NoObservations {
            station_id: station_id.to_string(),
            from,
            to,
        });
    }

    let hourly: Vec<f64> = in_range
        .iter()
        .filter_map(|o| match class {
            HazardClass::Wind => o.wind_fastest_2min,
            HazardClass::Precipitation => match (o.precip, o.snowfall) {
                (None, None) => None,
                (p, s) => Some(p.unwrap_or(0.0) + s.unwrap_or(0.0)),
            },
        })
        .collect();
    if hourly.is_empty() {
        let (from, to) = describe();
        return Err(IntensityDiscard::NoMeasurements {
            station_id: station_id.to_string(),
            class,
            from,
            to,
        });
    }
    let max = || hourly.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let value = match (class, mode) {
        (HazardClass::Wind, _) | (HazardClass::Precipitation, PrecipMode::Peak) => max(),
        (HazardClass::Precipitation, PrecipMode::Cumulative) => hourly.iter().sum(),
    };
    let max_snow_depth = in_range
        .iter()
        .filter_map(|o| o.snow_depth)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
    Ok(IntensityReading {
        value,
        observations_in_range: in_range.len(),
        observations_with_data: hourly.len(),
        max_snow_depth,
    })
}

/// Outages whose start lies in `[start, end]` and whose location falls in `zone_id`.
pub fn count_outages(
    outages: &[OutageRecord],
    start: Instant,
    end: Instant,
    zone_id: &str,
    partition: &ZonePartition,
) -> usize {
    outages
        .iter()
        .filter(|o| o.start >= start && o.start <= end)
        .filter(|o| partition.zone_id_of(o.lon_lat()) == zone_id)
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragilitySample {
    pub zone_id: String,
    pub window_start: Instant,
    pub window_end: Instant,
    pub intensity: f64,
    pub outage_count: usize,
    pub source_event_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkageOptions {
    pub mapping: HazardMapping,
    pub precip_mode: PrecipMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Omission {
    pub zone_id: Option<String>,
    pub source_event_ids: Vec<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkageOutput {
    /// Every zone of every supplied partition, ordered by window start.
    pub samples: BTreeMap<String, Vec<FragilitySample>>,
    pub omissions: Vec<Omission>,
    /// Record ids classified as excluded.
    pub excluded: Vec<String>,
    /// Record ids located outside the service boundary (still assigned).
    pub outside_boundary: Vec<String>,
}

impl LinkageOutput {
    pub fn samples_for(&self, class: HazardClass) -> impl Iterator<Item = (&String, &Vec<FragilitySample>)> {
        let prefix = format!("{}:", class.as_str());
        self.samples.iter().filter(move |(k, _)| k.starts_with(&prefix))
    }
}

/// Outage start times bucketed by zone, for window counting.
struct ZoneStarts {
    by_zone: Vec<Vec<Instant>>,
}

impl ZoneStarts {
    fn new(outages: &[OutageRecord], partition: &ZonePartition) -> Self {
        let mut by_zone = vec![Vec::new(); partition.len()];
        for o in outages {
            by_zone[partition.assign(o.lon_lat()).index].push(o.start);
        }
        for starts in &mut by_zone {
            starts.sort_unstable();
        }
        Self { by_zone }
    }

    fn count(&self, zone: usize, start: Instant, end: Instant) -> usize {
        let starts = &self.by_zone[zone];
        let lo = starts.partition_point(|t| *t < start);
        let hi = starts.partition_point(|t| *t <= end);
        hi - lo
    }
}

/// classify → localize → merge → intensity → count.
///
/// Samples whose intensity cannot be measured are omitted and listed in
/// `omissions`; windows without outages are kept with a zero count.
pub fn build_fragility_samples(
    severe: &[SevereWeatherRecord],
    partitions: &[&ZonePartition],
    observations: &[WeatherObservation],
    outages: &[OutageRecord],
    options: &LinkageOptions,
) -> LinkageOutput {
    let mut out = LinkageOutput::default();
    let mut grouped: BTreeMap<(HazardClass, usize), Vec<&SevereWeatherRecord>> = BTreeMap::new();

    for record in severe {
        let Some(class) = classify_hazard(record, &options.mapping).hazard() else {
            out.excluded.push(record.event_id.clone());
            continue;
        };
        let Some(partition) = partitions.iter().find(|p| p.hazard_class == class) else {
            out.omissions.push(Omission {
                zone_id: None,
                source_event_ids: vec![record.event_id.clone()],
                reason: format!("no {class} zones available"),
            });
            continue;
        };
        let at = localize(record, partition);
        if at.outside_boundary {
            out.outside_boundary.push(record.event_id.clone());
        }
        grouped.entry((class, at.index)).or_default().push(record);
    }

    for partition in partitions {
        let starts = ZoneStarts::new(outages, partition);
        for (index, zone) in partition.zones.iter().enumerate() {
            let bucket = out.samples.entry(zone.zone_id.clone()).or_default();
            let Some(records) = grouped.get(&(partition.hazard_class, index)) else {
                continue;
            };
            for window in merge_windows(records) {
                match intensity(
                    observations,
                    &zone.station_id,
                    window.start,
                    window.end,
                    partition.hazard_class,
                    options.precip_mode,
                ) {
                    Ok(reading) => bucket.push(FragilitySample {
                        zone_id: zone.zone_id.clone(),
                        window_start: window.start,
                        window_end: window.end,
                        intensity: reading.value,
                        outage_count: starts.count(index, window.start, window.end),
                        source_event_ids: window.source_event_ids,
                    }),
                    Err(why) => out.omissions.push(Omission {
                        zone_id: Some(zone.zone_id.clone()),
                        source_event_ids: window.source_event_ids,
                        reason: why.to_string(),
                    }),
                }
            }
        }
    }
    out
}

pub fn write_samples_csv<'a>(samples: impl IntoIterator<Item = &'a FragilitySample>) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(SAMPLE_COLUMNS).unwrap();
    for s in samples {
        wtr.write_record([
            s.zone_id.clone(),
            format_instant(&s.window_start),
            format_instant(&s.window_end),
            s.intensity.to_string(),
            s.outage_count.to_string(),
            s.source_event_ids.join(";"),
        ])
        .unwrap();
    }
    String::from_utf8(wtr.into_inner().unwrap()).unwrap()
}

pub fn read_samples_csv(text: &str) -> Result<Vec<FragilitySample>, String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>() != SAMPLE_COLUMNS {
        return Err("fragility samples: unexpected header".into());
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bad = |what: &str| format!("fragility samples row {}: bad {what}", i + 1);
        out.push(FragilitySample {
            zone_id: rec[0].to_string(),
            window_start: parse_instant(&rec[1]).ok_or_else(|| bad("window_start"))?,
            window_end: parse_instant(&rec[2]).ok_or_else(|| bad("window_end"))?,
            intensity: rec[3].parse().map_err(|_| bad("intensity"))?,
            outage_count: rec[4].parse().map_err(|_| bad("outage_count"))?,
            source_event_ids: rec[5]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::ingest::Station;
    use crate::zoning::build_partition;
    use chrono::{TimeZone, Utc};

    fn t(h: i64, m: i64) -> Instant {
        Utc.with_ymd_and_hms(2012, 6, 29, 0, 0, 0).unwrap()
            + Duration::hours(h)
            + Duration::minutes(m)
    }

    fn severe(id: &str, kind: &str, s: Instant, e: Instant, lon: f64, lat: f64) -> SevereWeatherRecord {
        SevereWeatherRecord {
            event_id: id.into(),
            event_type: kind.into(),
            start: s,
            end: e,
            latitude: lat,
            longitude: lon,
            description: String::new(),
        }
    }

    fn obs(station: &str, h: i64, fast: Option<f64>, precip: Option<f64>) -> WeatherObservation {
        WeatherObservation {
            station_id: station.into(),
            timestamp: t(h, 0),
            wind_avg: None,
            wind_fastest_2min: fast,
            precip,
            snowfall: None,
            snow_depth: None,
        }
    }

    fn outage(id: &str, start: Instant, end: Instant, lon: f64, lat: f64) -> OutageRecord {
        OutageRecord {
            outage_id: id.into(),
            component_id: "C".into(),
            latitude: lat,
            longitude: lon,
            start,
            end,
            restore_minutes: 1.0,
            customers: 1,
            cause_code: "X".into(),
        }
    }

    fn partition(class: HazardClass) -> ZonePartition {
        let stations = [("A", 0.0), ("B", 10.0)].map(|(id, lon)| Station {
            station_id: id.into(),
            latitude: 0.0,
            longitude: lon,
            capabilities: [class].into_iter().collect(),
        });
        build_partition(&stations, class, &Polygon::rectangle([-5.0, -5.0], [15.0, 5.0])).unwrap()
    }

    #[test]
    fn default_mapping() {
        let m = HazardMapping::default();
        assert_eq!(m.classify("tornado"), EventClass::Wind);
        assert_eq!(m.classify("Tornado"), EventClass::Wind);
        assert_eq!(m.classify("HIGH WIND"), EventClass::Wind);
        assert_eq!(m.classify("flood"), EventClass::Precipitation);
        assert_eq!(m.classify("Heavy Snow"), EventClass::Precipitation);
        assert_eq!(m.classify("extreme heat"), EventClass::Excluded);
    }

    #[test]
    fn localize_follows_assignment() {
        let p = partition(HazardClass::Wind);
        let at_station = severe("E", "tornado", t(0, 0), t(1, 0), 10.0, 0.0);
        assert_eq!(localize(&at_station, &p).index, 1);
        let on_bisector = severe("E", "tornado", t(0, 0), t(1, 0), 5.0, 0.0);
        assert_eq!(localize(&on_bisector, &p).index, 0);
    }

    #[test]
    fn merges_overlaps_keeps_disjoint() {
        let a = severe("a", "flood", t(0, 0), t(5, 0), 0.0, 0.0);
        let b = severe("b", "flood", t(3, 0), t(8, 0), 0.0, 0.0);
        let merged = merge_windows(&[&b, &a]);
        assert_eq!(merged.len(), 1);
        assert_eq!((merged[0].start, merged[0].end), (t(0, 0), t(8, 0)));
        assert_eq!(merged[0].source_event_ids, vec!["a", "b"]);

        let c = severe("c", "flood", t(0, 0), t(2, 0), 0.0, 0.0);
        let d = severe("d", "flood", t(5, 0), t(7, 0), 0.0, 0.0);
        assert_eq!(merge_windows(&[&c, &d]).len(), 2);

        let e = severe("e", "flood", t(2, 0), t(4, 0), 0.0, 0.0);
        assert_eq!(merge_windows(&[&c, &e]).len(), 1, "touching windows merge");
    }

    #[test]
    fn wind_intensity_is_maximum() {
        let o = [
            obs("S", 1, Some(20.0), None),
            obs("S", 2, Some(35.0), None),
            obs("S", 3, Some(28.0), None),
            obs("S", 9, Some(99.0), None),
        ];
        let r = intensity(&o, "S", t(2, 0), t(3, 30), HazardClass::Wind, PrecipMode::Cumulative)
            .unwrap();
        assert_eq!(r.value, 35.0);
        assert_eq!(r.observations_in_range, 3);
    }

    #[test]
    fn precipitation_is_cumulative_with_absence_rule() {
        let o = [
            obs("S", 1, None, Some(0.5)),
            obs("S", 2, None, Some(1.0)),
            obs("S", 3, None, Some(1.0)),
        ];
        let full = intensity(&o, "S", t(2, 0), t(3, 0), HazardClass::Precipitation, PrecipMode::Cumulative)
            .unwrap();
        assert_eq!(full.value, 2.5);
        let peak = intensity(&o, "S", t(2, 0), t(3, 0), HazardClass::Precipitation, PrecipMode::Peak)
            .unwrap();
        assert_eq!(peak.value, 1.0);

        let gappy = [
            obs("S", 1, None, Some(1.0)),
            obs("S", 2, None, None),
            obs("S", 3, None, Some(1.0)),
        ];
        let r = intensity(&gappy, "S", t(2, 0), t(3, 0), HazardClass::Precipitation, PrecipMode::Cumulative)
            .unwrap();
        assert_eq!(r.value, 2.0);
        assert!((r.coverage() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn snowfall_counts_snow_depth_does_not() {
        let mut o = obs("S", 1, None, Some(0.2));
        o.snowfall = Some(0.3);
        o.snow_depth = Some(4.0);
        let r = intensity(&[o], "S", t(1, 0), t(1, 30), HazardClass::Precipitation, PrecipMode::Cumulative)
            .unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.max_snow_depth, Some(4.0));
    }

    #[test]
    fn no_observations_is_a_discard_not_zero() {
        let o = [obs("S", 1, Some(20.0), None), obs("T", 5, Some(20.0), None)];
        let err = intensity(&o, "S", t(4, 0), t(6, 0), HazardClass::Wind, PrecipMode::Cumulative)
            .unwrap_err();
        assert!(matches!(err, IntensityDiscard::NoObservations { .. }));
        let err = intensity(&o, "T", t(4, 0), t(6, 0), HazardClass::Precipitation, PrecipMode::Cumulative)
            .unwrap_err();
        assert!(matches!(err, IntensityDiscard::NoMeasurements { .. }));
    }

    #[test]
    fn counting_is_start_based() {
        let p = partition(HazardClass::Wind);
        let out = vec![
            outage("1", t(1, 0), t(2, 0), 0.0, 0.0),
            outage("2", t(2, 0), t(30, 0), 1.0, 0.0),
            outage("3", t(3, 0), t(4, 0), -1.0, 1.0),
            outage("4", t(5, 1), t(5, 30), 0.0, 0.0),
            outage("5", t(2, 0), t(3, 0), 9.0, 0.0),
        ];
        assert_eq!(count_outages(&out, t(1, 0), t(5, 0), "wind:0", &p), 3);
        assert_eq!(count_outages(&out, t(10, 0), t(11, 0), "wind:0", &p), 0);
        assert_eq!(count_outages(&out, t(0, 0), t(99, 0), "wind:0", &p), 4);
    }

    #[test]
    fn single_record_single_sample() {
        let p = partition(HazardClass::Wind);
        let sev = [severe("E1", "tornado", t(2, 0), t(3, 0), 0.5, 0.5)];
        let wx = [obs("A", 2, Some(31.0), None)];
        let out = [outage("1", t(2, 30), t(6, 0), 0.0, 0.0)];
        let res = build_fragility_samples(&sev, &[&p], &wx, &out, &LinkageOptions::default());
        let s = &res.samples["wind:0"];
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].intensity, s[0].outage_count), (31.0, 1));
        assert!(res.samples["wind:1"].is_empty());
    }

    #[test]
    fn duplicate_records_yield_one_sample() {
        let p = partition(HazardClass::Wind);
        let sev = [
            severe("E1", "tornado", t(2, 0), t(3, 0), 0.5, 0.5),
            severe("E2", "High Wind", t(2, 0), t(3, 0), 0.6, 0.5),
        ];
        let wx = [obs("A", 2, Some(31.0), None)];
        let res = build_fragility_samples(&sev, &[&p], &wx, &[], &LinkageOptions::default());
        let s = &res.samples["wind:0"];
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].outage_count, 0, "zero-outage samples are retained");
        assert_eq!(s[0].source_event_ids, vec!["E1", "E2"]);
    }

    #[test]
    fn unmeasurable_windows_are_omitted_with_reason() {
        let p = partition(HazardClass::Precipitation);
        let sev = [
            severe("E1", "flood", t(2, 0), t(3, 0), 0.5, 0.5),
            severe("E2", "extreme heat", t(2, 0), t(3, 0), 0.5, 0.5),
            severe("E3", "tornado", t(2, 0), t(3, 0), 0.5, 0.5),
        ];
        let res = build_fragility_samples(&sev, &[&p], &[], &[], &LinkageOptions::default());
        assert!(res.samples["precipitation:0"].is_empty());
        assert_eq!(res.excluded, vec!["E2"]);
        assert_eq!(res.omissions.len(), 2);
        assert!(res.omissions.iter().any(|o| o.reason.contains("no wind zones")));
    }

    #[test]
    fn samples_csv_round_trip() {
        let s = FragilitySample {
            zone_id: "wind:1".into(),
            window_start: t(1, 0),
            window_end: t(2, 15),
            intensity: 27.5,
            outage_count: 4,
            source_event_ids: vec!["a".into(), "b".into()],
        };
        let back = read_samples_csv(&write_samples_csv([&s])).unwrap();
        assert_eq!(back, vec![s]);
    }
}
