//! Seeded synthetic bundles drawn from known fragility and restoration laws.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(spec.seed)`, using independent streams for the station
//! layout (0), severe events (1), background outages (2) and weather noise
//! (3). Bundles are byte-identical for a given spec on every platform.
//!
//! Layout: with `k = min(n_wind, n_precip)` and `m = max / k`, stations sit
//! on `k` columns. The class with fewer stations gets one station per column
//! (all at the boundary's mid latitude), the other gets `m` per column, so
//! every fine zone lies inside exactly one coarse zone. Restoration laws are
//! given per column and shared by every zone in it.
//!
//! Each severe event owns a private time slot, so events never overlap.
//! Coarse-class events drop all their outages into one fine zone inside the
//! coarse zone; that keeps each event a single zone-local event under both
//! partitions.

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::fitting::{Curve, ExponentialModel, SaturatingRestorationModel};
use crate::geometry::{Point, Polygon};
use crate::hazard::HazardClass;
use crate::ingest::{
    write_outages, write_severe, write_stations, write_weather, OutageRecord, SevereWeatherRecord,
    Station, WeatherObservation,
};
use crate::time::Instant;
use crate::zoning::{build_partition, ZonePartition, ZoningError};

pub const OUTAGES_FILE: &str = "outages.csv";
pub const WEATHER_FILE: &str = "weather.csv";
pub const STATIONS_FILE: &str = "stations.csv";
pub const SEVERE_FILE: &str = "severe_events.csv";
pub const TRUTH_FILE: &str = "truth.json";

const STREAM_LAYOUT: u64 = 0;
const STREAM_EVENTS: u64 = 1;
const STREAM_BACKGROUND: u64 = 2;
const STREAM_WEATHER: u64 = 3;

const WEATHER_PAD_SECS: i64 = 12 * 3600;
const MAX_WINDOW_SECS: f64 = 6.0 * 3600.0;
const MIN_WINDOW_SECS: f64 = 3600.0;
/// Log-normal noise is truncated at ±4σ.
const NOISE_TRUNCATION: f64 = 4.0;
const MAX_MEAN_COUNT: f64 = 1e5;
const BACKGROUND_CAUSES: [&str; 4] = ["equipment", "vegetation", "animal", "unknown"];

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Invalid(String),
    #[error("infeasible synth spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Zoning(#[from] ZoningError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_stations_wind: usize,
    pub n_stations_precip: usize,
    /// `[min_lon, min_lat, max_lon, max_lat]`
    pub boundary: [f64; 4],
    pub start_year: i32,
    pub years: u32,
    /// One law per wind zone, indexed like `wind:<i>`.
    pub wind_fragility: Vec<ExponentialModel>,
    pub precip_fragility: Vec<ExponentialModel>,
    /// One law per station column (`min(n_wind, n_precip)` entries).
    pub restoration: Vec<SaturatingRestorationModel>,
    /// m/s
    pub wind_intensity: [f64; 2],
    /// inches
    pub precip_intensity: [f64; 2],
    pub events_per_zone: usize,
    /// Weather-unrelated outages per day over the whole territory.
    pub background_outage_rate: f64,
    pub restoration_sigma: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            n_stations_wind: 2,
            n_stations_precip: 6,
            boundary: [-86.33, 39.63, -85.93, 39.93],
            start_year: 2004,
            years: 20,
            wind_fragility: vec![
                ExponentialModel { a: 0.1, b: 0.3 },
                ExponentialModel { a: 0.5, b: 0.2 },
            ],
            precip_fragility: vec![
                ExponentialModel { a: 1.0, b: 1.2 },
                ExponentialModel { a: 2.0, b: 0.9 },
                ExponentialModel { a: 1.0, b: 1.2 },
                ExponentialModel { a: 0.5, b: 1.4 },
                ExponentialModel { a: 1.5, b: 1.0 },
                ExponentialModel { a: 1.0, b: 1.2 },
            ],
            restoration: vec![
                SaturatingRestorationModel { c: 60.0, a1: 45.0, b1: 0.05, a2: 10.0, b2: 0.5 },
                SaturatingRestorationModel { c: 100.0, a1: 75.0, b1: 0.04, a2: 20.0, b2: 0.4 },
            ],
            wind_intensity: [10.0, 25.0],
            precip_intensity: [0.5, 3.5],
            events_per_zone: 100,
            background_outage_rate: 1.0,
            restoration_sigma: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.n_stations_wind == 0 || self.n_stations_precip == 0 {
            return bad("station counts must be >= 1".into());
        }
        if self.years == 0 {
            return bad("years must be >= 1".into());
        }
        if !(1900..=9000).contains(&self.start_year) || self.start_year as i64 + self.years as i64 > 9000 {
            return bad("start_year must be in [1900, 9000] and the span must end by 9000".into());
        }
        let [x0, y0, x1, y1] = self.boundary;
        if !(x0 < x1 && y0 < y1) || ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return bad("boundary must be [min_lon, min_lat, max_lon, max_lat]".into());
        }
        if !((-180.0..=180.0).contains(&x0) && (-180.0..=180.0).contains(&x1))
            || !((-90.0..=90.0).contains(&y0) && (-90.0..=90.0).contains(&y1))
        {
            return bad("boundary outside coordinate range".into());
        }
        if self.wind_fragility.len() != self.n_stations_wind {
            return bad(format!("need {} wind fragility laws", self.n_stations_wind));
        }
        if self.precip_fragility.len() != self.n_stations_precip {
            return bad(format!("need {} precipitation fragility laws", self.n_stations_precip));
        }
        let k = self.n_stations_wind.min(self.n_stations_precip);
        if self.restoration.len() != k {
            return bad(format!("need {k} restoration laws, one per station column"));
        }
        for m in self.wind_fragility.iter().chain(&self.precip_fragility) {
            if !(m.a > 0.0 && m.a.is_finite() && m.b.is_finite()) {
                return bad(format!("fragility law {m:?} needs a > 0 and finite b"));
            }
        }
        for law in &self.restoration {
            if !law.satisfies_constraints() || law.value(1.0) <= 0.0 {
                return bad(format!("restoration law {law:?} must be valid and positive at n = 1"));
            }
        }
        for (name, [lo, hi]) in [("wind", self.wind_intensity), ("precip", self.precip_intensity)] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return bad(format!("{name}_intensity must satisfy 0 <= lo <= hi"));
            }
        }
        if !(self.background_outage_rate.is_finite() && self.background_outage_rate >= 0.0) {
            return bad("background_outage_rate must be >= 0".into());
        }
        if !(self.restoration_sigma.is_finite() && self.restoration_sigma >= 0.0) {
            return bad("restoration_sigma must be >= 0".into());
        }
        Ok(())
    }

    fn fragility(&self, class: HazardClass) -> &[ExponentialModel] {
        match class {
            HazardClass::Wind => &self.wind_fragility,
            HazardClass::Precipitation => &self.precip_fragility,
        }
    }

    fn intensity_range(&self, class: HazardClass) -> [f64; 2] {
        match class {
            HazardClass::Wind => self.wind_intensity,
            HazardClass::Precipitation => self.precip_intensity,
        }
    }

    fn n_stations(&self, class: HazardClass) -> usize {
        match class {
            HazardClass::Wind => self.n_stations_wind,
            HazardClass::Precipitation => self.n_stations_precip,
        }
    }
}

/// Ground truth of one generated severe event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEvent {
    pub event_id: String,
    pub hazard_class: HazardClass,
    pub zone_id: String,
    pub intensity: f64,
    pub n_outages: usize,
    pub restoration_hours: f64,
    pub window_start: Instant,
    pub window_end: Instant,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub outages: String,
    pub weather: String,
    pub stations: String,
    pub severe: String,
    pub truth: String,
    pub boundary: Polygon,
    pub events: Vec<SynthEvent>,
    pub n_outages: usize,
    pub n_background: usize,
}

impl Bundle {
    pub fn files(&self) -> [(&'static str, &str); 5] {
        [
            (OUTAGES_FILE, &self.outages),
            (WEATHER_FILE, &self.weather),
            (STATIONS_FILE, &self.stations),
            (SEVERE_FILE, &self.severe),
            (TRUTH_FILE, &self.truth),
        ]
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

struct Layout {
    m: usize,
    coarse: HazardClass,
    fine: HazardClass,
    stations: Vec<Station>,
    wind: ZonePartition,
    precip: ZonePartition,
}

impl Layout {
    fn partition(&self, class: HazardClass) -> &ZonePartition {
        match class {
            HazardClass::Wind => &self.wind,
            HazardClass::Precipitation => &self.precip,
        }
    }

    fn column(&self, class: HazardClass, zone: usize) -> usize {
        if class == self.coarse {
            zone
        } else {
            zone / self.m
        }
    }
}

fn boundary_polygon(spec: &SynthSpec) -> Polygon {
    let [x0, y0, x1, y1] = spec.boundary;
    Polygon::rectangle([x0, y0], [x1, y1])
}

fn layout(spec: &SynthSpec) -> Result<Layout, SynthError> {
    spec.validate()?;
    let (nw, np) = (spec.n_stations_wind, spec.n_stations_precip);
    let k = nw.min(np);
    if nw.max(np) % k != 0 {
        return Err(SynthError::Infeasible(format!(
            "station counts {nw} and {np}: the larger must be a multiple of the smaller"
        )));
    }
    let m = nw.max(np) / k;
    let (coarse, fine) = if nw <= np {
        (HazardClass::Wind, HazardClass::Precipitation)
    } else {
        (HazardClass::Precipitation, HazardClass::Wind)
    };

    let mut r = rng(spec.seed, STREAM_LAYOUT);
    let [x0, y0, x1, y1] = spec.boundary;
    let (w, h) = (x1 - x0, y1 - y0);
    let xs: Vec<f64> = (0..k)
        .map(|j| round6(x0 + (j as f64 + 0.5 + r.random_range(-0.2..0.2)) * w / k as f64))
        .collect();
    let ys: Vec<f64> = (0..m)
        .map(|i| round6(y0 + (i as f64 + 0.5 + r.random_range(-0.2..0.2)) * h / m as f64))
        .collect();
    let mid = round6(y0 + h / 2.0);

    let mut stations = Vec::new();
    for class in HazardClass::ALL {
        let prefix = match class {
            HazardClass::Wind => "W",
            HazardClass::Precipitation => "P",
        };
        for i in 0..spec.n_stations(class) {
            let (lon, lat) = if class == coarse {
                (xs[i], mid)
            } else {
                (xs[i / m], ys[i % m])
            };
            stations.push(Station {
                station_id: format!("{prefix}{i:02}"),
                latitude: lat,
                longitude: lon,
                capabilities: [class].into_iter().collect(),
            });
        }
    }
    let boundary = boundary_polygon(spec);
    let wind = build_partition(&stations, HazardClass::Wind, &boundary)?;
    let precip = build_partition(&stations, HazardClass::Precipitation, &boundary)?;
    for z in wind.zones.iter().chain(&precip.zones) {
        if z.polygon.is_empty() {
            return Err(SynthError::Infeasible(format!("zone {} has zero area", z.zone_id)));
        }
    }
    Ok(Layout {
        m,
        coarse,
        fine,
        stations,
        wind,
        precip,
    })
}

/// Machine-readable ground truth: every zone's fragility and restoration law
/// under the zone ids that zoning assigns to the synthetic stations.
pub fn truth_report(spec: &SynthSpec) -> Result<Value, SynthError> {
    let lay = layout(spec)?;
    let mut classes = serde_json::Map::new();
    for class in HazardClass::ALL {
        let mut zones = serde_json::Map::new();
        for (i, z) in lay.partition(class).zones.iter().enumerate() {
            let column = lay.column(class, i);
            zones.insert(
                z.zone_id.clone(),
                json!({
                    "station_id": z.station_id,
                    "column": column,
                    "fragility": spec.fragility(class)[i],
                    "restoration": spec.restoration[column],
                }),
            );
        }
        classes.insert(class.as_str().to_string(), Value::Object(zones));
    }
    Ok(json!({
        "seed": spec.seed,
        "spec": spec,
        "zones": classes,
    }))
}

struct Sampler<'a> {
    lay: &'a Layout,
}

impl Sampler<'_> {
    /// Uniform point in fine zone `f` (rejection sampling in its bbox).
    fn point(&self, r: &mut ChaCha8Rng, f: usize) -> Result<Point, SynthError> {
        let fine = self.lay.partition(self.lay.fine);
        let coarse = self.lay.partition(self.lay.coarse);
        let column = self.lay.column(self.lay.fine, f);
        let [x0, y0, x1, y1] = fine.zones[f].polygon.bbox();
        for _ in 0..10_000 {
            let p = [round6(r.random_range(x0..=x1)), round6(r.random_range(y0..=y1))];
            let a = fine.assign(p);
            if a.index == f && !a.outside_boundary && coarse.assign(p).index == column {
                return Ok(p);
            }
        }
        Err(SynthError::Infeasible(format!(
            "could not place a point in zone {}",
            fine.zones[f].zone_id
        )))
    }
}

fn noise(r: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let d = LogNormal::new(0.0, sigma).expect("sigma checked");
    let lim = (NOISE_TRUNCATION * sigma).exp();
    d.sample(r).clamp(1.0 / lim, lim)
}

fn poisson(r: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("mean checked").sample(r) as usize
}

fn floor_hour(t: Instant) -> Instant {
    let secs = t.timestamp();
    t - Duration::seconds(secs - secs.div_euclid(3600) * 3600)
}

fn secs(s: f64) -> Duration {
    Duration::seconds(s.round() as i64)
}

/// Generates the four input CSVs plus `truth.json`.
pub fn generate(spec: &SynthSpec) -> Result<Bundle, SynthError> {
    let lay = layout(spec)?;
    let sampler = Sampler { lay: &lay };
    let t0 = Utc
        .with_ymd_and_hms(spec.start_year, 1, 1, 0, 0, 0)
        .single()
        .ok_or_else(|| SynthError::Invalid("start_year".into()))?;
    let t1 = Utc
        .with_ymd_and_hms(spec.start_year + spec.years as i32, 1, 1, 0, 0, 0)
        .single()
        .ok_or_else(|| SynthError::Invalid("years".into()))?;
    let span_secs = (t1 - t0).num_seconds();

    // (class, zone) per event, shuffled into slots
    let mut plan: Vec<(HazardClass, usize)> = Vec::new();
    for class in HazardClass::ALL {
        for zone in 0..spec.n_stations(class) {
            plan.extend(std::iter::repeat_n((class, zone), spec.events_per_zone));
        }
    }
    let mut ev_rng = rng(spec.seed, STREAM_EVENTS);
    let mut wx_rng = rng(spec.seed, STREAM_WEATHER);
    plan.shuffle(&mut ev_rng);

    let slot_secs = if plan.is_empty() { span_secs } else { span_secs / plan.len() as i64 };
    let lim = (NOISE_TRUNCATION * spec.restoration_sigma).exp();
    let t_max_secs = spec.restoration.iter().map(|l| l.c).fold(0.0, f64::max) * lim * 3600.0;
    if !plan.is_empty() {
        let need = 0.1 * slot_secs as f64 + MAX_WINDOW_SECS + t_max_secs + WEATHER_PAD_SECS as f64;
        if need > slot_secs as f64 {
            return Err(SynthError::Infeasible(format!(
                "{} events over {} years leave {:.1} h per event, need {:.1} h; add years or lower restoration c",
                plan.len(),
                spec.years,
                slot_secs as f64 / 3600.0,
                need / 3600.0
            )));
        }
    }
    if t_max_secs > 29.0 * 86400.0 {
        return Err(SynthError::Infeasible("restoration durations exceed 29 days".into()));
    }

    struct Draft {
        start: Instant,
        end: Instant,
        point: Point,
        cause: &'static str,
    }
    let mut drafts: Vec<Draft> = Vec::new();
    let mut severe = Vec::with_capacity(plan.len());
    let mut weather = Vec::new();
    let mut events = Vec::with_capacity(plan.len());

    for (i, &(class, zone)) in plan.iter().enumerate() {
        let partition = lay.partition(class);
        let zone_id = partition.zones[zone].zone_id.clone();
        let column = lay.column(class, zone);
        let fine_zone = if class == lay.fine {
            zone
        } else {
            zone * lay.m + ev_rng.random_range(0..lay.m)
        };
        let [lo, hi] = spec.intensity_range(class);
        let x = if lo == hi { lo } else { ev_rng.random_range(lo..=hi) };
        let mean = spec.fragility(class)[zone].value(x);
        if mean > MAX_MEAN_COUNT {
            return Err(SynthError::Infeasible(format!(
                "zone {zone_id}: mean outage count {mean:.0} at intensity {x}"
            )));
        }
        let n = poisson(&mut ev_rng, mean);
        let t_secs = if n > 0 {
            (spec.restoration[column].value(n as f64) * noise(&mut ev_rng, spec.restoration_sigma) * 3600.0)
                .max(120.0)
        } else {
            0.0
        };

        let slot_start = t0 + Duration::seconds(slot_secs * i as i64);
        let slot_end = slot_start + Duration::seconds(slot_secs);
        let ws = slot_start
            + Duration::seconds(WEATHER_PAD_SECS)
            + secs(ev_rng.random_range(0.0..0.1) * slot_secs as f64);
        let mut len = ev_rng.random_range(MIN_WINDOW_SECS..MAX_WINDOW_SECS);
        if n > 0 {
            len = len.min(0.5 * t_secs);
        }
        let len = len.max(60.0).round() as i64;
        let we = ws + Duration::seconds(len);

        let at = sampler.point(&mut ev_rng, fine_zone)?;
        severe.push(SevereWeatherRecord {
            event_id: format!("SE{i:05}"),
            event_type: match class {
                HazardClass::Wind => "Thunderstorm Wind".into(),
                HazardClass::Precipitation => "Heavy Rain".into(),
            },
            start: ws,
            end: we,
            latitude: at[1],
            longitude: at[0],
            description: format!("synthetic {class} event"),
        });

        let mut starts: Vec<i64> = (0..n).map(|_| ev_rng.random_range(0..=len)).collect();
        starts.sort_unstable();
        let mut restoration_hours = 0.0;
        if let Some(&first) = starts.first() {
            let anchor_end = first + t_secs.round() as i64;
            restoration_hours = (anchor_end - first) as f64 / 3600.0;
            for (j, &s) in starts.iter().enumerate() {
                let end = if j == 0 {
                    anchor_end
                } else {
                    let u: f64 = ev_rng.random();
                    (s + ((anchor_end - s) as f64 * u).round() as i64).clamp(s + 1, anchor_end)
                };
                drafts.push(Draft {
                    start: ws + Duration::seconds(s),
                    end: ws + Duration::seconds(end),
                    point: sampler.point(&mut ev_rng, fine_zone)?,
                    cause: "weather",
                });
            }
        }

        // weather around the window at this zone's station
        let station = &partition.zones[zone].station_id;
        let from = floor_hour(ws - Duration::seconds(WEATHER_PAD_SECS)).max(slot_start);
        let to = (we + Duration::seconds(WEATHER_PAD_SECS)).min(slot_end - Duration::seconds(1));
        let hours: Vec<Instant> = std::iter::successors(Some(from), |t| Some(*t + Duration::hours(1)))
            .take_while(|t| *t <= to)
            .collect();
        let range_lo = ws - Duration::hours(1);
        let in_range: Vec<usize> = (0..hours.len())
            .filter(|&h| hours[h] >= range_lo && hours[h] <= we)
            .collect();
        let peak = in_range[wx_rng.random_range(0..in_range.len())];
        let weights: Vec<f64> = in_range.iter().map(|_| wx_rng.random_range(0.1..1.0)).collect();
        let wsum: f64 = weights.iter().sum();
        for (h, &t) in hours.iter().enumerate() {
            let obs = match class {
                HazardClass::Wind => {
                    let fast = if h == peak { x } else { x * wx_rng.random_range(0.2..0.8) };
                    let avg = fast * wx_rng.random_range(0.4..0.7);
                    WeatherObservation {
                        station_id: station.clone(),
                        timestamp: t,
                        wind_avg: Some(avg),
                        wind_fastest_2min: Some(fast),
                        precip: None,
                        snowfall: None,
                        snow_depth: None,
                    }
                }
                HazardClass::Precipitation => {
                    let p = match in_range.iter().position(|&k| k == h) {
                        Some(k) => x * weights[k] / wsum,
                        None => 0.0,
                    };
                    WeatherObservation {
                        station_id: station.clone(),
                        timestamp: t,
                        wind_avg: None,
                        wind_fastest_2min: None,
                        precip: Some(p),
                        snowfall: Some(0.0),
                        snow_depth: Some(0.0),
                    }
                }
            };
            weather.push(obs);
        }

        events.push(SynthEvent {
            event_id: format!("SE{i:05}"),
            hazard_class: class,
            zone_id,
            intensity: x,
            n_outages: n,
            restoration_hours,
            window_start: ws,
            window_end: we,
        });
    }

    // background outages: homogeneous Poisson process over the whole period
    let mut bg_rng = rng(spec.seed, STREAM_BACKGROUND);
    let days = span_secs as f64 / 86400.0;
    let n_background = poisson(&mut bg_rng, spec.background_outage_rate * days);
    let boundary = boundary_polygon(spec);
    let [x0, y0, x1, y1] = spec.boundary;
    for _ in 0..n_background {
        let start = t0 + Duration::seconds(bg_rng.random_range(0..span_secs));
        let point = loop {
            let p = [round6(bg_rng.random_range(x0..=x1)), round6(bg_rng.random_range(y0..=y1))];
            if boundary.contains(p) && !lay.wind.assign(p).outside_boundary {
                break p;
            }
        };
        let column = lay.column(lay.coarse, lay.partition(lay.coarse).assign(point).index);
        let hours = spec.restoration[column].value(1.0) * noise(&mut bg_rng, spec.restoration_sigma);
        let cause = BACKGROUND_CAUSES[bg_rng.random_range(0..BACKGROUND_CAUSES.len())];
        drafts.push(Draft {
            start,
            end: start + secs((hours * 3600.0).max(60.0)),
            point,
            cause,
        });
    }

    drafts.sort_by(|a, b| {
        (a.start, a.end)
            .cmp(&(b.start, b.end))
            .then(a.point[0].total_cmp(&b.point[0]))
            .then(a.point[1].total_cmp(&b.point[1]))
    });
    let outages: Vec<OutageRecord> = drafts
        .iter()
        .enumerate()
        .map(|(i, d)| OutageRecord {
            outage_id: format!("OUT{i:07}"),
            component_id: format!("CMP{:06}", bg_rng.random_range(0..200_000)),
            latitude: d.point[1],
            longitude: d.point[0],
            start: d.start,
            end: d.end,
            restore_minutes: ((d.end - d.start).num_seconds() / 60) as f64,
            customers: bg_rng.random_range(1..=500),
            cause_code: d.cause.to_string(),
        })
        .collect();

    weather.sort_by(|a, b| (&a.station_id, a.timestamp).cmp(&(&b.station_id, b.timestamp)));
    severe.sort_by(|a, b| (a.start, &a.event_id).cmp(&(b.start, &b.event_id)));

    let mut truth = truth_report(spec)?;
    truth["counts"] = json!({
        "severe_events": events.len(),
        "outages": outages.len(),
        "background_outages": n_background,
        "weather_rows": weather.len(),
    });
    let mut truth_text = serde_json::to_string_pretty(&truth).expect("truth serialises");
    truth_text.push('\n');

    Ok(Bundle {
        outages: write_outages(&outages),
        weather: write_weather(&weather),
        stations: write_stations(&lay.stations),
        severe: write_severe(&severe),
        truth: truth_text,
        boundary,
        events,
        n_outages: outages.len(),
        n_background,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            years: 2,
            events_per_zone: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn default_spec_is_valid() {
        SynthSpec::default().validate().unwrap();
    }

    #[test]
    fn nested_layout() {
        let lay = layout(&SynthSpec::default()).unwrap();
        assert_eq!(lay.wind.len(), 2);
        assert_eq!(lay.precip.len(), 6);
        assert_eq!(lay.coarse, HazardClass::Wind);
        // every precipitation station lies in the wind zone of its column
        for (f, z) in lay.precip.zones.iter().enumerate() {
            assert_eq!(lay.wind.assign(z.station).index, f / lay.m);
        }
    }

    #[test]
    fn indivisible_station_counts_are_infeasible() {
        let spec = SynthSpec {
            n_stations_precip: 5,
            precip_fragility: vec![ExponentialModel { a: 1.0, b: 1.0 }; 5],
            ..SynthSpec::default()
        };
        assert!(matches!(layout(&spec), Err(SynthError::Infeasible(_))));
    }

    #[test]
    fn crowded_slots_are_infeasible() {
        let spec = SynthSpec { years: 1, ..SynthSpec::default() };
        assert!(matches!(generate(&spec), Err(SynthError::Infeasible(_))));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.files(), b.files());
        let c = generate(&SynthSpec { seed: 7, ..small() }).unwrap();
        assert_ne!(a.outages, c.outages);
    }

    #[test]
    fn zero_events_gives_background_only() {
        let bundle = generate(&SynthSpec { events_per_zone: 0, ..small() }).unwrap();
        assert!(bundle.events.is_empty());
        assert_eq!(bundle.n_outages, bundle.n_background);
        assert!(bundle.n_background > 0);
        assert_eq!(bundle.severe.lines().count(), 1);
    }

    #[test]
    fn truth_matches_spec() {
        let spec = SynthSpec::default();
        let t = truth_report(&spec).unwrap();
        assert_eq!(t["zones"]["wind"]["wind:1"]["fragility"]["b"], 0.2);
        assert_eq!(t["zones"]["precipitation"]["precipitation:4"]["column"], 1);
        assert_eq!(t["zones"]["precipitation"]["precipitation:4"]["restoration"]["c"], 100.0);
    }

    #[test]
    fn spans_past_the_nanosecond_range_are_supported() {
        let spec = SynthSpec { start_year: 2200, years: 100, events_per_zone: 2, background_outage_rate: 0.01, ..small() };
        let bundle = generate(&spec).unwrap();
        let limit = Utc.with_ymd_and_hms(2263, 1, 1, 0, 0, 0).unwrap();
        assert!(bundle.events.iter().any(|e| e.window_start > limit));
        assert!(SynthSpec { start_year: 8990, years: 20, ..small() }.validate().is_err());
    }
}
