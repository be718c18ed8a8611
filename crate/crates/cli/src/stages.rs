//! One function per subcommand. Every stage checks its inputs, consults the
//! manifest, writes its outputs atomically and records itself.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gridres_core::events::{extract_events, extract_events_by_zone, read_events_csv, write_events_csv, EventRow};
use gridres_core::fitting::{fit_exponential, fit_restoration, Fit};
use gridres_core::ingest::{
    parse_outages, parse_severe, parse_stations, parse_weather, write_outages, write_severe,
    write_stations, write_weather, OutageRecord,
};
use gridres_core::linkage::{build_fragility_samples, read_samples_csv, write_samples_csv, FragilitySample, LinkageOptions};
use gridres_core::render::{emit_scatter, PlotLabels};
use gridres_core::scenario::{
    choropleth_file_name, emit_choropleth, intensity_tag, predict_all, write_predictions_csv,
    ScenarioError, ScenarioSpec, ZonePrediction,
};
use gridres_core::store::{published_store, ModelStore, StoredModel, FORM_EXPONENTIAL, FORM_SATURATING};
use gridres_core::synth::{generate, OUTAGES_FILE, SEVERE_FILE, STATIONS_FILE, TRUTH_FILE, WEATHER_FILE};
use gridres_core::zoning::{
    boundary_from_geojson, boundary_to_geojson, build_partition, density_grid, ZonePartition, ZoningError,
};
use gridres_core::HazardClass;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::log;
use crate::workspace::{sha256_hex, Outputs, Workspace};

const CLEAN_DIR: &str = "clean";
const CLEANING_REPORT: &str = "clean/cleaning_report.json";
const DENSITY_CSV: &str = "zones/density.csv";
const DENSITY_JSON: &str = "zones/density.json";
const EVENTS_GLOBAL: &str = "events/events_global.csv";
const LINKAGE_REPORT: &str = "fragility/linkage_report.json";
const TRUTH_COMPARISON: &str = "report/truth_comparison.json";

pub fn zones_path(class: HazardClass) -> PathBuf {
    PathBuf::from(format!("zones/zones_{class}.geojson"))
}

pub fn events_path(class: HazardClass) -> PathBuf {
    PathBuf::from(format!("events/events_{class}.csv"))
}

pub fn samples_path(class: HazardClass) -> PathBuf {
    PathBuf::from(format!("fragility/samples_{class}.csv"))
}

pub fn models_path(class: HazardClass) -> PathBuf {
    PathBuf::from(format!("models/models_{class}.json"))
}

pub fn predictions_path(scenario: &ScenarioSpec) -> PathBuf {
    PathBuf::from(format!(
        "predictions/predictions_{}_{}.csv",
        scenario.hazard_class,
        intensity_tag(scenario.intensity)
    ))
}

pub fn choropleth_path(scenario: &ScenarioSpec) -> PathBuf {
    Path::new("predictions").join(choropleth_file_name(scenario))
}

fn clean_path(name: &str) -> PathBuf {
    Path::new(CLEAN_DIR).join(name)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ran,
    UpToDate,
    Skipped(String),
}

impl Outcome {
    pub fn label(&self) -> &str {
        match self {
            Outcome::Ran => "ran",
            Outcome::UpToDate => "up-to-date",
            Outcome::Skipped(_) => "skipped",
        }
    }
}

pub struct Ctx {
    pub ws: Workspace,
    pub cfg: Config,
    pub force: bool,
}

fn fingerprint(settings: &Value) -> String {
    let doc = json!({ "tool_version": env!("CARGO_PKG_VERSION"), "settings": settings });
    sha256_hex(doc.to_string().as_bytes())
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialises");
    s.push('\n');
    s
}

fn invalid(what: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::validation(format!("{what}: {e}"))
}

impl Ctx {
    /// True when the stage can be skipped.
    fn fresh(&self, stage: &str, inputs: &[PathBuf], fp: &str) -> Result<bool> {
        if self.force {
            return Ok(false);
        }
        let fresh = self.ws.up_to_date(stage, inputs, fp)?;
        if fresh {
            log::info(stage, "inputs unchanged, nothing to do");
        }
        Ok(fresh)
    }

    fn read_str(&self, rel: &Path) -> Result<String> {
        self.ws.read_string(rel)
    }

    fn clean_outages(&self) -> Result<Vec<OutageRecord>> {
        let rel = clean_path(OUTAGES_FILE);
        let (records, _) = parse_outages(&self.ws.read(&rel)?, &self.cfg.cleaning)
            .map_err(|e| invalid(rel.display(), e))?;
        Ok(records)
    }

    /// Partitions present in `zones/`, in class order. At least one must exist.
    fn partitions(&self) -> Result<Vec<(PathBuf, ZonePartition)>> {
        let mut out = Vec::new();
        for class in HazardClass::ALL {
            let rel = zones_path(class);
            if !self.ws.exists(&rel) {
                continue;
            }
            out.push((rel.clone(), self.partition(class)?));
        }
        if out.is_empty() {
            return Err(CliError::MissingInput(self.ws.path(&zones_path(HazardClass::Wind))));
        }
        Ok(out)
    }

    fn partition(&self, class: HazardClass) -> Result<ZonePartition> {
        let rel = zones_path(class);
        let text = self.read_str(&rel)?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| invalid(rel.display(), e))?;
        ZonePartition::from_geojson(&doc).map_err(|e| invalid(rel.display(), e))
    }

    fn store(&self, class: HazardClass) -> Result<ModelStore> {
        let rel = models_path(class);
        let store = ModelStore::from_json(&self.read_str(&rel)?).map_err(|e| invalid(rel.display(), e))?;
        if store.hazard_class != class {
            return Err(invalid(rel.display(), format!("holds {} models", store.hazard_class)));
        }
        Ok(store)
    }
}

pub fn ingest(ctx: &mut Ctx) -> Result<Outcome> {
    const STAGE: &str = "ingest";
    let names = [OUTAGES_FILE, WEATHER_FILE, STATIONS_FILE, SEVERE_FILE];
    let inputs: Vec<PathBuf> = names.iter().map(|n| ctx.cfg.input_path(n)).collect();
    ctx.ws.require(&inputs)?;
    let fp = fingerprint(&json!({ "cleaning": ctx.cfg.cleaning }));
    if ctx.fresh(STAGE, &inputs, &fp)? {
        return Ok(Outcome::UpToDate);
    }

    let (outages, outage_report) = parse_outages(&ctx.ws.read(&inputs[0])?, &ctx.cfg.cleaning)
        .map_err(|e| invalid(inputs[0].display(), e))?;
    let (weather, weather_report) =
        parse_weather(&ctx.ws.read(&inputs[1])?).map_err(|e| invalid(inputs[1].display(), e))?;
    let (stations, warnings) =
        parse_stations(&ctx.ws.read(&inputs[2])?).map_err(|e| invalid(inputs[2].display(), e))?;
    let (severe, severe_report) =
        parse_severe(&ctx.ws.read(&inputs[3])?).map_err(|e| invalid(inputs[3].display(), e))?;

    for w in &warnings {
        log::warn(STAGE, w);
    }
    for (name, rep) in [("outages", &outage_report), ("weather", &weather_report), ("severe_events", &severe_report)] {
        log::info(
            STAGE,
            format!("{name}: {} rows, {} kept, {} dropped", rep.total_rows, rep.kept, rep.dropped()),
        );
    }
    let report = json!({
        "outages": outage_report,
        "weather": weather_report,
        "severe_events": severe_report,
        "stations": { "kept": stations.len(), "warnings": warnings },
    });

    let mut out = Outputs::new(&ctx.ws);
    out.write(clean_path(OUTAGES_FILE), write_outages(&outages))?;
    out.write(clean_path(WEATHER_FILE), write_weather(&weather))?;
    out.write(clean_path(STATIONS_FILE), write_stations(&stations))?;
    out.write(clean_path(SEVERE_FILE), write_severe(&severe))?;
    out.write(CLEANING_REPORT, pretty(&report))?;
    let written = out.finish();
    ctx.ws.record(STAGE, &inputs, &fp, written)?;
    Ok(Outcome::Ran)
}

pub fn zones(ctx: &mut Ctx) -> Result<Outcome> {
    const STAGE: &str = "zones";
    let inputs = vec![clean_path(STATIONS_FILE), clean_path(OUTAGES_FILE), ctx.cfg.boundary_path()];
    ctx.ws.require(&inputs)?;
    let fp = fingerprint(&json!({ "density_cell_size": ctx.cfg.density_cell_size }));
    if ctx.fresh(STAGE, &inputs, &fp)? {
        return Ok(Outcome::UpToDate);
    }

    let (stations, _) =
        parse_stations(&ctx.ws.read(&inputs[0])?).map_err(|e| invalid(inputs[0].display(), e))?;
    let boundary = boundary_from_geojson(&ctx.read_str(&inputs[2])?)
        .map_err(|e| invalid(inputs[2].display(), e))?;

    let mut out = Outputs::new(&ctx.ws);
    let mut built = 0;
    for class in HazardClass::ALL {
        let rel = zones_path(class);
        match build_partition(&stations, class, &boundary) {
            Ok(partition) => {
                log::info(STAGE, format!("{class}: {} zones", partition.len()));
                out.write(&rel, pretty(&partition.to_geojson()))?;
                built += 1;
            }
            Err(ZoningError::NoStations(_)) => {
                log::warn(STAGE, format!("no {class} stations, {class} zones skipped"));
                let stale = ctx.ws.path(&rel);
                if stale.exists() {
                    std::fs::remove_file(stale)?;
                }
            }
            Err(e) => return Err(CliError::validation(e)),
        }
    }
    if built == 0 {
        return Err(CliError::validation("no station supports either hazard class"));
    }

    let points: Vec<[f64; 2]> = ctx.clean_outages()?.iter().map(OutageRecord::lon_lat).collect();
    let grid = density_grid(&points, boundary.bbox(), ctx.cfg.density_cell_size)
        .map_err(CliError::validation)?;
    out.write(DENSITY_CSV, grid.to_csv())?;
    out.write(DENSITY_JSON, pretty(&grid.sidecar()))?;
    let written = out.finish();
    ctx.ws.record(STAGE, &inputs, &fp, written)?;
    Ok(Outcome::Ran)
}

pub fn extract(ctx: &mut Ctx) -> Result<Outcome> {
    const STAGE: &str = "extract-events";
    let outages_rel = clean_path(OUTAGES_FILE);
    ctx.ws.require(std::slice::from_ref(&outages_rel))?;
    let partitions = ctx.partitions()?;
    let mut inputs = vec![outages_rel];
    inputs.extend(partitions.iter().map(|(p, _)| p.clone()));
    let fp = fingerprint(&Value::Null);
    if ctx.fresh(STAGE, &inputs, &fp)? {
        return Ok(Outcome::UpToDate);
    }

    let outages = ctx.clean_outages()?;
    let mut out = Outputs::new(&ctx.ws);
    let global = extract_events(&outages);
    log::info(STAGE, format!("territory-wide: {} events", global.len()));
    out.write(EVENTS_GLOBAL, write_events_csv(&global))?;
    for (_, partition) in &partitions {
        let by_zone = extract_events_by_zone(&outages, partition);
        let n: usize = by_zone.values().map(Vec::len).sum();
        log::info(STAGE, format!("{}: {n} zone events", partition.hazard_class));
        out.write(events_path(partition.hazard_class), write_events_csv(by_zone.values().flatten()))?;
    }
    let written = out.finish();
    ctx.ws.record(STAGE, &inputs, &fp, written)?;
    Ok(Outcome::Ran)
}

pub fn link(ctx: &mut Ctx) -> Result<Outcome> {
    const STAGE: &str = "link";
    let mut inputs = vec![clean_path(SEVERE_FILE), clean_path(WEATHER_FILE), clean_path(OUTAGES_FILE)];
    ctx.ws.require(&inputs)?;
    let partitions = ctx.partitions()?;
    inputs.extend(partitions.iter().map(|(p, _)| p.clone()));
    let options = LinkageOptions {
        mapping: ctx.cfg.hazard_mapping.clone(),
        precip_mode: ctx.cfg.precip_mode,
    };
    let fp = fingerprint(&json!({ "linkage": options }));
    if ctx.fresh(STAGE, &inputs, &fp)? {
        return Ok(Outcome::UpToDate);
    }

    let (severe, _) =
        parse_severe(&ctx.ws.read(&inputs[0])?).map_err(|e| invalid(inputs[0].display(), e))?;
    let (weather, _) =
        parse_weather(&ctx.ws.read(&inputs[1])?).map_err(|e| invalid(inputs[1].display(), e))?;
    let outages = ctx.clean_outages()?;
    let refs: Vec<&ZonePartition> = partitions.iter().map(|(_, p)| p).collect();
    let linked = build_fragility_samples(&severe, &refs, &weather, &outages, &options);

    if severe.is_empty() {
        log::warn(STAGE, "no severe weather records, no fragility samples");
    }
    for o in &linked.omissions {
        log::warn(
            STAGE,
            format!(
                "{} [{}]: {}",
                o.zone_id.as_deref().unwrap_or("-"),
                o.source_event_ids.join(";"),
                o.reason
            ),
        );
    }
    let mut out = Outputs::new(&ctx.ws);
    let mut counts = BTreeMap::new();
    for (_, partition) in &partitions {
        let class = partition.hazard_class;
        let mut rows = Vec::new();
        for (zone, samples) in linked.samples_for(class) {
            counts.insert(zone.clone(), samples.len());
            rows.extend(samples.iter());
        }
        log::info(STAGE, format!("{class}: {} samples", rows.len()));
        out.write(samples_path(class), write_samples_csv(rows))?;
    }
    let report = json!({
        "sample_counts": counts,
        "omissions": linked.omissions,
        "excluded": linked.excluded,
        "outside_boundary": linked.outside_boundary,
    });
    out.write(LINKAGE_REPORT, pretty(&report))?;
    let written = out.finish();
    ctx.ws.record(STAGE, &inputs, &fp, written)?;
    Ok(Outcome::Ran)
}

fn warn_unconverged<M>(stage: &str, zone: &str, what: &str, fit: &Fit<M>) {
    if !fit.diagnostics.converged {
        log::warn(
            stage,
            format!(
                "{zone}: {what} fit did not converge after {} iterations",
                fit.diagnostics.iterations
            ),
        );
    }
    for w in &fit.diagnostics.warnings {
        log::warn(stage, format!("{zone}: {what}: {w}"));
    }
}

pub fn fit(ctx: &mut Ctx, published: bool) -> Result<Outcome> {
    const STAGE: &str = "fit";
    if published {
        let fp = fingerprint(&json!({ "published": true }));
        if ctx.fresh(STAGE, &[], &fp)? {
            return Ok(Outcome::UpToDate);
        }
        let mut out = Outputs::new(&ctx.ws);
        for class in HazardClass::ALL {
            log::info(STAGE, format!("{class}: published coefficients"));
            out.write(models_path(class), published_store(class).to_json())?;
        }
        let written = out.finish();
        ctx.ws.record(STAGE, &[], &fp, written)?;
        return Ok(Outcome::Ran);
    }

    let partitions = ctx.partitions()?;
    let mut inputs = Vec::new();
    for (zones, partition) in &partitions {
        inputs.push(zones.clone());
        inputs.push(events_path(partition.hazard_class));
        inputs.push(samples_path(partition.hazard_class));
    }
    ctx.ws.require(&inputs)?;
    let fp = fingerprint(&json!({ "published": false, "solver": ctx.cfg.solver }));
    if ctx.fresh(STAGE, &inputs, &fp)? {
        return Ok(Outcome::UpToDate);
    }

    let mut out = Outputs::new(&ctx.ws);
    for (_, partition) in &partitions {
        let class = partition.hazard_class;
        let events = read_events(ctx, class)?;
        let samples = read_samples(ctx, class)?;
        let mut store = ModelStore::new(class);
        for zone in &partition.zones {
            let id = &zone.zone_id;
            let xs: Vec<(f64, f64)> = samples
                .iter()
                .filter(|s| &s.zone_id == id)
                .map(|s| (s.intensity, s.outage_count as f64))
                .collect();
            match fit_exponential(&xs, &ctx.cfg.solver) {
                Ok(f) => {
                    warn_unconverged(STAGE, id, "fragility", &f);
                    store.fragility.insert(id.clone(), StoredModel::from_fit(FORM_EXPONENTIAL, &f));
                }
                Err(e) => log::warn(STAGE, format!("{id}: fragility fit skipped: {e}")),
            }
            let rs: Vec<(f64, f64)> = events
                .iter()
                .filter(|e| e.zone_id.as_deref() == Some(id.as_str()))
                .map(|e| (e.n_outages as f64, e.total_restoration_hours))
                .collect();
            match fit_restoration(&rs, &ctx.cfg.solver) {
                Ok(f) => {
                    warn_unconverged(STAGE, id, "restoration", &f);
                    store.restoration.insert(id.clone(), StoredModel::from_fit(FORM_SATURATING, &f));
                }
                Err(e) => log::warn(STAGE, format!("{id}: restoration fit skipped: {e}")),
            }
        }
        log::info(
            STAGE,
            format!(
                "{class}: {} fragility, {} restoration models for {} zones",
                store.fragility.len(),
                store.restoration.len(),
                partition.len()
            ),
        );
        out.write(models_path(class), store.to_json())?;
    }
    let written = out.finish();
    ctx.ws.record(STAGE, &inputs, &fp, written)?;
    Ok(Outcome::Ran)
}

fn read_events(ctx: &Ctx, class: HazardClass) -> Result<Vec<EventRow>> {
    let rel = events_path(class);
    read_events_csv(&ctx.read_str(&rel)?).map_err(|e| invalid(rel.display(), e))
}

fn read_samples(ctx: &Ctx, class: HazardClass) -> Result<Vec<FragilitySample>> {
    let rel = samples_path(class);
    read_samples_csv(&ctx.read_str(&rel)?).map_err(|e| invalid(rel.display(), e))
}

pub struct Prediction {
    pub scenario: ScenarioSpec,
    pub outcome: Outcome,
    pub rows: Vec<ZonePrediction>,
}

/// Runs one scenario. With `lenient`, missing models or zones skip the
/// scenario with a warning instead of failing.
pub fn predict(ctx: &mut Ctx, scenario: &ScenarioSpec, lenient: bool) -> Result<Prediction> {
    let class = scenario.hazard_class;
    let tag = intensity_tag(scenario.intensity);
    let stage = format!("predict:{class}:{tag}");
    let skipped = |reason: String| {
        log::warn(&stage, format!("scenario skipped: {reason}"));
        Ok(Prediction {
            scenario: scenario.clone(),
            outcome: Outcome::Skipped(reason),
            rows: Vec::new(),
        })
    };
    let inputs = vec![models_path(class), zones_path(class)];
    if let Err(e) = ctx.ws.require(&inputs) {
        return if lenient { skipped(e.to_string()) } else { Err(e) };
    }
    let store = ctx.store(class)?;
    let partition = ctx.partition(class)?;
    let rows = match predict_all(&store, &partition, scenario) {
        Ok(rows) => rows,
        Err(e @ ScenarioError::MissingModels(_)) if lenient => return skipped(e.to_string()),
        Err(e) => return Err(CliError::validation(e)),
    };
    let fp = fingerprint(&json!({ "scenario": scenario }));
    let outcome = if ctx.fresh(&stage, &inputs, &fp)? {
        Outcome::UpToDate
    } else {
        for p in rows.iter().filter(|p| p.clamped) {
            log::warn(&stage, format!("{}: restoration curve negative, clamped to 0", p.zone_id));
        }
        for p in rows.iter().filter(|p| p.extrapolated) {
            log::warn(&stage, format!("{}: outside the fitted domain", p.zone_id));
        }
        let choropleth = emit_choropleth(&partition, &rows, scenario).map_err(CliError::validation)?;
        let mut out = Outputs::new(&ctx.ws);
        out.write(predictions_path(scenario), write_predictions_csv(&rows))?;
        out.write(choropleth_path(scenario), choropleth)?;
        let written = out.finish();
        ctx.ws.record(&stage, &inputs, &fp, written)?;
        Outcome::Ran
    };
    Ok(Prediction {
        scenario: scenario.clone(),
        outcome,
        rows,
    })
}

pub fn prediction_table(p: &Prediction) -> String {
    let s = &p.scenario;
    let mut t = String::new();
    let _ = writeln!(t, "scenario {} {} {}", s.hazard_class, s.intensity, s.hazard_class.unit());
    let _ = writeln!(
        t,
        "{:<18} {:>10} {:>12} {:>14} {:>12}",
        "zone_id", "intensity", "outages", "restoration_h", "extrapolated"
    );
    for r in &p.rows {
        let _ = writeln!(
            t,
            "{:<18} {:>10.3} {:>12.2} {:>14.2} {:>12}",
            r.zone_id, r.intensity, r.predicted_outages, r.predicted_restoration_hours, r.extrapolated
        );
    }
    t
}

pub fn render(ctx: &mut Ctx) -> Result<Outcome> {
    const STAGE: &str = "render";
    let mut inputs = Vec::new();
    for class in HazardClass::ALL {
        for rel in [models_path(class), samples_path(class), events_path(class)] {
            if ctx.ws.exists(&rel) {
                inputs.push(rel);
            }
        }
    }
    if !HazardClass::ALL.iter().any(|c| ctx.ws.exists(&models_path(*c))) {
        return Err(CliError::MissingInput(ctx.ws.path(&models_path(HazardClass::Wind))));
    }
    let fp = fingerprint(&Value::Null);
    if ctx.fresh(STAGE, &inputs, &fp)? {
        return Ok(Outcome::UpToDate);
    }

    let mut out = Outputs::new(&ctx.ws);
    for class in HazardClass::ALL {
        if !ctx.ws.exists(&models_path(class)) {
            continue;
        }
        let store = ctx.store(class)?;
        let samples = if ctx.ws.exists(&samples_path(class)) { read_samples(ctx, class)? } else { Vec::new() };
        let events = if ctx.ws.exists(&events_path(class)) { read_events(ctx, class)? } else { Vec::new() };
        let x_label = match class {
            HazardClass::Wind => "Fastest 2-minute wind (m/s)",
            HazardClass::Precipitation => "Precipitation (in)",
        };
        for (zone, m) in &store.fragility {
            let pts: Vec<(f64, f64)> = samples
                .iter()
                .filter(|s| &s.zone_id == zone)
                .map(|s| (s.intensity, s.outage_count as f64))
                .collect();
            if pts.is_empty() {
                log::warn(STAGE, format!("{zone}: no fragility samples to plot"));
            }
            let labels = PlotLabels {
                title: format!("Fragility {zone}"),
                x: x_label.into(),
                y: "Outages".into(),
            };
            let file = format!("plots/fragility_{}.svg", zone.replace(':', "_"));
            out.write(file, emit_scatter(&pts, &m.params, &labels))?;
        }
        for (zone, m) in &store.restoration {
            let pts: Vec<(f64, f64)> = events
                .iter()
                .filter(|e| e.zone_id.as_deref() == Some(zone.as_str()))
                .map(|e| (e.n_outages as f64, e.total_restoration_hours))
                .collect();
            let labels = PlotLabels {
                title: format!("Restoration {zone}"),
                x: "Outages per event".into(),
                y: "Total restoration time (h)".into(),
            };
            let file = format!("plots/restoration_{}.svg", zone.replace(':', "_"));
            out.write(file, emit_scatter(&pts, &m.params, &labels))?;
        }
    }
    let written = out.finish();
    log::info(STAGE, format!("{} plots", written.len()));
    ctx.ws.record(STAGE, &inputs, &fp, written)?;
    Ok(Outcome::Ran)
}

pub fn synth(ctx: &mut Ctx, seed: Option<u64>) -> Result<Outcome> {
    const STAGE: &str = "synth";
    let mut spec = ctx.cfg.synth.clone();
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let fp = fingerprint(&json!({ "synth": spec, "boundary": ctx.cfg.boundary_path() }));
    if ctx.fresh(STAGE, &[], &fp)? {
        return Ok(Outcome::UpToDate);
    }
    let bundle = generate(&spec).map_err(CliError::validation)?;
    log::info(
        STAGE,
        format!(
            "seed {}: {} events, {} outages ({} background)",
            spec.seed,
            bundle.events.len(),
            bundle.n_outages,
            bundle.n_background
        ),
    );
    let mut out = Outputs::new(&ctx.ws);
    for (name, contents) in bundle.files() {
        out.write(ctx.cfg.input_path(name), contents)?;
    }
    out.write(ctx.cfg.boundary_path(), pretty(&boundary_to_geojson(&bundle.boundary)))?;
    let written = out.finish();
    ctx.ws.record(STAGE, &[], &fp, written)?;
    Ok(Outcome::Ran)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub zone_id: String,
    pub b_true: f64,
    pub b_fitted: Option<f64>,
    pub b_rel_error: Option<f64>,
    pub c_true: f64,
    pub c_fitted: Option<f64>,
    pub c_rel_error: Option<f64>,
}

fn rel_error(fitted: f64, truth: f64) -> f64 {
    ((fitted - truth) / truth).abs()
}

/// Compares fitted models against `truth.json` and writes the comparison.
pub fn compare_truth(ctx: &mut Ctx) -> Result<Option<Vec<TruthRow>>> {
    const STAGE: &str = "truth-comparison";
    let truth_rel = ctx.cfg.input_path(TRUTH_FILE);
    if !ctx.ws.exists(&truth_rel) {
        return Ok(None);
    }
    let truth: Value =
        serde_json::from_str(&ctx.read_str(&truth_rel)?).map_err(|e| invalid(truth_rel.display(), e))?;
    let mut inputs = vec![truth_rel.clone()];
    let mut rows = Vec::new();
    for class in HazardClass::ALL {
        let Some(zones) = truth["zones"][class.as_str()].as_object() else {
            continue;
        };
        let store = if ctx.ws.exists(&models_path(class)) {
            inputs.push(models_path(class));
            Some(ctx.store(class)?)
        } else {
            None
        };
        for (zone_id, t) in zones {
            let num = |v: &Value| {
                v.as_f64().ok_or_else(|| invalid(truth_rel.display(), format!("{zone_id}: bad parameter")))
            };
            let b_true = num(&t["fragility"]["b"])?;
            let c_true = num(&t["restoration"]["c"])?;
            let b_fitted = store.as_ref().and_then(|s| s.fragility.get(zone_id)).map(|m| m.params.b);
            let c_fitted = store.as_ref().and_then(|s| s.restoration.get(zone_id)).map(|m| m.params.c);
            rows.push(TruthRow {
                zone_id: zone_id.clone(),
                b_true,
                b_fitted,
                b_rel_error: b_fitted.map(|b| rel_error(b, b_true)),
                c_true,
                c_fitted,
                c_rel_error: c_fitted.map(|c| rel_error(c, c_true)),
            });
        }
    }
    let max = |f: fn(&TruthRow) -> Option<f64>| rows.iter().filter_map(f).fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let report = json!({
        "seed": truth["seed"],
        "zones": rows,
        "max_b_rel_error": max(|r| r.b_rel_error),
        "max_c_rel_error": max(|r| r.c_rel_error),
    });
    let fp = fingerprint(&Value::Null);
    if !ctx.fresh(STAGE, &inputs, &fp)? {
        let mut out = Outputs::new(&ctx.ws);
        out.write(TRUTH_COMPARISON, pretty(&report))?;
        let written = out.finish();
        ctx.ws.record(STAGE, &inputs, &fp, written)?;
    }
    Ok(Some(rows))
}

pub fn truth_table(rows: &[TruthRow]) -> String {
    let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |v| format!("{v:.prec$}"));
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}", 100.0 * v));
    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:<18} {:>9} {:>9} {:>7} {:>9} {:>9} {:>7}",
        "zone_id", "b_true", "b_fit", "b_err%", "c_true", "c_fit", "c_err%"
    );
    for r in rows {
        let _ = writeln!(
            t,
            "{:<18} {:>9.4} {:>9} {:>7} {:>9.2} {:>9} {:>7}",
            r.zone_id,
            r.b_true,
            opt(r.b_fitted, 4),
            pct(r.b_rel_error),
            r.c_true,
            opt(r.c_fitted, 2),
            pct(r.c_rel_error)
        );
    }
    t
}

/// ingest → zones → extract-events → link → fit → predict for every
/// configured scenario, then the truth comparison when `truth.json` exists.
pub fn run_all(ctx: &mut Ctx) -> Result<()> {
    let mut summary: Vec<(String, Outcome)> = vec![
        ("ingest".into(), ingest(ctx)?),
        ("zones".into(), zones(ctx)?),
        ("extract-events".into(), extract(ctx)?),
        ("link".into(), link(ctx)?),
        ("fit".into(), fit(ctx, false)?),
    ];
    let scenarios = ctx.cfg.scenarios.clone();
    let mut predictions = Vec::new();
    for s in &scenarios {
        let p = predict(ctx, s, true)?;
        summary.push((
            format!("predict:{}:{}", s.hazard_class, intensity_tag(s.intensity)),
            p.outcome.clone(),
        ));
        predictions.push(p);
    }

    let mut text = String::new();
    let _ = writeln!(text, "{:<32} status", "stage");
    for (stage, outcome) in &summary {
        match outcome {
            Outcome::Skipped(why) => {
                let _ = writeln!(text, "{:<32} {} ({why})", stage, outcome.label());
            }
            _ => {
                let _ = writeln!(text, "{:<32} {}", stage, outcome.label());
            }
        }
    }
    for p in predictions.iter().filter(|p| !p.rows.is_empty()) {
        text.push('\n');
        text.push_str(&prediction_table(p));
    }
    if let Some(rows) = compare_truth(ctx)? {
        text.push_str("\ntruth comparison\n");
        text.push_str(&truth_table(&rows));
    }
    print!("{text}");
    Ok(())
}
