//! Two-step scenario prediction (intensity → outages → restoration hours)
//! and the choropleth document built from it.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::fitting::{evaluate, FitError};
use crate::hazard::HazardClass;
use crate::store::{FragilityEntry, ModelStore, RestorationEntry};
use crate::zoning::ZonePartition;

pub const PREDICTION_COLUMNS: [&str; 5] = [
    "zone_id",
    "intensity",
    "predicted_outages",
    "predicted_restoration_hours",
    "extrapolated",
];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario intensity must be finite and >= 0, got {0}")]
    Intensity(f64),
    #[error("partition has no zones")]
    EmptyPartition,
    #[error("scenario is {scenario} but the {what} is {found}")]
    ClassMismatch {
        scenario: HazardClass,
        what: &'static str,
        found: HazardClass,
    },
    #[error("missing models for zones: {}", .0.join(", "))]
    MissingModels(Vec<String>),
    #[error("zone {zone}: {source}")]
    Evaluation {
        zone: String,
        #[source]
        source: FitError,
    },
    #[error("no prediction for zone {0}")]
    MissingPrediction(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub hazard_class: HazardClass,
    pub intensity: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePrediction {
    pub zone_id: String,
    pub intensity: f64,
    pub predicted_outages: f64,
    pub predicted_restoration_hours: f64,
    pub extrapolated: bool,
    /// The restoration curve went negative and was clamped at zero.
    pub clamped: bool,
}

pub fn predict_zone(
    zone_id: &str,
    fragility: &FragilityEntry,
    restoration: &RestorationEntry,
    intensity: f64,
) -> Result<ZonePrediction, ScenarioError> {
    let wrap = |source| ScenarioError::Evaluation {
        zone: zone_id.to_string(),
        source,
    };
    let outages = evaluate(&fragility.params, intensity).map_err(wrap)?;
    let hours = evaluate(&restoration.params, outages.value).map_err(wrap)?;
    Ok(ZonePrediction {
        zone_id: zone_id.to_string(),
        intensity,
        predicted_outages: outages.value,
        predicted_restoration_hours: hours.value,
        extrapolated: fragility.outside_domain(intensity)
            || restoration.outside_domain(outages.value),
        clamped: hours.clamped,
    })
}

/// One prediction per partition zone, ordered by zone id.
pub fn predict_all(
    store: &ModelStore,
    partition: &ZonePartition,
    scenario: &ScenarioSpec,
) -> Result<Vec<ZonePrediction>, ScenarioError> {
    if !(scenario.intensity.is_finite() && scenario.intensity >= 0.0) {
        return Err(ScenarioError::Intensity(scenario.intensity));
    }
    if partition.is_empty() {
        return Err(ScenarioError::EmptyPartition);
    }
    for (what, found) in [("model store", store.hazard_class), ("partition", partition.hazard_class)] {
        if found != scenario.hazard_class {
            return Err(ScenarioError::ClassMismatch {
                scenario: scenario.hazard_class,
                what,
                found,
            });
        }
    }
    let mut zone_ids: Vec<&str> = partition.zones.iter().map(|z| z.zone_id.as_str()).collect();
    zone_ids.sort_unstable();

    let mut missing = Vec::new();
    for id in &zone_ids {
        if !store.fragility.contains_key(*id) {
            missing.push(format!("{id} (fragility)"));
        }
        if !store.restoration.contains_key(*id) {
            missing.push(format!("{id} (restoration)"));
        }
    }
    if !missing.is_empty() {
        return Err(ScenarioError::MissingModels(missing));
    }
    zone_ids
        .into_iter()
        .map(|id| predict_zone(id, &store.fragility[id], &store.restoration[id], scenario.intensity))
        .collect()
}

/// Linear shade in `[0, 1]`: 0 at the shortest predicted restoration
/// (darkest), 1 at the longest; 0.5 everywhere when all hours coincide.
pub fn shades(hours: &[f64]) -> Vec<f64> {
    let min = hours.iter().copied().fold(f64::INFINITY, f64::min);
    let max = hours.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hours
        .iter()
        .map(|h| if max > min { (h - min) / (max - min) } else { 0.5 })
        .collect()
}

/// Dark navy at shade 0 through pale yellow at shade 1.
pub fn shade_color(shade: f64) -> String {
    const DARK: [f64; 3] = [8.0, 29.0, 88.0];
    const LIGHT: [f64; 3] = [255.0, 255.0, 204.0];
    let s = shade.clamp(0.0, 1.0);
    let c: Vec<u8> = (0..3)
        .map(|i| (DARK[i] + (LIGHT[i] - DARK[i]) * s).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Canonical file-name fragment for an intensity (`35`, `2.5`).
pub fn intensity_tag(intensity: f64) -> String {
    format!("{intensity}")
}

pub fn choropleth_file_name(scenario: &ScenarioSpec) -> String {
    format!(
        "choropleth_{}_{}.geojson",
        scenario.hazard_class.as_str(),
        intensity_tag(scenario.intensity)
    )
}

/// GeoJSON FeatureCollection with one feature per zone, shaded by predicted
/// restoration time. Output bytes are fixed for fixed inputs.
pub fn emit_choropleth(
    partition: &ZonePartition,
    predictions: &[ZonePrediction],
    scenario: &ScenarioSpec,
) -> Result<String, ScenarioError> {
    let mut rows = Vec::with_capacity(partition.len());
    for zone in &partition.zones {
        let p = predictions
            .iter()
            .find(|p| p.zone_id == zone.zone_id)
            .ok_or_else(|| ScenarioError::MissingPrediction(zone.zone_id.clone()))?;
        rows.push((zone, p));
    }
    let hours: Vec<f64> = rows.iter().map(|(_, p)| p.predicted_restoration_hours).collect();
    let shade = shades(&hours);
    let min = hours.iter().copied().fold(f64::INFINITY, f64::min);
    let max = hours.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let features: Vec<Value> = rows
        .iter()
        .zip(&shade)
        .map(|((zone, p), s)| {
            json!({
                "type": "Feature",
                "properties": {
                    "zone_id": zone.zone_id,
                    "station_id": zone.station_id,
                    "predicted_outages": p.predicted_outages,
                    "predicted_restoration_hours": p.predicted_restoration_hours,
                    "extrapolated": p.extrapolated,
                    "shade": s,
                    "fill": shade_color(*s),
                },
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [zone.polygon.closed_ring()],
                }
            })
        })
        .collect();
    let doc = json!({
        "type": "FeatureCollection",
        "scenario": scenario,
        "color_scale": {
            "property": "predicted_restoration_hours",
            "min_hours": min,
            "max_hours": max,
            "shade_at_min": 0.0,
            "shade_at_max": 1.0,
            "darker_is_shorter": true,
        },
        "features": features,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("choropleth serialises");
    text.push('\n');
    Ok(text)
}

pub fn write_predictions_csv(predictions: &[ZonePrediction]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(PREDICTION_COLUMNS).unwrap();
    for p in predictions {
        wtr.write_record([
            p.zone_id.clone(),
            p.intensity.to_string(),
            p.predicted_outages.to_string(),
            p.predicted_restoration_hours.to_string(),
            p.extrapolated.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(wtr.into_inner().unwrap()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::{ExponentialModel, SaturatingRestorationModel};
    use crate::store::{published_store, FORM_EXPONENTIAL, FORM_SATURATING};

    fn frag(a: f64, b: f64, domain: Option<[f64; 2]>) -> FragilityEntry {
        FragilityEntry {
            form: FORM_EXPONENTIAL.into(),
            params: ExponentialModel { a, b },
            diagnostics: None,
            fit_domain: domain,
            note: None,
        }
    }

    fn rest(domain: Option<[f64; 2]>) -> RestorationEntry {
        RestorationEntry {
            form: FORM_SATURATING.into(),
            params: SaturatingRestorationModel { c: 100.0, a1: 80.0, b1: 0.01, a2: 10.0, b2: 0.1 },
            diagnostics: None,
            fit_domain: domain,
            note: None,
        }
    }

    #[test]
    fn zero_intensity_yields_scale_parameter() {
        let p = predict_zone("wind:0", &frag(2.5, 0.3, None), &rest(None), 0.0).unwrap();
        assert_eq!(p.predicted_outages, 2.5);
        assert!(!p.extrapolated);
    }

    #[test]
    fn extrapolation_flag() {
        let f = frag(1.0, 0.1, Some([10.0, 30.0]));
        let r = rest(Some([1.0, 1000.0]));
        assert!(!predict_zone("z", &f, &r, 20.0).unwrap().extrapolated);
        assert!(predict_zone("z", &f, &r, 90.0).unwrap().extrapolated);
        let narrow = rest(Some([1.0, 2.0]));
        assert!(predict_zone("z", &f, &narrow, 20.0).unwrap().extrapolated);
    }

    #[test]
    fn shade_rules() {
        assert_eq!(shades(&[10.0, 40.0]), vec![0.0, 1.0]);
        assert_eq!(shades(&[7.0, 7.0, 7.0]), vec![0.5, 0.5, 0.5]);
        assert_eq!(shade_color(0.0), "#081d58");
        assert_eq!(shade_color(1.0), "#ffffcc");
    }

    #[test]
    fn missing_models_are_listed() {
        use crate::geometry::Polygon;
        use crate::ingest::Station;
        let stations: Vec<Station> = (0..3)
            .map(|i| Station {
                station_id: format!("S{i}"),
                latitude: 0.0,
                longitude: i as f64,
                capabilities: [HazardClass::Wind].into_iter().collect(),
            })
            .collect();
        let partition = crate::zoning::build_partition(
            &stations,
            HazardClass::Wind,
            &Polygon::rectangle([-1.0, -1.0], [3.0, 1.0]),
        )
        .unwrap();
        let store = published_store(HazardClass::Wind);
        let scenario = ScenarioSpec { hazard_class: HazardClass::Wind, intensity: 35.0, label: String::new() };
        let err = predict_all(&store, &partition, &scenario).unwrap_err();
        match err {
            ScenarioError::MissingModels(z) => assert_eq!(z, vec!["wind:2 (fragility)", "wind:2 (restoration)"]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn file_names() {
        let s = ScenarioSpec { hazard_class: HazardClass::Precipitation, intensity: 2.5, label: String::new() };
        assert_eq!(choropleth_file_name(&s), "choropleth_precipitation_2.5.geojson");
        let w = ScenarioSpec { hazard_class: HazardClass::Wind, intensity: 35.0, label: String::new() };
        assert_eq!(choropleth_file_name(&w), "choropleth_wind_35.geojson");
    }
}
