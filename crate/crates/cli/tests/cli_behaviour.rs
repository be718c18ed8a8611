use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gridres(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridres"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_bundle(ws: &Path) {
    std::fs::write(ws.join("config.json"), r#"{"synth": {"years": 4, "events_per_zone": 20}}"#).unwrap();
    assert_eq!(code(&gridres(ws, &["synth"])), 0);
}

#[test]
fn second_ingest_is_a_no_op_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    small_bundle(dir.path());
    assert_eq!(code(&gridres(dir.path(), &["ingest"])), 0);
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();

    let again = gridres(dir.path(), &["ingest"]);
    assert_eq!(code(&again), 0);
    assert!(stderr(&again).contains("INFO\tingest\tinputs unchanged"), "{}", stderr(&again));
    assert_eq!(std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(), manifest);

    let forced = gridres(dir.path(), &["--force", "ingest"]);
    assert!(stderr(&forced).contains("INFO\tingest\toutages:"), "{}", stderr(&forced));
}

#[test]
fn changed_input_reruns_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    small_bundle(dir.path());
    assert_eq!(code(&gridres(dir.path(), &["ingest"])), 0);
    let path = dir.path().join("input/outages.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("extra,c,39.8,-86.1,,,,,\n");
    std::fs::write(&path, text).unwrap();
    let out = gridres(dir.path(), &["ingest"]);
    assert!(stderr(&out).contains("1 dropped"), "{}", stderr(&out));
}

#[test]
fn manifest_outputs_exist_with_recorded_hashes() {
    let dir = tempfile::tempdir().unwrap();
    small_bundle(dir.path());
    assert_eq!(code(&gridres(dir.path(), &["run-all"])), 0);
    assert_eq!(code(&gridres(dir.path(), &["render"])), 0);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool_version"], env!("CARGO_PKG_VERSION"));
    let stages = manifest["stages"].as_object().unwrap();
    for stage in ["synth", "ingest", "zones", "extract-events", "link", "fit", "predict:wind:35", "render"] {
        assert!(stages.contains_key(stage), "{stage} missing from manifest");
    }
    for rec in stages.values() {
        for (rel, hash) in rec["outputs"].as_object().unwrap() {
            let bytes = std::fs::read(dir.path().join(rel)).unwrap();
            assert_eq!(gridres::workspace::sha256_hex(&bytes), hash.as_str().unwrap(), "{rel}");
        }
    }
    assert!(dir.path().join("plots/restoration_wind_0.svg").is_file());
    // no temporary files are left behind
    for sub in ["clean", "models", "predictions"] {
        for entry in std::fs::read_dir(dir.path().join(sub)).unwrap() {
            let name = entry.unwrap().file_name();
            assert!(!name.to_string_lossy().starts_with(".tmp"), "{name:?}");
        }
    }
}

#[test]
fn fit_before_extract_events_exits_2_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    small_bundle(dir.path());
    assert_eq!(code(&gridres(dir.path(), &["ingest"])), 0);
    assert_eq!(code(&gridres(dir.path(), &["zones"])), 0);
    let out = gridres(dir.path(), &["fit"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("events/events_wind.csv"), "{}", stderr(&out));
}

#[test]
fn missing_raw_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridres(dir.path(), &["ingest"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("ERROR\tingest\tmissing input:"), "{}", stderr(&out));
    assert_eq!(code(&gridres(dir.path(), &["run-all"])), 2);
    assert_eq!(code(&gridres(dir.path(), &["--config", "nope.json", "zones"])), 2);
}

#[test]
fn corrupt_outages_file_exits_3_naming_the_column() {
    let dir = tempfile::tempdir().unwrap();
    small_bundle(dir.path());
    let path = dir.path().join("input/outages.csv");
    let text = std::fs::read_to_string(&path).unwrap().replacen("restore_minutes", "restore_mins", 1);
    std::fs::write(&path, text).unwrap();
    let out = gridres(dir.path(), &["run-all"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("restore_minutes"), "{}", stderr(&out));
    assert!(!dir.path().join("clean").exists());
}

#[test]
fn empty_severe_file_still_fits_restoration() {
    let dir = tempfile::tempdir().unwrap();
    small_bundle(dir.path());
    let path = dir.path().join("input/severe_events.csv");
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    std::fs::write(&path, header + "\n").unwrap();

    let out = gridres(dir.path(), &["run-all"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("WARN\tfit\twind:0: fragility fit skipped"), "{err}");
    assert!(err.contains("WARN\tpredict:wind:35\tscenario skipped"), "{err}");
    let store: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("models/models_wind.json")).unwrap()).unwrap();
    assert!(store["fragility"].as_object().unwrap().is_empty());
    assert_eq!(store["restoration"].as_object().unwrap().len(), 2);

    // predicting on its own is a validation failure
    let out = gridres(dir.path(), &["predict", "--hazard", "wind", "--intensity", "35"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("missing models"), "{}", stderr(&out));
}

#[test]
fn predict_prints_a_table_and_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    small_bundle(dir.path());
    for args in [&["ingest"][..], &["zones"], &["fit", "--published"]] {
        assert_eq!(code(&gridres(dir.path(), args)), 0);
    }
    let out = gridres(dir.path(), &["predict", "--hazard", "wind", "--intensity", "35"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("wind:0") && table.contains("77.12"), "{table}");
    let csv = std::fs::read_to_string(dir.path().join("predictions/predictions_wind_35.csv")).unwrap();
    assert!(csv.starts_with("zone_id,intensity,predicted_outages,predicted_restoration_hours,extrapolated\n"));
    assert!(dir.path().join("predictions/choropleth_wind_35.geojson").is_file());

    // without flags the configured scenarios run
    let out = gridres(dir.path(), &["predict"]);
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("predictions/choropleth_precipitation_2.5.geojson").is_file());
}

#[test]
fn usage_and_config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gridres(dir.path(), &["frobnicate"])), 3);
    assert_eq!(code(&gridres(dir.path(), &["predict", "--hazard", "hail", "--intensity", "3"])), 3);
    assert_eq!(code(&gridres(dir.path(), &["predict", "--intensity", "3"])), 3);
    std::fs::write(dir.path().join("config.json"), r#"{"colour": "blue"}"#).unwrap();
    let out = gridres(dir.path(), &["ingest"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("colour"), "{}", stderr(&out));
    std::fs::write(dir.path().join("config.json"), r#"{"density_cell_size": -1}"#).unwrap();
    assert_eq!(code(&gridres(dir.path(), &["ingest"])), 3);
}

#[test]
fn help_and_version_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gridres(dir.path(), &["--help"])), 0);
    assert_eq!(code(&gridres(dir.path(), &["--version"])), 0);
}

#[test]
fn synth_seed_flag_changes_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    small_bundle(dir.path());
    let first = std::fs::read(dir.path().join("input/outages.csv")).unwrap();
    assert_eq!(code(&gridres(dir.path(), &["synth", "--seed", "7"])), 0);
    let second = std::fs::read(dir.path().join("input/outages.csv")).unwrap();
    assert_ne!(first, second);
    let truth: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("input/truth.json")).unwrap()).unwrap();
    assert_eq!(truth["seed"], 7);
}

#[test]
fn station_outside_boundary_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    small_bundle(dir.path());
    let path = dir.path().join("input/stations.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("FAR,10.0,10.0,wind\n");
    std::fs::write(&path, text).unwrap();
    assert_eq!(code(&gridres(dir.path(), &["ingest"])), 0);
    let out = gridres(dir.path(), &["zones"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("FAR"), "{}", stderr(&out));
}
