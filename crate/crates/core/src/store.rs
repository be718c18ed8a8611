//! JSON model store: one document per hazard class holding the fragility
//! and restoration model of every zone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fitting::{ExponentialModel, Fit, FitDiagnostics, SaturatingRestorationModel};
use crate::hazard::HazardClass;

pub const FORM_EXPONENTIAL: &str = "exp";
pub const FORM_SATURATING: &str = "sat2exp";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("model store is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("zone {zone}: expected form '{expected}', found '{found}'")]
    Form {
        zone: String,
        expected: &'static str,
        found: String,
    },
    #[error("zone {zone}: parameters violate model constraints")]
    Constraint { zone: String },
    #[error("zone {zone} does not belong to the {class} store")]
    ForeignZone { zone: String, class: HazardClass },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredModel<M> {
    pub form: String,
    pub params: M,
    pub diagnostics: Option<FitDiagnostics>,
    pub fit_domain: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl<M: Copy> StoredModel<M> {
    pub fn from_fit(form: &str, fit: &Fit<M>) -> Self {
        Self {
            form: form.to_string(),
            params: fit.model,
            diagnostics: Some(fit.diagnostics.clone()),
            fit_domain: Some(fit.fit_domain),
            note: None,
        }
    }

    pub fn outside_domain(&self, x: f64) -> bool {
        self.fit_domain.is_some_and(|[lo, hi]| x < lo || x > hi)
    }
}

pub type FragilityEntry = StoredModel<ExponentialModel>;
pub type RestorationEntry = StoredModel<SaturatingRestorationModel>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelStore {
    pub hazard_class: HazardClass,
    pub fragility: BTreeMap<String, FragilityEntry>,
    pub restoration: BTreeMap<String, RestorationEntry>,
}

impl ModelStore {
    pub fn new(hazard_class: HazardClass) -> Self {
        Self {
            hazard_class,
            fragility: BTreeMap::new(),
            restoration: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("store serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        let store: ModelStore = serde_json::from_str(text)?;
        store.validate()?;
        Ok(store)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let prefix = format!("{}:", self.hazard_class.as_str());
        let foreign = |zone: &String| StoreError::ForeignZone {
            zone: zone.clone(),
            class: self.hazard_class,
        };
        for (zone, m) in &self.fragility {
            if !zone.starts_with(&prefix) {
                return Err(foreign(zone));
            }
            if m.form != FORM_EXPONENTIAL {
                return Err(StoreError::Form {
                    zone: zone.clone(),
                    expected: FORM_EXPONENTIAL,
                    found: m.form.clone(),
                });
            }
            if !(m.params.a > 0.0 && m.params.a.is_finite() && m.params.b.is_finite()) {
                return Err(StoreError::Constraint { zone: zone.clone() });
            }
        }
        for (zone, m) in &self.restoration {
            if !zone.starts_with(&prefix) {
                return Err(foreign(zone));
            }
            if m.form != FORM_SATURATING {
                return Err(StoreError::Form {
                    zone: zone.clone(),
                    expected: FORM_SATURATING,
                    found: m.form.clone(),
                });
            }
            if !m.params.satisfies_constraints() {
                return Err(StoreError::Constraint { zone: zone.clone() });
            }
        }
        Ok(())
    }
}

/// Published Indianapolis coefficients.
///
/// Only the Wind Zone 1 restoration curve was published; every other zone
/// reuses it and says so in `note`.
pub fn published_store(class: HazardClass) -> ModelStore {
    let exp = |a, b| FragilityEntry {
        form: FORM_EXPONENTIAL.into(),
        params: ExponentialModel { a, b },
        diagnostics: None,
        fit_domain: None,
        note: Some("published coefficients".into()),
    };
    let wind1_restoration = SaturatingRestorationModel {
        c: 232.60,
        a1: 217.17,
        b1: 0.001,
        a2: 15.22,
        b2: 0.041,
    };
    let restoration = |published: bool| RestorationEntry {
        form: FORM_SATURATING.into(),
        params: wind1_restoration,
        diagnostics: None,
        fit_domain: None,
        note: Some(if published {
            "published coefficients".into()
        } else {
            "no published curve for this zone; wind:1 curve substituted".into()
        }),
    };
    let mut store = ModelStore::new(class);
    match class {
        HazardClass::Wind => {
            store.fragility.insert("wind:0".into(), exp(0.0002, 0.3675));
            store.fragility.insert("wind:1".into(), exp(2.9214, 0.1058));
            store.restoration.insert("wind:0".into(), restoration(false));
            store.restoration.insert("wind:1".into(), restoration(true));
        }
        HazardClass::Precipitation => {
            for zone in 0..6 {
                let id = format!("precipitation:{zone}");
                let model = if zone == 4 { exp(1.179, 1.6159) } else { exp(0.0654, 2.7683) };
                store.fragility.insert(id.clone(), model);
                store.restoration.insert(id, restoration(false));
            }
        }
    }
    store
}
