//! Outage fragility and restoration-time modelling from utility outage logs
//! and weather-station records.
//!
//! The pipeline runs ingest → zoning → event extraction → linkage → fitting
//! → scenario prediction; `synth` produces seeded inputs with known truth.

pub mod events;
pub mod fitting;
pub mod geometry;
pub mod hazard;
pub mod ingest;
pub mod linkage;
pub mod render;
pub mod scenario;
pub mod solver;
pub mod store;
pub mod synth;
pub mod time;
pub mod zoning;

pub use hazard::HazardClass;
