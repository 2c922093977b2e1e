//! Clinical-consultation simulation and evaluation toolkit.
//!
//! The crate wires four simulated roles — a patient, a medical
//! examiner, a doctor under evaluation, and a chief physician — into
//! addressee-routed consultation sessions over structured medical
//! records, then scores the doctor's summary reports with a rubric
//! judge and disease-entity linking metrics. A moderated multi-doctor
//! discussion mode refines diagnoses after independent consultations.
//! All flows run deterministically against scripted text backends and
//! optionally against remote chat-completion endpoints.

pub mod agents;
pub mod backends;
pub mod cli;
pub mod collaboration;
pub mod engine;
pub mod evaluation;
pub mod prompts;
pub mod protocol;
pub mod records;
