//! Medical record schema, parsing, validation, and role-scoped views.
//!
//! A record is split into three information categories: subjective
//! information (what the patient can verbally report), objective
//! examination results (obtainable only through the examiner), and the
//! reference diagnosis/treatment. Each consultation role receives only
//! the slice of the record it is entitled to see.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("missing section: {0}")]
    MissingSection(&'static str),
    #[error("record id is empty")]
    EmptyId,
    #[error("subjective info has no non-empty field")]
    EmptySubjective,
    #[error("reference.results is empty")]
    EmptyReferenceResults,
    #[error("examination has empty name")]
    EmptyExaminationName,
    #[error("malformed record document: {0}")]
    Malformed(String),
    #[error("duplicate record id: {0}")]
    DuplicateId(String),
    #[error("io error reading corpus: {0}")]
    Io(#[from] std::io::Error),
}

/// Patient-reportable content: symptoms, history, habits, basic profile.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubjectiveInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chief_complaint_hint: Option<String>,
    #[serde(default)]
    pub present_illness: String,
    #[serde(default)]
    pub past_history: String,
    #[serde(default)]
    pub personal_history: String,
    #[serde(default)]
    pub basic_profile: String,
}

impl SubjectiveInfo {
    pub fn is_empty(&self) -> bool {
        self.present_illness.trim().is_empty()
            && self.past_history.trim().is_empty()
            && self.personal_history.trim().is_empty()
            && self.basic_profile.trim().is_empty()
    }

    /// Flattened text form used when building patient-side prompts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (label, value) in [
            ("Basic profile", &self.basic_profile),
            ("Present illness", &self.present_illness),
            ("Past history", &self.past_history),
            ("Personal history", &self.personal_history),
        ] {
            if !value.trim().is_empty() {
                out.push_str(label);
                out.push_str(": ");
                out.push_str(value.trim());
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub item: String,
    pub value: String,
}

/// One performed examination with its recorded findings. An empty
/// findings list means the exam was performed and nothing was noted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Examination {
    pub name: String,
    #[serde(default)]
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceDiagnosis {
    pub results: Vec<String>,
    #[serde(default)]
    pub rationales: String,
    #[serde(default)]
    pub treatment: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicalRecord {
    pub id: String,
    pub department: String,
    pub subjective: SubjectiveInfo,
    #[serde(default)]
    pub objective: Vec<Examination>,
    pub reference: ReferenceDiagnosis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<String>,
}

/// Loose mirror of [`MedicalRecord`] used to produce precise
/// missing-section errors instead of opaque deserializer messages.
#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    department: Option<String>,
    subjective: Option<SubjectiveInfo>,
    #[serde(default)]
    objective: Vec<Examination>,
    reference: Option<ReferenceDiagnosis>,
    #[serde(default)]
    persona: Option<String>,
}

pub fn parse_record(raw: &str) -> Result<MedicalRecord, SchemaError> {
    let raw: RawRecord =
        serde_json::from_str(raw).map_err(|e| SchemaError::Malformed(e.to_string()))?;
    let id = raw.id.ok_or(SchemaError::MissingSection("id"))?;
    if id.trim().is_empty() {
        return Err(SchemaError::EmptyId);
    }
    let department = raw.department.ok_or(SchemaError::MissingSection("department"))?;
    let subjective = raw.subjective.ok_or(SchemaError::MissingSection("subjective"))?;
    if subjective.is_empty() {
        return Err(SchemaError::EmptySubjective);
    }
    let reference = raw.reference.ok_or(SchemaError::MissingSection("reference"))?;
    if reference.results.iter().all(|r| r.trim().is_empty()) {
        return Err(SchemaError::EmptyReferenceResults);
    }
    if raw.objective.iter().any(|e| e.name.trim().is_empty()) {
        return Err(SchemaError::EmptyExaminationName);
    }
    Ok(MedicalRecord {
        id,
        department,
        subjective,
        objective: raw.objective,
        reference,
        persona: raw.persona,
    })
}

/// Canonical on-disk form. `parse_record(render_record(r)) == r`.
pub fn render_record(record: &MedicalRecord) -> String {
    let mut s = serde_json::to_string_pretty(record).expect("record serializes");
    s.push('\n');
    s
}

/// Hook point for mapping third-party record formats onto the native
/// schema. The shipped implementation is the native JSON importer.
pub trait RecordImporter {
    fn import(&self, raw: &str) -> Result<MedicalRecord, SchemaError>;
}

pub struct JsonImporter;

impl RecordImporter for JsonImporter {
    fn import(&self, raw: &str) -> Result<MedicalRecord, SchemaError> {
        parse_record(raw)
    }
}

/// Patient-visible slice: subjective info plus persona, never any
/// examination or reference content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientView {
    pub subjective: SubjectiveInfo,
    pub persona: String,
}

pub const DEFAULT_PERSONA: &str =
    "An ordinary adult patient who answers plainly and briefly.";

/// Marker for the doctor's (empty) record access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DoctorView;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessViews {
    pub patient_view: PatientView,
    pub examiner_view: Vec<Examination>,
    pub chief_view: MedicalRecord,
    pub doctor_view: DoctorView,
}

pub fn partition_views(record: &MedicalRecord) -> AccessViews {
    AccessViews {
        patient_view: PatientView {
            subjective: record.subjective.clone(),
            persona: record
                .persona
                .clone()
                .unwrap_or_else(|| DEFAULT_PERSONA.to_string()),
        },
        examiner_view: record.objective.clone(),
        chief_view: record.clone(),
        doctor_view: DoctorView,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DepartmentHistogram {
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
}

pub fn corpus_stats(corpus: &[MedicalRecord]) -> Result<DepartmentHistogram, SchemaError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut hist = DepartmentHistogram::default();
    for record in corpus {
        if !seen.insert(record.id.as_str()) {
            return Err(SchemaError::DuplicateId(record.id.clone()));
        }
        *hist.counts.entry(record.department.clone()).or_insert(0) += 1;
        hist.total += 1;
    }
    Ok(hist)
}

/// Loads a corpus from a directory of `*.json` record files or a single
/// JSON-Lines file with one record per line.
pub fn load_corpus(path: &Path) -> Result<Vec<MedicalRecord>, SchemaError> {
    let mut records = Vec::new();
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        for file in files {
            records.push(parse_record(&fs::read_to_string(&file)?)?);
        }
    } else {
        for line in fs::read_to_string(path)?.lines() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(parse_record(line)?);
        }
    }
    // Re-run the duplicate-id check so a bad corpus fails at load time.
    corpus_stats(&records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        serde_json::json!({
            "id": "r1",
            "department": "Surgery",
            "subjective": {"present_illness": "cough for five days"},
            "objective": [],
            "reference": {"results": ["acute bronchitis"], "rationales": "", "treatment": ""}
        })
        .to_string()
    }

    #[test]
    fn round_trip_identity() {
        let record = parse_record(&minimal()).unwrap();
        let rendered = render_record(&record);
        assert_eq!(parse_record(&rendered).unwrap(), record);
        // canonical form is a fixed point of render ∘ parse
        assert_eq!(render_record(&parse_record(&rendered).unwrap()), rendered);
    }

    #[test]
    fn missing_reference_is_schema_error() {
        let raw = serde_json::json!({
            "id": "r1",
            "department": "Surgery",
            "subjective": {"present_illness": "cough"}
        })
        .to_string();
        match parse_record(&raw) {
            Err(SchemaError::MissingSection("reference")) => {}
            other => panic!("expected MissingSection(reference), got {other:?}"),
        }
    }

    #[test]
    fn empty_id_rejected() {
        let raw = minimal().replace("\"r1\"", "\"  \"");
        assert!(matches!(parse_record(&raw), Err(SchemaError::EmptyId)));
    }

    #[test]
    fn empty_reference_results_rejected() {
        let raw = serde_json::json!({
            "id": "r1",
            "department": "Surgery",
            "subjective": {"present_illness": "cough"},
            "reference": {"results": [], "rationales": "", "treatment": ""}
        })
        .to_string();
        assert!(matches!(
            parse_record(&raw),
            Err(SchemaError::EmptyReferenceResults)
        ));
    }

    #[test]
    fn empty_subjective_rejected() {
        let raw = serde_json::json!({
            "id": "r1",
            "department": "Surgery",
            "subjective": {},
            "reference": {"results": ["x"], "rationales": "", "treatment": ""}
        })
        .to_string();
        assert!(matches!(parse_record(&raw), Err(SchemaError::EmptySubjective)));
    }

    #[test]
    fn views_partition_cleanly() {
        let mut record = parse_record(&minimal()).unwrap();
        record.objective.push(Examination {
            name: "chest X-ray".into(),
            findings: vec![Finding {
                item: "infiltrate".into(),
                value: "lower left lobe".into(),
            }],
        });
        let views = partition_views(&record);
        assert_eq!(views.chief_view, record);
        assert_eq!(views.doctor_view, DoctorView);
        assert_eq!(views.examiner_view, record.objective);
        assert_eq!(views.patient_view.subjective, record.subjective);
        assert_eq!(views.patient_view.persona, DEFAULT_PERSONA);
    }

    #[test]
    fn histogram_counts_and_duplicates() {
        let a = parse_record(&minimal()).unwrap();
        let mut b = a.clone();
        b.id = "r2".into();
        b.department = "Pediatrics".into();
        let hist = corpus_stats(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(hist.total, 2);
        assert_eq!(hist.counts["Surgery"], 1);
        assert_eq!(hist.counts["Pediatrics"], 1);
        assert!(corpus_stats(&[]).unwrap().counts.is_empty());
        assert!(matches!(
            corpus_stats(&[a.clone(), a]),
            Err(SchemaError::DuplicateId(_))
        ));
    }
}
