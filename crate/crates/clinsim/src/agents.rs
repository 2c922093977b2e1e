//! Behavior contracts for the four consultation roles.
//!
//! NPC agents (patient, examiner, chief physician) are built from their
//! record views only; the doctor agent starts with no record-derived
//! state at all. The examiner runs a two-step workflow: extract the
//! requested examination items, then report findings for matched items.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::backends::{BackendError, ChatMessage, GenerationParams, TextBackend};
use crate::prompts::{Language, PromptSet, PromptTemplate, TemplateError};
use crate::protocol::{parse_utterance, ProtocolError, Role, RoutingConfig, Transcript, Utterance};
use crate::records::{MedicalRecord, PatientView, Examination};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("examiner output format error: {0}")]
    FormatError(String),
    #[error("no examination items requested")]
    NoItemsRequested,
    #[error("examination item name is empty")]
    EmptyExamItem,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Case-insensitive, punctuation- and whitespace-insensitive key used
/// for matching exam names and linking entities.
pub fn normalize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut last_was_space = true;
    for ch in name.chars() {
        if ch.is_whitespace() {
            if !last_was_space {
                out.push(' ');
                last_was_space = true;
            }
        } else if ch.is_ascii_punctuation() || "，。；：！？（）【】「」、".contains(ch) {
            // punctuation collapses like whitespace
            if !last_was_space {
                out.push(' ');
                last_was_space = true;
            }
        } else {
            for lower in ch.to_lowercase() {
                out.push(lower);
            }
            last_was_space = false;
        }
    }
    out.trim().to_string()
}

/// One extracted examination item. A "None" sentinel from the extractor
/// is represented as an empty item list, never as an item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamItem {
    pub name: String,
}

impl ExamItem {
    pub fn new(name: impl Into<String>) -> Result<Self, AgentError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(AgentError::EmptyExamItem);
        }
        Ok(ExamItem { name: name.trim().to_string() })
    }
}

/// Known exam names used by the offline rule-based extractor. File
/// format: one entry per line, `canonical|alias1|alias2`.
#[derive(Debug, Clone, Default)]
pub struct ExamNameDictionary {
    entries: Vec<(String, Vec<String>)>,
}

impl ExamNameDictionary {
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let mut entries = Vec::new();
        for line in fs::read_to_string(path)?.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('|').map(|s| s.trim().to_string());
            let canonical = parts.next().unwrap_or_default();
            if canonical.is_empty() {
                continue;
            }
            entries.push((canonical, parts.filter(|s| !s.is_empty()).collect()));
        }
        Ok(ExamNameDictionary { entries })
    }

    pub fn from_entries(entries: Vec<(String, Vec<String>)>) -> Self {
        ExamNameDictionary { entries }
    }

    /// Phrase matching: scan the query for any known name or alias and
    /// emit the canonical names in order of first appearance.
    pub fn extract(&self, query: &str) -> Vec<ExamItem> {
        let haystack = query.to_lowercase();
        let mut hits: Vec<(usize, &str)> = Vec::new();
        for (canonical, aliases) in &self.entries {
            let mut best: Option<usize> = None;
            for needle in std::iter::once(canonical).chain(aliases.iter()) {
                if let Some(pos) = haystack.find(&needle.to_lowercase()) {
                    best = Some(best.map_or(pos, |b: usize| b.min(pos)));
                }
            }
            if let Some(pos) = best {
                hits.push((pos, canonical));
            }
        }
        hits.sort_by_key(|(pos, _)| *pos);
        hits.into_iter()
            .map(|(_, name)| ExamItem { name: name.to_string() })
            .collect()
    }
}

/// Parses the extractor's item block:
///
/// ```text
/// # Examination Item
/// - chest X-ray
/// ```
///
/// A lone `- None` (or `- 无`) entry means no item was identified.
pub fn parse_exam_item_block(text: &str) -> Result<Vec<ExamItem>, AgentError> {
    let mut in_block = false;
    let mut items = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            let head = trimmed.trim_start_matches('#').trim().to_lowercase();
            in_block = head.contains("examination item") || head.contains("检查项目");
            continue;
        }
        if !in_block {
            continue;
        }
        if let Some(item) = trimmed.strip_prefix('-') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            if item.eq_ignore_ascii_case("none") || item == "无" {
                continue;
            }
            items.push(ExamItem::new(item)?);
        }
    }
    if !text.lines().any(|l| {
        let head = l.trim().trim_start_matches('#').trim().to_lowercase();
        l.trim().starts_with('#') && (head.contains("examination item") || head.contains("检查项目"))
    }) {
        return Err(AgentError::FormatError("missing examination item block header".into()));
    }
    Ok(items)
}

/// Alias table mapping exam-name variants to canonical names. TSV:
/// `alias<TAB>canonical`.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    map: BTreeMap<String, String>,
}

impl AliasTable {
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let mut map = BTreeMap::new();
        for line in fs::read_to_string(path)?.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((alias, canonical)) = line.split_once('\t') {
                map.insert(normalize_name(alias), canonical.trim().to_string());
            }
        }
        Ok(AliasTable { map })
    }

    pub fn resolve<'a>(&'a self, name: &'a str) -> String {
        self.map
            .get(&normalize_name(name))
            .cloned()
            .unwrap_or_else(|| name.to_string())
    }
}

/// Step-1 extraction strategy: a backend call mirroring the hosted
/// workflow, or the deterministic offline dictionary extractor.
#[derive(Clone)]
pub enum Extractor {
    RuleBased(Arc<ExamNameDictionary>),
    Backend {
        backend: Arc<dyn TextBackend>,
        template: PromptTemplate,
        params: GenerationParams,
    },
}

pub fn examiner_extract_items(query: &str, extractor: &Extractor) -> Result<Vec<ExamItem>, AgentError> {
    debug_assert!(!query.trim().is_empty(), "extraction query must be non-empty");
    match extractor {
        Extractor::RuleBased(dict) => Ok(dict.extract(query)),
        Extractor::Backend { backend, template, params } => {
            let system = template.render(&BTreeMap::new())?;
            let output = backend.generate(&system, &[ChatMessage::user(query)], params)?;
            parse_exam_item_block(&output)
        }
    }
}

fn no_abnormalities_suffix(language: Language) -> &'static str {
    match language {
        Language::En => "No abnormalities",
        Language::Zh => "无异常",
    }
}

/// Step-2 report: formatted findings for items matched in the examiner
/// view, the no-abnormality line for the rest. Pure in (items, view).
pub fn examiner_report(
    items: &[ExamItem],
    view: &[Examination],
    aliases: &AliasTable,
    language: Language,
) -> Result<String, AgentError> {
    if items.is_empty() {
        return Err(AgentError::NoItemsRequested);
    }
    let mut out = String::new();
    for item in items {
        let wanted = normalize_name(&aliases.resolve(&item.name));
        let matched = view
            .iter()
            .find(|exam| normalize_name(&aliases.resolve(&exam.name)) == wanted);
        match matched {
            Some(exam) => {
                out.push_str(&format!("# {}\n", exam.name));
                for finding in &exam.findings {
                    out.push_str(&format!("- {}: {}\n", finding.item, finding.value));
                }
            }
            None => {
                out.push_str(&format!("{}: {}\n", item.name, no_abnormalities_suffix(language)));
            }
        }
    }
    Ok(out.trim_end().to_string())
}

/// Examiner NPC: extraction plus reporting over the objective view.
pub struct ExaminerAgent {
    pub view: Vec<Examination>,
    pub extractor: Extractor,
    pub aliases: AliasTable,
    pub language: Language,
}

impl ExaminerAgent {
    /// Full query handling. Vague queries (empty extraction) yield a
    /// refusal with zero findings disclosed.
    pub fn answer_query(&self, query: &str) -> Result<(Vec<ExamItem>, String), AgentError> {
        let items = examiner_extract_items(query, &self.extractor)?;
        if items.is_empty() {
            let refusal = match self.language {
                Language::En => "No specific examination item was identified in your request. \
                                 Please name the exact examination you need.",
                Language::Zh => "未能从您的请求中解析出明确的检查项目，请说明具体的检查名称。",
            };
            return Ok((items, refusal.to_string()));
        }
        let report = examiner_report(&items, &self.view, &self.aliases, self.language)?;
        Ok((items, report))
    }
}

/// Patient NPC. The system prompt is built at construction from the
/// patient view and persona only.
pub struct PatientAgent {
    pub backend: Arc<dyn TextBackend>,
    pub routing: RoutingConfig,
    pub params: GenerationParams,
    system: String,
}

impl PatientAgent {
    pub fn new(
        view: &PatientView,
        backend: Arc<dyn TextBackend>,
        prompts: &PromptSet,
        routing: RoutingConfig,
        params: GenerationParams,
    ) -> Result<Self, AgentError> {
        let mut bindings = BTreeMap::new();
        bindings.insert("persona", view.persona.clone());
        bindings.insert("basic_information", view.subjective.render());
        let system = prompts.patient.render(&bindings)?;
        Ok(PatientAgent { backend, routing, params, system })
    }

    pub fn system_prompt(&self) -> &str {
        &self.system
    }

    pub fn turn(&self, history: &[&Utterance]) -> Result<Utterance, AgentError> {
        let messages = patient_messages(history);
        let last_interlocutor = history
            .iter()
            .rev()
            .find(|u| u.speaker != Role::Patient)
            .map(|u| u.speaker);
        let completion = self.backend.generate(&self.system, &messages, &self.params)?;
        Ok(parse_utterance(&completion, Role::Patient, &self.routing, last_interlocutor)?)
    }
}

fn patient_messages(history: &[&Utterance]) -> Vec<ChatMessage> {
    history
        .iter()
        .map(|u| {
            if u.speaker == Role::Patient {
                ChatMessage::assistant(u.content.clone())
            } else {
                ChatMessage::user(format!("[{}] {}", u.speaker, u.content))
            }
        })
        .collect()
}

/// The player character under evaluation. Holds no record-derived state.
pub struct DoctorAgent {
    pub backend: Arc<dyn TextBackend>,
    pub params: GenerationParams,
    pub name: String,
    system: String,
}

impl DoctorAgent {
    pub fn new(
        name: impl Into<String>,
        backend: Arc<dyn TextBackend>,
        prompts: &PromptSet,
        params: GenerationParams,
    ) -> Result<Self, AgentError> {
        let system = prompts.doctor.render(&BTreeMap::new())?;
        Ok(DoctorAgent { backend, params, name: name.into(), system })
    }

    fn messages(history: &[&Utterance]) -> Vec<ChatMessage> {
        history
            .iter()
            .map(|u| {
                if u.speaker == Role::Doctor {
                    ChatMessage::assistant(u.content.clone())
                } else {
                    ChatMessage::user(u.content.clone())
                }
            })
            .collect()
    }

    /// Doctors always address the patient; termination belongs to the
    /// patient, so doctor utterances are never terminal.
    pub fn turn(&self, history: &[&Utterance]) -> Result<Utterance, AgentError> {
        let completion = self.backend.generate(&self.system, &Self::messages(history), &self.params)?;
        Ok(Utterance::new(Role::Doctor, Role::Patient, completion.trim().to_string()))
    }

    /// One post-session call asking for the five-section summary report.
    pub fn solicit_report(
        &self,
        transcript: &Transcript,
        request: &PromptTemplate,
    ) -> Result<String, AgentError> {
        debug_assert!(!transcript.is_empty(), "cannot solicit a report for an empty session");
        let mut messages = Self::messages(&transcript.history_for(Role::Doctor));
        messages.push(ChatMessage::user(request.render(&BTreeMap::new())?));
        Ok(self.backend.generate(&self.system, &messages, &self.params)?)
    }
}

/// The only agent constructed from the full record. Serves as judge in
/// evaluation and moderator in collaborative diagnosis.
pub struct ChiefPhysicianAgent {
    pub chief_view: MedicalRecord,
    pub backend: Arc<dyn TextBackend>,
    pub params: GenerationParams,
}

pub fn make_persona(
    record: &MedicalRecord,
    backend: &dyn TextBackend,
    prompts: &PromptSet,
    params: &GenerationParams,
) -> Result<String, AgentError> {
    let mut bindings = BTreeMap::new();
    bindings.insert("basic_information", record.subjective.render());
    let system = prompts.persona.render(&bindings)?;
    let persona = backend.generate(&system, &[], params)?;
    if persona.trim().is_empty() {
        return Err(AgentError::Backend(BackendError::EmptyCompletion));
    }
    Ok(persona.trim().to_string())
}

/// The opening patient utterance. When the record carries a chief
/// complaint hint the backend is bypassed and the hint used verbatim.
pub fn make_chief_complaint(
    record: &MedicalRecord,
    backend: &dyn TextBackend,
    prompts: &PromptSet,
    params: &GenerationParams,
) -> Result<Utterance, AgentError> {
    if let Some(hint) = &record.subjective.chief_complaint_hint {
        if !hint.trim().is_empty() {
            return Ok(Utterance::new(Role::Patient, Role::Doctor, hint.trim().to_string()));
        }
    }
    let mut bindings = BTreeMap::new();
    bindings.insert(
        "persona",
        record.persona.clone().unwrap_or_else(|| crate::records::DEFAULT_PERSONA.to_string()),
    );
    bindings.insert("basic_information", record.subjective.render());
    let system = prompts.chief_complaint.render(&bindings)?;
    let complaint = backend.generate(&system, &[], params)?;
    if complaint.trim().is_empty() {
        return Err(AgentError::Backend(BackendError::EmptyCompletion));
    }
    Ok(Utterance::new(Role::Patient, Role::Doctor, complaint.trim().to_string()))
}

/// Loads the vague-query attack suite: one query per line.
pub fn load_attack_queries(path: &Path) -> Result<Vec<String>, AgentError> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::script_backend;
    use crate::records::{parse_record, Finding};

    fn dict() -> ExamNameDictionary {
        ExamNameDictionary::from_entries(vec![
            ("chest X-ray".into(), vec!["chest radiograph".into()]),
            ("complete blood count".into(), vec!["CBC".into(), "blood test".into()]),
            ("urinalysis".into(), vec![]),
            ("lung biopsy".into(), vec!["biopsy of the lung".into()]),
            ("abdominal ultrasound".into(), vec![]),
        ])
    }

    #[test]
    fn rule_based_extraction_ordered_by_position() {
        let items = dict().extract("I need a urinalysis and then a chest x-ray please");
        let names: Vec<_> = items.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, ["urinalysis", "chest X-ray"]);
    }

    #[test]
    fn rule_based_extraction_vague_query_empty() {
        assert!(dict().extract("Please provide the most recent medical examination details").is_empty());
    }

    #[test]
    fn parse_item_block_items_in_order() {
        let block = "# Examination Item\n- complete blood count\n- urinalysis";
        let items = parse_exam_item_block(block).unwrap();
        let names: Vec<_> = items.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, ["complete blood count", "urinalysis"]);
    }

    #[test]
    fn parse_item_block_none_sentinel() {
        let block = "# Examination Item\n- None";
        assert!(parse_exam_item_block(block).unwrap().is_empty());
        let block_zh = "# 检查项目\n- 无";
        assert!(parse_exam_item_block(block_zh).unwrap().is_empty());
    }

    #[test]
    fn parse_item_block_missing_header() {
        assert!(matches!(
            parse_exam_item_block("- chest X-ray"),
            Err(AgentError::FormatError(_))
        ));
    }

    fn xray_view() -> Vec<Examination> {
        vec![Examination {
            name: "chest X-ray".into(),
            findings: vec![Finding { item: "infiltrate".into(), value: "lower left lobe".into() }],
        }]
    }

    #[test]
    fn examiner_report_matched_and_unmatched() {
        let aliases = AliasTable::default();
        let items = vec![
            ExamItem::new("Chest X-Ray").unwrap(),
            ExamItem::new("abdominal ultrasound").unwrap(),
        ];
        let report = examiner_report(&items, &xray_view(), &aliases, Language::En).unwrap();
        assert!(report.contains("# chest X-ray"));
        assert!(report.contains("- infiltrate: lower left lobe"));
        assert!(report.contains("abdominal ultrasound: No abnormalities"));
    }

    #[test]
    fn examiner_report_is_pure() {
        let aliases = AliasTable::default();
        let items = vec![ExamItem::new("chest X-ray").unwrap()];
        let a = examiner_report(&items, &xray_view(), &aliases, Language::En).unwrap();
        let b = examiner_report(&items, &xray_view(), &aliases, Language::En).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn examiner_report_empty_items_rejected() {
        assert!(matches!(
            examiner_report(&[], &xray_view(), &AliasTable::default(), Language::En),
            Err(AgentError::NoItemsRequested)
        ));
    }

    #[test]
    fn chief_complaint_hint_bypasses_backend() {
        let record = parse_record(
            &serde_json::json!({
                "id": "r1",
                "department": "Surgery",
                "subjective": {
                    "chief_complaint_hint": "I've had a fever for three days",
                    "present_illness": "fever"
                },
                "reference": {"results": ["flu"], "rationales": "", "treatment": ""}
            })
            .to_string(),
        )
        .unwrap();
        let backend = script_backend([]);
        let prompts = crate::test_support::test_prompts();
        let u = make_chief_complaint(&record, &*backend, &prompts, &GenerationParams::default())
            .unwrap();
        assert_eq!(u.speaker, Role::Patient);
        assert_eq!(u.addressee, Role::Doctor);
        assert_eq!(u.content, "I've had a fever for three days");
        assert!(!u.terminal);
        assert!(backend.audit().is_empty(), "backend must be bypassed");
    }

    #[test]
    fn persona_passthrough() {
        let record = parse_record(
            &serde_json::json!({
                "id": "r1",
                "department": "Surgery",
                "subjective": {"present_illness": "fever"},
                "reference": {"results": ["flu"], "rationales": "", "treatment": ""}
            })
            .to_string(),
        )
        .unwrap();
        let backend = script_backend(["anxious retired teacher, plain-spoken".to_string()]);
        let prompts = crate::test_support::test_prompts();
        let persona =
            make_persona(&record, &*backend, &prompts, &GenerationParams::default()).unwrap();
        assert_eq!(persona, "anxious retired teacher, plain-spoken");
    }

    #[test]
    fn normalization_collapses_whitespace_and_case() {
        assert_eq!(normalize_name("  Chest   X-Ray "), "chest x ray");
        assert_eq!(normalize_name("chest x ray"), normalize_name("Chest X-Ray"));
    }
}
