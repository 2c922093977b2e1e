//! Multi-doctor collaborative diagnosis: a moderated discussion loop in
//! which intern doctors revise their reports against peers' reports and
//! the medical director's itemized disputes, with an optional
//! fact-exchange phase beforehand and a dispute-free ablation mode.

use std::collections::BTreeMap;
use std::sync::Arc;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::agents::{AgentError, ExaminerAgent, PatientAgent};
use crate::backends::{BackendError, ChatMessage, GenerationParams, TextBackend};
use crate::evaluation::{
    parse_report, parse_three_part_report, DiagnosticReport, EvalError, ThreePartReport,
};
use crate::prompts::{PromptSet, TemplateError};
use crate::protocol::{Role, Utterance};

#[derive(Debug, Error)]
pub enum CollabError {
    #[error("invalid collaboration config: {0}")]
    InvalidConfig(String),
    #[error("moderator output format error: {0}")]
    FormatError(String),
    #[error("doctor {doctor_id} revision unparseable after retry: {source}")]
    RevisionParseError {
        doctor_id: String,
        #[source]
        source: EvalError,
    },
    #[error("final report unparseable after retry: {source}")]
    FinalizeParseError {
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// A collaboration aborted mid-discussion; everything appended to the
/// history before the failure is preserved.
#[derive(Debug, Error)]
#[error("collaboration aborted: {error}")]
pub struct CollabFailure {
    pub error: CollabError,
    pub history: DiscussionHistory,
}

/// One intern doctor participating in the discussion.
#[derive(Clone)]
pub struct CollabDoctor {
    pub id: String,
    pub backend: Arc<dyn TextBackend>,
}

#[derive(Clone)]
pub struct CollabConfig {
    /// Maximum number of discussion rounds.
    pub max_rounds: usize,
    /// When false, the director only probes for consensus and no
    /// dispute items ever reach the doctors or the history.
    pub dispute_resolution: bool,
    pub chief: Arc<dyn TextBackend>,
    pub doctors: Vec<CollabDoctor>,
    pub prompts: Arc<PromptSet>,
    pub params: GenerationParams,
    /// Output of the pre-discussion fact exchange, included in every
    /// revision prompt when present.
    pub facts: Option<FactSummary>,
}

impl CollabConfig {
    pub fn validate(&self) -> Result<(), CollabError> {
        if self.max_rounds == 0 {
            return Err(CollabError::InvalidConfig("max_rounds must be at least 1".into()));
        }
        if self.doctors.is_empty() {
            return Err(CollabError::InvalidConfig("at least one doctor required".into()));
        }
        Ok(())
    }
}

/// The doctors' independent pre-discussion reports, in doctor order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreDiagnosis {
    pub reports: Vec<(String, DiagnosticReport)>,
}

/// Up to three controversial points, in priority order. An empty list
/// means consensus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DisputeList {
    pub items: Vec<String>,
}

impl DisputeList {
    pub fn is_consensus(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Confirmation {
    pub question: String,
    pub answerer: Role,
    pub answer: String,
}

/// The director's consolidated factual picture after the exchange
/// phase: symptoms, examination outcomes, and any point-by-point
/// confirmations obtained from the patient or the examiner.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FactSummary {
    pub symptoms: String,
    pub examinations: String,
    pub confirmations: Vec<Confirmation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum HistoryEntry {
    PreDiagnosis { doctor_id: String, report: DiagnosticReport },
    Facts { facts: FactSummary },
    Statement { doctor_id: String, report: DiagnosticReport },
    Dispute { disputes: DisputeList },
}

/// Append-only discussion log, seeded with the pre-diagnoses.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiscussionHistory {
    pub entries: Vec<HistoryEntry>,
}

impl DiscussionHistory {
    pub fn push(&mut self, entry: HistoryEntry) {
        self.entries.push(entry);
    }

    /// Entry-kind sequence, for compact trace-shape assertions.
    pub fn kinds(&self) -> Vec<&'static str> {
        self.entries
            .iter()
            .map(|e| match e {
                HistoryEntry::PreDiagnosis { .. } => "pre",
                HistoryEntry::Facts { .. } => "facts",
                HistoryEntry::Statement { .. } => "statement",
                HistoryEntry::Dispute { .. } => "dispute",
            })
            .collect()
    }

    /// Plain-text rendering shown to the director.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            match entry {
                HistoryEntry::PreDiagnosis { doctor_id, report } => {
                    out.push_str(&format!("[Pre-diagnosis from {doctor_id}]\n"));
                    out.push_str(&report.render());
                }
                HistoryEntry::Facts { facts } => {
                    out.push_str("[Consolidated facts]\n");
                    out.push_str(&format!(
                        "# Symptoms\n{}\n# Examinations\n{}\n",
                        facts.symptoms, facts.examinations
                    ));
                    for c in &facts.confirmations {
                        out.push_str(&format!("- {} confirmed: {} -> {}\n", c.answerer, c.question, c.answer));
                    }
                }
                HistoryEntry::Statement { doctor_id, report } => {
                    out.push_str(&format!("[Revised report from {doctor_id}]\n"));
                    out.push_str(&report.render());
                }
                HistoryEntry::Dispute { disputes } => {
                    if disputes.is_consensus() {
                        out.push_str("[Director] consensus reached\n");
                    } else {
                        out.push_str("[Director] controversial points:\n");
                        for (i, item) in disputes.items.iter().enumerate() {
                            out.push_str(&format!("({}) {}\n", i + 1, item));
                        }
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Serialize)]
pub struct CollabResult {
    pub final_report: DiagnosticReport,
    /// Discussion rounds actually executed.
    pub rounds_used: usize,
    pub history: DiscussionHistory,
    /// True iff the loop exited because the dispute list came back
    /// empty.
    pub converged: bool,
    /// Dispute-item count after the initial summary and after each
    /// round (empty in the ablation mode).
    pub dispute_counts: Vec<usize>,
    /// Recoverable anomalies (e.g. a dispute list truncated to three).
    pub warnings: Vec<String>,
}

impl CollabResult {
    pub fn to_trace_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Patient condition text bound into the moderator and revision
/// prompts: the consolidated facts when available, otherwise the
/// doctors' own symptom/examination sections.
pub fn patient_summary_text(pre: &PreDiagnosis, facts: Option<&FactSummary>) -> String {
    if let Some(f) = facts {
        return format!("# Symptoms\n{}\n# Examinations\n{}", f.symptoms, f.examinations);
    }
    let mut out = String::new();
    for (id, report) in &pre.reports {
        out.push_str(&format!(
            "[As reported by {id}]\n# Symptoms\n{}\n# Examinations\n{}\n",
            report.symptoms, report.examinations
        ));
    }
    out.trim_end().to_string()
}

/// Parses the director's dispute output: the line `NONE` means
/// consensus; otherwise numbered items `(1) …`. More than three items
/// are truncated to the first three with a warning.
pub fn parse_dispute_list(raw: &str) -> Result<(DisputeList, Vec<String>), CollabError> {
    // items may share a line ("(1) … (2) …") or sit one per line
    let marker = Regex::new(r"[(（]\d+[)）]").unwrap();
    let mut items: Vec<String> = Vec::new();
    if marker.is_match(raw) {
        items = marker
            .split(raw)
            .skip(1)
            .map(|piece| piece.trim().to_string())
            .filter(|piece| !piece.is_empty())
            .collect();
    }
    let mut warnings = Vec::new();
    if items.is_empty() {
        if raw.lines().any(|l| l.trim() == "NONE") {
            return Ok((DisputeList::default(), warnings));
        }
        return Err(CollabError::FormatError(format!(
            "expected numbered dispute items or the line NONE, got: {raw:?}"
        )));
    }
    if items.len() > 3 {
        warnings.push(format!("dispute list truncated from {} to 3 items", items.len()));
        items.truncate(3);
    }
    Ok((DisputeList { items }, warnings))
}

/// One director call summarizing the current history into a dispute
/// list.
pub fn summarize_disputes(
    history: &DiscussionHistory,
    patient_summary: &str,
    chief: &dyn TextBackend,
    prompts: &PromptSet,
    params: &GenerationParams,
) -> Result<(DisputeList, Vec<String>), CollabError> {
    let mut bindings = BTreeMap::new();
    bindings.insert("patient_summary", patient_summary.to_string());
    let system = prompts.moderator.render(&bindings)?;
    let output = chief.generate(&system, &[ChatMessage::user(history.render())], params)?;
    parse_dispute_list(&output)
}

/// One director call probing for bare consensus (the ablation mode's
/// replacement for dispute summarization).
pub fn consensus_probe(
    history: &DiscussionHistory,
    chief: &dyn TextBackend,
    prompts: &PromptSet,
    params: &GenerationParams,
) -> Result<bool, CollabError> {
    let system = prompts.consensus_probe.render(&BTreeMap::new())?;
    let output = chief.generate(&system, &[ChatMessage::user(history.render())], params)?;
    match output.trim() {
        "NONE" => Ok(true),
        "CONTINUE" => Ok(false),
        other => Err(CollabError::FormatError(format!(
            "expected NONE or CONTINUE, got: {other:?}"
        ))),
    }
}

fn render_revision_user(
    peers: &[(String, DiagnosticReport)],
    disputes: Option<&DisputeList>,
    facts: Option<&FactSummary>,
) -> String {
    let mut out = String::new();
    if let Some(f) = facts {
        out.push_str("Consolidated factual summary from the medical director:\n");
        out.push_str(&format!(
            "# Symptoms\n{}\n# Examinations\n{}\n\n",
            f.symptoms, f.examinations
        ));
    }
    out.push_str("Diagnostic reports from the other doctors:\n");
    for (id, report) in peers {
        out.push_str(&format!("[{id}]\n{}\n", report.render()));
    }
    if let Some(d) = disputes {
        if !d.is_consensus() {
            out.push_str("\nThe medical director highlights these controversial points:\n");
            for (i, item) in d.items.iter().enumerate() {
                out.push_str(&format!("({}) {}\n", i + 1, item));
            }
        }
    }
    out
}

/// One doctor's revision: a backend call over the peers' reports and
/// (when dispute resolution is on) the director's points, parsed as a
/// three-part report and merged over the doctor's retained symptom and
/// examination sections. Parse failures retry once.
pub fn revise_report(
    doctor_id: &str,
    own: &DiagnosticReport,
    peers: &[(String, DiagnosticReport)],
    disputes: Option<&DisputeList>,
    facts: Option<&FactSummary>,
    patient_summary: &str,
    backend: &dyn TextBackend,
    prompts: &PromptSet,
    params: &GenerationParams,
) -> Result<DiagnosticReport, CollabError> {
    let mut bindings = BTreeMap::new();
    bindings.insert("patient_summary", patient_summary.to_string());
    bindings.insert("own_report", own.render());
    let system = prompts.collab_doctor.render(&bindings)?;
    let user = render_revision_user(peers, disputes, facts);
    let output = backend.generate(&system, &[ChatMessage::user(user.clone())], params)?;
    let three = match parse_three_part_report(&output) {
        Ok(t) => t,
        Err(_) => {
            let retry_user = format!(
                "{user}\nYour previous output could not be parsed. Use exactly the headings \
                 # Diagnostic Results, # Diagnostic Rationales, # Treatment Plan."
            );
            let retry = backend.generate(&system, &[ChatMessage::user(retry_user)], params)?;
            parse_three_part_report(&retry).map_err(|source| CollabError::RevisionParseError {
                doctor_id: doctor_id.to_string(),
                source,
            })?
        }
    };
    Ok(merge_revision(own, three))
}

fn merge_revision(own: &DiagnosticReport, three: ThreePartReport) -> DiagnosticReport {
    DiagnosticReport {
        symptoms: own.symptoms.clone(),
        examinations: own.examinations.clone(),
        results: three.results,
        rationales: three.rationales,
        treatment: three.treatment,
    }
}

/// The director's closing call producing the final five-section report
/// from the full history. Parse failures retry once.
pub fn finalize(
    history: &DiscussionHistory,
    chief: &dyn TextBackend,
    prompts: &PromptSet,
    params: &GenerationParams,
) -> Result<DiagnosticReport, CollabError> {
    let system = prompts.finalize.render(&BTreeMap::new())?;
    let user = history.render();
    let output = chief.generate(&system, &[ChatMessage::user(user.clone())], params)?;
    match parse_report(&output) {
        Ok(report) => Ok(report),
        Err(_) => {
            let retry_user = format!(
                "{user}\nYour previous output could not be parsed. Use exactly the five headings \
                 # Symptoms, # Medical Examinations, # Diagnostic Results, # Diagnostic \
                 Rationales, # Treatment Plan."
            );
            let retry = chief.generate(&system, &[ChatMessage::user(retry_user)], params)?;
            parse_report(&retry).map_err(|source| CollabError::FinalizeParseError { source })
        }
    }
}

fn parse_fact_sections(raw: &str) -> (String, String, Vec<(Role, String)>) {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Symptoms,
        Examinations,
        Confirm,
    }
    let mut section = Section::None;
    let mut symptoms = String::new();
    let mut examinations = String::new();
    let mut questions = Vec::new();
    for line in raw.lines() {
        let trimmed = line.trim();
        if let Some(head) = trimmed.strip_prefix('#') {
            let head = head.trim().to_lowercase();
            section = if head.starts_with("symptom") || head.starts_with("症状") {
                Section::Symptoms
            } else if head.starts_with("examination") || head.starts_with("检查") {
                Section::Examinations
            } else if head.starts_with("confirm") || head.starts_with("确认") {
                Section::Confirm
            } else {
                Section::None
            };
            continue;
        }
        match section {
            Section::Symptoms => {
                if !symptoms.is_empty() {
                    symptoms.push('\n');
                }
                symptoms.push_str(line);
            }
            Section::Examinations => {
                if !examinations.is_empty() {
                    examinations.push('\n');
                }
                examinations.push_str(line);
            }
            Section::Confirm => {
                let item = trimmed.trim_start_matches('-').trim();
                if let Some(q) = item.strip_prefix("Patient:").or_else(|| item.strip_prefix("患者：")) {
                    questions.push((Role::Patient, q.trim().to_string()));
                } else if let Some(q) =
                    item.strip_prefix("Examiner:").or_else(|| item.strip_prefix("检查员："))
                {
                    questions.push((Role::Examiner, q.trim().to_string()));
                }
            }
            Section::None => {}
        }
    }
    (symptoms.trim().to_string(), examinations.trim().to_string(), questions)
}

/// Pre-discussion fact exchange: the director consolidates the factual
/// information relayed by the doctors and resolves each disputed point
/// with one confirmation query to the patient or the examiner.
pub fn exchange_facts(
    pre: &PreDiagnosis,
    chief: &dyn TextBackend,
    patient: &PatientAgent,
    examiner: &ExaminerAgent,
    prompts: &PromptSet,
    params: &GenerationParams,
) -> Result<FactSummary, CollabError> {
    if pre.reports.is_empty() {
        return Err(CollabError::InvalidConfig("fact exchange requires at least one doctor".into()));
    }
    let system = prompts.facts.render(&BTreeMap::new())?;
    let mut user = String::from("Factual information relayed by the doctors:\n");
    for (id, report) in &pre.reports {
        user.push_str(&format!(
            "[{id}]\n# Symptoms\n{}\n# Examinations\n{}\n",
            report.symptoms, report.examinations
        ));
    }
    let output = chief.generate(&system, &[ChatMessage::user(user)], params)?;
    let (symptoms, examinations, questions) = parse_fact_sections(&output);
    let mut confirmations = Vec::new();
    for (answerer, question) in questions {
        let answer = match answerer {
            Role::Patient => {
                let asked = Utterance::new(Role::ChiefPhysician, Role::Patient, question.clone());
                patient.turn(&[&asked])?.content
            }
            Role::Examiner => examiner.answer_query(&question)?.1,
            _ => unreachable!("confirm questions route only to patient or examiner"),
        };
        confirmations.push(Confirmation { question, answerer, answer });
    }
    Ok(FactSummary { symptoms, examinations, confirmations })
}

/// The moderated discussion loop. The history starts with the
/// pre-diagnoses (plus the fact summary when present); with dispute
/// resolution on, the director summarizes disputes up front and after
/// every round, and the loop ends on consensus or after `max_rounds`
/// rounds; the director always produces the final report.
pub fn run_collaboration(
    pre: &PreDiagnosis,
    config: &CollabConfig,
) -> Result<CollabResult, CollabFailure> {
    let mut history = DiscussionHistory::default();
    match run_inner(pre, config, &mut history) {
        Ok(mut result) => {
            result.history = history;
            Ok(result)
        }
        Err(error) => Err(CollabFailure { error, history }),
    }
}

fn run_inner(
    pre: &PreDiagnosis,
    config: &CollabConfig,
    history: &mut DiscussionHistory,
) -> Result<CollabResult, CollabError> {
    config.validate()?;
    if pre.reports.len() != config.doctors.len() {
        return Err(CollabError::InvalidConfig(format!(
            "{} pre-diagnoses for {} doctors",
            pre.reports.len(),
            config.doctors.len()
        )));
    }
    for (id, report) in &pre.reports {
        history.push(HistoryEntry::PreDiagnosis { doctor_id: id.clone(), report: report.clone() });
    }
    if let Some(facts) = &config.facts {
        history.push(HistoryEntry::Facts { facts: facts.clone() });
    }
    let summary = patient_summary_text(pre, config.facts.as_ref());
    let mut warnings = Vec::new();
    let mut dispute_counts = Vec::new();
    let mut latest: Vec<DiagnosticReport> =
        pre.reports.iter().map(|(_, r)| r.clone()).collect();
    let mut rounds_used = 0;
    let mut converged = false;

    if config.dispute_resolution {
        let (mut disputes, mut w) = summarize_disputes(
            history,
            &summary,
            config.chief.as_ref(),
            &config.prompts,
            &config.params,
        )?;
        warnings.append(&mut w);
        dispute_counts.push(disputes.items.len());
        history.push(HistoryEntry::Dispute { disputes: disputes.clone() });
        if disputes.is_consensus() {
            converged = true;
        }
        while !converged && rounds_used < config.max_rounds {
            rounds_used += 1;
            let snapshot = latest.clone();
            for (i, doctor) in config.doctors.iter().enumerate() {
                let peers: Vec<(String, DiagnosticReport)> = config
                    .doctors
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(j, d)| (d.id.clone(), snapshot[j].clone()))
                    .collect();
                let revised = revise_report(
                    &doctor.id,
                    &snapshot[i],
                    &peers,
                    Some(&disputes),
                    config.facts.as_ref(),
                    &summary,
                    doctor.backend.as_ref(),
                    &config.prompts,
                    &config.params,
                )?;
                history.push(HistoryEntry::Statement {
                    doctor_id: doctor.id.clone(),
                    report: revised.clone(),
                });
                latest[i] = revised;
            }
            let (next, mut w) = summarize_disputes(
                history,
                &summary,
                config.chief.as_ref(),
                &config.prompts,
                &config.params,
            )?;
            warnings.append(&mut w);
            dispute_counts.push(next.items.len());
            history.push(HistoryEntry::Dispute { disputes: next.clone() });
            if next.is_consensus() {
                converged = true;
            }
            disputes = next;
        }
    } else {
        converged =
            consensus_probe(history, config.chief.as_ref(), &config.prompts, &config.params)?;
        while !converged && rounds_used < config.max_rounds {
            rounds_used += 1;
            let snapshot = latest.clone();
            for (i, doctor) in config.doctors.iter().enumerate() {
                let peers: Vec<(String, DiagnosticReport)> = config
                    .doctors
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(j, d)| (d.id.clone(), snapshot[j].clone()))
                    .collect();
                let revised = revise_report(
                    &doctor.id,
                    &snapshot[i],
                    &peers,
                    None,
                    config.facts.as_ref(),
                    &summary,
                    doctor.backend.as_ref(),
                    &config.prompts,
                    &config.params,
                )?;
                history.push(HistoryEntry::Statement {
                    doctor_id: doctor.id.clone(),
                    report: revised.clone(),
                });
                latest[i] = revised;
            }
            converged =
                consensus_probe(history, config.chief.as_ref(), &config.prompts, &config.params)?;
        }
    }

    let final_report =
        finalize(history, config.chief.as_ref(), &config.prompts, &config.params)?;
    Ok(CollabResult {
        final_report,
        rounds_used,
        history: DiscussionHistory::default(),
        converged,
        dispute_counts,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::script_backend;

    fn report(results: &str) -> DiagnosticReport {
        DiagnosticReport {
            symptoms: "fever".into(),
            examinations: "chest X-ray".into(),
            results: results.into(),
            rationales: "infiltrate".into(),
            treatment: "antibiotics".into(),
        }
    }

    fn three_part(results: &str) -> String {
        format!(
            "# Diagnostic Results\n{results}\n# Diagnostic Rationales\ninfiltrate\n# Treatment Plan\nantibiotics\n"
        )
    }

    fn five_part(results: &str) -> String {
        format!(
            "# Symptoms\nfever\n# Medical Examinations\nchest X-ray\n# Diagnostic Results\n{results}\n# Diagnostic Rationales\ninfiltrate\n# Treatment Plan\nantibiotics\n"
        )
    }

    fn pre(n: usize) -> PreDiagnosis {
        PreDiagnosis {
            reports: (0..n).map(|i| (format!("doctor-{i}"), report("pneumonia"))).collect(),
        }
    }

    fn config(
        n: usize,
        max_rounds: usize,
        dispute_resolution: bool,
        chief_script: Vec<String>,
        doctor_script: Vec<String>,
    ) -> CollabConfig {
        CollabConfig {
            max_rounds,
            dispute_resolution,
            chief: script_backend(chief_script),
            doctors: (0..n)
                .map(|i| CollabDoctor {
                    id: format!("doctor-{i}"),
                    backend: script_backend(doctor_script.clone()),
                })
                .collect(),
            prompts: Arc::new(crate::test_support::test_prompts()),
            params: GenerationParams::default(),
            facts: None,
        }
    }

    #[test]
    fn dispute_parsing_variants() {
        let (d, w) =
            parse_dispute_list("(1) primary diagnosis differs (2) imaging needed").unwrap();
        assert_eq!(d.items.len(), 2);
        assert!(w.is_empty());

        let (d, _) = parse_dispute_list("NONE").unwrap();
        assert!(d.is_consensus());

        let (d, w) =
            parse_dispute_list("(1) a\n(2) b\n(3) c\n(4) d\n(5) e").unwrap();
        assert_eq!(d.items, vec!["a", "b", "c"]);
        assert_eq!(w.len(), 1);

        assert!(matches!(
            parse_dispute_list("the doctors seem to broadly agree"),
            Err(CollabError::FormatError(_))
        ));
    }

    #[test]
    fn consensus_after_first_summary_skips_revision() {
        let cfg = config(2, 4, true, vec!["NONE".into(), five_part("pneumonia")], vec![]);
        let result = run_collaboration(&pre(2), &cfg).unwrap();
        assert_eq!(result.rounds_used, 0);
        assert!(result.converged);
        assert_eq!(result.history.kinds(), vec!["pre", "pre", "dispute"]);
        assert_eq!(result.final_report.results, "pneumonia");
    }

    #[test]
    fn convergence_at_round_two_matches_trace_shape() {
        let chief = vec![
            "(1) primary diagnosis differs".to_string(),
            "(1) still differs".to_string(),
            "NONE".to_string(),
            five_part("pneumonia"),
        ];
        let doctors = vec![three_part("pneumonia"), three_part("pneumonia")];
        let cfg = config(3, 5, true, chief, doctors);
        let result = run_collaboration(&pre(3), &cfg).unwrap();
        assert_eq!(result.rounds_used, 2);
        assert!(result.converged);
        assert_eq!(
            result.history.kinds(),
            vec![
                "pre", "pre", "pre", "dispute", "statement", "statement", "statement", "dispute",
                "statement", "statement", "statement", "dispute",
            ]
        );
        assert_eq!(result.dispute_counts, vec![1, 1, 0]);
    }

    #[test]
    fn never_consensus_hits_round_bound_and_finalizes() {
        let chief = vec![
            "(1) differs".to_string(),
            "(1) differs".to_string(),
            "(1) differs".to_string(),
            "(1) differs".to_string(),
            "(1) differs".to_string(),
            five_part("pneumonia"),
        ];
        let doctors = vec![
            three_part("pneumonia"),
            three_part("pneumonia"),
            three_part("pneumonia"),
            three_part("pneumonia"),
        ];
        let cfg = config(1, 4, true, chief, doctors);
        let result = run_collaboration(&pre(1), &cfg).unwrap();
        assert_eq!(result.rounds_used, 4);
        assert!(!result.converged);
        assert_eq!(result.final_report.results, "pneumonia");
    }

    #[test]
    fn ablation_never_records_disputes() {
        let chief = vec![
            "CONTINUE".to_string(),
            "NONE".to_string(),
            five_part("pneumonia"),
        ];
        let doctors = vec![three_part("flu")];
        let cfg = config(2, 3, false, chief, doctors);
        let result = run_collaboration(&pre(2), &cfg).unwrap();
        assert_eq!(result.rounds_used, 1);
        assert!(result.converged);
        assert!(result.history.kinds().iter().all(|k| *k != "dispute"));
        assert!(result.dispute_counts.is_empty());
        // prompt capture: no revision prompt mentions controversial points
        for doctor in &cfg.doctors {
            for entry in doctor.backend.audit() {
                for msg in &entry.messages {
                    assert!(!msg.content.contains("controversial points"));
                }
            }
        }
    }

    #[test]
    fn revision_adopting_peer_result() {
        let own = report("flu");
        let peers = vec![("doctor-1".to_string(), report("pneumonia"))];
        let backend = script_backend([three_part("pneumonia")]);
        let revised = revise_report(
            "doctor-0",
            &own,
            &peers,
            None,
            None,
            "fever",
            backend.as_ref(),
            &crate::test_support::test_prompts(),
            &GenerationParams::default(),
        )
        .unwrap();
        assert_eq!(revised.results, "pneumonia");
        // retained sections survive the merge
        assert_eq!(revised.symptoms, "fever");
        assert_eq!(revised.examinations, "chest X-ray");
    }

    #[test]
    fn revision_parse_failure_retries_then_errors() {
        let backend = script_backend(["garbled".to_string(), "still garbled".to_string()]);
        let err = revise_report(
            "doctor-0",
            &report("flu"),
            &[],
            None,
            None,
            "fever",
            backend.as_ref(),
            &crate::test_support::test_prompts(),
            &GenerationParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CollabError::RevisionParseError { .. }));
        assert_eq!(backend.audit().len(), 2);
    }

    #[test]
    fn finalize_retry_recovers() {
        let history = DiscussionHistory::default();
        let chief = script_backend(["not a report".to_string(), five_part("pneumonia")]);
        let report = finalize(
            &history,
            chief.as_ref(),
            &crate::test_support::test_prompts(),
            &GenerationParams::default(),
        )
        .unwrap();
        assert_eq!(report.results, "pneumonia");
        assert_eq!(chief.audit().len(), 2);
    }

    #[test]
    fn fact_section_parsing() {
        let raw = "# Symptoms\nfever for three days\n# Examinations\nchest X-ray shows infiltrate\n# Confirm\n- Patient: how long has the fever lasted?\n- Examiner: was a CBC performed?";
        let (symptoms, examinations, questions) = parse_fact_sections(raw);
        assert_eq!(symptoms, "fever for three days");
        assert_eq!(examinations, "chest X-ray shows infiltrate");
        assert_eq!(questions.len(), 2);
        assert_eq!(questions[0].0, Role::Patient);
        assert_eq!(questions[1].0, Role::Examiner);
    }

    #[test]
    fn mismatched_pre_diagnosis_count_rejected() {
        let cfg = config(2, 3, true, vec![], vec![]);
        let failure = run_collaboration(&pre(3), &cfg).unwrap_err();
        assert!(matches!(failure.error, CollabError::InvalidConfig(_)));
    }
}
