//! Five-section diagnostic report parsing and rubric judging.

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::backends::{ChatMessage, GenerationParams, TextBackend};
use crate::prompts::PromptSet;
use crate::records::MedicalRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReportDimension {
    Symptoms,
    MedicalExaminations,
    DiagnosticResults,
    DiagnosticRationales,
    TreatmentPlan,
}

impl ReportDimension {
    pub const ALL: [ReportDimension; 5] = [
        ReportDimension::Symptoms,
        ReportDimension::MedicalExaminations,
        ReportDimension::DiagnosticResults,
        ReportDimension::DiagnosticRationales,
        ReportDimension::TreatmentPlan,
    ];

    /// Lowercased heading aliases accepted by the tolerant matcher.
    fn aliases(self) -> &'static [&'static str] {
        match self {
            ReportDimension::Symptoms => &["symptoms", "symptom", "症状"],
            ReportDimension::MedicalExaminations => &[
                "medical examinations",
                "medical examination",
                "medical examination items",
                "examinations",
                "医学检查项目",
                "医学检查",
                "检查项目",
            ],
            ReportDimension::DiagnosticResults => &[
                "diagnostic results",
                "diagnostic result",
                "diagnosis results",
                "diagnosis result",
                "诊断结果",
            ],
            ReportDimension::DiagnosticRationales => &[
                "diagnostic rationales",
                "diagnostic rationale",
                "diagnostic basis",
                "diagnosis rationale",
                "诊断依据",
            ],
            ReportDimension::TreatmentPlan => {
                &["treatment plan", "treatment plans", "treatment", "治疗方案"]
            }
        }
    }

    pub fn heading(self) -> &'static str {
        match self {
            ReportDimension::Symptoms => "Symptoms",
            ReportDimension::MedicalExaminations => "Medical Examinations",
            ReportDimension::DiagnosticResults => "Diagnostic Results",
            ReportDimension::DiagnosticRationales => "Diagnostic Rationales",
            ReportDimension::TreatmentPlan => "Treatment Plan",
        }
    }
}

impl fmt::Display for ReportDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.heading())
    }
}

/// The doctor's five-part summary report. A section may be empty, but
/// absence of its heading is a parse error.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub symptoms: String,
    pub examinations: String,
    pub results: String,
    pub rationales: String,
    pub treatment: String,
}

impl DiagnosticReport {
    pub fn section(&self, dim: ReportDimension) -> &str {
        match dim {
            ReportDimension::Symptoms => &self.symptoms,
            ReportDimension::MedicalExaminations => &self.examinations,
            ReportDimension::DiagnosticResults => &self.results,
            ReportDimension::DiagnosticRationales => &self.rationales,
            ReportDimension::TreatmentPlan => &self.treatment,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for dim in ReportDimension::ALL {
            out.push_str("# ");
            out.push_str(dim.heading());
            out.push('\n');
            let body = self.section(dim);
            if !body.is_empty() {
                out.push_str(body);
                out.push('\n');
            }
        }
        out
    }
}

/// The revision-phase report shape: diagnosis, rationale, treatment.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ThreePartReport {
    pub results: String,
    pub rationales: String,
    pub treatment: String,
}

/// Strips markdown markers, numbering, bold, and a trailing colon from
/// a candidate heading line, returning the lowercased core text.
fn heading_core(line: &str) -> String {
    let mut s = line.trim();
    while let Some(rest) = s.strip_prefix('#') {
        s = rest.trim_start();
    }
    for marker in ["*", "-", "•"] {
        while let Some(rest) = s.strip_prefix(marker) {
            s = rest.trim_start();
        }
    }
    // numbering variants: "3.", "3)", "(3)", "三、"
    let numbering = Regex::new(r"^\(?\d+[.)、]?\)?\s*").unwrap();
    let s = numbering.replace(s, "");
    let s = s.trim_matches('*').trim();
    let s = s.strip_suffix(':').or_else(|| s.strip_suffix('：')).unwrap_or(s).trim();
    s.to_lowercase()
}

fn match_dimension(line: &str, dims: &[ReportDimension]) -> Option<ReportDimension> {
    let core = heading_core(line);
    if core.is_empty() || core.len() > 60 {
        return None;
    }
    dims.iter().copied().find(|d| d.aliases().contains(&core.as_str()))
}

fn split_sections(
    raw: &str,
    dims: &[ReportDimension],
) -> BTreeMap<ReportDimension, String> {
    let mut sections: BTreeMap<ReportDimension, String> = BTreeMap::new();
    let mut current: Option<ReportDimension> = None;
    for line in raw.lines() {
        if let Some(dim) = match_dimension(line, dims) {
            sections.entry(dim).or_default();
            current = Some(dim);
            continue;
        }
        if let Some(dim) = current {
            let body = sections.get_mut(&dim).expect("section opened");
            if !body.is_empty() {
                body.push('\n');
            }
            body.push_str(line);
        }
    }
    for body in sections.values_mut() {
        *body = body.trim().to_string();
    }
    sections
}

/// Extracts the five report sections by tolerant heading matching.
pub fn parse_report(raw: &str) -> Result<DiagnosticReport, EvalError> {
    let mut sections = split_sections(raw, &ReportDimension::ALL);
    for dim in ReportDimension::ALL {
        if !sections.contains_key(&dim) {
            return Err(EvalError::MissingSection(dim));
        }
    }
    Ok(DiagnosticReport {
        symptoms: sections.remove(&ReportDimension::Symptoms).unwrap(),
        examinations: sections.remove(&ReportDimension::MedicalExaminations).unwrap(),
        results: sections.remove(&ReportDimension::DiagnosticResults).unwrap(),
        rationales: sections.remove(&ReportDimension::DiagnosticRationales).unwrap(),
        treatment: sections.remove(&ReportDimension::TreatmentPlan).unwrap(),
    })
}

/// Parses the revision-phase format containing only the diagnostic
/// results, rationale, and treatment sections.
pub fn parse_three_part_report(raw: &str) -> Result<ThreePartReport, EvalError> {
    let dims = [
        ReportDimension::DiagnosticResults,
        ReportDimension::DiagnosticRationales,
        ReportDimension::TreatmentPlan,
    ];
    let mut sections = split_sections(raw, &dims);
    for dim in dims {
        if !sections.contains_key(&dim) {
            return Err(EvalError::MissingSection(dim));
        }
    }
    Ok(ThreePartReport {
        results: sections.remove(&ReportDimension::DiagnosticResults).unwrap(),
        rationales: sections.remove(&ReportDimension::DiagnosticRationales).unwrap(),
        treatment: sections.remove(&ReportDimension::TreatmentPlan).unwrap(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricJudgment {
    pub score: u8,
    pub analysis: String,
}

/// Per-dimension 1-4 scores with the judge's analysis text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricScores {
    pub by_dimension: BTreeMap<ReportDimension, RubricJudgment>,
}

impl RubricScores {
    pub fn score(&self, dim: ReportDimension) -> u8 {
        self.by_dimension[&dim].score
    }
}

fn option_letter_score(text: &str) -> Option<u8> {
    // tolerate "(a)", "A.", "Option: B" and similar framings
    let re = Regex::new(r"(?i)\b([a-d])\b").unwrap();
    let letter = re.captures(text)?.get(1)?.as_str().to_ascii_uppercase();
    Some(match letter.as_str() {
        "A" => 4,
        "B" => 3,
        "C" => 2,
        _ => 1,
    })
}

fn is_option_head(line: &str) -> bool {
    let core = heading_core(line);
    core == "option" || core == "选项" || core.starts_with("option") || core.starts_with("选项")
}

fn is_analysis_head(line: &str) -> bool {
    let core = heading_core(line);
    core == "analysis" || core == "分析"
}

/// Parses the judge's five dimension blocks into rubric scores.
/// Option letters map best-first: A is 4, D is 1.
pub fn parse_judge_output(raw: &str) -> Result<RubricScores, EvalError> {
    let mut by_dimension = BTreeMap::new();
    let mut current: Option<ReportDimension> = None;
    let mut analysis: BTreeMap<ReportDimension, String> = BTreeMap::new();
    let mut in_analysis = false;
    let mut in_option = false;
    for line in raw.lines() {
        if let Some(dim) = match_dimension(line, &ReportDimension::ALL) {
            current = Some(dim);
            in_analysis = false;
            in_option = false;
            continue;
        }
        let Some(dim) = current else { continue };
        if is_analysis_head(line) {
            in_analysis = true;
            in_option = false;
            continue;
        }
        if is_option_head(line) {
            in_option = true;
            in_analysis = false;
            // the letter may sit on the head line itself
            let rest = heading_core(line);
            let rest = rest.trim_start_matches("option").trim_start_matches("选项").trim();
            if let Some(score) = option_letter_score(rest) {
                by_dimension
                    .entry(dim)
                    .or_insert(RubricJudgment { score, analysis: String::new() });
            }
            continue;
        }
        if in_option && !by_dimension.contains_key(&dim) {
            if let Some(score) = option_letter_score(line) {
                by_dimension.insert(dim, RubricJudgment { score, analysis: String::new() });
            }
        } else if in_analysis {
            let entry = analysis.entry(dim).or_default();
            if !entry.is_empty() {
                entry.push('\n');
            }
            entry.push_str(line.trim());
        }
    }
    for dim in ReportDimension::ALL {
        match by_dimension.get_mut(&dim) {
            Some(judgment) => {
                judgment.analysis = analysis.remove(&dim).unwrap_or_default();
            }
            None => return Err(EvalError::JudgeFormatError(dim)),
        }
    }
    Ok(RubricScores { by_dimension })
}

/// Reference text shown to the judge: the full chief view.
pub fn render_reference(record: &MedicalRecord) -> String {
    let mut out = String::new();
    out.push_str("# Subjective Information\n");
    out.push_str(&record.subjective.render());
    out.push_str("# Medical Examinations\n");
    for exam in &record.objective {
        out.push_str(&format!("## {}\n", exam.name));
        for finding in &exam.findings {
            out.push_str(&format!("- {}: {}\n", finding.item, finding.value));
        }
    }
    out.push_str("# Diagnostic Results\n");
    for result in &record.reference.results {
        out.push_str(&format!("- {result}\n"));
    }
    out.push_str("# Diagnostic Rationales\n");
    out.push_str(&record.reference.rationales);
    out.push_str("\n# Treatment Plan\n");
    out.push_str(&record.reference.treatment);
    out.push('\n');
    out
}

/// Renders the judge prompt, makes one backend call, and parses the
/// five option letters into rubric scores.
pub fn judge_report(
    report: &DiagnosticReport,
    reference: &MedicalRecord,
    backend: &dyn TextBackend,
    prompts: &PromptSet,
    params: &GenerationParams,
) -> Result<RubricScores, EvalError> {
    let system = prompts.judge_system.render(&BTreeMap::new())?;
    let mut bindings = BTreeMap::new();
    bindings.insert("reference_report", render_reference(reference));
    bindings.insert("intern_report", report.render());
    let user = prompts.judge_user.render(&bindings)?;
    let output = backend.generate(&system, &[ChatMessage::user(user)], params)?;
    parse_judge_output(&output)
}
