//! Prompt templates with `{placeholder}` slots and strict rendering.
//!
//! One template per file; the template id is the file stem. Every
//! placeholder found in the body is required and must appear exactly
//! once, and rendering with a complete binding leaves no slot behind.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {id}: placeholder {name} appears {count} times, expected once")]
    DuplicatePlaceholder { id: String, name: String, count: usize },
    #[error("template {id}: missing binding for placeholder {name}")]
    MissingBinding { id: String, name: String },
    #[error("template {id}: unresolved slot {slot} after rendering")]
    UnresolvedSlot { id: String, slot: String },
    #[error("template file not found: {0}")]
    NotFound(PathBuf),
    #[error("io error loading template: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
}

fn placeholder_regex() -> Regex {
    Regex::new(r"\{([a-zA-Z_][a-zA-Z0-9_]*)\}").unwrap()
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Result<Self, TemplateError> {
        let id = id.into();
        let body = body.into();
        let re = placeholder_regex();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for cap in re.captures_iter(&body) {
            *counts.entry(cap[1].to_string()).or_insert(0) += 1;
        }
        for (name, count) in &counts {
            if *count != 1 {
                return Err(TemplateError::DuplicatePlaceholder {
                    id,
                    name: name.clone(),
                    count: *count,
                });
            }
        }
        Ok(PromptTemplate { id, body, required_placeholders: counts.into_keys().collect() })
    }

    pub fn from_file(path: &Path) -> Result<Self, TemplateError> {
        if !path.is_file() {
            return Err(TemplateError::NotFound(path.to_path_buf()));
        }
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let body = fs::read_to_string(path)?;
        PromptTemplate::new(id, body.trim_end().to_string())
    }

    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let mut out = self.body.clone();
        for name in &self.required_placeholders {
            let value = bindings.get(name.as_str()).ok_or_else(|| {
                TemplateError::MissingBinding { id: self.id.clone(), name: name.clone() }
            })?;
            out = out.replace(&format!("{{{name}}}"), value);
        }
        if let Some(cap) = placeholder_regex().captures(&out) {
            return Err(TemplateError::UnresolvedSlot {
                id: self.id.clone(),
                slot: cap[0].to_string(),
            });
        }
        Ok(out)
    }
}

/// The full template set one session needs, loaded from a prompts
/// directory for a given language subdirectory (`en` or `zh`).
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub patient: PromptTemplate,
    pub doctor: PromptTemplate,
    pub examiner_step1: PromptTemplate,
    pub examiner_step2: PromptTemplate,
    pub judge_system: PromptTemplate,
    pub judge_user: PromptTemplate,
    pub moderator: PromptTemplate,
    pub collab_doctor: PromptTemplate,
    pub persona: PromptTemplate,
    pub chief_complaint: PromptTemplate,
    pub report_request: PromptTemplate,
    pub report_retry: PromptTemplate,
    pub facts: PromptTemplate,
    pub finalize: PromptTemplate,
    pub consensus_probe: PromptTemplate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
}

impl Language {
    pub fn dir_name(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Zh => "zh",
        }
    }
}

impl std::str::FromStr for Language {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Language::En),
            "zh" => Ok(Language::Zh),
            other => Err(format!("unknown language {other:?}, expected en or zh")),
        }
    }
}

impl PromptSet {
    pub fn load(prompts_dir: &Path, language: Language) -> Result<Self, TemplateError> {
        let dir = prompts_dir.join(language.dir_name());
        let load = |name: &str| PromptTemplate::from_file(&dir.join(format!("{name}.txt")));
        Ok(PromptSet {
            patient: load("patient")?,
            doctor: load("doctor")?,
            examiner_step1: load("examiner_step1")?,
            examiner_step2: load("examiner_step2")?,
            judge_system: load("judge_system")?,
            judge_user: load("judge_user")?,
            moderator: load("moderator")?,
            collab_doctor: load("collab_doctor")?,
            persona: load("persona")?,
            chief_complaint: load("chief_complaint")?,
            report_request: load("report_request")?,
            report_retry: load("report_retry")?,
            facts: load("facts")?,
            finalize: load("finalize")?,
            consensus_probe: load("consensus_probe")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_complete_binding() {
        let t = PromptTemplate::new("t", "Hello {name}, you are {age}.").unwrap();
        assert_eq!(
            t.required_placeholders,
            ["age", "name"].iter().map(|s| s.to_string()).collect()
        );
        let mut b = BTreeMap::new();
        b.insert("name", "Ada".to_string());
        b.insert("age", "36".to_string());
        assert_eq!(t.render(&b).unwrap(), "Hello Ada, you are 36.");
    }

    #[test]
    fn duplicate_placeholder_rejected() {
        assert!(matches!(
            PromptTemplate::new("t", "{x} and {x}"),
            Err(TemplateError::DuplicatePlaceholder { .. })
        ));
    }

    #[test]
    fn missing_binding_rejected() {
        let t = PromptTemplate::new("t", "Hello {name}.").unwrap();
        assert!(matches!(
            t.render(&BTreeMap::new()),
            Err(TemplateError::MissingBinding { .. })
        ));
    }

    #[test]
    fn unresolved_slot_detected() {
        // a binding that itself injects a new slot must not slip through
        let t = PromptTemplate::new("t", "Hello {name}.").unwrap();
        let mut b = BTreeMap::new();
        b.insert("name", "{oops}".to_string());
        assert!(matches!(t.render(&b), Err(TemplateError::UnresolvedSlot { .. })));
    }
}
