//! Disease-mention extraction, dictionary linking, and set-overlap
//! metrics over canonical disease codes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::agents::normalize_name;

/// Canonical disease entries with normalized alias lookup. TSV format:
/// `canonical_id<TAB>canonical_name<TAB>alias1|alias2|...`.
#[derive(Debug, Clone, Default)]
pub struct DiseaseDictionary {
    by_alias: BTreeMap<String, String>,
    ids: BTreeSet<String>,
}

impl DiseaseDictionary {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut dict = DiseaseDictionary::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or("").trim();
            let name = fields.next().unwrap_or("").trim();
            if id.is_empty() || name.is_empty() {
                return Err(EvalError::InvalidDictionary(format!(
                    "line {}: expected id<TAB>name", lineno + 1
                )));
            }
            if !dict.ids.insert(id.to_string()) {
                return Err(EvalError::InvalidDictionary(format!("duplicate canonical id {id}")));
            }
            let aliases = fields.next().unwrap_or("");
            for alias in std::iter::once(name).chain(aliases.split('|')) {
                let key = normalize_name(alias);
                if key.is_empty() {
                    continue;
                }
                if let Some(existing) = dict.by_alias.get(&key) {
                    if existing != id {
                        return Err(EvalError::InvalidDictionary(format!(
                            "alias {alias:?} maps to both {existing} and {id}"
                        )));
                    }
                }
                dict.by_alias.insert(key, id.to_string());
            }
        }
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkOutcome {
    Linked(String),
    Unlinked,
}

/// Normalized exact match on canonical names and aliases. Unlinked is a
/// value, not an error.
pub fn link_mention(mention: &str, dict: &DiseaseDictionary) -> LinkOutcome {
    match dict.by_alias.get(&normalize_name(mention)) {
        Some(id) => LinkOutcome::Linked(id.clone()),
        None => LinkOutcome::Unlinked,
    }
}

/// Splits a diagnostic-results section into disease mentions: breaks on
/// enumeration markers, bullets, and line/sentence separators, strips
/// the markers and trailing qualifiers, and deduplicates preserving
/// order (first occurrence wins, compared on normalized form).
pub fn extract_disease_mentions(results_section: &str) -> Vec<String> {
    let marker = Regex::new(r"\(\d+\)|（\d+）|(?:^|\s)\d+[.)、]\s*|^[-*•]\s*|[;；\n]").unwrap();
    let mut mentions = Vec::new();
    let mut seen = BTreeSet::new();
    for piece in marker.split(results_section) {
        let cleaned = piece
            .trim()
            .trim_start_matches(['-', '*', '•'])
            .trim()
            .trim_end_matches(['.', ',', '，', '。'])
            .trim();
        if cleaned.is_empty() {
            continue;
        }
        let key = normalize_name(cleaned);
        if key.is_empty() || !seen.insert(key) {
            continue;
        }
        mentions.push(cleaned.to_string());
    }
    mentions
}

/// Set-overlap metrics for one record. `count` carries the number of
/// predicted mentions including unlinked ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityMetrics {
    pub count: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Conventions: both sets empty scores 1.0 across the board (a correct
/// "no diagnosable disease" is not penalized); exactly one empty set
/// zeroes the undefined ratio.
pub fn entity_metrics(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> EntityMetrics {
    let overlap = pred.intersection(gold).count() as f64;
    let (precision, recall) = match (pred.is_empty(), gold.is_empty()) {
        (true, true) => (1.0, 1.0),
        (true, false) => (0.0, overlap / gold.len() as f64),
        (false, true) => (overlap / pred.len() as f64, 0.0),
        (false, false) => (overlap / pred.len() as f64, overlap / gold.len() as f64),
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EntityMetrics { count: pred.len() as f64, precision, recall, f1 }
}

/// Corpus-level averaging of per-record metrics. Macro by default;
/// micro pools the intersections and set sizes across records.
pub fn average_entity_metrics(
    per_record: &[(BTreeSet<String>, BTreeSet<String>, usize)],
    micro: bool,
) -> EntityMetrics {
    if per_record.is_empty() {
        return EntityMetrics { count: 0.0, precision: 0.0, recall: 0.0, f1: 0.0 };
    }
    let n = per_record.len() as f64;
    let mean_count =
        per_record.iter().map(|(_, _, mentions)| *mentions as f64).sum::<f64>() / n;
    if micro {
        let overlap: usize =
            per_record.iter().map(|(p, g, _)| p.intersection(g).count()).sum();
        let pred_total: usize = per_record.iter().map(|(p, _, _)| p.len()).sum();
        let gold_total: usize = per_record.iter().map(|(_, g, _)| g.len()).sum();
        let precision = if pred_total > 0 { overlap as f64 / pred_total as f64 } else { 0.0 };
        let recall = if gold_total > 0 { overlap as f64 / gold_total as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EntityMetrics { count: mean_count, precision, recall, f1 }
    } else {
        let mut precision = 0.0;
        let mut recall = 0.0;
        let mut f1 = 0.0;
        for (pred, gold, _) in per_record {
            let m = entity_metrics(pred, gold);
            precision += m.precision;
            recall += m.recall;
            f1 += m.f1;
        }
        EntityMetrics { count: mean_count, precision: precision / n, recall: recall / n, f1: f1 / n }
    }
}
