//! Roles, routed utterances, termination tokens, and transcripts.
//!
//! Every patient utterance is prefixed with an addressee token such as
//! `<To the doctor>` so a multi-party conversation can be routed
//! mechanically. The patient is the only role that may end a session,
//! by emitting the end token.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("could not resolve addressee for {speaker} from: {raw:?}")]
    AddresseeUnresolved { speaker: Role, raw: String },
    #[error("content embeds reserved token {token:?}")]
    ContentContainsReservedToken { token: String },
    #[error("invalid routing config: {0}")]
    InvalidRouting(String),
    #[error("speaker and addressee are both {0}")]
    SelfAddressed(Role),
    #[error("terminal utterance from non-patient speaker {0}")]
    NonPatientTerminal(Role),
    #[error("cannot append after a terminal utterance")]
    AppendAfterTerminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Patient,
    Doctor,
    Examiner,
    ChiefPhysician,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Patient, Role::Doctor, Role::Examiner, Role::ChiefPhysician];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Role::Patient => "Patient",
            Role::Doctor => "Doctor",
            Role::Examiner => "Examiner",
            Role::ChiefPhysician => "ChiefPhysician",
        };
        f.write_str(name)
    }
}

/// What to do when a patient completion arrives without a leading
/// addressee token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FallbackPolicy {
    Error,
    LastInterlocutor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub addressee_tokens: BTreeMap<Role, String>,
    pub end_token: String,
    pub fallback_policy: FallbackPolicy,
}

impl RoutingConfig {
    /// Prompt-table token forms; the default configuration.
    pub fn default_en() -> Self {
        let mut tokens = BTreeMap::new();
        tokens.insert(Role::Doctor, "<To the doctor>".to_string());
        tokens.insert(Role::Examiner, "<To the examiner>".to_string());
        tokens.insert(Role::Patient, "<To the patient>".to_string());
        tokens.insert(Role::ChiefPhysician, "<To the chief physician>".to_string());
        RoutingConfig {
            addressee_tokens: tokens,
            end_token: "<end>".to_string(),
            fallback_policy: FallbackPolicy::LastInterlocutor,
        }
    }

    /// Alternate "Speak to" token forms.
    pub fn speak_to_variant() -> Self {
        let mut tokens = BTreeMap::new();
        tokens.insert(Role::Doctor, "<Speak to Doctor>".to_string());
        tokens.insert(Role::Examiner, "<Speak to Examiner>".to_string());
        tokens.insert(Role::Patient, "<Speak to Patient>".to_string());
        tokens.insert(Role::ChiefPhysician, "<Speak to Chief Physician>".to_string());
        RoutingConfig {
            addressee_tokens: tokens,
            end_token: "<END>".to_string(),
            fallback_policy: FallbackPolicy::LastInterlocutor,
        }
    }

    pub fn default_zh() -> Self {
        let mut tokens = BTreeMap::new();
        tokens.insert(Role::Doctor, "<对医生讲>".to_string());
        tokens.insert(Role::Examiner, "<对检查员讲>".to_string());
        tokens.insert(Role::Patient, "<对患者讲>".to_string());
        tokens.insert(Role::ChiefPhysician, "<对主任医生讲>".to_string());
        RoutingConfig {
            addressee_tokens: tokens,
            end_token: "<结束>".to_string(),
            fallback_policy: FallbackPolicy::LastInterlocutor,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.end_token.trim().is_empty() {
            return Err(ProtocolError::InvalidRouting("empty end token".into()));
        }
        let tokens: Vec<&String> = self.addressee_tokens.values().collect();
        for token in &tokens {
            if token.trim().is_empty() {
                return Err(ProtocolError::InvalidRouting("empty addressee token".into()));
            }
        }
        for (i, a) in tokens.iter().enumerate() {
            for (j, b) in tokens.iter().enumerate() {
                if i != j && b.starts_with(a.as_str()) {
                    return Err(ProtocolError::InvalidRouting(format!(
                        "token {a:?} is a prefix of {b:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn reserved_tokens(&self) -> impl Iterator<Item = &String> {
        self.addressee_tokens.values().chain(std::iter::once(&self.end_token))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Role,
    pub addressee: Role,
    pub content: String,
    pub terminal: bool,
}

impl Utterance {
    pub fn new(speaker: Role, addressee: Role, content: impl Into<String>) -> Self {
        Utterance { speaker, addressee, content: content.into(), terminal: false }
    }
}

/// Resolves the addressee from the leading token of a raw completion,
/// strips the token, and flags end-token termination (patient only).
pub fn parse_utterance(
    raw: &str,
    speaker: Role,
    routing: &RoutingConfig,
    last_interlocutor: Option<Role>,
) -> Result<Utterance, ProtocolError> {
    let trimmed = raw.trim();
    let mut addressee = None;
    let mut rest = trimmed;
    for (role, token) in &routing.addressee_tokens {
        if let Some(after) = trimmed.strip_prefix(token.as_str()) {
            // A second token directly after the first means the model
            // emitted an ambiguous routing; treat as unresolved.
            let after = after.trim_start();
            if routing.addressee_tokens.values().any(|t| after.starts_with(t.as_str())) {
                addressee = None;
                rest = trimmed;
                break;
            }
            addressee = Some(*role);
            rest = after;
            break;
        }
    }
    let addressee = match addressee {
        Some(role) => role,
        None => match (speaker, routing.fallback_policy, last_interlocutor) {
            (Role::Patient, FallbackPolicy::LastInterlocutor, Some(role)) => role,
            _ => {
                return Err(ProtocolError::AddresseeUnresolved {
                    speaker,
                    raw: raw.to_string(),
                })
            }
        },
    };
    if addressee == speaker {
        return Err(ProtocolError::SelfAddressed(speaker));
    }
    let mut content = rest.to_string();
    let mut terminal = false;
    if speaker == Role::Patient {
        // Models place the end token anywhere near the end; match it
        // case-insensitively as a substring and strip it.
        let lower = content.to_lowercase();
        let end_lower = routing.end_token.to_lowercase();
        if let Some(pos) = lower.find(&end_lower) {
            terminal = true;
            let mut stripped = String::with_capacity(content.len());
            stripped.push_str(&content[..pos]);
            stripped.push_str(&content[pos + routing.end_token.len()..]);
            content = stripped;
        }
    }
    Ok(Utterance { speaker, addressee, content: content.trim().to_string(), terminal })
}

pub fn render_utterance(u: &Utterance, routing: &RoutingConfig) -> Result<String, ProtocolError> {
    if u.terminal && u.speaker != Role::Patient {
        return Err(ProtocolError::NonPatientTerminal(u.speaker));
    }
    for token in routing.reserved_tokens() {
        if u.content.contains(token.as_str()) {
            return Err(ProtocolError::ContentContainsReservedToken { token: token.clone() });
        }
    }
    let token = routing
        .addressee_tokens
        .get(&u.addressee)
        .ok_or_else(|| ProtocolError::InvalidRouting(format!("no token for {}", u.addressee)))?;
    let mut out = format!("{token} {}", u.content);
    if u.terminal {
        out.push(' ');
        out.push_str(&routing.end_token);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub round: usize,
    #[serde(flatten)]
    pub utterance: Utterance,
}

/// Ordered, append-only session log. The round counter tracks doctor
/// turns and never decreases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(session_id: impl Into<String>) -> Self {
        Transcript { session_id: session_id.into(), entries: Vec::new() }
    }

    pub fn push(&mut self, round: usize, utterance: Utterance) -> Result<(), ProtocolError> {
        if self.entries.last().is_some_and(|e| e.utterance.terminal) {
            return Err(ProtocolError::AppendAfterTerminal);
        }
        if let Some(last) = self.entries.last() {
            debug_assert!(round >= last.round, "round counter went backwards");
        }
        self.entries.push(TranscriptEntry { seq: self.entries.len(), round, utterance });
        Ok(())
    }

    pub fn is_terminated(&self) -> bool {
        self.entries.last().is_some_and(|e| e.utterance.terminal)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Per-role visibility: the patient sees what it spoke or was
    /// addressed by, the examiner and doctor see only their own
    /// channels, and the chief physician sees everything. Examiner
    /// findings reach the doctor only as relayed patient utterances.
    pub fn history_for(&self, viewer: Role) -> Vec<&Utterance> {
        self.entries
            .iter()
            .map(|e| &e.utterance)
            .filter(|u| match viewer {
                Role::ChiefPhysician => true,
                role => u.speaker == role || u.addressee == role,
            })
            .collect()
    }

    /// JSON-Lines export, one utterance per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_jsonl().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn routing() -> RoutingConfig {
        RoutingConfig::default_en()
    }

    #[test]
    fn default_configs_validate() {
        RoutingConfig::default_en().validate().unwrap();
        RoutingConfig::speak_to_variant().validate().unwrap();
        RoutingConfig::default_zh().validate().unwrap();
    }

    #[test]
    fn prefix_tokens_rejected() {
        let mut cfg = routing();
        cfg.addressee_tokens.insert(Role::Patient, "<To the".to_string());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parses_doctor_addressee() {
        let u = parse_utterance("<To the doctor> My chest hurts.", Role::Patient, &routing(), None)
            .unwrap();
        assert_eq!(u.addressee, Role::Doctor);
        assert_eq!(u.content, "My chest hurts.");
        assert!(!u.terminal);
    }

    #[test]
    fn parses_examiner_addressee() {
        let raw = "<To the examiner> Hello, I need a chest X-ray, can you tell me the results?";
        let u = parse_utterance(raw, Role::Patient, &routing(), None).unwrap();
        assert_eq!(u.addressee, Role::Examiner);
    }

    #[test]
    fn end_token_terminates() {
        let u = parse_utterance(
            "Thank you for the diagnosis. <end>",
            Role::Patient,
            &routing(),
            Some(Role::Doctor),
        )
        .unwrap();
        assert!(u.terminal);
        assert_eq!(u.content, "Thank you for the diagnosis.");
    }

    #[test]
    fn end_token_case_insensitive() {
        let u = parse_utterance("<To the doctor> Thanks. <END>", Role::Patient, &routing(), None)
            .unwrap();
        assert!(u.terminal);
    }

    #[test]
    fn fallback_to_last_interlocutor() {
        let u = parse_utterance("okay", Role::Patient, &routing(), Some(Role::Doctor)).unwrap();
        assert_eq!(u.addressee, Role::Doctor);
        assert_eq!(u.content, "okay");
    }

    #[test]
    fn missing_token_without_fallback_errors() {
        let mut cfg = routing();
        cfg.fallback_policy = FallbackPolicy::Error;
        assert!(matches!(
            parse_utterance("okay", Role::Patient, &cfg, Some(Role::Doctor)),
            Err(ProtocolError::AddresseeUnresolved { .. })
        ));
        // non-patient speakers never fall back
        assert!(matches!(
            parse_utterance("okay", Role::Doctor, &routing(), Some(Role::Patient)),
            Err(ProtocolError::AddresseeUnresolved { .. })
        ));
    }

    #[test]
    fn render_round_trip() {
        let u = Utterance::new(Role::Patient, Role::Doctor, "hi");
        let rendered = render_utterance(&u, &routing()).unwrap();
        assert_eq!(rendered, "<To the doctor> hi");
        assert_eq!(parse_utterance(&rendered, Role::Patient, &routing(), None).unwrap(), u);
    }

    #[test]
    fn render_terminal_appends_end_token() {
        let u = Utterance { terminal: true, ..Utterance::new(Role::Patient, Role::Doctor, "bye") };
        let rendered = render_utterance(&u, &routing()).unwrap();
        assert_eq!(rendered, "<To the doctor> bye <end>");
        assert_eq!(parse_utterance(&rendered, Role::Patient, &routing(), None).unwrap(), u);
    }

    #[test]
    fn reserved_token_in_content_rejected() {
        let u = Utterance::new(Role::Patient, Role::Doctor, "this has <end> inside");
        assert!(matches!(
            render_utterance(&u, &routing()),
            Err(ProtocolError::ContentContainsReservedToken { .. })
        ));
    }

    #[test]
    fn history_visibility() {
        let mut t = Transcript::new("s1");
        t.push(0, Utterance::new(Role::Patient, Role::Doctor, "complaint")).unwrap();
        t.push(1, Utterance::new(Role::Doctor, Role::Patient, "question")).unwrap();
        t.push(1, Utterance::new(Role::Patient, Role::Examiner, "need x-ray")).unwrap();
        t.push(1, Utterance::new(Role::Examiner, Role::Patient, "results")).unwrap();

        let doctor = t.history_for(Role::Doctor);
        assert_eq!(doctor.len(), 2);
        assert!(doctor.iter().all(|u| u.addressee != Role::Examiner));

        let examiner = t.history_for(Role::Examiner);
        assert_eq!(examiner.len(), 2);

        assert_eq!(t.history_for(Role::ChiefPhysician).len(), t.len());
        assert_eq!(t.history_for(Role::Patient).len(), 4);

        let empty = Transcript::new("s2");
        for role in Role::ALL {
            assert!(empty.history_for(role).is_empty());
        }
    }

    #[test]
    fn no_append_after_terminal() {
        let mut t = Transcript::new("s1");
        let mut bye = Utterance::new(Role::Patient, Role::Doctor, "bye");
        bye.terminal = true;
        t.push(0, bye).unwrap();
        assert!(matches!(
            t.push(1, Utterance::new(Role::Doctor, Role::Patient, "more")),
            Err(ProtocolError::AppendAfterTerminal)
        ));
    }
}
