//! Session orchestration: initiation with the chief complaint, the
//! routed doctor/patient/examiner turn loop, termination, and the
//! post-session report solicitation. Batches run sessions in parallel
//! while preserving corpus order.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    make_chief_complaint, AgentError, AliasTable, DoctorAgent, ExaminerAgent, Extractor,
    PatientAgent,
};
use crate::backends::{GenerationParams, TextBackend};
use crate::evaluation::{parse_report, DiagnosticReport};
use crate::prompts::{Language, PromptSet};
use crate::protocol::{ProtocolError, Role, RoutingConfig, Transcript, Utterance};
use crate::records::{partition_views, MedicalRecord};

/// Patient/examiner exchanges allowed inside one doctor round before
/// the engine declares the session stuck.
const INNER_TRAFFIC_CAP: usize = 20;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("max_rounds must be at least 1")]
    InvalidMaxRounds,
    #[error("parallelism must be at least 1")]
    InvalidParallelism,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// A session aborted by a backend or protocol failure; everything
/// spoken before the failure is preserved.
#[derive(Debug, Error)]
#[error("session {} aborted: {error}", transcript.session_id)]
pub struct SessionFailure {
    pub error: EngineError,
    pub transcript: Transcript,
}

/// Everything `run_consultation` needs beyond the record and the
/// doctor under evaluation: the NPC wiring and the loop bounds.
#[derive(Clone)]
pub struct SessionConfig {
    pub max_rounds: usize,
    pub routing: RoutingConfig,
    pub language: Language,
    pub params: GenerationParams,
    pub prompts: Arc<PromptSet>,
    pub patient_backend: Arc<dyn TextBackend>,
    pub extractor: Extractor,
    pub aliases: AliasTable,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_rounds == 0 {
            return Err(EngineError::InvalidMaxRounds);
        }
        self.routing.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    EndToken,
    MaxRounds,
}

#[derive(Debug, Serialize)]
pub struct SessionResult {
    pub transcript: Transcript,
    pub report_raw: String,
    /// Absent when the report failed to parse even after the retry.
    pub report: Option<DiagnosticReport>,
    pub rounds_used: usize,
    pub termination: Termination,
    /// Recoverable anomalies observed during the run.
    pub errors: Vec<String>,
}

pub type SessionOutcome = Result<SessionResult, SessionFailure>;

/// Runs one full consultation. The transcript opens with the chief
/// complaint; each round is one doctor utterance plus the patient and
/// examiner traffic that follows it; the patient alone may terminate.
/// After termination the doctor is asked once for the five-section
/// report, with a single stricter retry on parse failure.
pub fn run_consultation(
    record: &MedicalRecord,
    doctor: &DoctorAgent,
    config: &SessionConfig,
) -> SessionOutcome {
    if let Err(error) = config.validate() {
        return Err(SessionFailure { error, transcript: Transcript::new(record.id.clone()) });
    }
    let mut transcript = Transcript::new(record.id.clone());
    let mut anomalies = Vec::new();
    let rounds = match drive_dialogue(record, doctor, config, &mut transcript, &mut anomalies) {
        Ok(rounds) => rounds,
        Err(error) => return Err(SessionFailure { error, transcript }),
    };
    let termination =
        if transcript.is_terminated() { Termination::EndToken } else { Termination::MaxRounds };
    let (report_raw, report) = match solicit_with_retry(doctor, config, &transcript, &mut anomalies)
    {
        Ok(pair) => pair,
        Err(error) => return Err(SessionFailure { error, transcript }),
    };
    Ok(SessionResult {
        transcript,
        report_raw,
        report,
        rounds_used: rounds,
        termination,
        errors: anomalies,
    })
}

fn drive_dialogue(
    record: &MedicalRecord,
    doctor: &DoctorAgent,
    config: &SessionConfig,
    transcript: &mut Transcript,
    anomalies: &mut Vec<String>,
) -> Result<usize, EngineError> {
    let views = partition_views(record);
    let patient = PatientAgent::new(
        &views.patient_view,
        config.patient_backend.clone(),
        &config.prompts,
        config.routing.clone(),
        config.params.clone(),
    )?;
    let examiner = ExaminerAgent {
        view: views.examiner_view,
        extractor: config.extractor.clone(),
        aliases: config.aliases.clone(),
        language: config.language,
    };

    let complaint = make_chief_complaint(
        record,
        config.patient_backend.as_ref(),
        &config.prompts,
        &config.params,
    )?;
    transcript.push(0, complaint)?;

    let mut round = 0;
    while round < config.max_rounds && !transcript.is_terminated() {
        round += 1;
        let doctor_turn = doctor.turn(&transcript.history_for(Role::Doctor))?;
        transcript.push(round, doctor_turn)?;

        // Patient and examiner traffic until the doctor speaks again.
        let mut inner = 0;
        loop {
            inner += 1;
            if inner > INNER_TRAFFIC_CAP {
                anomalies.push(format!(
                    "round {round}: patient/examiner exchange exceeded {INNER_TRAFFIC_CAP} turns"
                ));
                break;
            }
            let patient_turn = patient.turn(&transcript.history_for(Role::Patient))?;
            let terminal = patient_turn.terminal;
            let addressee = patient_turn.addressee;
            let query = patient_turn.content.clone();
            transcript.push(round, patient_turn)?;
            if terminal || addressee != Role::Examiner {
                break;
            }
            let (_items, findings) = examiner.answer_query(&query)?;
            transcript.push(round, Utterance::new(Role::Examiner, Role::Patient, findings))?;
        }
    }
    Ok(round)
}

fn solicit_with_retry(
    doctor: &DoctorAgent,
    config: &SessionConfig,
    transcript: &Transcript,
    anomalies: &mut Vec<String>,
) -> Result<(String, Option<DiagnosticReport>), EngineError> {
    let raw = doctor.solicit_report(transcript, &config.prompts.report_request)?;
    match parse_report(&raw) {
        Ok(report) => Ok((raw, Some(report))),
        Err(first) => {
            anomalies.push(format!("report parse failed, retrying: {first}"));
            let retry_raw = doctor.solicit_report(transcript, &config.prompts.report_retry)?;
            match parse_report(&retry_raw) {
                Ok(report) => Ok((retry_raw, Some(report))),
                Err(second) => {
                    anomalies.push(format!("report parse failed after retry: {second}"));
                    Ok((retry_raw, None))
                }
            }
        }
    }
}

/// Runs one session per record, up to `parallelism` at a time. Results
/// land in corpus order regardless of execution interleaving; a failed
/// record never aborts the batch. The factory must hand each session
/// its own backends — scripted queues are single-session.
pub fn run_batch<F>(
    corpus: &[MedicalRecord],
    make_session: F,
    parallelism: usize,
) -> Result<Vec<SessionOutcome>, EngineError>
where
    F: Fn(&MedicalRecord) -> Result<(DoctorAgent, SessionConfig), AgentError> + Sync,
{
    if corpus.is_empty() {
        return Err(EngineError::EmptyCorpus);
    }
    if parallelism == 0 {
        return Err(EngineError::InvalidParallelism);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .expect("thread pool construction");
    Ok(pool.install(|| {
        corpus
            .par_iter()
            .map(|record| match make_session(record) {
                Ok((doctor, config)) => run_consultation(record, &doctor, &config),
                Err(e) => Err(SessionFailure {
                    error: e.into(),
                    transcript: Transcript::new(record.id.clone()),
                }),
            })
            .collect()
    }))
}
