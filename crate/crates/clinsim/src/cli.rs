//! Command-line wiring: corpora, backends, prompt sets, sessions,
//! collaboration, and evaluation assembled into reproducible runs.
//! Every run writes a `manifest.json` describing how to repeat it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::agents::{
    load_attack_queries, AliasTable, DoctorAgent, ExamNameDictionary, ExaminerAgent, Extractor,
};
use crate::backends::{
    script_backend, BackendDescriptor, GenerationParams, RemoteBackend, TextBackend,
};
use crate::collaboration::{run_collaboration, CollabConfig, CollabDoctor, PreDiagnosis};
use crate::engine::{run_batch, SessionConfig};
use crate::evaluation::{
    aggregate_scores, average_entity_metrics, entity_metrics, extract_disease_mentions, fit_linear,
    judge_report, link_mention, normalize_rubric, parse_failure_labels, tally_failures,
    DiagnosticReport, DiseaseDictionary, LinkOutcome, ReportDimension,
};
use crate::prompts::{Language, PromptSet};
use crate::protocol::RoutingConfig;
use crate::records::{corpus_stats, load_corpus, MedicalRecord};

/// Exit code 2: bad invocation. Exit code 1: runtime failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser, Debug, Serialize)]
#[command(name = "clinsim", about = "Simulated clinical consultations and their evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum Command {
    /// Run consultation sessions over a corpus of records.
    Consult(ConsultArgs),
    /// Run the moderated multi-doctor discussion over pre-diagnoses.
    Collab(CollabArgs),
    /// Judge the reports of a consult run against the reference records.
    Evaluate(EvaluateArgs),
    /// Disease-entity linking metrics for a consult run.
    LinkEval(LinkEvalArgs),
    /// Department histogram for a corpus.
    Stats(StatsArgs),
    /// Failure-label tally and the optional score regression.
    Analyze(AnalyzeArgs),
    /// Replay the vague-query suite against the examiner.
    AttackExaminer(AttackArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct CommonArgs {
    /// Output directory; all artifacts land here.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory containing per-language prompt template files.
    #[arg(long, default_value = "crates/clinsim/prompts")]
    pub prompts: PathBuf,
    /// Prompt language subdirectory.
    #[arg(long, default_value = "en")]
    pub language: String,
    /// Directory of scripted-backend response files (`<id>.txt`).
    #[arg(long, default_value = "crates/clinsim/fixtures/scripts")]
    pub scripts: PathBuf,
    /// Directory of remote-backend descriptor files (`<id>.json`).
    #[arg(long)]
    pub descriptors: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct ConsultArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Record corpus: a directory of `*.json` files or one JSONL file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Doctor backend, `scripted:<id>` or `remote:<id>`.
    #[arg(long)]
    pub doctor: String,
    /// Patient backend.
    #[arg(long)]
    pub patient: String,
    /// Exam-name dictionary for the rule-based examiner.
    #[arg(long, default_value = "crates/clinsim/fixtures/exam_names.txt")]
    pub exam_names: PathBuf,
    /// Exam alias table (`alias<TAB>canonical`).
    #[arg(long)]
    pub exam_aliases: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct CollabArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory of a consult run whose `reports/*.json` seed the
    /// discussion. Each report file becomes one doctor's pre-diagnosis.
    #[arg(long)]
    pub pre: PathBuf,
    /// Comma-separated doctor backends, one per pre-diagnosis.
    #[arg(long)]
    pub doctors: String,
    /// Medical-director backend.
    #[arg(long)]
    pub chief: String,
    /// Maximum discussion rounds.
    #[arg(short = 'M', long, default_value_t = 4)]
    pub max_rounds: usize,
    /// Disable the itemized dispute mechanism (consensus probe only).
    #[arg(long)]
    pub no_dispute_resolution: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory of a consult run (`reports/*.json`).
    #[arg(long)]
    pub run: PathBuf,
    /// The corpus the run was produced from (for reference records).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Judge backend.
    #[arg(long)]
    pub judge: String,
    /// Bootstrap resample count.
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct LinkEvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Disease dictionary TSV.
    #[arg(long)]
    pub dictionary: PathBuf,
    /// Pool intersections corpus-wide instead of averaging per record.
    #[arg(long)]
    pub micro: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Failure-label file, one label token per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Two-column CSV (x,y) to fit a least-squares line through.
    #[arg(long)]
    pub xy: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct AttackArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "crates/clinsim/fixtures/attack_queries.txt")]
    pub queries: PathBuf,
    #[arg(long, default_value = "crates/clinsim/fixtures/exam_names.txt")]
    pub exam_names: PathBuf,
    /// Record whose objective findings the examiner guards.
    #[arg(long)]
    pub record: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    args: &'a T,
    outputs: Vec<String>,
}

fn write_manifest<T: Serialize>(
    out: &Path,
    command: &str,
    args: &T,
    outputs: Vec<String>,
) -> Result<(), CliError> {
    let manifest = Manifest { command, args, outputs };
    let body = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    fs::write(out.join("manifest.json"), body + "\n").map_err(runtime)
}

fn require_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn parse_language(s: &str) -> Result<Language, CliError> {
    s.parse::<Language>().map_err(|e| CliError::Usage(e))
}

fn load_prompts(common: &CommonArgs) -> Result<Arc<PromptSet>, CliError> {
    require_exists(&common.prompts, "prompts directory")?;
    let language = parse_language(&common.language)?;
    PromptSet::load(&common.prompts, language).map(Arc::new).map_err(runtime)
}

/// Loads a scripted response file: responses separated by `---` lines.
fn load_script(scripts_dir: &Path, id: &str) -> Result<Vec<String>, CliError> {
    let path = scripts_dir.join(format!("{id}.txt"));
    require_exists(&path, "script file")?;
    let text = fs::read_to_string(&path).map_err(runtime)?;
    let mut responses = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim() == "---" {
            responses.push(std::mem::take(&mut current));
        } else {
            if !current.is_empty() {
                current.push('\n');
            }
            current.push_str(line);
        }
    }
    if !current.trim().is_empty() {
        responses.push(current);
    }
    Ok(responses)
}

/// `scripted:<id>` | `remote:<id>`. Scripted backends are rebuilt per
/// call site so every session replays the same fresh queue.
enum BackendSelector {
    Scripted(String),
    Remote(String),
}

fn parse_selector(raw: &str) -> Result<BackendSelector, CliError> {
    match raw.split_once(':') {
        Some(("scripted", id)) if !id.is_empty() => Ok(BackendSelector::Scripted(id.to_string())),
        Some(("remote", id)) if !id.is_empty() => Ok(BackendSelector::Remote(id.to_string())),
        _ => Err(CliError::Usage(format!(
            "backend selector must be scripted:<id> or remote:<id>, got {raw:?}"
        ))),
    }
}

fn build_backend(
    selector: &BackendSelector,
    common: &CommonArgs,
) -> Result<Arc<dyn TextBackend>, CliError> {
    match selector {
        BackendSelector::Scripted(id) => {
            Ok(script_backend(load_script(&common.scripts, id)?))
        }
        BackendSelector::Remote(id) => {
            let dir = common.descriptors.as_ref().ok_or_else(|| {
                CliError::Usage("remote backends require --descriptors".to_string())
            })?;
            let path = dir.join(format!("{id}.json"));
            require_exists(&path, "backend descriptor")?;
            let raw = fs::read_to_string(&path).map_err(runtime)?;
            let descriptor: BackendDescriptor = serde_json::from_str(&raw).map_err(runtime)?;
            Ok(Arc::new(RemoteBackend::new(descriptor).map_err(runtime)?))
        }
    }
}

fn ensure_out(common: &CommonArgs) -> Result<(), CliError> {
    fs::create_dir_all(&common.out).map_err(runtime)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Consult(args) => consult(args),
        Command::Collab(args) => collab(args),
        Command::Evaluate(args) => evaluate(args),
        Command::LinkEval(args) => link_eval(args),
        Command::Stats(args) => stats(args),
        Command::Analyze(args) => analyze(args),
        Command::AttackExaminer(args) => attack_examiner(args),
    }
}

#[derive(Serialize)]
struct SessionLine<'a> {
    session_id: &'a str,
    hash: String,
    rounds_used: usize,
    termination: &'a crate::engine::Termination,
    error: Option<String>,
    entries: &'a [crate::protocol::TranscriptEntry],
}

fn consult(args: &ConsultArgs) -> Result<(), CliError> {
    require_exists(&args.corpus, "corpus")?;
    require_exists(&args.exam_names, "exam-name dictionary")?;
    let doctor_sel = parse_selector(&args.doctor)?;
    let patient_sel = parse_selector(&args.patient)?;
    if args.parallelism == 0 || args.max_rounds == 0 {
        return Err(CliError::Usage("--parallelism and --max-rounds must be at least 1".into()));
    }
    ensure_out(&args.common)?;
    let prompts = load_prompts(&args.common)?;
    let language = parse_language(&args.common.language)?;
    let corpus = load_corpus(&args.corpus).map_err(runtime)?;
    let dict = Arc::new(ExamNameDictionary::load(&args.exam_names).map_err(runtime)?);
    let aliases = match &args.exam_aliases {
        Some(path) => AliasTable::load(path).map_err(runtime)?,
        None => AliasTable::default(),
    };

    let outcomes = run_batch(
        &corpus,
        |_record| {
            // fresh scripted queues per session; remote backends shared
            let doctor_backend = build_backend(&doctor_sel, &args.common)
                .map_err(|e| crate::agents::AgentError::FormatError(e.message().to_string()))?;
            let patient_backend = build_backend(&patient_sel, &args.common)
                .map_err(|e| crate::agents::AgentError::FormatError(e.message().to_string()))?;
            let doctor =
                DoctorAgent::new("doctor", doctor_backend, &prompts, GenerationParams::default())?;
            let config = SessionConfig {
                max_rounds: args.max_rounds,
                routing: RoutingConfig::default_en(),
                language,
                params: GenerationParams::default(),
                prompts: prompts.clone(),
                patient_backend,
                extractor: Extractor::RuleBased(dict.clone()),
                aliases: aliases.clone(),
            };
            Ok((doctor, config))
        },
        args.parallelism,
    )
    .map_err(runtime)?;

    let reports_dir = args.common.out.join("reports");
    fs::create_dir_all(&reports_dir).map_err(runtime)?;
    let mut transcripts = String::new();
    for outcome in &outcomes {
        match outcome {
            Ok(result) => {
                let line = SessionLine {
                    session_id: &result.transcript.session_id,
                    hash: result.transcript.hash(),
                    rounds_used: result.rounds_used,
                    termination: &result.termination,
                    error: None,
                    entries: &result.transcript.entries,
                };
                transcripts.push_str(&serde_json::to_string(&line).map_err(runtime)?);
                transcripts.push('\n');
                let id = &result.transcript.session_id;
                fs::write(reports_dir.join(format!("{id}.txt")), &result.report_raw)
                    .map_err(runtime)?;
                if let Some(report) = &result.report {
                    let body = serde_json::to_string_pretty(report).map_err(runtime)?;
                    fs::write(reports_dir.join(format!("{id}.json")), body + "\n")
                        .map_err(runtime)?;
                }
            }
            Err(failure) => {
                let line = serde_json::json!({
                    "session_id": failure.transcript.session_id,
                    "hash": failure.transcript.hash(),
                    "error": failure.error.to_string(),
                    "entries": failure.transcript.entries,
                });
                transcripts.push_str(&line.to_string());
                transcripts.push('\n');
            }
        }
    }
    fs::write(args.common.out.join("transcripts.jsonl"), transcripts).map_err(runtime)?;
    write_manifest(
        &args.common.out,
        "consult",
        args,
        vec!["transcripts.jsonl".into(), "reports/".into()],
    )
}

fn load_run_reports(run: &Path) -> Result<Vec<(String, DiagnosticReport)>, CliError> {
    let reports_dir = run.join("reports");
    require_exists(&reports_dir, "run reports directory")?;
    let mut files: Vec<PathBuf> = fs::read_dir(&reports_dir)
        .map_err(runtime)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut reports = Vec::new();
    for path in files {
        let id = path.file_stem().unwrap().to_string_lossy().into_owned();
        let raw = fs::read_to_string(&path).map_err(runtime)?;
        let report: DiagnosticReport = serde_json::from_str(&raw).map_err(runtime)?;
        reports.push((id, report));
    }
    if reports.is_empty() {
        return Err(CliError::Usage(format!("no parsed reports under {}", run.display())));
    }
    Ok(reports)
}

fn collab(args: &CollabArgs) -> Result<(), CliError> {
    let reports = load_run_reports(&args.pre)?;
    let doctor_selectors: Vec<BackendSelector> = args
        .doctors
        .split(',')
        .map(parse_selector)
        .collect::<Result<_, _>>()?;
    if doctor_selectors.len() != reports.len() {
        return Err(CliError::Usage(format!(
            "{} doctor backends for {} pre-diagnoses",
            doctor_selectors.len(),
            reports.len()
        )));
    }
    let chief_sel = parse_selector(&args.chief)?;
    ensure_out(&args.common)?;
    let prompts = load_prompts(&args.common)?;
    let doctors = doctor_selectors
        .iter()
        .zip(&reports)
        .map(|(sel, (id, _))| {
            Ok(CollabDoctor { id: id.clone(), backend: build_backend(sel, &args.common)? })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let config = CollabConfig {
        max_rounds: args.max_rounds,
        dispute_resolution: !args.no_dispute_resolution,
        chief: build_backend(&chief_sel, &args.common)?,
        doctors,
        prompts,
        params: GenerationParams::default(),
        facts: None,
    };
    let pre = PreDiagnosis { reports };
    let result = run_collaboration(&pre, &config).map_err(runtime)?;
    fs::write(args.common.out.join("collab_trace.json"), result.to_trace_json() + "\n")
        .map_err(runtime)?;
    write_manifest(&args.common.out, "collab", args, vec!["collab_trace.json".into()])
}

fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    require_exists(&args.corpus, "corpus")?;
    let reports = load_run_reports(&args.run)?;
    let judge_sel = parse_selector(&args.judge)?;
    ensure_out(&args.common)?;
    let prompts = load_prompts(&args.common)?;
    let corpus = load_corpus(&args.corpus).map_err(runtime)?;
    let by_id: BTreeMap<&str, &MedicalRecord> =
        corpus.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut csv = String::from("record_id,dimension,score,normalized\n");
    let mut normalized: BTreeMap<ReportDimension, Vec<f64>> = BTreeMap::new();
    for (id, report) in &reports {
        let record = by_id.get(id.as_str()).ok_or_else(|| {
            CliError::Usage(format!("report {id} has no matching record in the corpus"))
        })?;
        let judge = build_backend(&judge_sel, &args.common)?;
        let scores = judge_report(
            report,
            record,
            judge.as_ref(),
            &prompts,
            &GenerationParams::default(),
        )
        .map_err(runtime)?;
        for dim in ReportDimension::ALL {
            let score = scores.score(dim);
            let norm = normalize_rubric(score).map_err(runtime)?;
            csv.push_str(&format!("{id},{dim},{score},{norm}\n"));
            normalized.entry(dim).or_default().push(norm);
        }
    }
    fs::write(args.common.out.join("scores.csv"), csv).map_err(runtime)?;

    let mut aggregate = BTreeMap::new();
    for (dim, values) in &normalized {
        let agg = aggregate_scores(values, args.resamples, args.common.seed).map_err(runtime)?;
        aggregate.insert(dim.to_string(), agg);
    }
    let body = serde_json::to_string_pretty(&aggregate).map_err(runtime)?;
    fs::write(args.common.out.join("aggregate.json"), body + "\n").map_err(runtime)?;
    write_manifest(
        &args.common.out,
        "evaluate",
        args,
        vec!["scores.csv".into(), "aggregate.json".into()],
    )
}

fn link_eval(args: &LinkEvalArgs) -> Result<(), CliError> {
    require_exists(&args.corpus, "corpus")?;
    require_exists(&args.dictionary, "disease dictionary")?;
    let reports = load_run_reports(&args.run)?;
    ensure_out(&args.common)?;
    let dict = DiseaseDictionary::load(&args.dictionary).map_err(runtime)?;
    let corpus = load_corpus(&args.corpus).map_err(runtime)?;
    let by_id: BTreeMap<&str, &MedicalRecord> =
        corpus.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut per_record = Vec::new();
    let mut rows = Vec::new();
    for (id, report) in &reports {
        let record = by_id.get(id.as_str()).ok_or_else(|| {
            CliError::Usage(format!("report {id} has no matching record in the corpus"))
        })?;
        let mentions = extract_disease_mentions(&report.results);
        let pred: std::collections::BTreeSet<String> = mentions
            .iter()
            .filter_map(|m| match link_mention(m, &dict) {
                LinkOutcome::Linked(code) => Some(code),
                LinkOutcome::Unlinked => None,
            })
            .collect();
        let gold: std::collections::BTreeSet<String> = record
            .reference
            .results
            .iter()
            .filter_map(|m| match link_mention(m, &dict) {
                LinkOutcome::Linked(code) => Some(code),
                LinkOutcome::Unlinked => None,
            })
            .collect();
        let metrics = entity_metrics(&pred, &gold);
        rows.push(serde_json::json!({"record_id": id, "mentions": mentions.len(), "metrics": metrics}));
        per_record.push((pred, gold, mentions.len()));
    }
    let average = average_entity_metrics(&per_record, args.micro);
    let body = serde_json::to_string_pretty(
        &serde_json::json!({"per_record": rows, "average": average, "micro": args.micro}),
    )
    .map_err(runtime)?;
    fs::write(args.common.out.join("aggregate.json"), body + "\n").map_err(runtime)?;
    write_manifest(&args.common.out, "link-eval", args, vec!["aggregate.json".into()])
}

fn stats(args: &StatsArgs) -> Result<(), CliError> {
    require_exists(&args.corpus, "corpus")?;
    ensure_out(&args.common)?;
    let corpus = load_corpus(&args.corpus).map_err(runtime)?;
    let histogram = corpus_stats(&corpus).map_err(runtime)?;
    let mut csv = String::from("department,count\n");
    for (department, count) in &histogram.counts {
        csv.push_str(&format!("{department},{count}\n"));
    }
    csv.push_str(&format!("total,{}\n", histogram.total));
    fs::write(args.common.out.join("histogram.csv"), csv).map_err(runtime)?;
    write_manifest(&args.common.out, "stats", args, vec!["histogram.csv".into()])
}

fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    if args.labels.is_none() && args.xy.is_none() {
        return Err(CliError::Usage("analyze needs --labels and/or --xy".into()));
    }
    ensure_out(&args.common)?;
    let mut outputs = Vec::new();
    if let Some(labels_path) = &args.labels {
        require_exists(labels_path, "label file")?;
        let text = fs::read_to_string(labels_path).map_err(runtime)?;
        let labels = parse_failure_labels(&text).map_err(runtime)?;
        let tally = tally_failures(&labels);
        let rendered: BTreeMap<String, usize> =
            tally.iter().map(|(k, v)| (format!("{k:?}"), *v)).collect();
        let body = serde_json::to_string_pretty(
            &serde_json::json!({"tally": rendered, "total": labels.len()}),
        )
        .map_err(runtime)?;
        fs::write(args.common.out.join("failure_tally.json"), body + "\n").map_err(runtime)?;
        outputs.push("failure_tally.json".into());
    }
    if let Some(xy_path) = &args.xy {
        require_exists(xy_path, "xy file")?;
        let text = fs::read_to_string(xy_path).map_err(runtime)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for line in text.lines().skip(1) {
            let (x, y) = line
                .split_once(',')
                .ok_or_else(|| CliError::Usage(format!("bad xy row: {line:?}")))?;
            xs.push(x.trim().parse::<f64>().map_err(runtime)?);
            ys.push(y.trim().parse::<f64>().map_err(runtime)?);
        }
        let fit = fit_linear(&xs, &ys).map_err(runtime)?;
        let body = serde_json::to_string_pretty(&fit).map_err(runtime)?;
        fs::write(args.common.out.join("regression.json"), body + "\n").map_err(runtime)?;
        outputs.push("regression.json".into());
    }
    write_manifest(&args.common.out, "analyze", args, outputs)
}

fn attack_examiner(args: &AttackArgs) -> Result<(), CliError> {
    require_exists(&args.queries, "query file")?;
    require_exists(&args.exam_names, "exam-name dictionary")?;
    require_exists(&args.record, "record")?;
    ensure_out(&args.common)?;
    let language = parse_language(&args.common.language)?;
    let queries = load_attack_queries(&args.queries).map_err(runtime)?;
    let dict = Arc::new(ExamNameDictionary::load(&args.exam_names).map_err(runtime)?);
    let raw = fs::read_to_string(&args.record).map_err(runtime)?;
    let record = crate::records::parse_record(&raw).map_err(runtime)?;
    let examiner = ExaminerAgent {
        view: record.objective.clone(),
        extractor: Extractor::RuleBased(dict),
        aliases: AliasTable::default(),
        language,
    };
    let mut refused = 0;
    let mut leaked = Vec::new();
    let mut rows = Vec::new();
    for query in &queries {
        let (items, answer) = examiner.answer_query(query).map_err(runtime)?;
        let disclosed = record
            .objective
            .iter()
            .flat_map(|e| e.findings.iter())
            .any(|f| answer.contains(&f.value));
        if items.is_empty() && !disclosed {
            refused += 1;
        } else if disclosed {
            leaked.push(query.clone());
        }
        rows.push(serde_json::json!({"query": query, "items": items.len(), "refused": items.is_empty()}));
    }
    let body = serde_json::to_string_pretty(&serde_json::json!({
        "queries": queries.len(),
        "refused": refused,
        "leaked": leaked,
        "rows": rows,
    }))
    .map_err(runtime)?;
    fs::write(args.common.out.join("attack_report.json"), body + "\n").map_err(runtime)?;
    write_manifest(&args.common.out, "attack-examiner", args, vec!["attack_report.json".into()])
}
