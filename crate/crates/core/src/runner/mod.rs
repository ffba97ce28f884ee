//! End-to-end experiment orchestration.
//!
//! One run draws a single stratified sample and evaluates it under every
//! (model, strategy) cell. Models and strategies are processed in sequence;
//! records within a cell fan out over a bounded worker pool.

mod config;
mod transcript;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crash_data::{
    parse_records, stratified_sample, CrashRecord, DataError, Dataset, SchemaMap, SeverityClass,
};
use crate::label_extraction::{extract_label, PredictedLabel};
use crate::llm_client::{
    request_digest, ChatBackend, ClientError, DecodingParams, HttpBackend, LlmClient, ModelSpec, ResponseCache,
    RetryPolicy,
};
use crate::metrics::{markdown_table, report, EvaluationReport};
use crate::narrative::{DisplayMappings, KnowledgeFact, Narrative, NarrativeError, NarrativeTemplate, Narrator};
use crate::prompting::{assemble, select_exemplars, Exemplar, PromptError, PromptStrategy, Shot, PROMPT_VERSION};
use crate::reasoning_analysis::{emit_table, term_frequencies, Stopwords, TermFrequencyTable};

pub use config::ExperimentConfig;
pub use transcript::{
    cells, read_transcript, rescore, rescore_entries, RecordFailure, TranscriptEntry, TranscriptWriter,
};

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const REPORTS_FILE: &str = "reports.json";
pub const SUMMARY_FILE: &str = "summary.md";
pub const MANIFEST_FILE: &str = "sample.json";
pub const TERMS_DIR: &str = "terms";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Narrative(#[from] NarrativeError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("transcript line {line} is corrupt: {reason}")]
    CorruptTranscript { line: usize, reason: String },
}

impl RunError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        RunError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Short machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Io { .. } => "io",
            RunError::Data(_) => "data",
            RunError::Narrative(_) => "narrative",
            RunError::Prompt(_) => "prompt",
            RunError::Client(e) => e.kind(),
            RunError::CorruptTranscript { .. } => "corrupt_transcript",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub record_id: String,
    pub class: SeverityClass,
}

/// Which records a run evaluated, and which served as exemplars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub seed: u64,
    pub n_per_class: usize,
    pub records: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplars: Vec<ManifestEntry>,
}

impl SampleManifest {
    pub fn new(sample: &Dataset, n_per_class: usize, seed: u64) -> Self {
        SampleManifest {
            seed,
            n_per_class,
            records: sample
                .records()
                .iter()
                .map(|r| ManifestEntry {
                    record_id: r.record_id.clone(),
                    class: sample.class_of(r),
                })
                .collect(),
            exemplars: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Model-major, then strategy order as configured.
    pub reports: Vec<EvaluationReport<f64>>,
    pub manifest: SampleManifest,
    /// Records that ended Unresolved because of an error.
    pub failures: usize,
    pub output_dir: PathBuf,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, RunError> {
    let schema = match &cfg.schema_map_path {
        Some(p) => SchemaMap::from_json(&read(p)?)?,
        None => SchemaMap::default(),
    };
    let file = std::fs::File::open(&cfg.data_path).map_err(|e| RunError::io(&cfg.data_path, e))?;
    Ok(parse_records(file, &schema, cfg.severity_mapping.unwrap_or_default())?)
}

pub fn load_narrator(cfg: &ExperimentConfig) -> Result<Narrator, RunError> {
    let mut narrator = Narrator::default();
    if let Some(p) = &cfg.template_path {
        narrator.template = NarrativeTemplate::parse(&read(p)?)?;
    }
    if let Some(p) = &cfg.display_mappings_path {
        narrator.mappings = DisplayMappings::from_json(&read(p)?)?;
    }
    if let Some(p) = &cfg.knowledge_facts_path {
        narrator.facts = KnowledgeFact::load_json(&read(p)?)?;
    }
    Ok(narrator)
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|e| RunError::io(path, e))
}

/// Loads data and assets from `cfg`, then runs against `backend`.
pub fn run(cfg: &ExperimentConfig, backend: Arc<dyn ChatBackend>) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let narrator = load_narrator(cfg)?;
    run_dataset(cfg, &data, &narrator, backend)
}

/// [`run`] against the configured HTTP endpoints.
pub fn run_live(cfg: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    let backend = HttpBackend::new(Duration::from_secs(cfg.request_timeout_s))
        .map_err(|e| RunError::Config(format!("cannot build HTTP client: {e:?}")))?;
    run(cfg, Arc::new(backend))
}

struct Cell<'a> {
    strategy: PromptStrategy,
    model: &'a ModelSpec,
    params: DecodingParams,
}

struct Shared<'a> {
    sample: &'a Dataset,
    narratives: &'a [Result<Narrative, NarrativeError>],
    exemplars: &'a [Exemplar],
    client: &'a LlmClient,
    cache: Option<&'a ResponseCache>,
}

/// Runs on an already-loaded dataset.
pub fn run_dataset(
    cfg: &ExperimentConfig,
    data: &Dataset,
    narrator: &Narrator,
    backend: Arc<dyn ChatBackend>,
) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let sample = stratified_sample(data, cfg.n_per_class, cfg.seed)?;
    let mut manifest = SampleManifest::new(&sample, cfg.n_per_class, cfg.seed);

    let exemplars = if cfg.strategies.iter().any(|s| s.shot == Shot::Few) {
        let exclude: HashSet<String> = sample.records().iter().map(|r| r.record_id.clone()).collect();
        select_exemplars(data, cfg.exemplar_seed(), &exclude, narrator)?
    } else {
        Vec::new()
    };
    manifest.exemplars = exemplars
        .iter()
        .map(|e| ManifestEntry {
            record_id: e.narrative.source_record_id.clone(),
            class: e.label,
        })
        .collect();

    let narratives: Vec<_> = sample.records().iter().map(|r| narrator.narrate(r)).collect();
    let cache = cfg.cache_path.as_deref().map(ResponseCache::open).transpose()?;
    let client = LlmClient::new(backend)
        .with_retry(RetryPolicy {
            max_retries: cfg.max_retries,
            ..RetryPolicy::default()
        })
        .with_min_interval(Duration::from_millis(cfg.min_request_interval_ms));
    let shared = Shared {
        sample: &sample,
        narratives: &narratives,
        exemplars: &exemplars,
        client: &client,
        cache: cache.as_ref(),
    };

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| RunError::io(out, e))?;
    write(&out.join(MANIFEST_FILE), &to_json(&manifest)?)?;
    let mut writer = TranscriptWriter::create(&out.join(TRANSCRIPT_FILE))?;
    let stopwords = Stopwords::shipped();

    let mut reports = Vec::new();
    let mut failures = 0;
    for model in &cfg.models {
        let params = model.effective_params(&cfg.params);
        for &strategy in &cfg.strategies {
            tracing::info!(model = %model.model_id, %strategy, records = sample.len(), "evaluating");
            let cell = Cell { strategy, model, params };
            let entries = evaluate_cell(&shared, &cell, cfg.parallelism);
            writer.append(&entries)?;
            failures += entries.iter().filter(|e| e.error.is_some()).count();
            let pairs: Vec<_> = entries.iter().map(|e| (e.true_label, e.extracted)).collect();
            reports.push(report(&pairs, strategy, &model.model_id));
            if strategy.cot {
                write_term_tables(out, &model.model_id, strategy, &entries, &stopwords, cfg.top_k_terms)?;
            }
        }
    }
    write_reports(out, &reports)?;
    Ok(RunOutcome {
        reports,
        manifest,
        failures,
        output_dir: out.clone(),
    })
}

/// Writes `reports.json` and `summary.md`.
pub fn write_reports(dir: &Path, reports: &[EvaluationReport<f64>]) -> Result<(), RunError> {
    write(&dir.join(REPORTS_FILE), &to_json(reports)?)?;
    write(&dir.join(SUMMARY_FILE), &markdown_table(reports))
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, RunError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| RunError::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn file_slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn write_term_tables(
    out: &Path,
    model_id: &str,
    strategy: PromptStrategy,
    entries: &[TranscriptEntry],
    stopwords: &Stopwords,
    k: usize,
) -> Result<(), RunError> {
    let rows: Vec<_> = entries.iter().collect();
    let dir = out.join(TERMS_DIR).join(file_slug(model_id));
    std::fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
    for (class, table) in term_tables_from_entries(&rows, stopwords) {
        write(&dir.join(format!("{strategy}_{class}.tsv")), &emit_table(&table, k))?;
    }
    Ok(())
}

fn evaluate_cell(shared: &Shared<'_>, cell: &Cell<'_>, parallelism: usize) -> Vec<TranscriptEntry> {
    let n = shared.sample.len();
    let next = AtomicUsize::new(0);
    let workers = parallelism.min(n).max(1);
    let mut results: Vec<(usize, TranscriptEntry)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break local;
                        }
                        local.push((i, evaluate_record(shared, cell, i)));
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);
    results.into_iter().map(|(_, e)| e).collect()
}

fn evaluate_record(shared: &Shared<'_>, cell: &Cell<'_>, i: usize) -> TranscriptEntry {
    let record: &CrashRecord = &shared.sample.records()[i];
    let mut entry = TranscriptEntry {
        record_id: record.record_id.clone(),
        strategy: cell.strategy,
        model_id: cell.model.model_id.clone(),
        prompt_version: PROMPT_VERSION.to_string(),
        digest: None,
        messages: Vec::new(),
        raw_response: None,
        cached: false,
        attempts: 0,
        latency_ms: 0,
        sampling_disabled: false,
        extracted: PredictedLabel::Unresolved,
        true_label: shared.sample.class_of(record),
        error: None,
    };
    let fail = |mut entry: TranscriptEntry, kind: &str, message: String| {
        tracing::warn!(
            record = %entry.record_id,
            strategy = %entry.strategy,
            model = %entry.model_id,
            kind,
            %message,
            "record failed"
        );
        entry.error = Some(RecordFailure {
            kind: kind.to_string(),
            message,
        });
        entry
    };

    let narrative = match &shared.narratives[i] {
        Ok(n) => n,
        Err(e) => return fail(entry, "narrative", e.to_string()),
    };
    let exemplars = match cell.strategy.shot {
        Shot::Zero => &[][..],
        Shot::Few => shared.exemplars,
    };
    let prompt = match assemble(cell.strategy, narrative, exemplars) {
        Ok(p) => p,
        Err(e) => return fail(entry, "prompt", e.to_string()),
    };
    entry.digest = Some(request_digest(&cell.model.model_id, &prompt.messages, &cell.params));
    entry.messages = prompt.messages.clone();

    let response = match shared.cache {
        Some(cache) => shared.client.cached_complete(&prompt, cell.model, &cell.params, cache),
        None => shared.client.complete(&prompt, cell.model, &cell.params),
    };
    match response {
        Ok(r) => {
            entry.extracted = extract_label(&r.text, cell.strategy.pe);
            entry.raw_response = Some(r.text);
            entry.cached = r.cached;
            entry.attempts = r.attempts;
            entry.latency_ms = r.latency_ms;
            entry.sampling_disabled = r.sampling_disabled;
            entry
        }
        Err(e) => fail(entry, e.kind(), e.to_string()),
    }
}

/// Per-class term tables for one cell's transcript rows.
pub fn term_tables_from_entries(
    entries: &[&TranscriptEntry],
    stopwords: &Stopwords,
) -> BTreeMap<SeverityClass, TermFrequencyTable> {
    let responses: Vec<_> = entries
        .iter()
        .filter_map(|e| Some((e.raw_response.as_deref()?, e.true_label, e.extracted)))
        .collect();
    term_frequencies(&responses, stopwords)
}
