use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crash_data::SeverityClass;
use crate::label_extraction::{extract_label, PredictedLabel};
use crate::metrics::{report, EvaluationReport};
use crate::prompting::{ChatMessage, PromptStrategy};

use super::RunError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub kind: String,
    pub message: String,
}

/// One line of `transcript.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub record_id: String,
    pub strategy: PromptStrategy,
    pub model_id: String,
    pub prompt_version: String,
    /// Absent when the prompt could not be built.
    pub digest: Option<String>,
    pub messages: Vec<ChatMessage>,
    /// Absent when the request failed.
    pub raw_response: Option<String>,
    pub cached: bool,
    pub attempts: u32,
    pub latency_ms: u64,
    pub sampling_disabled: bool,
    pub extracted: PredictedLabel,
    pub true_label: SeverityClass,
    pub error: Option<RecordFailure>,
}

impl TranscriptEntry {
    /// Prediction recomputed from the stored response.
    pub fn reextract(&self, pe: bool) -> PredictedLabel {
        match (&self.raw_response, &self.error) {
            (Some(text), None) => extract_label(text, pe),
            _ => PredictedLabel::Unresolved,
        }
    }
}

/// Serialized, line-at-a-time appends.
pub struct TranscriptWriter {
    file: File,
}

impl TranscriptWriter {
    /// Starts a fresh transcript, replacing any previous one.
    pub fn create(path: &Path) -> Result<Self, RunError> {
        let file = File::create(path).map_err(|e| RunError::io(path, e))?;
        Ok(TranscriptWriter { file })
    }

    pub fn append(&mut self, entries: &[TranscriptEntry]) -> Result<(), RunError> {
        let mut buf = Vec::new();
        for e in entries {
            serde_json::to_writer(&mut buf, e).map_err(|e| RunError::Config(e.to_string()))?;
            buf.push(b'\n');
        }
        self.file
            .write_all(&buf)
            .and_then(|_| self.file.flush())
            .map_err(|e| RunError::Io {
                path: "transcript".into(),
                message: e.to_string(),
            })
    }
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, RunError> {
    let file = File::open(path).map_err(|e| RunError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RunError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| RunError::CorruptTranscript {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Groups entries by (model, strategy) in order of first appearance.
pub fn cells(entries: &[TranscriptEntry]) -> Vec<((String, PromptStrategy), Vec<&TranscriptEntry>)> {
    let mut order: Vec<((String, PromptStrategy), Vec<&TranscriptEntry>)> = Vec::new();
    for e in entries {
        let key = (e.model_id.clone(), e.strategy);
        match order.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(e),
            None => order.push((key, vec![e])),
        }
    }
    order
}

/// Re-runs extraction and scoring on stored responses.
///
/// `pe_overrides` replaces the label set used for extraction per strategy
/// name; otherwise the strategy's own setting applies.
pub fn rescore_entries(
    entries: &[TranscriptEntry],
    pe_overrides: &BTreeMap<String, bool>,
) -> Vec<EvaluationReport<f64>> {
    cells(entries)
        .into_iter()
        .map(|((model_id, strategy), rows)| {
            let pe = pe_overrides.get(strategy.name()).copied().unwrap_or(strategy.pe);
            let pairs: Vec<_> = rows.iter().map(|e| (e.true_label, e.reextract(pe))).collect();
            report(&pairs, strategy, &model_id)
        })
        .collect()
}

pub fn rescore(path: &Path, pe_overrides: &BTreeMap<String, bool>) -> Result<Vec<EvaluationReport<f64>>, RunError> {
    Ok(rescore_entries(&read_transcript(path)?, pe_overrides))
}
