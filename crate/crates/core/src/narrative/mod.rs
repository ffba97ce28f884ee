//! Tabular-to-text narrative generation.

mod knowledge;
mod template;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crash_data::{CrashRecord, Field, UNKNOWN};

pub use knowledge::{augment_with_knowledge, default_knowledge_facts, Applicability, KnowledgeFact};
pub use template::{NarrativeTemplate, Segment};

const DEFAULT_TEMPLATE: &str = include_str!("../../assets/narrative/default.template");
const DEFAULT_DISPLAY_MAPPINGS: &str = include_str!("../../assets/narrative/display_mappings.json");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NarrativeError {
    #[error("template references unknown field `{name}`")]
    UnresolvedPlaceholder { name: String },
    #[error("template syntax error at char {offset}: {message}")]
    TemplateSyntax { offset: usize, message: String },
    #[error("narrative for record `{record_id}` is empty")]
    Empty { record_id: String },
    #[error("invalid display mapping: {0}")]
    InvalidMapping(String),
    #[error("invalid knowledge fact: {0}")]
    InvalidFact(String),
}

/// Rendered text for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Narrative {
    pub text: String,
    pub source_record_id: String,
    pub template_name: String,
}

/// Per-field tables turning code-like cell values into phrases.
///
/// A value mapped to `"Unknown"` is treated as unknown.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DisplayMappings(BTreeMap<Field, BTreeMap<String, String>>);

impl DisplayMappings {
    pub fn from_json(text: &str) -> Result<Self, NarrativeError> {
        serde_json::from_str(text).map_err(|e| NarrativeError::InvalidMapping(e.to_string()))
    }

    /// The mappings shipped with the crate.
    pub fn shipped() -> Self {
        DisplayMappings::from_json(DEFAULT_DISPLAY_MAPPINGS).expect("shipped display mappings parse")
    }

    pub fn insert(&mut self, field: Field, raw: impl Into<String>, display: impl Into<String>) {
        self.0.entry(field).or_default().insert(raw.into(), display.into());
    }

    /// Display text for a field, or `None` when the field is unknown.
    pub fn resolve(&self, record: &CrashRecord, field: Field) -> Option<String> {
        let raw = record.get(field)?;
        let shown = self
            .0
            .get(&field)
            .and_then(|m| m.get(raw))
            .map(String::as_str)
            .unwrap_or(raw);
        if shown.eq_ignore_ascii_case(UNKNOWN) {
            return None;
        }
        match field.unit() {
            Some(unit) if shown.parse::<f64>().is_ok() => Some(format!("{shown} {unit}")),
            _ => Some(shown.to_string()),
        }
    }
}

/// The canonical template covering every attribute group.
pub fn default_template() -> NarrativeTemplate {
    NarrativeTemplate::parse(DEFAULT_TEMPLATE).expect("shipped template parses")
}

/// Renders `record` with `template`.
///
/// Whitespace runs collapse to one space, and whitespace before `.` or `,`
/// is dropped, so a skipped conditional leaves no gap.
pub fn render_narrative(
    record: &CrashRecord,
    template: &NarrativeTemplate,
    mappings: &DisplayMappings,
) -> Result<Narrative, NarrativeError> {
    let mut raw = String::new();
    render_segments(&template.segments, record, mappings, &mut raw);
    let mut text = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !text.is_empty() && !word.starts_with(['.', ',']) {
            text.push(' ');
        }
        text.push_str(word);
    }
    if text.is_empty() {
        return Err(NarrativeError::Empty {
            record_id: record.record_id.clone(),
        });
    }
    Ok(Narrative {
        text,
        source_record_id: record.record_id.clone(),
        template_name: template.name.clone(),
    })
}

fn render_segments(segs: &[Segment], record: &CrashRecord, mappings: &DisplayMappings, out: &mut String) {
    for seg in segs {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Placeholder(f) => match mappings.resolve(record, *f) {
                Some(v) => out.push_str(&v),
                None => out.push_str(UNKNOWN),
            },
            Segment::Conditional { field, body } => {
                if mappings.resolve(record, *field).is_some() {
                    render_segments(body, record, mappings, out);
                }
            }
        }
    }
}

/// Template, display mappings and knowledge facts bundled for repeated use.
#[derive(Debug, Clone)]
pub struct Narrator {
    pub template: NarrativeTemplate,
    pub mappings: DisplayMappings,
    pub facts: Vec<KnowledgeFact>,
}

impl Default for Narrator {
    /// Default template and shipped mappings, no knowledge facts.
    fn default() -> Self {
        Narrator {
            template: default_template(),
            mappings: DisplayMappings::shipped(),
            facts: Vec::new(),
        }
    }
}

impl Narrator {
    pub fn narrate(&self, record: &CrashRecord) -> Result<Narrative, NarrativeError> {
        let n = render_narrative(record, &self.template, &self.mappings)?;
        Ok(augment_with_knowledge(n, &self.facts, record))
    }
}
