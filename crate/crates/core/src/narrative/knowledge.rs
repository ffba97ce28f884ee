use serde::{Deserialize, Serialize};

use crate::crash_data::{CrashRecord, Field};

use super::{Narrative, NarrativeError};

const DEFAULT_FACTS: &str = include_str!("../../assets/narrative/knowledge_facts.json");

/// Predicate over record fields deciding whether a fact applies.
///
/// Value comparisons are ASCII case-insensitive against the raw cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Applicability {
    Always,
    Known(Field),
    Equals { field: Field, value: String },
    OneOf { field: Field, values: Vec<String> },
    All(Vec<Applicability>),
    Any(Vec<Applicability>),
    Not(Box<Applicability>),
}

impl Applicability {
    pub fn holds(&self, record: &CrashRecord) -> bool {
        match self {
            Applicability::Always => true,
            Applicability::Known(f) => record.get(*f).is_some(),
            Applicability::Equals { field, value } => record
                .get(*field)
                .is_some_and(|v| v.eq_ignore_ascii_case(value)),
            Applicability::OneOf { field, values } => record
                .get(*field)
                .is_some_and(|v| values.iter().any(|x| v.eq_ignore_ascii_case(x))),
            Applicability::All(ps) => ps.iter().all(|p| p.holds(record)),
            Applicability::Any(ps) => ps.iter().any(|p| p.holds(record)),
            Applicability::Not(p) => !p.holds(record),
        }
    }
}

/// A declarative domain sentence appended to narratives it applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFact")]
pub struct KnowledgeFact {
    text: String,
    #[serde(rename = "when")]
    applicability: Applicability,
}

#[derive(Deserialize)]
struct RawFact {
    text: String,
    when: Applicability,
}

impl TryFrom<RawFact> for KnowledgeFact {
    type Error = NarrativeError;

    fn try_from(raw: RawFact) -> Result<Self, Self::Error> {
        KnowledgeFact::new(raw.text, raw.when)
    }
}

impl KnowledgeFact {
    /// `text` must read as a complete sentence: capitalised, terminated.
    pub fn new(text: impl Into<String>, applicability: Applicability) -> Result<Self, NarrativeError> {
        let text = text.into().trim().to_string();
        let capitalised = text.chars().next().is_some_and(|c| c.is_uppercase() || c.is_numeric());
        let terminated = text.ends_with(['.', '!', '?']);
        if !capitalised || !terminated {
            return Err(NarrativeError::InvalidFact(format!("not a complete sentence: `{text}`")));
        }
        Ok(KnowledgeFact { text, applicability })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn applicability(&self) -> &Applicability {
        &self.applicability
    }

    pub fn load_json(text: &str) -> Result<Vec<KnowledgeFact>, NarrativeError> {
        serde_json::from_str(text).map_err(|e| NarrativeError::InvalidFact(e.to_string()))
    }
}

/// The facts shipped with the crate.
pub fn default_knowledge_facts() -> Vec<KnowledgeFact> {
    KnowledgeFact::load_json(DEFAULT_FACTS).expect("shipped facts parse")
}

/// Appends, in order, every fact whose predicate holds for `record`.
pub fn augment_with_knowledge(mut n: Narrative, facts: &[KnowledgeFact], record: &CrashRecord) -> Narrative {
    for fact in facts.iter().filter(|f| f.applicability.holds(record)) {
        if !n.text.is_empty() {
            n.text.push(' ');
        }
        n.text.push_str(&fact.text);
    }
    n
}
