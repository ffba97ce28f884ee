//! Prompt strategies and chat prompt assembly.
//!
//! The clause wording lives in versioned text assets under
//! `assets/prompts/v1/`. Persona and task framing go in the system message;
//! exemplars and the subject narrative go in a single user message.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crash_data::{Dataset, SeverityClass};
use crate::narrative::{Narrative, NarrativeError, Narrator};

pub const PROMPT_VERSION: &str = "v1";

const TASK: &str = include_str!("../../assets/prompts/v1/task.txt");
const INSTRUCTION_PLAIN: &str = include_str!("../../assets/prompts/v1/instruction_plain.txt");
const INSTRUCTION_COT: &str = include_str!("../../assets/prompts/v1/instruction_cot.txt");
const SUBJECT: &str = include_str!("../../assets/prompts/v1/subject.txt");
const FEW_INTRO: &str = include_str!("../../assets/prompts/v1/few_intro.txt");
const EXEMPLAR: &str = include_str!("../../assets/prompts/v1/exemplar.txt");
const FEW_OUTRO: &str = include_str!("../../assets/prompts/v1/few_outro.txt");

pub const FATAL_LABEL: &str = "Fatal accident";
pub const SOFT_FATAL_LABEL: &str = "Serious accident with potentially fatal outcomes";
pub const SERIOUS_LABEL: &str = "Serious injury accident";
pub const MINOR_LABEL: &str = "Minor or non-injury accident";

/// Order in which few-shot exemplars are rendered.
pub const EXEMPLAR_ORDER: [SeverityClass; 3] = [
    SeverityClass::MinorOrNonInjury,
    SeverityClass::SeriousInjury,
    SeverityClass::Fatal,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("expected {expected} exemplars with one per class, got {found} covering {distinct} classes")]
    ExemplarCardinality {
        expected: usize,
        found: usize,
        distinct: usize,
    },
    #[error("exemplar `{record_id}` is also the subject record")]
    ExemplarOverlap { record_id: String },
    #[error("no eligible exemplar for class {class}")]
    InsufficientClassPopulation { class: SeverityClass },
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error(transparent)]
    Narrative(#[from] NarrativeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shot {
    Zero,
    Few,
}

/// One cell of the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PromptStrategy {
    pub shot: Shot,
    pub pe: bool,
    pub cot: bool,
}

impl PromptStrategy {
    pub const ZS: Self = Self::new(Shot::Zero, false, false);
    pub const ZS_COT: Self = Self::new(Shot::Zero, false, true);
    pub const ZS_PE: Self = Self::new(Shot::Zero, true, false);
    pub const ZS_PE_COT: Self = Self::new(Shot::Zero, true, true);
    pub const FS: Self = Self::new(Shot::Few, false, false);
    pub const FS_PE: Self = Self::new(Shot::Few, true, false);
    pub const FS_COT: Self = Self::new(Shot::Few, false, true);
    pub const FS_PE_COT: Self = Self::new(Shot::Few, true, true);

    /// The six settings of the published experiment matrix.
    pub const PAPER: [Self; 6] = [Self::ZS, Self::ZS_COT, Self::ZS_PE, Self::ZS_PE_COT, Self::FS, Self::FS_PE];
    /// Every constructible combination.
    pub const ALL: [Self; 8] = [
        Self::ZS,
        Self::ZS_COT,
        Self::ZS_PE,
        Self::ZS_PE_COT,
        Self::FS,
        Self::FS_PE,
        Self::FS_COT,
        Self::FS_PE_COT,
    ];

    pub const fn new(shot: Shot, pe: bool, cot: bool) -> Self {
        PromptStrategy { shot, pe, cot }
    }

    /// Few-shot with chain-of-thought was not part of the published matrix.
    pub fn is_extra_paper(self) -> bool {
        self.shot == Shot::Few && self.cot
    }

    pub fn name(self) -> &'static str {
        match (self.shot, self.pe, self.cot) {
            (Shot::Zero, false, false) => "ZS",
            (Shot::Zero, false, true) => "ZS_CoT",
            (Shot::Zero, true, false) => "ZS_PE",
            (Shot::Zero, true, true) => "ZS_PE_CoT",
            (Shot::Few, false, false) => "FS",
            (Shot::Few, true, false) => "FS_PE",
            (Shot::Few, false, true) => "FS_CoT",
            (Shot::Few, true, true) => "FS_PE_CoT",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptStrategy {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptStrategy::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| PromptError::UnknownStrategy(s.to_string()))
    }
}

impl Serialize for PromptStrategy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for PromptStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Display names for the three classes under one prompt-engineering setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSet {
    pub fatal_display: &'static str,
    pub serious_display: &'static str,
    pub minor_display: &'static str,
}

impl LabelSet {
    pub fn display(&self, class: SeverityClass) -> &'static str {
        match class {
            SeverityClass::Fatal => self.fatal_display,
            SeverityClass::SeriousInjury => self.serious_display,
            SeverityClass::MinorOrNonInjury => self.minor_display,
        }
    }

    /// `(class, display)` pairs in [`SeverityClass::ALL`] order.
    pub fn entries(&self) -> [(SeverityClass, &'static str); 3] {
        SeverityClass::ALL.map(|c| (c, self.display(c)))
    }
}

/// Labels offered to the model; prompt engineering softens the fatal label.
pub fn label_set(pe: bool) -> LabelSet {
    LabelSet {
        fatal_display: if pe { SOFT_FATAL_LABEL } else { FATAL_LABEL },
        serious_display: SERIOUS_LABEL,
        minor_display: MINOR_LABEL,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub narrative: Narrative,
    pub label: SeverityClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }
}

/// A role-tagged message sequence ready for a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatPrompt {
    pub messages: Vec<ChatMessage>,
    pub strategy: PromptStrategy,
    pub subject_record_id: String,
    pub extra_paper: bool,
}

/// Substitutes `{key}` markers in one pass; substituted text is not rescanned.
fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after
            .find('}')
            .and_then(|close| vars.iter().find(|(k, _)| *k == &after[..close]).map(|(_, v)| (close, v)));
        match hit {
            Some((close, v)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Persona, categories and the strategy-specific instruction.
///
/// The task paragraph is identical across CoT settings; only the paragraph
/// after the blank line differs.
pub fn build_system_prompt(strategy: PromptStrategy) -> String {
    let labels = label_set(strategy.pe);
    let task = fill(
        TASK,
        &[
            ("fatal", labels.fatal_display),
            ("serious", labels.serious_display),
            ("minor", labels.minor_display),
        ],
    );
    let instruction = if strategy.cot { INSTRUCTION_COT } else { INSTRUCTION_PLAIN };
    format!("{task}\n\n{instruction}")
}

#[cfg(test)]
fn instruction_clauses() -> (&'static str, &'static str) {
    (INSTRUCTION_PLAIN, INSTRUCTION_COT)
}

/// Builds the chat prompt for `subject` under `strategy`.
pub fn assemble(
    strategy: PromptStrategy,
    subject: &Narrative,
    exemplars: &[Exemplar],
) -> Result<ChatPrompt, PromptError> {
    let expected = match strategy.shot {
        Shot::Zero => 0,
        Shot::Few => EXEMPLAR_ORDER.len(),
    };
    let distinct: HashSet<SeverityClass> = exemplars.iter().map(|e| e.label).collect();
    if exemplars.len() != expected || distinct.len() != expected {
        return Err(PromptError::ExemplarCardinality {
            expected,
            found: exemplars.len(),
            distinct: distinct.len(),
        });
    }
    if let Some(e) = exemplars
        .iter()
        .find(|e| e.narrative.source_record_id == subject.source_record_id)
    {
        return Err(PromptError::ExemplarOverlap {
            record_id: e.narrative.source_record_id.clone(),
        });
    }

    let subject_block = fill(SUBJECT, &[("narrative", &subject.text)]);
    let user = match strategy.shot {
        Shot::Zero => subject_block,
        Shot::Few => {
            let labels = label_set(strategy.pe);
            let mut parts = vec![FEW_INTRO.to_string()];
            for (i, class) in EXEMPLAR_ORDER.iter().enumerate() {
                let ex = exemplars.iter().find(|e| e.label == *class).expect("cardinality checked");
                let index = (i + 1).to_string();
                parts.push(fill(
                    EXEMPLAR,
                    &[
                        ("index", &index),
                        ("narrative", &ex.narrative.text),
                        ("label", labels.display(*class)),
                    ],
                ));
            }
            parts.push(FEW_OUTRO.to_string());
            parts.push(subject_block);
            parts.join("\n\n")
        }
    };

    Ok(ChatPrompt {
        messages: vec![ChatMessage::system(build_system_prompt(strategy)), ChatMessage::user(user)],
        strategy,
        subject_record_id: subject.source_record_id.clone(),
        extra_paper: strategy.is_extra_paper(),
    })
}

/// Picks one exemplar per class, skipping excluded record ids.
///
/// Returned in [`EXEMPLAR_ORDER`].
pub fn select_exemplars(
    ds: &Dataset,
    seed: u64,
    exclude: &HashSet<String>,
    narrator: &Narrator,
) -> Result<Vec<Exemplar>, PromptError> {
    let mut out = Vec::with_capacity(EXEMPLAR_ORDER.len());
    for class in EXEMPLAR_ORDER {
        let pool: Vec<_> = ds
            .records_of(class)
            .filter(|r| !exclude.contains(&r.record_id))
            .collect();
        if pool.is_empty() {
            return Err(PromptError::InsufficientClassPopulation { class });
        }
        let pick = crate::crash_data::class_rng(seed, class).random_range(0..pool.len());
        out.push(Exemplar {
            narrative: narrator.narrate(pool[pick])?,
            label: class,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crash_data::{CrashRecord, Field, RawSeverityCode, SeverityMapping};

    fn narrative(id: &str, text: &str) -> Narrative {
        Narrative {
            text: text.into(),
            source_record_id: id.into(),
            template_name: "default".into(),
        }
    }

    fn exemplars() -> Vec<Exemplar> {
        vec![
            Exemplar { narrative: narrative("e-f", "Fatal exemplar text."), label: SeverityClass::Fatal },
            Exemplar { narrative: narrative("e-s", "Serious exemplar text."), label: SeverityClass::SeriousInjury },
            Exemplar { narrative: narrative("e-m", "Minor exemplar text."), label: SeverityClass::MinorOrNonInjury },
        ]
    }

    #[test]
    fn label_sets() {
        assert_eq!(label_set(false).fatal_display, "Fatal accident");
        assert_eq!(label_set(true).fatal_display, "Serious accident with potentially fatal outcomes");
        for pe in [false, true] {
            assert_eq!(label_set(pe).serious_display, "Serious injury accident");
            assert_eq!(label_set(pe).minor_display, "Minor or non-injury accident");
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        let names: Vec<_> = PromptStrategy::PAPER.iter().map(|s| s.name()).collect();
        assert_eq!(names, ["ZS", "ZS_CoT", "ZS_PE", "ZS_PE_CoT", "FS", "FS_PE"]);
        for s in PromptStrategy::ALL {
            assert_eq!(s.name().parse::<PromptStrategy>().unwrap(), s);
            assert_eq!(s.is_extra_paper(), !PromptStrategy::PAPER.contains(&s));
        }
        assert!("ZS_COT".parse::<PromptStrategy>().is_err());
        assert_eq!(serde_json::to_string(&PromptStrategy::ZS_PE_COT).unwrap(), "\"ZS_PE_CoT\"");
    }

    #[test]
    fn zero_shot_system_prompt() {
        let s = build_system_prompt(PromptStrategy::ZS);
        assert!(s.contains("professional road safety engineer"));
        assert!(s.contains("Victoria, Australia"));
        assert!(s.contains("Fatal accident"));
        assert!(s.contains("output only the classification result"));
        assert!(!s.contains("step by step"));
    }

    #[test]
    fn pe_cot_system_prompt() {
        let s = build_system_prompt(PromptStrategy::ZS_PE_COT);
        assert!(s.contains(SOFT_FATAL_LABEL));
        assert!(s.contains("think step by step"));
        assert!(s.contains("determine both the cause and the severity outcome"));
        assert!(!s.contains("Fatal accident"));
        assert!(!s.contains("output only the classification result"));
    }

    #[test]
    fn cot_diff_is_confined_to_instruction() {
        let plain = build_system_prompt(PromptStrategy::ZS);
        let cot = build_system_prompt(PromptStrategy::ZS_COT);
        let (p_task, p_instr) = plain.split_once("\n\n").unwrap();
        let (c_task, c_instr) = cot.split_once("\n\n").unwrap();
        assert_eq!(p_task, c_task);
        assert_ne!(p_instr, c_instr);
        assert_eq!((p_instr, c_instr), instruction_clauses());
    }

    #[test]
    fn zero_shot_layout() {
        let p = assemble(PromptStrategy::ZS, &narrative("s", "Subject text."), &[]).unwrap();
        assert_eq!(p.messages.len(), 2);
        assert_eq!(p.messages[0].role, Role::System);
        assert_eq!(p.messages[1].role, Role::User);
        assert!(p.messages[1].content.contains("Subject text."));
        assert_eq!(p.subject_record_id, "s");
        assert!(!p.extra_paper);
    }

    #[test]
    fn few_shot_layout() {
        let p = assemble(PromptStrategy::FS, &narrative("s", "Subject text."), &exemplars()).unwrap();
        let user = &p.messages[1].content;
        assert_eq!(user.matches("Crash description:").count(), 4);
        for label in [FATAL_LABEL, SERIOUS_LABEL, MINOR_LABEL] {
            assert_eq!(user.matches(label).count(), 1, "{label}");
        }
        // fixed order: minor, serious, fatal, then the subject last
        let pos = |s: &str| user.find(s).unwrap();
        assert!(pos("Minor exemplar") < pos("Serious exemplar"));
        assert!(pos("Serious exemplar") < pos("Fatal exemplar"));
        assert!(pos("Fatal exemplar") < pos("Subject text."));
        assert!(user.ends_with("Subject text."));
    }

    #[test]
    fn few_shot_pe_uses_soft_label() {
        let p = assemble(PromptStrategy::FS_PE, &narrative("s", "Subject text."), &exemplars()).unwrap();
        let user = &p.messages[1].content;
        assert!(user.contains(&format!("Fatal exemplar text.\nSeverity outcome: {SOFT_FATAL_LABEL}")));
        assert!(!p.messages.iter().any(|m| m.content.contains(FATAL_LABEL)));
    }

    #[test]
    fn exemplar_validation() {
        let subject = narrative("s", "Subject.");
        let mut two = exemplars();
        two.pop();
        assert!(matches!(
            assemble(PromptStrategy::FS, &subject, &two),
            Err(PromptError::ExemplarCardinality { found: 2, .. })
        ));
        let mut dup = exemplars();
        dup[2].label = SeverityClass::Fatal;
        assert!(matches!(
            assemble(PromptStrategy::FS, &subject, &dup),
            Err(PromptError::ExemplarCardinality { distinct: 2, .. })
        ));
        assert!(matches!(
            assemble(PromptStrategy::ZS, &subject, &exemplars()),
            Err(PromptError::ExemplarCardinality { expected: 0, .. })
        ));
        let overlap = narrative("e-s", "Subject.");
        assert_eq!(
            assemble(PromptStrategy::FS, &overlap, &exemplars()).unwrap_err(),
            PromptError::ExemplarOverlap { record_id: "e-s".into() }
        );
    }

    #[test]
    fn extra_paper_flag() {
        let p = assemble(PromptStrategy::FS_PE_COT, &narrative("s", "Subject."), &exemplars()).unwrap();
        assert!(p.extra_paper);
    }

    #[test]
    fn fill_does_not_rescan() {
        assert_eq!(fill("a {x} {y} {z}", &[("x", "{y}"), ("y", "Y")]), "a {y} Y {z}");
    }

    fn tiny_dataset() -> Dataset {
        let recs = vec![
            CrashRecord::new("f1", RawSeverityCode::FATAL).with(Field::Lamps, "yes"),
            CrashRecord::new("s1", RawSeverityCode::SERIOUS_INJURY).with(Field::Lamps, "yes"),
            CrashRecord::new("m1", RawSeverityCode::MINOR_INJURY).with(Field::Lamps, "yes"),
        ];
        Dataset::new(recs, SeverityMapping::default()).unwrap()
    }

    #[test]
    fn select_forced_and_deterministic() {
        let ds = tiny_dataset();
        let n = Narrator::default();
        let picked = select_exemplars(&ds, 1, &HashSet::new(), &n).unwrap();
        let ids: Vec<_> = picked.iter().map(|e| e.narrative.source_record_id.as_str()).collect();
        assert_eq!(ids, ["m1", "s1", "f1"]);
        assert_eq!(picked, select_exemplars(&ds, 1, &HashSet::new(), &n).unwrap());
    }

    #[test]
    fn select_reports_exhausted_class() {
        let ds = tiny_dataset();
        let exclude: HashSet<String> = ["f1".to_string()].into();
        assert_eq!(
            select_exemplars(&ds, 1, &exclude, &Narrator::default()).unwrap_err(),
            PromptError::InsufficientClassPopulation { class: SeverityClass::Fatal }
        );
    }
}
