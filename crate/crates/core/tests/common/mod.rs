#![allow(dead_code)]

use std::fs::File;
use std::path::PathBuf;

use crash_severity::crash_data::{parse_records, SchemaMap, SeverityMapping};
use crash_severity::narrative::Narrator;
use crash_severity::prompting::{assemble, select_exemplars, ChatPrompt, Role};
use crash_severity::{CrashRecord, Dataset, PromptStrategy};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn load(name: &str) -> Dataset {
    let file = File::open(fixture(name)).unwrap();
    parse_records(file, &SchemaMap::default(), SeverityMapping::default()).unwrap()
}

pub fn synthetic() -> Dataset {
    load("synthetic_crashes.csv")
}

pub fn f1() -> CrashRecord {
    load("f1.csv").records()[0].clone()
}

/// Exemplar seed used for every golden prompt.
pub const GOLDEN_EXEMPLAR_SEED: u64 = 11;

pub fn f1_prompt(strategy: PromptStrategy) -> ChatPrompt {
    let narrator = Narrator::default();
    let subject = narrator.narrate(&f1()).unwrap();
    let exemplars = match strategy.shot {
        crash_severity::prompting::Shot::Zero => Vec::new(),
        crash_severity::prompting::Shot::Few => {
            select_exemplars(&synthetic(), GOLDEN_EXEMPLAR_SEED, &Default::default(), &narrator).unwrap()
        }
    };
    assemble(strategy, &subject, &exemplars).unwrap()
}

/// Plain-text rendering used for snapshot files.
pub fn render_prompt(p: &ChatPrompt) -> String {
    let mut out = String::new();
    for m in &p.messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
        };
        out.push_str(&format!("=== {role} ===\n{}\n", m.content));
    }
    out
}

/// Compares against a snapshot; `UPDATE_GOLDEN=1` rewrites it.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name} differs from snapshot\n--- expected\n{expected}\n--- actual\n{actual}"))
    }
}
