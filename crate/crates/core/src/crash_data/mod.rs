//! Crash records: ingestion, severity merging and stratified sampling.

mod fields;
mod parse;
mod sample;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fields::{Field, FieldGroup, FieldKind};
pub use parse::{parse_records, parse_records_lenient, write_records, SchemaMap};
pub use sample::stratified_sample;
pub(crate) use sample::class_rng;

/// Sentinel stored for blank or not-known cells.
pub const UNKNOWN: &str = "Unknown";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("missing column `{column}`")]
    MissingColumn { column: String },
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: unknown severity code `{code}`")]
    UnknownSeverityCode { row: usize, code: String },
    #[error("duplicate record id `{record_id}`")]
    DuplicateRecordId { record_id: String },
    #[error("class {class} has {available} eligible records, {required} required")]
    InsufficientClassPopulation {
        class: SeverityClass,
        available: usize,
        required: usize,
    },
    #[error("invalid severity mapping: {0}")]
    InvalidMapping(String),
    #[error("invalid schema map: {0}")]
    InvalidSchema(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Merged three-way severity outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeverityClass {
    Fatal,
    SeriousInjury,
    MinorOrNonInjury,
}

impl SeverityClass {
    /// Report column order: most to least severe.
    pub const ALL: [SeverityClass; 3] = [
        SeverityClass::Fatal,
        SeverityClass::SeriousInjury,
        SeverityClass::MinorOrNonInjury,
    ];

    pub fn index(self) -> usize {
        match self {
            SeverityClass::Fatal => 0,
            SeverityClass::SeriousInjury => 1,
            SeverityClass::MinorOrNonInjury => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeverityClass::Fatal => "Fatal",
            SeverityClass::SeriousInjury => "SeriousInjury",
            SeverityClass::MinorOrNonInjury => "MinorOrNonInjury",
        }
    }
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeverityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SeverityClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown severity class `{s}`"))
    }
}

/// Raw four-point ordinal severity code as stored in the source table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RawSeverityCode(u8);

impl RawSeverityCode {
    pub const NON_INJURY: RawSeverityCode = RawSeverityCode(1);
    pub const MINOR_INJURY: RawSeverityCode = RawSeverityCode(2);
    pub const SERIOUS_INJURY: RawSeverityCode = RawSeverityCode(3);
    pub const FATAL: RawSeverityCode = RawSeverityCode(4);

    pub fn new(code: u8) -> Option<Self> {
        (1..=4).contains(&code).then_some(RawSeverityCode(code))
    }

    pub fn code(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for RawSeverityCode {
    type Error = String;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        RawSeverityCode::new(code).ok_or_else(|| format!("severity code {code} not in 1..=4"))
    }
}

impl From<RawSeverityCode> for u8 {
    fn from(code: RawSeverityCode) -> u8 {
        code.0
    }
}

/// Assignment of the four raw codes to the three merged classes.
///
/// Must be surjective, so exactly two raw codes share a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, SeverityClass>", into = "BTreeMap<String, SeverityClass>")]
pub struct SeverityMapping([SeverityClass; 4]);

impl SeverityMapping {
    pub fn new(classes: [SeverityClass; 4]) -> Result<Self, DataError> {
        for class in SeverityClass::ALL {
            if !classes.contains(&class) {
                return Err(DataError::InvalidMapping(format!("no raw code maps to {class}")));
            }
        }
        Ok(SeverityMapping(classes))
    }

    pub fn merge(&self, code: RawSeverityCode) -> SeverityClass {
        self.0[usize::from(code.0 - 1)]
    }

    /// Raw codes that merge into `class`, ascending.
    pub fn codes_for(&self, class: SeverityClass) -> Vec<RawSeverityCode> {
        (1..=4)
            .map(RawSeverityCode)
            .filter(|c| self.merge(*c) == class)
            .collect()
    }
}

impl Default for SeverityMapping {
    fn default() -> Self {
        SeverityMapping([
            SeverityClass::MinorOrNonInjury,
            SeverityClass::MinorOrNonInjury,
            SeverityClass::SeriousInjury,
            SeverityClass::Fatal,
        ])
    }
}

impl TryFrom<BTreeMap<String, SeverityClass>> for SeverityMapping {
    type Error = DataError;

    fn try_from(map: BTreeMap<String, SeverityClass>) -> Result<Self, Self::Error> {
        let mut classes = [None; 4];
        for (key, class) in map {
            let code = key
                .trim()
                .parse::<u8>()
                .ok()
                .and_then(RawSeverityCode::new)
                .ok_or_else(|| DataError::InvalidMapping(format!("bad raw code `{key}`")))?;
            classes[usize::from(code.0 - 1)] = Some(class);
        }
        let mut out = [SeverityClass::Fatal; 4];
        for (i, slot) in classes.iter().enumerate() {
            out[i] = slot.ok_or_else(|| {
                DataError::InvalidMapping(format!("raw code {} is not mapped", i + 1))
            })?;
        }
        SeverityMapping::new(out)
    }
}

impl From<SeverityMapping> for BTreeMap<String, SeverityClass> {
    fn from(m: SeverityMapping) -> Self {
        (1..=4u8).map(|c| (c.to_string(), m.0[usize::from(c - 1)])).collect()
    }
}

/// Merges a raw code with the default mapping.
pub fn merge_severity(code: RawSeverityCode) -> SeverityClass {
    SeverityMapping::default().merge(code)
}

/// A single cell after normalization.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FieldValue {
    Unknown,
    Known(String),
}

impl FieldValue {
    pub fn as_known(&self) -> Option<&str> {
        match self {
            FieldValue::Known(s) => Some(s),
            FieldValue::Unknown => None,
        }
    }

    pub fn as_str(&self) -> &str {
        self.as_known().unwrap_or(UNKNOWN)
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, FieldValue::Unknown)
    }
}

/// Normalizes and validates one raw cell for `field`.
pub fn normalize_cell(field: Field, raw: &str) -> Result<FieldValue, String> {
    let cell = raw.trim();
    if cell.is_empty()
        || cell.eq_ignore_ascii_case(UNKNOWN)
        || cell.eq_ignore_ascii_case("not known")
    {
        return Ok(FieldValue::Unknown);
    }
    match field.kind() {
        FieldKind::Categorical | FieldKind::CategoricalWithUnit { .. } => {}
        FieldKind::Count { min } => {
            let n: u32 = cell
                .parse()
                .map_err(|_| format!("{} must be a non-negative integer, got `{cell}`", field.column()))?;
            if n < min {
                return Err(format!("{} must be at least {min}, got {n}", field.column()));
            }
        }
        FieldKind::Measure { .. } => {
            let ok = cell.parse::<f64>().map(|v| v.is_finite() && v >= 0.0).unwrap_or(false);
            if !ok {
                return Err(format!("{} must be a non-negative number, got `{cell}`", field.column()));
            }
        }
        FieldKind::Month => match cell.parse::<u8>() {
            Ok(1..=12) => {}
            _ => return Err(format!("{} must be a month in 1..=12, got `{cell}`", field.column())),
        },
    }
    Ok(FieldValue::Known(cell.to_string()))
}

/// One vehicle involved in a crash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashRecord {
    pub record_id: String,
    pub severity: RawSeverityCode,
    values: Vec<FieldValue>,
}

impl CrashRecord {
    /// A record with every attribute set to the unknown sentinel.
    pub fn new(record_id: impl Into<String>, severity: RawSeverityCode) -> Self {
        CrashRecord {
            record_id: record_id.into(),
            severity,
            values: vec![FieldValue::Unknown; Field::ALL.len()],
        }
    }

    pub fn value(&self, field: Field) -> &FieldValue {
        &self.values[field.index()]
    }

    /// The cell text, or `None` when unknown.
    pub fn get(&self, field: Field) -> Option<&str> {
        self.value(field).as_known()
    }

    /// Parsed integer value for count fields.
    pub fn count(&self, field: Field) -> Option<u32> {
        self.get(field).and_then(|v| v.parse().ok())
    }

    /// Normalizes and stores a cell.
    pub fn set(&mut self, field: Field, raw: &str) -> Result<(), String> {
        self.values[field.index()] = normalize_cell(field, raw)?;
        Ok(())
    }

    /// Builder-style [`set`](Self::set); panics on invalid input.
    pub fn with(mut self, field: Field, raw: &str) -> Self {
        if let Err(e) = self.set(field, raw) {
            panic!("invalid value for {field}: {e}");
        }
        self
    }
}

/// An ordered collection of records with per-class counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<CrashRecord>,
    mapping: SeverityMapping,
    class_counts: BTreeMap<SeverityClass, usize>,
}

impl Dataset {
    pub fn new(records: Vec<CrashRecord>, mapping: SeverityMapping) -> Result<Self, DataError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.record_id.as_str()) {
                return Err(DataError::DuplicateRecordId {
                    record_id: r.record_id.clone(),
                });
            }
        }
        let mut class_counts: BTreeMap<SeverityClass, usize> =
            SeverityClass::ALL.iter().map(|c| (*c, 0)).collect();
        for r in &records {
            *class_counts.entry(mapping.merge(r.severity)).or_default() += 1;
        }
        Ok(Dataset {
            records,
            mapping,
            class_counts,
        })
    }

    pub fn empty(mapping: SeverityMapping) -> Self {
        Dataset::new(Vec::new(), mapping).expect("empty dataset is valid")
    }

    pub fn records(&self) -> &[CrashRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<CrashRecord> {
        self.records
    }

    pub fn mapping(&self) -> SeverityMapping {
        self.mapping
    }

    pub fn class_counts(&self) -> &BTreeMap<SeverityClass, usize> {
        &self.class_counts
    }

    pub fn class_count(&self, class: SeverityClass) -> usize {
        self.class_counts.get(&class).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_of(&self, record: &CrashRecord) -> SeverityClass {
        self.mapping.merge(record.severity)
    }

    pub fn get(&self, record_id: &str) -> Option<&CrashRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    /// Records of one class, in dataset order.
    pub fn records_of(&self, class: SeverityClass) -> impl Iterator<Item = &CrashRecord> {
        let mapping = self.mapping;
        self.records
            .iter()
            .filter(move |r| mapping.merge(r.severity) == class)
    }
}
