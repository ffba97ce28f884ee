use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{CrashRecord, DataError, Dataset, Field, RawSeverityCode, SeverityMapping};

const RECORD_ID: &str = "RECORD_ID";
const SEVERITY: &str = "SEVERITY";

/// Maps canonical column names (`RECORD_ID`, `SEVERITY` and every field
/// column) to the header names used by a particular export.
///
/// Columns that are not renamed are looked up under their canonical name.
/// Header matching is case-insensitive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaMap {
    renames: BTreeMap<String, String>,
}

impl SchemaMap {
    pub fn new(renames: BTreeMap<String, String>) -> Result<Self, DataError> {
        let mut normalized = BTreeMap::new();
        for (canonical, header) in renames {
            let key = canonical.trim().to_ascii_uppercase();
            let known = key == RECORD_ID || key == SEVERITY || Field::lookup(&key).is_some();
            if !known {
                return Err(DataError::InvalidSchema(format!("unknown canonical column `{canonical}`")));
            }
            let key = Field::lookup(&key).map(|f| f.column().to_string()).unwrap_or(key);
            normalized.insert(key, header);
        }
        Ok(SchemaMap { renames: normalized })
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let renames: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| DataError::InvalidSchema(e.to_string()))?;
        SchemaMap::new(renames)
    }

    fn header_for<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.renames.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

struct Layout {
    record_id: usize,
    severity: usize,
    fields: Vec<usize>,
    width: usize,
}

fn layout(headers: &csv::StringRecord, schema: &SchemaMap) -> Result<Layout, DataError> {
    let find = |canonical: &str| {
        let wanted = schema.header_for(canonical);
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| DataError::MissingColumn {
                column: wanted.to_string(),
            })
    };
    Ok(Layout {
        record_id: find(RECORD_ID)?,
        severity: find(SEVERITY)?,
        fields: Field::ALL
            .iter()
            .map(|f| find(f.column()))
            .collect::<Result<_, _>>()?,
        width: headers.len(),
    })
}

fn parse_row(row_no: usize, row: &csv::StringRecord, layout: &Layout) -> Result<CrashRecord, DataError> {
    if row.len() != layout.width {
        return Err(DataError::MalformedRow {
            row: row_no,
            reason: format!("expected {} cells, found {}", layout.width, row.len()),
        });
    }
    let record_id = row[layout.record_id].trim();
    if record_id.is_empty() {
        return Err(DataError::MalformedRow {
            row: row_no,
            reason: "empty record id".into(),
        });
    }
    let code_cell = row[layout.severity].trim();
    let severity = code_cell
        .parse::<u8>()
        .ok()
        .and_then(RawSeverityCode::new)
        .ok_or_else(|| DataError::UnknownSeverityCode {
            row: row_no,
            code: code_cell.to_string(),
        })?;
    let mut record = CrashRecord::new(record_id, severity);
    for (field, &col) in Field::ALL.iter().zip(&layout.fields) {
        record
            .set(*field, &row[col])
            .map_err(|reason| DataError::MalformedRow { row: row_no, reason })?;
    }
    Ok(record)
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source)
}

fn csv_error(row_no: usize, e: csv::Error) -> DataError {
    if e.is_io_error() {
        DataError::Io(e.to_string())
    } else {
        DataError::MalformedRow {
            row: row_no,
            reason: e.to_string(),
        }
    }
}

/// Parses comma-delimited crash records, failing on the first bad row.
///
/// Rows are numbered from 1, excluding the header.
pub fn parse_records<R: Read>(
    source: R,
    schema: &SchemaMap,
    mapping: SeverityMapping,
) -> Result<Dataset, DataError> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(|e| csv_error(0, e))?.clone();
    let layout = layout(&headers, schema)?;
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_error(i + 1, e))?;
        records.push(parse_row(i + 1, &row, &layout)?);
    }
    Dataset::new(records, mapping)
}

/// Like [`parse_records`] but skips bad rows, returning their errors.
///
/// Missing columns are still fatal. A repeated record id is reported as a
/// row error and the later row is dropped.
pub fn parse_records_lenient<R: Read>(
    source: R,
    schema: &SchemaMap,
    mapping: SeverityMapping,
) -> Result<(Dataset, Vec<DataError>), DataError> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(|e| csv_error(0, e))?.clone();
    let layout = layout(&headers, schema)?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let parsed = row
            .map_err(|e| csv_error(i + 1, e))
            .and_then(|row| parse_row(i + 1, &row, &layout));
        match parsed {
            Ok(rec) if !seen.insert(rec.record_id.clone()) => {
                errors.push(DataError::DuplicateRecordId {
                    record_id: rec.record_id,
                })
            }
            Ok(rec) => records.push(rec),
            Err(DataError::Io(e)) => return Err(DataError::Io(e)),
            Err(e) => errors.push(e),
        }
    }
    Ok((Dataset::new(records, mapping)?, errors))
}

/// Writes records under canonical column names.
pub fn write_records<W: Write>(records: &[CrashRecord], sink: W) -> Result<(), DataError> {
    let io = |e: csv::Error| DataError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![RECORD_ID];
    header.extend(Field::ALL.iter().map(|f| f.column()));
    header.push(SEVERITY);
    w.write_record(&header).map_err(io)?;
    for r in records {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(r.record_id.clone());
        row.extend(Field::ALL.iter().map(|f| r.value(*f).as_str().to_string()));
        row.push(r.severity.code().to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| DataError::Io(e.to_string()))
}
