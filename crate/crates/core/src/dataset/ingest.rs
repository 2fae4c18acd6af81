use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{parse_bool, parse_timestamp, Column, ColumnKind, Dataset, DatasetBuilder, Field, Schema, Value};
use crate::error::IngestError;

/// Column name to kind, as read from a JSON schema hint file.
pub type SchemaHint = BTreeMap<String, ColumnKind>;

/// Reads a CSV file. The dataset is named after the file stem.
pub fn ingest_csv(path: impl AsRef<Path>, hint: Option<&SchemaHint>) -> Result<Dataset, IngestError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ingest_csv_reader(name, File::open(path)?, hint)
}

/// Reads RFC 4180 CSV with a header row. Empty cells become missing markers;
/// columns absent from `hint` get their kind inferred from the non-empty cells.
pub fn ingest_csv_reader<R: Read>(
    name: impl Into<String>,
    reader: R,
    hint: Option<&SchemaHint>,
) -> Result<Dataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| csv_error(&e))?.clone();
    if header.is_empty() {
        return Err(IngestError::MissingHeader);
    }
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for n in &names {
        if !seen.insert(n.as_str()) {
            return Err(IngestError::DuplicateColumn(n.clone()));
        }
    }
    if let Some(hint) = hint {
        if let Some(unknown) = hint.keys().find(|k| !seen.contains(k.as_str())) {
            return Err(IngestError::UnknownHintColumn(unknown.clone()));
        }
    }

    let width = names.len();
    let mut lines = Vec::new();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); width];
    for result in rdr.records() {
        let record = result.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(IngestError::ColumnCount {
                line,
                expected: width,
                found: record.len(),
            });
        }
        lines.push(line);
        for (col, cell) in cells.iter_mut().zip(record.iter()) {
            col.push(cell.to_string());
        }
    }

    let mut fields = Vec::with_capacity(width);
    let mut columns = Vec::with_capacity(width);
    for (name, raw) in names.into_iter().zip(cells) {
        let kind = hint
            .and_then(|h| h.get(&name).copied())
            .unwrap_or_else(|| infer_kind(&raw));
        columns.push(parse_column(&name, kind, &raw, &lines)?);
        fields.push(Field { name, kind });
    }
    Ok(DatasetBuilder::from_columns(name, Schema::new(fields), columns))
}

fn csv_error(e: &csv::Error) -> IngestError {
    IngestError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

/// Narrowest kind that accepts every non-empty cell: boolean, integer,
/// number, timestamp, then category. All-empty columns are categories.
fn infer_kind(raw: &[String]) -> ColumnKind {
    let present: Vec<&str> = raw.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if present.is_empty() {
        return ColumnKind::Category;
    }
    let all = |f: &dyn Fn(&str) -> bool| present.iter().all(|s| f(s));
    if all(&|s| parse_bool(s).is_some()) {
        ColumnKind::Boolean
    } else if all(&|s| s.parse::<i64>().is_ok()) {
        ColumnKind::Integer
    } else if all(&|s| s.parse::<f64>().is_ok_and(f64::is_finite)) {
        ColumnKind::Number
    } else if all(&|s| parse_timestamp(s).is_some()) {
        ColumnKind::Timestamp
    } else {
        ColumnKind::Category
    }
}

fn parse_column(name: &str, kind: ColumnKind, raw: &[String], lines: &[u64]) -> Result<Column, IngestError> {
    let mut col = Column::empty(kind);
    for (cell, &line) in raw.iter().zip(lines) {
        let value = if cell.trim().is_empty() {
            None
        } else {
            Some(Value::parse(cell, kind).ok_or_else(|| IngestError::Parse {
                line,
                column: name.to_string(),
                value: cell.clone(),
                kind,
            })?)
        };
        col.push(value).expect("parsed value matches column kind");
    }
    Ok(col)
}
