//! Tabular data: ingest, filtering and grouping into measure subsets.
//!
//! A [`Dataset`] is immutable once built and stores its values column-wise.
//! Row ids are assigned at ingest in file order, starting at zero, so a row
//! id doubles as the row's position. Views ([`DatasetView`]) and
//! [`MeasureSubset`]s refer to rows by id only.

mod filter;
mod group;
mod ingest;

use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::ValidationError;

pub use filter::{apply_filter, FilterOp, FilterPredicate, Scalar};
pub(crate) use group::{check_grouping_kind, Atom};
pub use group::{group_measures, GroupKey, KeyPart, MeasureSubset};
pub use ingest::{ingest_csv, ingest_csv_reader, SchemaHint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RowId(pub u64);

impl RowId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Number,
    Integer,
    Category,
    Boolean,
    Timestamp,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnKind::Number | ColumnKind::Integer)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Number => "number",
            ColumnKind::Integer => "integer",
            ColumnKind::Category => "category",
            ColumnKind::Boolean => "boolean",
            ColumnKind::Timestamp => "timestamp",
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single cell. Timestamps are milliseconds since the Unix epoch (UTC).
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Integer(i64),
    Category(String),
    Boolean(bool),
    Timestamp(i64),
}

impl Value {
    pub fn kind(&self) -> ColumnKind {
        match self {
            Value::Number(_) => ColumnKind::Number,
            Value::Integer(_) => ColumnKind::Integer,
            Value::Category(_) => ColumnKind::Category,
            Value::Boolean(_) => ColumnKind::Boolean,
            Value::Timestamp(_) => ColumnKind::Timestamp,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Number(x) => Some(x),
            Value::Integer(i) => Some(i as f64),
            _ => None,
        }
    }

    /// Parses one CSV cell (or JSON string) as `kind`.
    pub fn parse(text: &str, kind: ColumnKind) -> Option<Value> {
        let t = text.trim();
        match kind {
            ColumnKind::Number => t.parse::<f64>().ok().filter(|x| x.is_finite()).map(Value::Number),
            ColumnKind::Integer => t.parse::<i64>().ok().map(Value::Integer),
            ColumnKind::Category => Some(Value::Category(text.to_string())),
            ColumnKind::Boolean => parse_bool(t).map(Value::Boolean),
            ColumnKind::Timestamp => parse_timestamp(t).map(Value::Timestamp),
        }
    }

    /// Converts a JSON value into a cell of `kind`. `null` is the missing marker.
    pub fn from_json(json: &serde_json::Value, kind: ColumnKind) -> Result<Option<Value>, String> {
        use serde_json::Value as J;
        let bad = || format!("{json} is not a valid {kind}");
        match (json, kind) {
            (J::Null, _) => Ok(None),
            (J::String(s), _) => Value::parse(s, kind).map(Some).ok_or_else(bad),
            (J::Number(n), ColumnKind::Number) => n
                .as_f64()
                .filter(|x| x.is_finite())
                .map(|x| Some(Value::Number(x)))
                .ok_or_else(bad),
            (J::Number(n), ColumnKind::Integer) => n.as_i64().map(|i| Some(Value::Integer(i))).ok_or_else(bad),
            (J::Number(n), ColumnKind::Timestamp) => n.as_i64().map(|i| Some(Value::Timestamp(i))).ok_or_else(bad),
            (J::Number(n), ColumnKind::Boolean) => match n.as_i64() {
                Some(0) => Ok(Some(Value::Boolean(false))),
                Some(1) => Ok(Some(Value::Boolean(true))),
                _ => Err(bad()),
            },
            (J::Number(n), ColumnKind::Category) => Ok(Some(Value::Category(n.to_string()))),
            (J::Bool(b), ColumnKind::Boolean) => Ok(Some(Value::Boolean(*b))),
            (J::Bool(b), ColumnKind::Category) => Ok(Some(Value::Category(b.to_string()))),
            _ => Err(bad()),
        }
    }

    /// Text form used for CSV output and labels.
    pub fn to_text(&self) -> String {
        match self {
            Value::Number(x) => x.to_string(),
            Value::Integer(i) => i.to_string(),
            Value::Category(s) => s.clone(),
            Value::Boolean(b) => b.to_string(),
            Value::Timestamp(ms) => format_timestamp(*ms),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Number(x) => s.serialize_f64(*x),
            Value::Integer(i) => s.serialize_i64(*i),
            Value::Category(c) => s.serialize_str(c),
            Value::Boolean(b) => s.serialize_bool(*b),
            Value::Timestamp(ms) => s.serialize_str(&format_timestamp(*ms)),
        }
    }
}

pub(crate) fn parse_bool(t: &str) -> Option<bool> {
    if t.eq_ignore_ascii_case("true") {
        Some(true)
    } else if t.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}

/// RFC 3339 date-times or bare `YYYY-MM-DD` dates (midnight UTC).
pub(crate) fn parse_timestamp(t: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Some(dt.timestamp_millis());
    }
    NaiveDate::parse_from_str(t, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp_millis())
}

pub(crate) fn format_timestamp(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .map(|dt| dt.to_rfc3339_opts(SecondsFormat::Millis, true))
        .unwrap_or_else(|| ms.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub fields: Vec<Field>,
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Self {
        Self { fields }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Result<&Field, ValidationError> {
        self.fields
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| ValidationError::UnknownColumn(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

/// Column-wise storage, one `Option` per row (`None` is the missing marker).
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Number(Vec<Option<f64>>),
    Integer(Vec<Option<i64>>),
    Category(Vec<Option<String>>),
    Boolean(Vec<Option<bool>>),
    Timestamp(Vec<Option<i64>>),
}

impl Column {
    pub fn empty(kind: ColumnKind) -> Self {
        match kind {
            ColumnKind::Number => Column::Number(Vec::new()),
            ColumnKind::Integer => Column::Integer(Vec::new()),
            ColumnKind::Category => Column::Category(Vec::new()),
            ColumnKind::Boolean => Column::Boolean(Vec::new()),
            ColumnKind::Timestamp => Column::Timestamp(Vec::new()),
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Number(_) => ColumnKind::Number,
            Column::Integer(_) => ColumnKind::Integer,
            Column::Category(_) => ColumnKind::Category,
            Column::Boolean(_) => ColumnKind::Boolean,
            Column::Timestamp(_) => ColumnKind::Timestamp,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Number(v) => v.len(),
            Column::Integer(v) => v.len(),
            Column::Category(v) => v.len(),
            Column::Boolean(v) => v.len(),
            Column::Timestamp(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> Option<Value> {
        match self {
            Column::Number(v) => v[row].map(Value::Number),
            Column::Integer(v) => v[row].map(Value::Integer),
            Column::Category(v) => v[row].clone().map(Value::Category),
            Column::Boolean(v) => v[row].map(Value::Boolean),
            Column::Timestamp(v) => v[row].map(Value::Timestamp),
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Number(v) => v[row].is_none(),
            Column::Integer(v) => v[row].is_none(),
            Column::Category(v) => v[row].is_none(),
            Column::Boolean(v) => v[row].is_none(),
            Column::Timestamp(v) => v[row].is_none(),
        }
    }

    /// Numeric reading of a number or integer cell.
    #[inline]
    pub fn number(&self, row: usize) -> Option<f64> {
        match self {
            Column::Number(v) => v[row],
            Column::Integer(v) => v[row].map(|i| i as f64),
            _ => None,
        }
    }

    /// Binary reading: booleans as-is, integers 0/1. Anything else is `None`.
    #[inline]
    pub fn binary(&self, row: usize) -> Option<bool> {
        match self {
            Column::Boolean(v) => v[row],
            Column::Integer(v) => match v[row] {
                Some(0) => Some(false),
                Some(1) => Some(true),
                _ => None,
            },
            _ => None,
        }
    }

    fn push(&mut self, value: Option<Value>) -> Result<(), Option<Value>> {
        match (self, value) {
            (Column::Number(v), None) => v.push(None),
            (Column::Integer(v), None) => v.push(None),
            (Column::Category(v), None) => v.push(None),
            (Column::Boolean(v), None) => v.push(None),
            (Column::Timestamp(v), None) => v.push(None),
            (Column::Number(v), Some(Value::Number(x))) => v.push(Some(x)),
            (Column::Number(v), Some(Value::Integer(i))) => v.push(Some(i as f64)),
            (Column::Integer(v), Some(Value::Integer(i))) => v.push(Some(i)),
            (Column::Category(v), Some(Value::Category(s))) => v.push(Some(s)),
            (Column::Boolean(v), Some(Value::Boolean(b))) => v.push(Some(b)),
            (Column::Timestamp(v), Some(Value::Timestamp(t))) => v.push(Some(t)),
            (_, other) => return Err(other),
        }
        Ok(())
    }
}

/// One row as seen by callers; the dataset itself stores columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub row_id: RowId,
    pub values: Vec<Option<Value>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    schema: Schema,
    columns: Vec<Column>,
    row_count: usize,
}

impl Dataset {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column, ValidationError> {
        self.schema
            .index_of(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| ValidationError::UnknownColumn(name.to_string()))
    }

    pub fn row_ids(&self) -> impl Iterator<Item = RowId> + '_ {
        (0..self.row_count as u64).map(RowId)
    }

    pub fn record(&self, id: RowId) -> Option<Record> {
        let row = id.index();
        (row < self.row_count).then(|| Record {
            row_id: id,
            values: self.columns.iter().map(|c| c.get(row)).collect(),
        })
    }

    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        self.row_ids().filter_map(|id| self.record(id))
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            name: self.name.clone(),
            rows: self.row_count,
            columns: self.schema.fields.clone(),
        }
    }

    /// Writes the dataset as CSV with a header row; missing cells are empty.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.fields.iter().map(|f| f.name.as_str()))?;
        for row in 0..self.row_count {
            w.write_record(
                self.columns
                    .iter()
                    .map(|c| c.get(row).map(|v| v.to_text()).unwrap_or_default()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub rows: usize,
    pub columns: Vec<Field>,
}

/// Row-at-a-time construction with kind checking.
#[derive(Debug, Clone)]
pub struct DatasetBuilder {
    name: String,
    schema: Schema,
    columns: Vec<Column>,
    row_count: usize,
}

impl DatasetBuilder {
    pub fn new(name: impl Into<String>, schema: Schema) -> Self {
        let columns = schema.fields.iter().map(|f| Column::empty(f.kind)).collect();
        Self {
            name: name.into(),
            schema,
            columns,
            row_count: 0,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    /// Appends one row and returns its id.
    pub fn push_row(&mut self, values: Vec<Option<Value>>) -> Result<RowId, ValidationError> {
        if values.len() != self.columns.len() {
            return Err(ValidationError::config(format!(
                "row has {} values, schema has {} columns",
                values.len(),
                self.columns.len()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            let kind = self.schema.fields[i].kind;
            let ok = match v {
                None => true,
                Some(Value::Integer(_)) if kind == ColumnKind::Number => true,
                Some(v) => v.kind() == kind,
            };
            if !ok {
                return Err(ValidationError::kind(
                    &self.schema.fields[i].name,
                    kind,
                    format!(
                        "cannot store a {} value",
                        v.as_ref().map(|v| v.kind().as_str()).unwrap_or("missing")
                    ),
                ));
            }
        }
        for (col, v) in self.columns.iter_mut().zip(values) {
            col.push(v).expect("kinds checked above");
        }
        let id = RowId(self.row_count as u64);
        self.row_count += 1;
        Ok(id)
    }

    /// Assembles a dataset directly from equal-length columns.
    pub(crate) fn from_columns(name: impl Into<String>, schema: Schema, columns: Vec<Column>) -> Dataset {
        let row_count = columns.first().map_or(0, Column::len);
        debug_assert!(columns.iter().all(|c| c.len() == row_count));
        debug_assert!(columns.iter().zip(&schema.fields).all(|(c, f)| c.kind() == f.kind));
        Dataset {
            name: name.into(),
            schema,
            columns,
            row_count,
        }
    }

    pub fn build(self) -> Dataset {
        Dataset {
            name: self.name,
            schema: self.schema,
            columns: self.columns,
            row_count: self.row_count,
        }
    }

    /// Immutable copy of the rows so far.
    pub fn snapshot(&self) -> Dataset {
        self.clone().build()
    }
}

/// An immutable selection of rows from a dataset, by row id in dataset order.
#[derive(Debug, Clone)]
pub struct DatasetView {
    dataset: Arc<Dataset>,
    rows: Vec<RowId>,
}

impl DatasetView {
    pub fn full(dataset: Arc<Dataset>) -> Self {
        let rows = dataset.row_ids().collect();
        Self { dataset, rows }
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn row_ids(&self) -> &[RowId] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Further restricts this view; equivalent to filtering the dataset by
    /// the conjunction of both predicate lists.
    pub fn filter(&self, predicates: &[FilterPredicate]) -> Result<DatasetView, ValidationError> {
        filter::filter_rows(&self.dataset, &self.rows, predicates).map(|rows| DatasetView {
            dataset: Arc::clone(&self.dataset),
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(vec![
            Field {
                name: "x".into(),
                kind: ColumnKind::Number,
            },
            Field {
                name: "g".into(),
                kind: ColumnKind::Category,
            },
        ])
    }

    #[test]
    fn builder_assigns_sequential_row_ids() {
        let mut b = DatasetBuilder::new("t", schema());
        let a = b.push_row(vec![Some(Value::Number(1.0)), None]).unwrap();
        let c = b
            .push_row(vec![Some(Value::Integer(2)), Some(Value::Category("M".into()))])
            .unwrap();
        assert_eq!((a, c), (RowId(0), RowId(1)));
        let ds = b.build();
        assert_eq!(ds.row_count(), 2);
        let rec = ds.record(RowId(1)).unwrap();
        assert_eq!(
            rec.values,
            vec![Some(Value::Number(2.0)), Some(Value::Category("M".into()))]
        );
        assert!(ds.record(RowId(2)).is_none());
    }

    #[test]
    fn builder_rejects_wrong_kind_and_arity() {
        let mut b = DatasetBuilder::new("t", schema());
        assert!(b.push_row(vec![Some(Value::Boolean(true)), None]).is_err());
        assert!(b.push_row(vec![None]).is_err());
        assert_eq!(b.row_count(), 0);
    }

    #[test]
    fn binary_reading_accepts_zero_one_integers_only() {
        let col = Column::Integer(vec![Some(0), Some(1), Some(2), None]);
        let got: Vec<_> = (0..4).map(|r| col.binary(r)).collect();
        assert_eq!(got, vec![Some(false), Some(true), None, None]);
    }

    #[test]
    fn timestamps_round_trip_through_text() {
        let ms = parse_timestamp("2015-03-01T12:30:00Z").unwrap();
        assert_eq!(format_timestamp(ms), "2015-03-01T12:30:00.000Z");
        assert_eq!(parse_timestamp("1970-01-02"), Some(86_400_000));
    }

    #[test]
    fn json_cells_convert_by_kind() {
        use serde_json::json;
        assert_eq!(Value::from_json(&json!(null), ColumnKind::Number), Ok(None));
        assert_eq!(
            Value::from_json(&json!(3), ColumnKind::Number),
            Ok(Some(Value::Number(3.0)))
        );
        assert_eq!(
            Value::from_json(&json!(true), ColumnKind::Boolean),
            Ok(Some(Value::Boolean(true)))
        );
        assert_eq!(
            Value::from_json(&json!("7"), ColumnKind::Integer),
            Ok(Some(Value::Integer(7)))
        );
        assert!(Value::from_json(&json!(1.5), ColumnKind::Integer).is_err());
        assert!(Value::from_json(&json!("x"), ColumnKind::Boolean).is_err());
    }
}
