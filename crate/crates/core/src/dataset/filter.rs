use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{parse_timestamp, Column, ColumnKind, Dataset, DatasetView, RowId};
use crate::error::ValidationError;

/// A JSON scalar operand, interpreted against the target column's kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

/// Comparison applied to one column. Missing cells never match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum FilterOp {
    Eq { value: Scalar },
    Neq { value: Scalar },
    Lt { value: Scalar },
    Lte { value: Scalar },
    Gt { value: Scalar },
    Gte { value: Scalar },
    In { values: Vec<Scalar> },
    Between { low: Scalar, high: Scalar },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPredicate {
    pub column: String,
    #[serde(flatten)]
    pub op: FilterOp,
}

impl FilterPredicate {
    pub fn new(column: impl Into<String>, op: FilterOp) -> Self {
        Self {
            column: column.into(),
            op,
        }
    }
}

/// Rows of `dataset` satisfying every predicate, in dataset order.
pub fn apply_filter(dataset: &Arc<Dataset>, predicates: &[FilterPredicate]) -> Result<DatasetView, ValidationError> {
    DatasetView::full(Arc::clone(dataset)).filter(predicates)
}

pub(super) fn filter_rows(
    dataset: &Dataset,
    rows: &[RowId],
    predicates: &[FilterPredicate],
) -> Result<Vec<RowId>, ValidationError> {
    let compiled = predicates
        .iter()
        .map(|p| Compiled::new(dataset, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows
        .iter()
        .copied()
        .filter(|id| compiled.iter().all(|c| c.matches(id.index())))
        .collect())
}

/// A typed operand, already checked against the column kind.
#[derive(Debug, Clone, PartialEq)]
enum Operand {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Operand {
    fn compare(&self, col: &Column, row: usize) -> Option<Ordering> {
        match (col, self) {
            (Column::Number(v), Operand::Num(x)) => v[row].and_then(|c| c.partial_cmp(x)),
            (Column::Integer(v), Operand::Num(x)) => v[row].and_then(|c| (c as f64).partial_cmp(x)),
            (Column::Integer(v), Operand::Int(x)) | (Column::Timestamp(v), Operand::Int(x)) => v[row].map(|c| c.cmp(x)),
            (Column::Category(v), Operand::Text(x)) => v[row].as_ref().map(|c| c.as_str().cmp(x.as_str())),
            (Column::Boolean(v), Operand::Bool(x)) => v[row].map(|c| c.cmp(x)),
            _ => None,
        }
    }
}

#[derive(Debug)]
enum Test {
    Eq(Operand),
    Neq(Operand),
    Lt(Operand),
    Lte(Operand),
    Gt(Operand),
    Gte(Operand),
    In(Vec<Operand>),
    Between(Operand, Operand),
}

struct Compiled<'a> {
    column: &'a Column,
    test: Test,
}

impl<'a> Compiled<'a> {
    fn new(dataset: &'a Dataset, pred: &FilterPredicate) -> Result<Self, ValidationError> {
        let column = dataset.column(&pred.column)?;
        let kind = column.kind();
        let operand = |s: &Scalar| to_operand(&pred.column, kind, s);
        let ordered = || {
            if matches!(kind, ColumnKind::Category | ColumnKind::Boolean) {
                Err(ValidationError::kind(
                    &pred.column,
                    kind,
                    "ordering comparisons need a numeric or timestamp column",
                ))
            } else {
                Ok(())
            }
        };
        let test = match &pred.op {
            FilterOp::Eq { value } => Test::Eq(operand(value)?),
            FilterOp::Neq { value } => Test::Neq(operand(value)?),
            FilterOp::Lt { value } => {
                ordered()?;
                Test::Lt(operand(value)?)
            }
            FilterOp::Lte { value } => {
                ordered()?;
                Test::Lte(operand(value)?)
            }
            FilterOp::Gt { value } => {
                ordered()?;
                Test::Gt(operand(value)?)
            }
            FilterOp::Gte { value } => {
                ordered()?;
                Test::Gte(operand(value)?)
            }
            FilterOp::In { values } => Test::In(values.iter().map(operand).collect::<Result<_, _>>()?),
            FilterOp::Between { low, high } => {
                ordered()?;
                Test::Between(operand(low)?, operand(high)?)
            }
        };
        Ok(Self { column, test })
    }

    fn matches(&self, row: usize) -> bool {
        use Ordering::*;
        let cmp = |o: &Operand| o.compare(self.column, row);
        match &self.test {
            Test::Eq(o) => cmp(o) == Some(Equal),
            Test::Neq(o) => matches!(cmp(o), Some(Less | Greater)),
            Test::Lt(o) => cmp(o) == Some(Less),
            Test::Lte(o) => matches!(cmp(o), Some(Less | Equal)),
            Test::Gt(o) => cmp(o) == Some(Greater),
            Test::Gte(o) => matches!(cmp(o), Some(Greater | Equal)),
            Test::In(os) => os.iter().any(|o| cmp(o) == Some(Equal)),
            Test::Between(lo, hi) => matches!(cmp(lo), Some(Greater | Equal)) && matches!(cmp(hi), Some(Less | Equal)),
        }
    }
}

fn to_operand(column: &str, kind: ColumnKind, s: &Scalar) -> Result<Operand, ValidationError> {
    let mismatch = || ValidationError::kind(column, kind, format!("operand {s:?} does not match"));
    match (kind, s) {
        (ColumnKind::Number, Scalar::Int(i)) => Ok(Operand::Num(*i as f64)),
        (ColumnKind::Number, Scalar::Float(x)) => Ok(Operand::Num(*x)),
        (ColumnKind::Integer, Scalar::Int(i)) => Ok(Operand::Int(*i)),
        (ColumnKind::Integer, Scalar::Float(x)) => Ok(Operand::Num(*x)),
        (ColumnKind::Category, Scalar::Text(t)) => Ok(Operand::Text(t.clone())),
        (ColumnKind::Boolean, Scalar::Bool(b)) => Ok(Operand::Bool(*b)),
        (ColumnKind::Timestamp, Scalar::Int(ms)) => Ok(Operand::Int(*ms)),
        (ColumnKind::Timestamp, Scalar::Text(t)) => parse_timestamp(t).map(Operand::Int).ok_or_else(mismatch),
        _ => Err(mismatch()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ingest_csv_reader;
    use serde_json::json;

    fn data() -> Arc<Dataset> {
        Arc::new(
            ingest_csv_reader(
                "t",
                "x,g,flag,day\n1,M,true,2020-01-01\n2,F,false,2020-01-02\n3,M,,2020-01-03\n,F,true,\n".as_bytes(),
                None,
            )
            .unwrap(),
        )
    }

    fn ids(view: &DatasetView) -> Vec<u64> {
        view.row_ids().iter().map(|r| r.0).collect()
    }

    fn pred(v: serde_json::Value) -> FilterPredicate {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn gt_keeps_matching_rows_and_ids() {
        let v = apply_filter(&data(), &[pred(json!({"column": "x", "op": "gt", "value": 1}))]).unwrap();
        assert_eq!(ids(&v), vec![1, 2]);
    }

    #[test]
    fn empty_predicates_is_identity() {
        let d = data();
        assert_eq!(ids(&apply_filter(&d, &[]).unwrap()), vec![0, 1, 2, 3]);
    }

    #[test]
    fn unknown_column_is_a_validation_error() {
        let err = apply_filter(&data(), &[pred(json!({"column": "nope", "op": "eq", "value": 1}))]).unwrap_err();
        assert_eq!(err, ValidationError::UnknownColumn("nope".into()));
    }

    #[test]
    fn kind_mismatch_is_a_validation_error() {
        let d = data();
        assert!(apply_filter(&d, &[pred(json!({"column": "x", "op": "eq", "value": "a"}))]).is_err());
        assert!(apply_filter(&d, &[pred(json!({"column": "g", "op": "lt", "value": "M"}))]).is_err());
        assert!(apply_filter(&d, &[pred(json!({"column": "flag", "op": "eq", "value": 1}))]).is_err());
    }

    #[test]
    fn conjunction_of_predicates() {
        let v = apply_filter(
            &data(),
            &[
                pred(json!({"column": "g", "op": "eq", "value": "M"})),
                pred(json!({"column": "x", "op": "between", "low": 2, "high": 3})),
            ],
        )
        .unwrap();
        assert_eq!(ids(&v), vec![2]);
    }

    #[test]
    fn missing_cells_never_match() {
        let d = data();
        let neq = apply_filter(&d, &[pred(json!({"column": "flag", "op": "neq", "value": true}))]).unwrap();
        assert_eq!(ids(&neq), vec![1]);
        let lte = apply_filter(&d, &[pred(json!({"column": "x", "op": "lte", "value": 10.0}))]).unwrap();
        assert_eq!(ids(&lte), vec![0, 1, 2]);
    }

    #[test]
    fn in_set_and_timestamps() {
        let d = data();
        let v = apply_filter(&d, &[pred(json!({"column": "g", "op": "in", "values": ["F", "X"]}))]).unwrap();
        assert_eq!(ids(&v), vec![1, 3]);
        let v = apply_filter(
            &d,
            &[pred(json!({"column": "day", "op": "gte", "value": "2020-01-02"}))],
        )
        .unwrap();
        assert_eq!(ids(&v), vec![1, 2]);
    }

    #[test]
    fn filtering_twice_is_idempotent() {
        let d = data();
        let preds = [pred(json!({"column": "x", "op": "gte", "value": 2}))];
        let once = apply_filter(&d, &preds).unwrap();
        let twice = once.filter(&preds).unwrap();
        assert_eq!(ids(&once), ids(&twice));
    }

    #[test]
    fn predicate_json_shape() {
        let p = FilterPredicate::new(
            "x",
            FilterOp::Between {
                low: Scalar::Int(1),
                high: Scalar::Float(2.5),
            },
        );
        assert_eq!(
            serde_json::to_value(&p).unwrap(),
            json!({"column": "x", "op": "between", "low": 1, "high": 2.5})
        );
    }
}
