use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{Column, ColumnKind, DatasetView, FilterPredicate, RowId, Value};
use crate::error::ValidationError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyPart {
    pub column: String,
    pub value: Option<Value>,
}

/// The `(column, value)` pairs identifying one measure subset. Empty for a
/// subset covering the whole view.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct GroupKey(pub Vec<KeyPart>);

impl GroupKey {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("all");
        }
        for (i, part) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match &part.value {
                Some(v) => write!(f, "{}={}", part.column, v.to_text())?,
                None => write!(f, "{}=<missing>", part.column)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSubset {
    pub group_key: GroupKey,
    pub member_row_ids: Vec<RowId>,
    pub source_filter: Vec<FilterPredicate>,
}

impl MeasureSubset {
    /// A subset with no grouping, e.g. for ad-hoc partitioning.
    pub fn ungrouped(member_row_ids: Vec<RowId>) -> Self {
        Self {
            group_key: GroupKey::default(),
            member_row_ids,
            source_filter: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.member_row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_row_ids.is_empty()
    }
}

// Sort order for group keys; missing sorts after every present value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Atom {
    Int(i64),
    Bool(bool),
    Text(String),
    Missing,
}

impl Atom {
    pub(crate) fn of(value: Option<&Value>) -> Atom {
        match value {
            Some(Value::Integer(i)) => Atom::Int(*i),
            Some(Value::Boolean(b)) => Atom::Bool(*b),
            Some(Value::Category(s)) => Atom::Text(s.clone()),
            Some(_) => unreachable!("grouping columns are validated"),
            None => Atom::Missing,
        }
    }
}

/// Rejects grouping on columns that would need binning.
pub(crate) fn check_grouping_kind(name: &str, kind: ColumnKind) -> Result<(), ValidationError> {
    match kind {
        ColumnKind::Category | ColumnKind::Boolean | ColumnKind::Integer => Ok(()),
        kind => Err(ValidationError::kind(
            name,
            kind,
            "grouping needs a category, boolean or integer column",
        )),
    }
}

fn atom(col: &Column, row: usize) -> Atom {
    match col {
        Column::Integer(v) => v[row].map_or(Atom::Missing, Atom::Int),
        Column::Boolean(v) => v[row].map_or(Atom::Missing, Atom::Bool),
        Column::Category(v) => v[row].clone().map_or(Atom::Missing, Atom::Text),
        _ => unreachable!("grouping columns are validated"),
    }
}

/// Splits `view` into one subset per distinct key combination, ordered by
/// key. Missing cells form their own group so every row lands somewhere.
/// `filters` is recorded on each subset as provenance.
pub fn group_measures(
    view: &DatasetView,
    group_by: &[String],
    filters: &[FilterPredicate],
) -> Result<Vec<MeasureSubset>, ValidationError> {
    let dataset = view.dataset();
    let mut columns = Vec::with_capacity(group_by.len());
    for name in group_by {
        let col = dataset.column(name)?;
        check_grouping_kind(name, col.kind())?;
        columns.push(col);
    }

    if view.is_empty() {
        return Ok(Vec::new());
    }

    let mut groups: BTreeMap<Vec<Atom>, Vec<RowId>> = BTreeMap::new();
    for &id in view.row_ids() {
        let key = columns.iter().map(|c| atom(c, id.index())).collect();
        groups.entry(key).or_default().push(id);
    }

    Ok(groups
        .into_values()
        .map(|members| {
            let first = members[0].index();
            let group_key = GroupKey(
                group_by
                    .iter()
                    .zip(&columns)
                    .map(|(name, col)| KeyPart {
                        column: name.clone(),
                        value: col.get(first),
                    })
                    .collect(),
            );
            MeasureSubset {
                group_key,
                member_row_ids: members,
                source_filter: filters.to_vec(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dataset::{apply_filter, ingest_csv_reader, FilterOp, Scalar};

    fn view() -> DatasetView {
        let ds = ingest_csv_reader(
            "t",
            "gender,age,w,ok\nM,30,1.5,true\nF,40,2.5,false\nM,50,3.5,\nF,60,4.5,true\n,70,5.5,false\n".as_bytes(),
            None,
        )
        .unwrap();
        DatasetView::full(Arc::new(ds))
    }

    fn members(s: &MeasureSubset) -> Vec<u64> {
        s.member_row_ids.iter().map(|r| r.0).collect()
    }

    #[test]
    fn groups_partition_the_view() {
        let v = view();
        let groups = group_measures(&v, &["gender".into()], &[]).unwrap();
        let keys: Vec<String> = groups.iter().map(|g| g.group_key.to_string()).collect();
        assert_eq!(keys, vec!["gender=F", "gender=M", "gender=<missing>"]);
        assert_eq!(members(&groups[0]), vec![1, 3]);
        assert_eq!(members(&groups[1]), vec![0, 2]);
        let mut all: Vec<u64> = groups.iter().flat_map(members).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn empty_group_by_yields_one_subset() {
        let groups = group_measures(&view(), &[], &[]).unwrap();
        assert_eq!(groups.len(), 1);
        assert!(groups[0].group_key.is_empty());
        assert_eq!(members(&groups[0]), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn empty_view_yields_no_subsets() {
        let v = view();
        let pred = FilterPredicate::new(
            "age",
            FilterOp::Gt {
                value: Scalar::Int(1000),
            },
        );
        let empty = apply_filter(v.dataset(), &[pred]).unwrap();
        assert!(group_measures(&empty, &["gender".into()], &[]).unwrap().is_empty());
    }

    #[test]
    fn continuous_column_rejected() {
        let err = group_measures(&view(), &["w".into()], &[]).unwrap_err();
        assert!(matches!(err, ValidationError::KindMismatch { .. }));
    }

    #[test]
    fn multi_column_keys_sort_by_value() {
        let groups = group_measures(&view(), &["ok".into(), "gender".into()], &[]).unwrap();
        let keys: Vec<String> = groups.iter().map(|g| g.group_key.to_string()).collect();
        assert_eq!(
            keys,
            vec![
                "ok=false, gender=F",
                "ok=false, gender=<missing>",
                "ok=true, gender=F",
                "ok=true, gender=M",
                "ok=<missing>, gender=M"
            ]
        );
    }

    #[test]
    fn serialization_is_deterministic() {
        let a = serde_json::to_string(&group_measures(&view(), &["gender".into()], &[]).unwrap()).unwrap();
        let b = serde_json::to_string(&group_measures(&view(), &["gender".into()], &[]).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
