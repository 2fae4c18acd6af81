//! Per-fold statistics.
//!
//! Every metric is evaluated on one fold at a time and never sees another
//! fold's rows. A row missing any column the metric reads is dropped from
//! that metric and counted in `dropped_missing`. Statistical degeneracy
//! (too few points, an absent outcome class) yields an undefined value with
//! a reason, not an error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::{Column, ColumnKind, Dataset, RowId, Scalar};
use crate::error::ValidationError;
use crate::partition::FoldSet;

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Tables whose smallest expected cell count falls below this are flagged.
pub const MIN_EXPECTED_CELL: f64 = 5.0;

pub const FLAG_SMALL_EXPECTED_CELL: &str = "small_expected_cell";

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// One feature column or several; several expand into one measure each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureColumns {
    One(String),
    Many(Vec<String>),
}

impl FeatureColumns {
    pub fn names(&self) -> Vec<&str> {
        match self {
            FeatureColumns::One(s) => vec![s.as_str()],
            FeatureColumns::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    Count,
    Proportion {
        column: String,
        value: Scalar,
    },
    Mean {
        column: String,
    },
    LinearRegression {
        x: String,
        y: String,
    },
    /// `outcome = true` marks the "good" outcome class.
    BinaryAssociation {
        feature: FeatureColumns,
        outcome: String,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

impl MetricSpec {
    pub fn binary_association(feature: &str, outcome: &str, alpha: f64) -> Self {
        MetricSpec::BinaryAssociation {
            feature: FeatureColumns::One(feature.to_string()),
            outcome: outcome.to_string(),
            alpha,
        }
    }

    pub fn output_names(&self) -> &'static [&'static str] {
        match self {
            MetricSpec::Count => &["count"],
            MetricSpec::Proportion { .. } => &["proportion", "complement"],
            MetricSpec::Mean { .. } => &["mean"],
            MetricSpec::LinearRegression { .. } => &["slope", "intercept", "r2"],
            MetricSpec::BinaryAssociation { .. } => &[
                "positive_support",
                "negative_support",
                "odds_ratio",
                "odds_ratio_uncorrected",
                "phi",
                "p_value",
                "significant",
            ],
        }
    }

    /// Splits a multi-feature association into single-feature specs; other
    /// kinds return themselves.
    pub fn per_feature(&self) -> Vec<MetricSpec> {
        match self {
            MetricSpec::BinaryAssociation {
                feature: FeatureColumns::Many(features),
                outcome,
                alpha,
            } => features
                .iter()
                .map(|f| MetricSpec::binary_association(f, outcome, *alpha))
                .collect(),
            other => vec![other.clone()],
        }
    }

    /// The single feature column of an association spec.
    pub fn feature(&self) -> Option<&str> {
        match self {
            MetricSpec::BinaryAssociation {
                feature: FeatureColumns::One(f),
                ..
            } => Some(f),
            _ => None,
        }
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<(), ValidationError> {
        match self {
            MetricSpec::BinaryAssociation { feature, .. } => {
                for spec in self.per_feature() {
                    Metric::bind(&spec, dataset)?;
                }
                if feature.names().is_empty() {
                    return Err(ValidationError::config("binary_association needs at least one feature"));
                }
                Ok(())
            }
            _ => Metric::bind(self, dataset).map(|_| ()),
        }
    }
}

/// A statistic value: numeric, boolean label or text label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatValue {
    Number(f64),
    Flag(bool),
    Label(String),
}

impl StatValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            StatValue::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_flag(&self) -> Option<bool> {
        match self {
            StatValue::Flag(b) => Some(*b),
            _ => None,
        }
    }

    /// Text used as a vote label.
    pub fn label(&self) -> String {
        match self {
            StatValue::Number(x) => x.to_string(),
            StatValue::Flag(b) => b.to_string(),
            StatValue::Label(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub fold_index: usize,
    /// `None` is the undefined marker (serialized as `null`).
    pub values: BTreeMap<String, Option<StatValue>>,
    pub support_n: usize,
    pub dropped_missing: usize,
    pub reasons: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl FoldStats {
    fn new(fold_index: usize, names: &[&str]) -> Self {
        Self {
            fold_index,
            values: names.iter().map(|n| (n.to_string(), None)).collect(),
            support_n: 0,
            dropped_missing: 0,
            reasons: BTreeMap::new(),
            flags: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&StatValue> {
        self.values.get(name).and_then(Option::as_ref)
    }

    pub fn number(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(StatValue::as_f64)
    }

    fn set_number(&mut self, name: &str, x: f64) {
        if x.is_finite() {
            self.values.insert(name.to_string(), Some(StatValue::Number(x)));
        } else {
            self.undefined(name, "non-finite result");
        }
    }

    fn set(&mut self, name: &str, v: StatValue) {
        self.values.insert(name.to_string(), Some(v));
    }

    fn undefined(&mut self, name: &str, reason: &str) {
        self.values.insert(name.to_string(), None);
        self.reasons.insert(name.to_string(), reason.to_string());
    }
}

/// A metric spec resolved against a dataset's columns.
#[derive(Debug)]
pub enum Metric<'a> {
    Count,
    Proportion {
        column: &'a Column,
        target: Target,
    },
    Mean {
        column: &'a Column,
    },
    LinearRegression {
        x: &'a Column,
        y: &'a Column,
    },
    BinaryAssociation {
        feature: &'a Column,
        outcome: &'a Column,
        alpha: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Text(String),
    Flag(bool),
    Int(i64),
}

impl<'a> Metric<'a> {
    pub fn bind(spec: &MetricSpec, dataset: &'a Dataset) -> Result<Self, ValidationError> {
        let numeric = |name: &str| -> Result<&'a Column, ValidationError> {
            let col = dataset.column(name)?;
            if col.kind().is_numeric() {
                Ok(col)
            } else {
                Err(ValidationError::kind(name, col.kind(), "expected a numeric column"))
            }
        };
        let binary = |name: &str| -> Result<&'a Column, ValidationError> {
            let col = dataset.column(name)?;
            match col.kind() {
                ColumnKind::Boolean | ColumnKind::Integer => Ok(col),
                kind => Err(ValidationError::kind(
                    name,
                    kind,
                    "expected a boolean or 0/1 integer column",
                )),
            }
        };
        Ok(match spec {
            MetricSpec::Count => Metric::Count,
            MetricSpec::Proportion { column, value } => {
                let col = dataset.column(column)?;
                let target = match (col.kind(), value) {
                    (ColumnKind::Category, Scalar::Text(t)) => Target::Text(t.clone()),
                    (ColumnKind::Boolean, Scalar::Bool(b)) => Target::Flag(*b),
                    (ColumnKind::Integer, Scalar::Int(i)) => Target::Int(*i),
                    (kind @ (ColumnKind::Category | ColumnKind::Boolean | ColumnKind::Integer), v) => {
                        return Err(ValidationError::kind(
                            column,
                            kind,
                            format!("target {v:?} does not match"),
                        ))
                    }
                    (kind, _) => {
                        return Err(ValidationError::kind(
                            column,
                            kind,
                            "proportion needs a category, boolean or integer column",
                        ))
                    }
                };
                Metric::Proportion { column: col, target }
            }
            MetricSpec::Mean { column } => Metric::Mean {
                column: numeric(column)?,
            },
            MetricSpec::LinearRegression { x, y } => Metric::LinearRegression {
                x: numeric(x)?,
                y: numeric(y)?,
            },
            MetricSpec::BinaryAssociation {
                feature,
                outcome,
                alpha,
            } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(ValidationError::config(format!("alpha {alpha} is outside (0, 1)")));
                }
                let feature = match feature {
                    FeatureColumns::One(f) => f,
                    FeatureColumns::Many(_) => {
                        return Err(ValidationError::config(
                            "expand multi-feature specs with per_feature() first",
                        ))
                    }
                };
                Metric::BinaryAssociation {
                    feature: binary(feature)?,
                    outcome: binary(outcome)?,
                    alpha: *alpha,
                }
            }
        })
    }

    pub fn output_names(&self) -> &'static [&'static str] {
        match self {
            Metric::Count => &["count"],
            Metric::Proportion { .. } => &["proportion", "complement"],
            Metric::Mean { .. } => &["mean"],
            Metric::LinearRegression { .. } => &["slope", "intercept", "r2"],
            Metric::BinaryAssociation { .. } => &[
                "positive_support",
                "negative_support",
                "odds_ratio",
                "odds_ratio_uncorrected",
                "phi",
                "p_value",
                "significant",
            ],
        }
    }

    /// Statistics for one fold's members (a multiset in replacement mode).
    pub fn evaluate(&self, fold_index: usize, rows: &[RowId]) -> FoldStats {
        let mut out = FoldStats::new(fold_index, self.output_names());
        match self {
            Metric::Count => {
                out.support_n = rows.len();
                out.set_number("count", rows.len() as f64);
            }
            Metric::Proportion { column, target } => metric_proportion(&mut out, column, target, rows),
            Metric::Mean { column } => metric_mean(&mut out, column, rows),
            Metric::LinearRegression { x, y } => metric_linear_regression(&mut out, x, y, rows),
            Metric::BinaryAssociation {
                feature,
                outcome,
                alpha,
            } => metric_binary_association(&mut out, feature, outcome, *alpha, rows),
        }
        out
    }
}

fn metric_proportion(out: &mut FoldStats, column: &Column, target: &Target, rows: &[RowId]) {
    let mut usable = 0usize;
    let mut matching = 0usize;
    for id in rows {
        let hit = match (column, target) {
            (Column::Category(v), Target::Text(t)) => v[id.index()].as_ref().map(|c| c == t),
            (Column::Boolean(v), Target::Flag(t)) => v[id.index()].map(|c| c == *t),
            (Column::Integer(v), Target::Int(t)) => v[id.index()].map(|c| c == *t),
            _ => None,
        };
        match hit {
            Some(h) => {
                usable += 1;
                matching += usize::from(h);
            }
            None => out.dropped_missing += 1,
        }
    }
    out.support_n = usable;
    if usable == 0 {
        out.undefined("proportion", "no usable rows");
        out.undefined("complement", "no usable rows");
        return;
    }
    let p = matching as f64 / usable as f64;
    out.set_number("proportion", p);
    out.set_number("complement", (usable - matching) as f64 / usable as f64);
}

fn metric_mean(out: &mut FoldStats, column: &Column, rows: &[RowId]) {
    let mut sum = 0.0;
    let mut n = 0usize;
    for id in rows {
        match column.number(id.index()) {
            Some(x) => {
                sum += x;
                n += 1;
            }
            None => out.dropped_missing += 1,
        }
    }
    out.support_n = n;
    if n == 0 {
        out.undefined("mean", "no usable rows");
    } else {
        out.set_number("mean", sum / n as f64);
    }
}

fn metric_linear_regression(out: &mut FoldStats, x: &Column, y: &Column, rows: &[RowId]) {
    let mut points = Vec::with_capacity(rows.len());
    for id in rows {
        match (x.number(id.index()), y.number(id.index())) {
            (Some(a), Some(b)) => points.push((a, b)),
            _ => out.dropped_missing += 1,
        }
    }
    out.support_n = points.len();
    match fit_line(&points) {
        Ok(fit) => {
            out.set_number("slope", fit.slope);
            out.set_number("intercept", fit.intercept);
            match fit.r2 {
                Some(r2) => out.set_number("r2", r2),
                None => out.undefined("r2", "zero y variance"),
            }
        }
        Err(reason) => {
            for name in ["slope", "intercept", "r2"] {
                out.undefined(name, reason.as_str());
            }
        }
    }
}

fn metric_binary_association(out: &mut FoldStats, feature: &Column, outcome: &Column, alpha: f64, rows: &[RowId]) {
    let mut table = TwoByTwo::default();
    for id in rows {
        match (feature.binary(id.index()), outcome.binary(id.index())) {
            (Some(present), Some(good)) => table.add(present, good),
            _ => out.dropped_missing += 1,
        }
    }
    out.support_n = table.total() as usize;
    let assoc = table.association(alpha);

    let put = |out: &mut FoldStats, name: &str, v: Result<f64, &'static str>| match v {
        Ok(x) => out.set_number(name, x),
        Err(reason) => out.undefined(name, reason),
    };
    put(out, "positive_support", assoc.positive_support);
    put(out, "negative_support", assoc.negative_support);
    put(out, "odds_ratio", assoc.odds_ratio);
    put(out, "odds_ratio_uncorrected", assoc.odds_ratio_uncorrected);
    put(out, "phi", assoc.phi);
    put(out, "p_value", assoc.p_value);
    match assoc.significant {
        Ok(s) => out.set("significant", StatValue::Flag(s)),
        Err(reason) => out.undefined("significant", reason),
    }
    if assoc.small_expected_cell {
        out.flags.push(FLAG_SMALL_EXPECTED_CELL.to_string());
    }
}

/// Runs `spec` on every fold, returning stats in fold order.
pub fn run_metrics(
    fold_set: &FoldSet,
    spec: &MetricSpec,
    dataset: &Dataset,
) -> Result<Vec<FoldStats>, ValidationError> {
    let metric = Metric::bind(spec, dataset)?;
    Ok(fold_set
        .folds
        .iter()
        .map(|fold| metric.evaluate(fold.index, &fold.member_row_ids))
        .collect())
}

/// Ordinary least squares fit of `y` on `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; `None` when `y` has no variance.
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitError {
    InsufficientPoints,
    ZeroXVariance,
}

impl FitError {
    pub fn as_str(self) -> &'static str {
        match self {
            FitError::InsufficientPoints => "insufficient points",
            FitError::ZeroXVariance => "zero x variance",
        }
    }
}

/// Ordinary least squares: `slope = Sxy / Sxx`, `intercept = ȳ - slope·x̄`,
/// `r2 = Sxy² / (Sxx·Syy)`, with the S terms taken about one of the points.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit, FitError> {
    if points.len() < 2 {
        return Err(FitError::InsufficientPoints);
    }
    // Shifting by a data point instead of the mean keeps every sum exact for
    // integer data, so noiseless integer lines come back exactly.
    let n = points.len() as f64;
    let (x0, y0) = points[points.len() / 2];
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - x0, y - y0);
        sx += dx;
        sy += dy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let vxx = n * sxx - sx * sx;
    if vxx <= 0.0 {
        return Err(FitError::ZeroXVariance);
    }
    let cxy = n * sxy - sx * sy;
    let vyy = n * syy - sy * sy;
    let slope = cxy / vxx;
    let intercept = y0 + (sy - slope * sx) / n - slope * x0;
    let r2 = (vyy > 0.0).then(|| (cxy * cxy / (vxx * vyy)).min(1.0));
    Ok(LineFit { slope, intercept, r2 })
}

/// Feature-by-outcome counts.
///
/// ```text
///                 good outcome   bad outcome
/// feature present      a              c
/// feature absent       b              d
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TwoByTwo {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub positive_support: Result<f64, &'static str>,
    pub negative_support: Result<f64, &'static str>,
    pub odds_ratio: Result<f64, &'static str>,
    pub odds_ratio_uncorrected: Result<f64, &'static str>,
    pub phi: Result<f64, &'static str>,
    pub chi_square: Result<f64, &'static str>,
    pub p_value: Result<f64, &'static str>,
    pub significant: Result<bool, &'static str>,
    pub small_expected_cell: bool,
}

impl TwoByTwo {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    pub fn add(&mut self, feature_present: bool, good_outcome: bool) {
        match (feature_present, good_outcome) {
            (true, true) => self.a += 1,
            (false, true) => self.b += 1,
            (true, false) => self.c += 1,
            (false, false) => self.d += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// Pearson chi-square with one degree of freedom, no continuity correction.
    /// `None` when a margin is empty.
    pub fn chi_square(&self) -> Option<f64> {
        let [a, b, c, d] = [self.a, self.b, self.c, self.d].map(|v| v as f64);
        let margins = (a + b) * (c + d) * (a + c) * (b + d);
        if margins == 0.0 {
            return None;
        }
        let diff = a * d - b * c;
        Some((a + b + c + d) * diff * diff / margins)
    }

    pub fn association(&self, alpha: f64) -> Association {
        let [a, b, c, d] = [self.a, self.b, self.c, self.d].map(|v| v as f64);
        let good = a + b;
        let bad = c + d;
        let present = a + c;
        let absent = b + d;
        let n = good + bad;

        let positive_support = if good > 0.0 {
            Ok(a / good)
        } else {
            Err("no good-outcome rows")
        };
        let negative_support = if bad > 0.0 {
            Ok(c / bad)
        } else {
            Err("no bad-outcome rows")
        };

        let degenerate: Option<&'static str> = if good == 0.0 || bad == 0.0 {
            Some("single outcome class")
        } else if present == 0.0 || absent == 0.0 {
            Some("feature is constant")
        } else {
            None
        };

        let (odds_ratio, odds_ratio_uncorrected, phi, chi_square, p_value, significant) = match degenerate {
            Some(r) => (Err(r), Err(r), Err(r), Err(r), Err(r), Err(r)),
            None => {
                let any_zero = a == 0.0 || b == 0.0 || c == 0.0 || d == 0.0;
                let corrected = if any_zero {
                    ((a + 0.5) * (d + 0.5)) / ((b + 0.5) * (c + 0.5))
                } else {
                    (a * d) / (b * c)
                };
                let uncorrected = if b * c > 0.0 {
                    Ok((a * d) / (b * c))
                } else {
                    Err("zero cell in denominator")
                };
                let phi = ((a * d - b * c) / (good * bad * present * absent).sqrt()).clamp(-1.0, 1.0);
                let chi2 = self.chi_square().expect("margins are nonzero");
                let p = chi_square_p_value(chi2);
                (Ok(corrected), uncorrected, Ok(phi), Ok(chi2), Ok(p), Ok(p < alpha))
            }
        };

        let small_expected_cell = n > 0.0
            && [good * present, good * absent, bad * present, bad * absent]
                .iter()
                .any(|m| m / n < MIN_EXPECTED_CELL);

        Association {
            positive_support,
            negative_support,
            odds_ratio,
            odds_ratio_uncorrected,
            phi,
            chi_square,
            p_value,
            significant,
            small_expected_cell,
        }
    }
}

/// Upper tail of the chi-square distribution with one degree of freedom,
/// kept strictly positive.
pub fn chi_square_p_value(chi2: f64) -> f64 {
    let dist = ChiSquared::new(1.0).expect("one degree of freedom");
    dist.sf(chi2.max(0.0)).clamp(f64::MIN_POSITIVE, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MeasureSubset;
    use crate::dataset::{ingest_csv_reader, DatasetBuilder, Field, Schema, Value};
    use crate::partition::{partition, PartitionConfig};

    fn ids(n: u64) -> Vec<RowId> {
        (0..n).map(RowId).collect()
    }

    fn single_column(kind: ColumnKind, cells: Vec<Option<Value>>) -> Dataset {
        let mut b = DatasetBuilder::new("t", Schema::new(vec![Field { name: "v".into(), kind }]));
        for c in cells {
            b.push_row(vec![c]).unwrap();
        }
        b.build()
    }

    #[test]
    fn count_uses_multiset_cardinality() {
        let ds = single_column(ColumnKind::Number, vec![Some(Value::Number(1.0)); 7]);
        let m = Metric::bind(&MetricSpec::Count, &ds).unwrap();
        assert_eq!(m.evaluate(0, &ids(7)).number("count"), Some(7.0));
        assert_eq!(m.evaluate(0, &[]).number("count"), Some(0.0));
        assert_eq!(m.evaluate(0, &[RowId(2); 10]).number("count"), Some(10.0));
    }

    #[test]
    fn proportion_of_black() {
        let cells = ["B", "B", "R", "B"]
            .iter()
            .map(|s| Some(Value::Category(s.to_string())))
            .collect();
        let ds = single_column(ColumnKind::Category, cells);
        let spec = MetricSpec::Proportion {
            column: "v".into(),
            value: Scalar::Text("B".into()),
        };
        let s = Metric::bind(&spec, &ds).unwrap().evaluate(0, &ids(4));
        assert_eq!(s.number("proportion"), Some(0.75));
        assert_eq!(s.number("complement"), Some(0.25));
        let s = Metric::bind(&spec, &ds).unwrap().evaluate(0, &[RowId(0), RowId(2)]);
        assert_eq!((s.number("proportion"), s.number("complement")), (Some(0.5), Some(0.5)));
    }

    #[test]
    fn proportion_all_missing_is_undefined() {
        let ds = single_column(ColumnKind::Category, vec![None, None]);
        let spec = MetricSpec::Proportion {
            column: "v".into(),
            value: Scalar::Text("B".into()),
        };
        let s = Metric::bind(&spec, &ds).unwrap().evaluate(0, &ids(2));
        assert_eq!(s.values["proportion"], None);
        assert_eq!(s.support_n, 0);
        assert_eq!(s.dropped_missing, 2);
        assert!(s.reasons.contains_key("proportion"));
    }

    #[test]
    fn mean_cases() {
        let ds = single_column(
            ColumnKind::Number,
            [1.0, 2.0, 3.0].map(|x| Some(Value::Number(x))).to_vec(),
        );
        let m = Metric::bind(&MetricSpec::Mean { column: "v".into() }, &ds).unwrap();
        assert_eq!(m.evaluate(0, &ids(3)).number("mean"), Some(2.0));
        assert_eq!(m.evaluate(0, &[RowId(2)]).number("mean"), Some(3.0));
        assert_eq!(m.evaluate(0, &[]).values["mean"], None);
    }

    #[test]
    fn ols_exact_line() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let fit = fit_line(&pts).unwrap();
        assert_eq!((fit.slope, fit.intercept, fit.r2), (2.0, 1.0, Some(1.0)));
    }

    #[test]
    fn ols_flat_fit_through_tent() {
        // x̄ = 1, ȳ = 1/3, Sxy = (-1)(-1/3) + 0 + (1)(-1/3) = 0 → slope 0, intercept 1/3.
        let fit = fit_line(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert!((fit.intercept - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(fit.r2, Some(0.0));
    }

    #[test]
    fn ols_degenerate_inputs() {
        assert_eq!(fit_line(&[(1.0, 2.0)]), Err(FitError::InsufficientPoints));
        assert_eq!(fit_line(&[(1.0, 2.0), (1.0, 3.0)]), Err(FitError::ZeroXVariance));
        let ds = ingest_csv_reader("t", "x,y\n1,2\n".as_bytes(), None).unwrap();
        let spec = MetricSpec::LinearRegression {
            x: "x".into(),
            y: "y".into(),
        };
        let s = Metric::bind(&spec, &ds).unwrap().evaluate(0, &ids(1));
        assert!(s.values.values().all(Option::is_none));
        assert_eq!(s.reasons["slope"], "insufficient points");
    }

    #[test]
    fn perfect_association() {
        let a = TwoByTwo::new(10, 0, 0, 10).association(0.05);
        assert_eq!(a.phi, Ok(1.0));
        assert_eq!(a.significant, Ok(true));
        assert_eq!(a.positive_support, Ok(1.0));
        assert_eq!(a.negative_support, Ok(0.0));
        // Zero cells trigger the +0.5 correction: 10.5² / 0.5².
        assert_eq!(a.odds_ratio, Ok(441.0));
        assert!(a.odds_ratio_uncorrected.is_err());
    }

    #[test]
    fn independent_table() {
        let a = TwoByTwo::new(5, 5, 5, 5).association(0.05);
        assert_eq!(a.phi, Ok(0.0));
        assert_eq!(a.p_value, Ok(1.0));
        assert_eq!(a.significant, Ok(false));
        assert_eq!(a.odds_ratio, Ok(1.0));
        assert!(!a.small_expected_cell);
    }

    #[test]
    fn chi_square_closed_form() {
        // N(ad - bc)² / (r1 r2 c1 c2) = 60 · 300² / 30⁴ = 20/3.
        let t = TwoByTwo::new(20, 10, 10, 20);
        assert!((t.chi_square().unwrap() - 20.0 / 3.0).abs() < 1e-12);
        // erfc(sqrt(10/3)) computed independently.
        let p = t.association(0.05).p_value.unwrap();
        assert!((p - 0.009823274507519235).abs() < 1e-12, "{p}");
    }

    #[test]
    fn single_outcome_class() {
        let a = TwoByTwo::new(3, 7, 0, 0).association(0.05);
        assert_eq!(a.positive_support, Ok(0.3));
        assert!(a.negative_support.is_err());
        assert!(a.phi.is_err() && a.p_value.is_err() && a.significant.is_err());
    }

    #[test]
    fn small_cells_are_flagged() {
        assert!(TwoByTwo::new(2, 3, 4, 5).association(0.05).small_expected_cell);
    }

    #[test]
    fn p_value_never_reaches_zero() {
        assert!(chi_square_p_value(1e6) > 0.0);
        assert_eq!(chi_square_p_value(0.0), 1.0);
    }

    #[test]
    fn run_metrics_one_stats_per_fold_in_order() {
        let ds = ingest_csv_reader("t", "v\n1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n".as_bytes(), None).unwrap();
        let subset = MeasureSubset::ungrouped(ids(10));
        let fs = partition(&subset, &PartitionConfig::disjoint(5, 1, 3)).unwrap();
        let stats = run_metrics(&fs, &MetricSpec::Mean { column: "v".into() }, &ds).unwrap();
        assert_eq!(stats.len(), 5);
        assert!(stats
            .iter()
            .enumerate()
            .all(|(i, s)| s.fold_index == i && s.support_n == 2));

        let ident = partition(&subset, &PartitionConfig::disjoint(1, 1, 3)).unwrap();
        let stats = run_metrics(&ident, &MetricSpec::Mean { column: "v".into() }, &ds).unwrap();
        assert_eq!(stats.len(), 1);
        assert_eq!(stats[0].number("mean"), Some(5.5));
    }

    #[test]
    fn absent_column_fails_before_any_fold() {
        let ds = ingest_csv_reader("t", "v\n1\n".as_bytes(), None).unwrap();
        let fs = partition(&MeasureSubset::ungrouped(ids(1)), &PartitionConfig::disjoint(1, 1, 0)).unwrap();
        let err = run_metrics(&fs, &MetricSpec::Mean { column: "nope".into() }, &ds).unwrap_err();
        assert_eq!(err, ValidationError::UnknownColumn("nope".into()));
    }

    #[test]
    fn spec_kind_checks() {
        let ds = ingest_csv_reader("t", "g,w,f\nM,1.5,true\n".as_bytes(), None).unwrap();
        assert!(MetricSpec::Mean { column: "g".into() }.validate(&ds).is_err());
        assert!(MetricSpec::binary_association("w", "f", 0.05).validate(&ds).is_err());
        assert!(MetricSpec::binary_association("f", "f", 1.5).validate(&ds).is_err());
        assert!(MetricSpec::Proportion {
            column: "g".into(),
            value: Scalar::Int(1)
        }
        .validate(&ds)
        .is_err());
        assert!(MetricSpec::Proportion {
            column: "w".into(),
            value: Scalar::Float(1.5)
        }
        .validate(&ds)
        .is_err());
    }

    #[test]
    fn every_output_name_is_present() {
        let ds = ingest_csv_reader("t", "f,o\ntrue,true\nfalse,false\n".as_bytes(), None).unwrap();
        let spec = MetricSpec::binary_association("f", "o", 0.05);
        let s = Metric::bind(&spec, &ds).unwrap().evaluate(0, &[]);
        let names: Vec<&str> = s.values.keys().map(String::as_str).collect();
        let mut expected = spec.output_names().to_vec();
        expected.sort_unstable();
        assert_eq!(names, expected);
    }

    #[test]
    fn metric_spec_json() {
        let spec: MetricSpec =
            serde_json::from_str(r#"{"kind": "binary_association", "feature": ["a", "b"], "outcome": "o"}"#).unwrap();
        let parts = spec.per_feature();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[1], MetricSpec::binary_association("b", "o", DEFAULT_ALPHA));
        let spec: MetricSpec = serde_json::from_str(r#"{"kind": "proportion", "column": "g", "value": "F"}"#).unwrap();
        assert_eq!(
            spec,
            MetricSpec::Proportion {
                column: "g".into(),
                value: Scalar::Text("F".into())
            }
        );
    }

    #[test]
    fn fold_stats_serialize_undefined_as_null() {
        let ds = single_column(ColumnKind::Number, vec![]);
        let s = Metric::bind(&MetricSpec::Mean { column: "v".into() }, &ds)
            .unwrap()
            .evaluate(0, &[]);
        let v = serde_json::to_value(&s).unwrap();
        assert!(v["values"]["mean"].is_null());
        assert_eq!(v["reasons"]["mean"], "no usable rows");
    }
}
