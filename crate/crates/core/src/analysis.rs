//! The end-to-end pipeline: filter, group, partition, per-fold metrics,
//! aggregate, chart. Used by the HTTP service and the command line alike.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{aggregate, AggregateError, AggregationSpec, MergedMeasure, Provenance, Strategy};
use crate::chart::{
    build_bar_chart, build_bubble_chart, build_regression_chart, ChartError, ChartKind, ChartSpec, Point,
    QueryProvenance,
};
use crate::dataset::{
    check_grouping_kind, group_measures, Atom, Dataset, DatasetBuilder, DatasetView, FilterPredicate, GroupKey,
    KeyPart, RowId, Schema, Value,
};
use crate::error::ValidationError;
use crate::metrics::{Metric, MetricSpec, FLAG_SMALL_EXPECTED_CELL};
use crate::partition::{partition, FoldSet, IncrementalPartitionState, PartitionConfig, PartitionError, PartitionMode};

pub const RESULT_SCHEMA: &str = "irresult/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultsTag {
    #[default]
    Defaults,
}

/// Either the literal `"defaults"` or a strategy table laid over the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AggregationChoice {
    Defaults(DefaultsTag),
    Custom(AggregationSpec),
}

impl Default for AggregationChoice {
    fn default() -> Self {
        AggregationChoice::Defaults(DefaultsTag::Defaults)
    }
}

impl AggregationChoice {
    /// The full strategy table for `metric`.
    pub fn resolve(&self, metric: &MetricSpec) -> Result<AggregationSpec, ValidationError> {
        let mut spec = AggregationSpec::defaults_for(metric);
        let AggregationChoice::Custom(custom) = self else {
            return Ok(spec);
        };
        let names = metric.output_names();
        for (name, &strategy) in &custom.strategies {
            if !names.contains(&name.as_str()) {
                return Err(ValidationError::config(format!(
                    "aggregation names `{name}`, which this metric does not produce"
                )));
            }
            let categorical = name == "significant";
            let fits = match strategy {
                Strategy::Omit => true,
                Strategy::MajorityVote => categorical,
                Strategy::Sum | Strategy::Mean | Strategy::WeightedMean => !categorical,
            };
            if !fits {
                return Err(ValidationError::config(format!(
                    "strategy {strategy:?} does not apply to `{name}`"
                )));
            }
            spec.strategies.insert(name.clone(), strategy);
        }
        for (name, label) in &custom.vote_defaults {
            spec.vote_defaults.insert(name.clone(), label.clone());
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisRequest {
    pub dataset: String,
    #[serde(default)]
    pub filters: Vec<FilterPredicate>,
    #[serde(default)]
    pub group_by: Vec<String>,
    pub metric: MetricSpec,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub aggregation: AggregationChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_kind: Option<ChartKind>,
    /// Statistic plotted by a bar chart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub code: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisResponse {
    pub schema: &'static str,
    pub chart: ChartSpec,
    pub measures: Vec<MergedMeasure>,
    pub warnings: Vec<Warning>,
    /// The request with every default filled in; replaying it reproduces
    /// this response.
    pub provenance: AnalysisRequest,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("cannot resample from an empty subset")]
    EmptySubset,
    #[error("every measure is undefined")]
    AllUndefined(Box<AnalysisResponse>),
    #[error("session is closed")]
    Closed,
}

impl From<PartitionError> for AnalysisError {
    fn from(e: PartitionError) -> Self {
        match e {
            PartitionError::Config(v) => AnalysisError::Validation(v),
            PartitionError::EmptySubset => AnalysisError::EmptySubset,
        }
    }
}

/// Settings shared by one-shot and incremental analyses.
#[derive(Debug, Clone)]
struct Plan {
    metric: MetricSpec,
    specs: Vec<MetricSpec>,
    aggregation: AggregationSpec,
    chart_kind: ChartKind,
    statistic: String,
}

fn default_statistic(metric: &MetricSpec) -> &'static str {
    match metric {
        MetricSpec::LinearRegression { .. } => "slope",
        MetricSpec::BinaryAssociation { .. } => "phi",
        other => other.output_names()[0],
    }
}

impl Plan {
    fn new(
        metric: &MetricSpec,
        aggregation: &AggregationChoice,
        chart_kind: Option<ChartKind>,
        statistic: Option<&str>,
        dataset: &Dataset,
    ) -> Result<Self, AnalysisError> {
        metric.validate(dataset)?;
        let chart_kind = chart_kind.unwrap_or(match metric {
            MetricSpec::LinearRegression { .. } => ChartKind::ScatterRegression,
            MetricSpec::BinaryAssociation { .. } => ChartKind::Bubble,
            _ => ChartKind::Bar,
        });
        match (chart_kind, metric) {
            (ChartKind::ScatterRegression, MetricSpec::LinearRegression { .. })
            | (ChartKind::Bubble, MetricSpec::BinaryAssociation { .. })
            | (ChartKind::Bar, _) => {}
            (kind, _) => {
                return Err(ValidationError::config(format!("chart kind {kind:?} does not fit this metric")).into());
            }
        }
        let statistic = statistic.unwrap_or(default_statistic(metric)).to_string();
        if !metric.output_names().contains(&statistic.as_str()) || statistic == "significant" {
            return Err(
                ValidationError::config(format!("`{statistic}` is not a numeric output of this metric")).into(),
            );
        }
        Ok(Self {
            metric: metric.clone(),
            specs: metric.per_feature(),
            aggregation: aggregation.resolve(metric)?,
            chart_kind,
            statistic,
        })
    }

    fn label(spec: &MetricSpec, key: &GroupKey) -> String {
        match (spec.feature(), key.is_empty()) {
            (Some(f), true) => f.to_string(),
            (Some(f), false) => format!("{f} | {key}"),
            (None, _) => key.to_string(),
        }
    }

    fn measure(&self, spec: &MetricSpec, dataset: &Dataset, folds: &FoldSet) -> Result<MergedMeasure, AnalysisError> {
        let metric = Metric::bind(spec, dataset)?;
        let stats = folds
            .folds
            .iter()
            .map(|f| metric.evaluate(f.index, &f.member_row_ids))
            .collect();
        let mut merged = aggregate(stats, &self.aggregation)?;
        merged.group_key = folds.source.clone();
        merged.label = Self::label(spec, &folds.source);
        merged.provenance = Some(Provenance {
            partition: folds.config,
            metric: spec.clone(),
            aggregation: self.aggregation.clone(),
        });
        Ok(merged)
    }

    /// Runs the metric on every (group, fold set) pair and assembles the
    /// response. `members` holds each group's rows for scatter points.
    fn run(
        &self,
        dataset: &Dataset,
        groups: &[(FoldSet, Vec<RowId>, usize)],
        query: QueryProvenance,
    ) -> Result<(ChartSpec, Vec<MergedMeasure>, Vec<Warning>), AnalysisError> {
        let mut measures = Vec::new();
        let mut warnings = Vec::new();
        let mut points = Vec::new();
        for (folds, members, usable) in groups {
            for spec in &self.specs {
                let m = self.measure(spec, dataset, folds)?;
                warn_measure(&mut warnings, &m, folds, *usable, &self.aggregation);
                if self.chart_kind == ChartKind::ScatterRegression {
                    points.push(scatter_points(spec, dataset, members));
                }
                measures.push(m);
            }
        }
        let mut chart = match self.chart_kind {
            ChartKind::Bar => build_bar_chart(&measures, &self.statistic)?,
            ChartKind::ScatterRegression => build_regression_chart(measures.iter().cloned().zip(points).collect()),
            ChartKind::Bubble => build_bubble_chart(&measures),
        };
        chart.provenance = Some(query);
        Ok((chart, measures, warnings))
    }
}

fn scatter_points(spec: &MetricSpec, dataset: &Dataset, members: &[RowId]) -> Vec<Point> {
    let MetricSpec::LinearRegression { x, y } = spec else {
        return Vec::new();
    };
    let (Ok(x), Ok(y)) = (dataset.column(x), dataset.column(y)) else {
        return Vec::new();
    };
    members
        .iter()
        .filter_map(|id| Some([x.number(id.index())?, y.number(id.index())?]))
        .collect()
}

fn warn_measure(
    out: &mut Vec<Warning>,
    m: &MergedMeasure,
    folds: &FoldSet,
    usable: usize,
    aggregation: &AggregationSpec,
) {
    let mut push = |code: &'static str, message: String| {
        out.push(Warning {
            code,
            measure: Some(m.label.clone()),
            message,
        })
    };
    if folds.is_degraded() {
        push(
            "degraded_folds",
            format!(
                "n_effective = {} (requested {}, {} usable rows, min_fold_size {})",
                folds.n_effective, folds.config.n_requested, usable, folds.config.min_fold_size
            ),
        );
    }
    let empty = folds.folds.iter().filter(|f| f.is_empty()).count();
    if empty > 0 {
        push(
            "empty_folds",
            format!("{empty} of {} folds have no rows", folds.n_effective),
        );
    }
    for (name, value) in &m.aggregates {
        if value.is_none() && aggregation.strategies.get(name) != Some(&Strategy::Omit) {
            let reason = m.reasons.get(name).map_or("undefined", String::as_str);
            push("undefined_statistic", format!("{name} is undefined: {reason}"));
        }
    }
    let small = m
        .folds
        .iter()
        .filter(|f| f.flags.iter().any(|x| x == FLAG_SMALL_EXPECTED_CELL))
        .count();
    if small > 0 {
        push(
            FLAG_SMALL_EXPECTED_CELL,
            format!("{small} of {} folds have an expected cell count below 5", m.n_effective),
        );
    }
    let dropped: usize = m.folds.iter().map(|f| f.dropped_missing).sum();
    if dropped > 0 {
        push(
            "dropped_missing",
            format!("{dropped} fold rows dropped for missing values"),
        );
    }
}

/// Executes `request` against `dataset`. The result is a pure function of
/// the two.
pub fn run_analysis(dataset: &Arc<Dataset>, request: &AnalysisRequest) -> Result<AnalysisResponse, AnalysisError> {
    request.partition.validate()?;
    let view = DatasetView::full(Arc::clone(dataset)).filter(&request.filters)?;
    let subsets = group_measures(&view, &request.group_by, &request.filters)?;
    let plan = Plan::new(
        &request.metric,
        &request.aggregation,
        request.chart_kind,
        request.statistic.as_deref(),
        dataset,
    )?;

    let mut groups = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let folds = partition(&subset, &request.partition)?;
        let usable = match request.partition.mode {
            PartitionMode::Partial { .. } => folds.sizes().iter().sum(),
            _ => subset.len(),
        };
        groups.push((folds, subset.member_row_ids, usable));
    }

    let query = QueryProvenance {
        dataset: request.dataset.clone(),
        filters: request.filters.clone(),
        group_by: request.group_by.clone(),
    };
    let (chart, measures, warnings) = plan.run(dataset, &groups, query)?;
    let response = AnalysisResponse {
        schema: RESULT_SCHEMA,
        chart,
        provenance: AnalysisRequest {
            aggregation: AggregationChoice::Custom(plan.aggregation.clone()),
            chart_kind: Some(plan.chart_kind),
            statistic: Some(plan.statistic.clone()),
            ..request.clone()
        },
        measures,
        warnings,
    };
    if response.measures.iter().all(MergedMeasure::all_undefined) {
        return Err(AnalysisError::AllUndefined(Box::new(response)));
    }
    Ok(response)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncrementalStart {
    #[serde(default = "default_session_dataset")]
    pub dataset: String,
    pub schema: Schema,
    #[serde(default)]
    pub group_by: Vec<String>,
    pub metric: MetricSpec,
    /// `mode` is always treated as incremental.
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub aggregation: AggregationChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_kind: Option<ChartKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic: Option<String>,
}

fn default_session_dataset() -> String {
    "stream".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeedSummary {
    pub accepted: usize,
    pub arrivals_seen: usize,
}

#[derive(Debug, Clone)]
struct StreamGroup {
    key: GroupKey,
    state: IncrementalPartitionState,
    members: Vec<RowId>,
}

/// A running analysis over records that arrive in batches. Each group keeps
/// its own incremental fold assignment; snapshots evaluate the folds so far.
#[derive(Debug, Clone)]
pub struct IncrementalSession {
    start: IncrementalStart,
    plan: Plan,
    builder: DatasetBuilder,
    group_columns: Vec<usize>,
    groups: BTreeMap<Vec<Atom>, StreamGroup>,
    closed: bool,
}

impl IncrementalSession {
    pub fn start(mut request: IncrementalStart) -> Result<Self, AnalysisError> {
        request.partition.mode = PartitionMode::Incremental;
        request.partition.validate()?;
        let builder = DatasetBuilder::new(request.dataset.clone(), request.schema.clone());
        let empty = builder.snapshot();
        let mut seen = std::collections::BTreeSet::new();
        for f in &request.schema.fields {
            if !seen.insert(f.name.as_str()) {
                return Err(ValidationError::config(format!("duplicate column `{}` in schema", f.name)).into());
            }
        }
        let mut group_columns = Vec::new();
        for name in &request.group_by {
            let field = request.schema.field(name)?;
            check_grouping_kind(name, field.kind)?;
            group_columns.push(request.schema.index_of(name).expect("field exists"));
        }
        let plan = Plan::new(
            &request.metric,
            &request.aggregation,
            request.chart_kind,
            request.statistic.as_deref(),
            &empty,
        )?;
        let mut groups = BTreeMap::new();
        if request.group_by.is_empty() {
            groups.insert(
                Vec::new(),
                StreamGroup {
                    key: GroupKey::default(),
                    state: IncrementalPartitionState::new(request.partition)?,
                    members: Vec::new(),
                },
            );
        }
        Ok(Self {
            start: request,
            plan,
            builder,
            group_columns,
            groups,
            closed: false,
        })
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn arrivals_seen(&self) -> usize {
        self.builder.row_count()
    }

    /// Appends a batch of JSON object records. Absent keys and `null` are
    /// missing values. The batch is rejected whole if any record is invalid.
    pub fn feed(
        &mut self,
        records: &[serde_json::Map<String, serde_json::Value>],
    ) -> Result<FeedSummary, AnalysisError> {
        if self.closed {
            return Err(AnalysisError::Closed);
        }
        let schema = self.builder.schema().clone();
        let mut rows = Vec::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            if let Some(unknown) = record.keys().find(|k| schema.index_of(k).is_none()) {
                return Err(ValidationError::config(format!("record {i}: unknown column `{unknown}`")).into());
            }
            let row = schema
                .fields
                .iter()
                .map(|f| match record.get(&f.name) {
                    None => Ok(None),
                    Some(v) => Value::from_json(v, f.kind),
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ValidationError::config(format!("record {i}: {e}")))?;
            rows.push(row);
        }
        let accepted = rows.len();
        for row in rows {
            let key: Vec<Atom> = self.group_columns.iter().map(|&c| Atom::of(row[c].as_ref())).collect();
            let group_key = GroupKey(
                self.group_columns
                    .iter()
                    .map(|&c| KeyPart {
                        column: schema.fields[c].name.clone(),
                        value: row[c].clone(),
                    })
                    .collect(),
            );
            let id = self.builder.push_row(row)?;
            let config = self.start.partition;
            let group = self.groups.entry(key).or_insert_with(|| StreamGroup {
                key: group_key,
                state: IncrementalPartitionState::new(config).expect("validated at start"),
                members: Vec::new(),
            });
            group.state.add(id);
            group.members.push(id);
        }
        Ok(FeedSummary {
            accepted,
            arrivals_seen: self.arrivals_seen(),
        })
    }

    /// Metrics, aggregates and chart over the folds filled so far. Unlike a
    /// one-shot analysis this never fails for undefined measures; it warns.
    pub fn snapshot(&self) -> Result<AnalysisResponse, AnalysisError> {
        let dataset = self.builder.snapshot();
        let groups: Vec<(FoldSet, Vec<RowId>, usize)> = self
            .groups
            .values()
            .map(|g| (g.state.snapshot_for(&g.key), g.members.clone(), g.members.len()))
            .collect();
        let query = QueryProvenance {
            dataset: self.start.dataset.clone(),
            filters: Vec::new(),
            group_by: self.start.group_by.clone(),
        };
        let (chart, measures, mut warnings) = self.plan.run(&dataset, &groups, query)?;
        if groups.is_empty() {
            warnings.push(Warning {
                code: "empty_folds",
                measure: None,
                message: "no records have arrived yet".into(),
            });
        }
        Ok(AnalysisResponse {
            schema: RESULT_SCHEMA,
            chart,
            measures,
            warnings,
            provenance: AnalysisRequest {
                dataset: self.start.dataset.clone(),
                filters: Vec::new(),
                group_by: self.start.group_by.clone(),
                metric: self.plan.metric.clone(),
                partition: self.start.partition,
                aggregation: AggregationChoice::Custom(self.plan.aggregation.clone()),
                chart_kind: Some(self.plan.chart_kind),
                statistic: Some(self.plan.statistic.clone()),
            },
        })
    }
}
