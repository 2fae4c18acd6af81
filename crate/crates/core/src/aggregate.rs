//! Merging per-fold statistics into one aggregate per statistic.
//!
//! Numeric statistics are summed or averaged over the folds where they are
//! defined. Categorical statistics are decided by strict majority over
//! *all* folds: a label wins only when more than `n_effective / 2` folds hold
//! it, so folds that failed to compute count against every label. Ties and
//! splits fall back to the statistic's default label.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::GroupKey;
use crate::metrics::{FoldStats, MetricSpec, StatValue};
use crate::partition::PartitionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Sum,
    Mean,
    /// Weighted by each fold's `support_n`.
    WeightedMean,
    MajorityVote,
    /// Kept per fold only; the aggregate is always undefined.
    Omit,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregationSpec {
    pub strategies: BTreeMap<String, Strategy>,
    /// Label returned by a vote without a strict majority.
    #[serde(default)]
    pub vote_defaults: BTreeMap<String, StatValue>,
}

impl AggregationSpec {
    /// The standard strategy table for a metric's outputs.
    pub fn defaults_for(metric: &MetricSpec) -> Self {
        let mut spec = Self::default();
        for &name in metric.output_names() {
            let strategy = match name {
                "count" => Strategy::Sum,
                "p_value" => Strategy::Omit,
                "significant" => Strategy::MajorityVote,
                _ => Strategy::WeightedMean,
            };
            spec.strategies.insert(name.to_string(), strategy);
        }
        if spec.strategies.contains_key("significant") {
            spec.vote_defaults.insert("significant".into(), StatValue::Flag(false));
        }
        spec
    }

    pub fn with(mut self, name: &str, strategy: Strategy) -> Self {
        self.strategies.insert(name.to_string(), strategy);
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("no fold statistics to aggregate")]
    NoFolds,
    #[error("no aggregation strategy for statistic `{0}`")]
    MissingStrategy(String),
    #[error("statistic `{name}` holds {found} values; strategy {strategy:?} does not apply")]
    StrategyMismatch {
        name: String,
        strategy: Strategy,
        found: &'static str,
    },
}

/// Per-label fold counts for a voted statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteDetail {
    pub counts: BTreeMap<String, usize>,
    /// Folds with a defined value.
    pub defined: usize,
    pub n_effective: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unanimous: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub majority: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at_least_one: Option<bool>,
}

impl VoteDetail {
    pub fn true_count(&self) -> usize {
        self.counts.get("true").copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub partition: PartitionConfig,
    pub metric: MetricSpec,
    pub aggregation: AggregationSpec,
}

/// Aggregates plus the fold statistics behind them; the unit behind one mark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedMeasure {
    pub group_key: GroupKey,
    pub label: String,
    pub aggregates: BTreeMap<String, Option<StatValue>>,
    pub reasons: BTreeMap<String, String>,
    pub folds: Vec<FoldStats>,
    pub n_effective: usize,
    pub vote_detail: BTreeMap<String, VoteDetail>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl MergedMeasure {
    pub fn get(&self, name: &str) -> Option<&StatValue> {
        self.aggregates.get(name).and_then(Option::as_ref)
    }

    pub fn number(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(StatValue::as_f64)
    }

    pub fn flag(&self, name: &str) -> Option<bool> {
        self.get(name).and_then(StatValue::as_flag)
    }

    /// Fold values of one numeric statistic, `None` where undefined.
    pub fn fold_numbers(&self, name: &str) -> Vec<Option<f64>> {
        self.folds.iter().map(|f| f.number(name)).collect()
    }

    pub fn all_undefined(&self) -> bool {
        self.aggregates.values().all(Option::is_none)
    }
}

/// Merges `fold_stats` (one entry per fold) under `spec`.
pub fn aggregate(fold_stats: Vec<FoldStats>, spec: &AggregationSpec) -> Result<MergedMeasure, AggregateError> {
    let first = fold_stats.first().ok_or(AggregateError::NoFolds)?;
    let names: Vec<String> = first.values.keys().cloned().collect();
    let n_effective = fold_stats.len();

    let mut aggregates = BTreeMap::new();
    let mut reasons = BTreeMap::new();
    let mut vote_detail = BTreeMap::new();

    for name in names {
        let strategy = *spec
            .strategies
            .get(&name)
            .ok_or_else(|| AggregateError::MissingStrategy(name.clone()))?;
        let defined: Vec<(&StatValue, usize)> = fold_stats
            .iter()
            .filter_map(|f| f.get(&name).map(|v| (v, f.support_n)))
            .collect();

        let result: Result<StatValue, String> = match strategy {
            Strategy::Omit => Err("not aggregated; see per-fold values".into()),
            Strategy::MajorityVote => {
                let detail = vote_tally(&fold_stats, &name);
                let outcome = majority_vote(&detail, &defined, spec.vote_defaults.get(&name));
                vote_detail.insert(name.clone(), detail);
                outcome
            }
            numeric => {
                let mut values = Vec::with_capacity(defined.len());
                for (v, w) in &defined {
                    match v {
                        StatValue::Number(x) => values.push((*x, *w)),
                        other => {
                            return Err(AggregateError::StrategyMismatch {
                                name,
                                strategy,
                                found: kind_name(other),
                            })
                        }
                    }
                }
                numeric_aggregate(numeric, &values).map(StatValue::Number)
            }
        };

        match result {
            Ok(v) => {
                aggregates.insert(name, Some(v));
            }
            Err(reason) => {
                aggregates.insert(name.clone(), None);
                reasons.insert(name, reason);
            }
        }
    }

    Ok(MergedMeasure {
        group_key: GroupKey::default(),
        label: String::new(),
        aggregates,
        reasons,
        folds: fold_stats,
        n_effective,
        vote_detail,
        provenance: None,
    })
}

fn kind_name(v: &StatValue) -> &'static str {
    match v {
        StatValue::Number(_) => "numeric",
        StatValue::Flag(_) => "boolean",
        StatValue::Label(_) => "label",
    }
}

fn numeric_aggregate(strategy: Strategy, values: &[(f64, usize)]) -> Result<f64, String> {
    let Some(&(first, _)) = values.first() else {
        return Err("undefined in every fold".into());
    };
    // Identical inputs (including a single fold) pass through untouched.
    let uniform = values.iter().all(|&(x, _)| x.to_bits() == first.to_bits());
    match strategy {
        Strategy::Sum => Ok(values[1..].iter().fold(first, |acc, &(x, _)| acc + x)),
        Strategy::Mean if uniform => Ok(first),
        Strategy::Mean => Ok(values.iter().map(|&(x, _)| x).sum::<f64>() / values.len() as f64),
        Strategy::WeightedMean if uniform => Ok(first),
        Strategy::WeightedMean => {
            let total: usize = values.iter().map(|&(_, w)| w).sum();
            if total == 0 {
                return Err("zero total support".into());
            }
            let weighted: f64 = values.iter().map(|&(x, w)| x * w as f64).sum();
            Ok(weighted / total as f64)
        }
        Strategy::MajorityVote | Strategy::Omit => unreachable!("handled by caller"),
    }
}

fn majority_vote(
    detail: &VoteDetail,
    defined: &[(&StatValue, usize)],
    default: Option<&StatValue>,
) -> Result<StatValue, String> {
    if detail.defined == 0 {
        return Err("undefined in every fold".into());
    }
    let winner = detail
        .counts
        .iter()
        .find(|(_, &count)| 2 * count > detail.n_effective)
        .map(|(label, _)| label);
    if let Some(label) = winner {
        let value = defined
            .iter()
            .map(|(v, _)| *v)
            .find(|v| &v.label() == label)
            .expect("winning label came from a fold");
        return Ok(value.clone());
    }
    match (default, defined.first()) {
        (Some(d), _) => Ok(d.clone()),
        (None, Some((StatValue::Flag(_), _))) => Ok(StatValue::Flag(false)),
        _ => Err(format!("no strict majority among {} folds", detail.n_effective)),
    }
}

/// Counts fold labels for `statistic`. Boolean statistics also get the
/// unanimous / majority / at-least-one flags.
pub fn vote_tally(fold_stats: &[FoldStats], statistic: &str) -> VoteDetail {
    let n_effective = fold_stats.len();
    let mut counts = BTreeMap::new();
    let mut defined = 0;
    let mut boolean = true;
    let mut trues = 0;
    for f in fold_stats {
        if let Some(v) = f.get(statistic) {
            defined += 1;
            *counts.entry(v.label()).or_insert(0) += 1;
            match v {
                StatValue::Flag(b) => trues += usize::from(*b),
                _ => boolean = false,
            }
        }
    }
    let boolean = boolean && defined > 0;
    VoteDetail {
        counts,
        defined,
        n_effective,
        unanimous: boolean.then_some(defined == n_effective && trues == defined),
        majority: boolean.then_some(2 * trues > n_effective),
        at_least_one: boolean.then_some(trues >= 1),
    }
}
