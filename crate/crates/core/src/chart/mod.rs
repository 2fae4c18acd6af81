//! Renderer-neutral chart descriptions (`irchart/1`).
//!
//! Each [`AggregateMark`] carries its aggregate channel values, the same
//! channels per fold, and the full [`MergedMeasure`], so a client can unfold
//! any mark without another request. Undefined aggregates are flagged on the
//! mark and never replaced by zero.

mod hull;
mod svg;

use serde::Serialize;
use thiserror::Error;

use crate::aggregate::MergedMeasure;
use crate::dataset::FilterPredicate;

pub use hull::{convex_hull, cross, hull_contains, Point};
pub use svg::render_svg;

pub const CHART_SCHEMA: &str = "irchart/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Bar,
    ScatterRegression,
    Bubble,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("statistic `{statistic}` is not numeric in measure `{measure}`")]
    NonNumeric { statistic: String, measure: String },
}

/// Statistic name bound to each visual channel.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Axes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Channels {
    pub x: Option<f64>,
    pub y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldMark {
    pub fold_index: usize,
    pub channels: Channels,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<Line>,
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateMark {
    pub id: String,
    pub label: String,
    pub channels: Channels,
    pub undefined: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Drawn with a distinct border when true.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significant: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<Line>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Point>,
    pub fold_marks: Vec<FoldMark>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unfold_region: Option<Vec<Point>>,
    pub measure: MergedMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmittedMark {
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct QueryProvenance {
    pub dataset: String,
    pub filters: Vec<FilterPredicate>,
    pub group_by: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartSpec {
    pub schema: String,
    pub chart_kind: ChartKind,
    pub axes: Axes,
    pub marks: Vec<AggregateMark>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub omitted: Vec<OmittedMark>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<QueryProvenance>,
}

impl ChartSpec {
    fn new(chart_kind: ChartKind, axes: Axes) -> Self {
        Self {
            schema: CHART_SCHEMA.to_string(),
            chart_kind,
            axes,
            marks: Vec::new(),
            omitted: Vec::new(),
            diagnostics: Vec::new(),
            provenance: None,
        }
    }

    /// Copy with every fold-level detail removed: what a pipeline without
    /// replication would have shipped for the same aggregates.
    pub fn strip_folds(&self) -> ChartSpec {
        let mut out = self.clone();
        for m in &mut out.marks {
            m.fold_marks.clear();
            m.unfold_region = None;
            m.measure.folds.clear();
            m.measure.vote_detail.clear();
        }
        out
    }
}

fn mark_id(i: usize) -> String {
    format!("m{i}")
}

fn undefined_reason(m: &MergedMeasure, statistic: &str) -> String {
    m.reasons
        .get(statistic)
        .cloned()
        .unwrap_or_else(|| format!("{statistic} is undefined"))
}

/// One bar per measure at the aggregate height; fold heights ride along as
/// tick overlays.
pub fn build_bar_chart(measures: &[MergedMeasure], statistic: &str) -> Result<ChartSpec, ChartError> {
    let mut chart = ChartSpec::new(
        ChartKind::Bar,
        Axes {
            y: Some(statistic.to_string()),
            ..Axes::default()
        },
    );
    for (i, m) in measures.iter().enumerate() {
        let numeric_or_missing = |v: Option<&crate::metrics::StatValue>| v.is_none_or(|v| v.as_f64().is_some());
        if !numeric_or_missing(m.get(statistic)) || !m.folds.iter().all(|f| numeric_or_missing(f.get(statistic))) {
            return Err(ChartError::NonNumeric {
                statistic: statistic.to_string(),
                measure: m.label.clone(),
            });
        }
        let height = m.number(statistic);
        let fold_marks = m
            .folds
            .iter()
            .map(|f| {
                let y = f.number(statistic);
                FoldMark {
                    fold_index: f.fold_index,
                    channels: Channels {
                        x: Some(i as f64),
                        y,
                        ..Channels::default()
                    },
                    line: None,
                    undefined: y.is_none(),
                }
            })
            .collect();
        chart.marks.push(AggregateMark {
            id: mark_id(i),
            label: m.label.clone(),
            channels: Channels {
                x: Some(i as f64),
                y: height,
                ..Channels::default()
            },
            undefined: height.is_none(),
            reason: height.is_none().then(|| undefined_reason(m, statistic)),
            significant: None,
            line: None,
            points: Vec::new(),
            fold_marks,
            unfold_region: None,
            measure: m.clone(),
        });
    }
    Ok(chart)
}

/// Scatter of raw points with one aggregate line and one line per defined fold.
pub fn build_regression_chart(items: Vec<(MergedMeasure, Vec<Point>)>) -> ChartSpec {
    let mut chart = ChartSpec::new(
        ChartKind::ScatterRegression,
        Axes {
            x: Some("x".into()),
            y: Some("y".into()),
            ..Axes::default()
        },
    );
    for (i, (m, points)) in items.into_iter().enumerate() {
        let line_of = |slope: Option<f64>, intercept: Option<f64>| match (slope, intercept) {
            (Some(slope), Some(intercept)) => Some(Line { slope, intercept }),
            _ => None,
        };
        let line = line_of(m.number("slope"), m.number("intercept"));
        if line.is_none() {
            chart.diagnostics.push(format!(
                "{}: no aggregate line ({})",
                m.label,
                undefined_reason(&m, "slope")
            ));
        }
        let fold_marks = m
            .folds
            .iter()
            .filter_map(|f| {
                line_of(f.number("slope"), f.number("intercept")).map(|l| FoldMark {
                    fold_index: f.fold_index,
                    channels: Channels::default(),
                    line: Some(l),
                    undefined: false,
                })
            })
            .collect();
        chart.marks.push(AggregateMark {
            id: mark_id(i),
            label: m.label.clone(),
            channels: Channels::default(),
            undefined: line.is_none(),
            reason: line.is_none().then(|| undefined_reason(&m, "slope")),
            significant: None,
            line,
            points,
            fold_marks,
            unfold_region: None,
            measure: m,
        });
    }
    chart
}

/// Odds-ratio direction used as the bubble color class.
pub fn odds_direction(odds_ratio: Option<f64>) -> &'static str {
    match odds_ratio {
        Some(r) if r > 1.0 => "positive",
        Some(r) if r < 1.0 => "negative",
        _ => "neutral",
    }
}

/// One circle per measure at (positive support, negative support), sized by
/// |phi| and colored by odds-ratio direction. The unfold region is the hull
/// of the fold positions and the aggregate position.
pub fn build_bubble_chart(measures: &[MergedMeasure]) -> ChartSpec {
    let mut chart = ChartSpec::new(
        ChartKind::Bubble,
        Axes {
            x: Some("positive_support".into()),
            y: Some("negative_support".into()),
            size: Some("phi".into()),
            color: Some("odds_ratio".into()),
        },
    );
    for m in measures {
        let fold_marks: Vec<FoldMark> = m
            .folds
            .iter()
            .filter_map(|f| match (f.number("positive_support"), f.number("negative_support")) {
                (Some(x), Some(y)) => Some(FoldMark {
                    fold_index: f.fold_index,
                    channels: Channels {
                        x: Some(x),
                        y: Some(y),
                        size: f.number("phi").map(f64::abs),
                        color: Some(odds_direction(f.number("odds_ratio")).to_string()),
                    },
                    line: None,
                    undefined: false,
                }),
                _ => None,
            })
            .collect();
        let (Some(x), Some(y), false) = (
            m.number("positive_support"),
            m.number("negative_support"),
            fold_marks.is_empty(),
        ) else {
            chart.omitted.push(OmittedMark {
                label: m.label.clone(),
                reason: "no fold with both supports defined".into(),
            });
            continue;
        };
        let mut corners: Vec<Point> = fold_marks
            .iter()
            .filter_map(|f| Some([f.channels.x?, f.channels.y?]))
            .collect();
        corners.push([x, y]);
        let region = convex_hull(&corners);
        let size = m.number("phi").map(f64::abs);
        chart.marks.push(AggregateMark {
            id: mark_id(chart.marks.len()),
            label: m.label.clone(),
            channels: Channels {
                x: Some(x),
                y: Some(y),
                size,
                color: Some(odds_direction(m.number("odds_ratio")).to_string()),
            },
            undefined: false,
            reason: size.is_none().then(|| undefined_reason(m, "phi")),
            significant: m.flag("significant"),
            line: None,
            points: Vec::new(),
            fold_marks,
            unfold_region: Some(region),
            measure: m.clone(),
        });
    }
    chart
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::aggregate::{aggregate, AggregationSpec};
    use crate::metrics::{FoldStats, MetricSpec, StatValue};

    fn fold(i: usize, vals: &[(&str, Option<StatValue>)]) -> FoldStats {
        FoldStats {
            fold_index: i,
            values: vals.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            support_n: 10,
            dropped_missing: 0,
            reasons: BTreeMap::new(),
            flags: Vec::new(),
        }
    }

    fn num(x: f64) -> Option<StatValue> {
        Some(StatValue::Number(x))
    }

    fn proportion_measure(label: &str, folds: &[Option<f64>]) -> MergedMeasure {
        let stats = folds
            .iter()
            .enumerate()
            .map(|(i, p)| {
                fold(
                    i,
                    &[
                        ("proportion", p.map(StatValue::Number)),
                        ("complement", p.map(|p| StatValue::Number(1.0 - p))),
                    ],
                )
            })
            .collect();
        let spec = AggregationSpec::defaults_for(&MetricSpec::Proportion {
            column: "g".into(),
            value: crate::dataset::Scalar::Text("M".into()),
        });
        let mut m = aggregate(stats, &spec).unwrap();
        m.label = label.to_string();
        m
    }

    fn bubble_measure(points: &[(f64, f64)]) -> MergedMeasure {
        let stats = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                fold(
                    i,
                    &[
                        ("positive_support", num(x)),
                        ("negative_support", num(y)),
                        ("phi", num(0.2)),
                        ("odds_ratio", num(1.5)),
                        ("odds_ratio_uncorrected", num(1.5)),
                        ("p_value", num(0.01)),
                        ("significant", Some(StatValue::Flag(true))),
                    ],
                )
            })
            .collect();
        let spec = AggregationSpec::defaults_for(&MetricSpec::binary_association("f", "o", 0.05));
        let mut m = aggregate(stats, &spec).unwrap();
        m.label = "f".into();
        m
    }

    #[test]
    fn two_bars_at_half() {
        let ms = [
            proportion_measure("M", &[Some(0.5)]),
            proportion_measure("F", &[Some(0.5)]),
        ];
        let chart = build_bar_chart(&ms, "proportion").unwrap();
        assert_eq!(chart.schema, CHART_SCHEMA);
        assert_eq!(chart.marks.len(), 2);
        assert!(chart.marks.iter().all(|m| m.channels.y == Some(0.5) && !m.undefined));
    }

    #[test]
    fn seven_folds_seven_ticks() {
        let ms = [proportion_measure(
            "M",
            &[
                Some(0.4),
                Some(0.5),
                Some(0.6),
                Some(0.5),
                Some(0.45),
                Some(0.55),
                Some(0.5),
            ],
        )];
        let chart = build_bar_chart(&ms, "proportion").unwrap();
        assert_eq!(chart.marks[0].fold_marks.len(), 7);
    }

    #[test]
    fn undefined_bar_is_flagged_not_zero() {
        let ms = [proportion_measure("M", &[Some(0.5)]), proportion_measure("F", &[None])];
        let chart = build_bar_chart(&ms, "proportion").unwrap();
        assert!(chart.marks[1].undefined);
        assert_eq!(chart.marks[1].channels.y, None);
        assert!(chart.marks[1].reason.is_some());
    }

    #[test]
    fn bar_on_flag_statistic_is_rejected() {
        let m = bubble_measure(&[(0.1, 0.2)]);
        assert!(build_bar_chart(&[m], "significant").is_err());
    }

    #[test]
    fn regression_lines_skip_undefined_folds() {
        let stats = vec![
            fold(0, &[("slope", num(2.0)), ("intercept", num(1.0)), ("r2", num(1.0))]),
            fold(1, &[("slope", None), ("intercept", None), ("r2", None)]),
            fold(2, &[("slope", num(2.0)), ("intercept", num(1.0)), ("r2", num(1.0))]),
        ];
        let spec = AggregationSpec::defaults_for(&MetricSpec::LinearRegression {
            x: "x".into(),
            y: "y".into(),
        });
        let m = aggregate(stats, &spec).unwrap();
        let chart = build_regression_chart(vec![(m, vec![[0.0, 1.0], [1.0, 3.0]])]);
        let mark = &chart.marks[0];
        assert_eq!(
            mark.line,
            Some(Line {
                slope: 2.0,
                intercept: 1.0
            })
        );
        assert_eq!(mark.fold_marks.len(), 2);
        assert!(mark.fold_marks.iter().all(|f| f.line == mark.line));
    }

    #[test]
    fn regression_without_aggregate_line_has_diagnostic() {
        let stats = vec![fold(0, &[("slope", None), ("intercept", None), ("r2", None)])];
        let spec = AggregationSpec::defaults_for(&MetricSpec::LinearRegression {
            x: "x".into(),
            y: "y".into(),
        });
        let chart = build_regression_chart(vec![(aggregate(stats, &spec).unwrap(), vec![[0.0, 0.0]])]);
        assert!(chart.marks[0].line.is_none());
        assert_eq!(chart.marks[0].points.len(), 1);
        assert_eq!(chart.diagnostics.len(), 1);
    }

    #[test]
    fn bubble_with_identical_folds_collapses_to_point() {
        let chart = build_bubble_chart(&[bubble_measure(&[(0.3, 0.2); 5])]);
        assert_eq!(chart.marks[0].unfold_region.as_deref(), Some(&[[0.3, 0.2]][..]));
        assert_eq!(chart.marks[0].significant, Some(true));
        assert_eq!(chart.marks[0].channels.color.as_deref(), Some("positive"));
    }

    #[test]
    fn bubble_triangle_hull_contains_aggregate() {
        let chart = build_bubble_chart(&[bubble_measure(&[(0.2, 0.2), (0.6, 0.2), (0.4, 0.5)])]);
        let mark = &chart.marks[0];
        let region = mark.unfold_region.as_ref().unwrap();
        assert_eq!(region.len(), 3);
        let agg = [mark.channels.x.unwrap(), mark.channels.y.unwrap()];
        assert!(hull_contains(region, agg, 1e-9));
        assert!(mark.fold_marks.iter().all(|f| hull_contains(
            region,
            [f.channels.x.unwrap(), f.channels.y.unwrap()],
            1e-9
        )));
    }

    #[test]
    fn bubble_five_folds_one_interior() {
        let pts = [(0.1, 0.2), (0.5, 0.1), (0.6, 0.5), (0.2, 0.6), (0.35, 0.35)];
        let chart = build_bubble_chart(&[bubble_measure(&pts)]);
        assert_eq!(chart.marks[0].unfold_region.as_ref().unwrap().len(), 4);
    }

    #[test]
    fn bubble_without_defined_folds_is_omitted() {
        let stats = vec![fold(
            0,
            &[
                ("positive_support", None),
                ("negative_support", num(0.1)),
                ("phi", None),
                ("odds_ratio", None),
                ("odds_ratio_uncorrected", None),
                ("p_value", None),
                ("significant", None),
            ],
        )];
        let spec = AggregationSpec::defaults_for(&MetricSpec::binary_association("f", "o", 0.05));
        let mut m = aggregate(stats, &spec).unwrap();
        m.label = "rare".into();
        let chart = build_bubble_chart(&[m]);
        assert!(chart.marks.is_empty());
        assert_eq!(chart.omitted[0].label, "rare");
    }

    #[test]
    fn stripping_folds_keeps_aggregates() {
        let chart = build_bubble_chart(&[bubble_measure(&[(0.2, 0.2), (0.6, 0.2), (0.4, 0.5)])]);
        let stripped = chart.strip_folds();
        assert!(stripped.marks[0].fold_marks.is_empty());
        assert!(stripped.marks[0].unfold_region.is_none());
        assert_eq!(stripped.marks[0].channels, chart.marks[0].channels);
        assert_eq!(stripped.marks[0].measure.aggregates, chart.marks[0].measure.aggregates);
    }
}
