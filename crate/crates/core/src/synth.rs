//! Seeded synthetic datasets for demos and the acceptance suite.
//!
//! Every column is drawn from its own sub-stream of the spec's seed
//! ([`SplitMix64::stream`]), so adding a column never perturbs the others.
//! Bernoulli draws are `unit_f64() < p`; normal noise comes from
//! `rand_distr::Normal` driven by the same generator.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnKind, Dataset, DatasetBuilder, Field, Schema};
use crate::error::ValidationError;
use crate::rng::SplitMix64;

fn default_feature_p() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// One boolean column `value`, true with probability `p`.
    BinaryPopulation {
        p: f64,
        size: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Columns `x` (uniform on `[x_min, x_max]`) and
    /// `y = slope * x + intercept + N(0, noise_sd)`.
    NoisyLinear {
        slope: f64,
        intercept: f64,
        noise_sd: f64,
        x_min: f64,
        x_max: f64,
        size: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Boolean columns `f0000..` drawn independently of boolean `outcome`.
    NullAssociationTable {
        features: usize,
        rows: usize,
        outcome_p: f64,
        #[serde(default = "default_feature_p")]
        feature_p: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl GeneratorSpec {
    pub fn seed(&self) -> u64 {
        match *self {
            GeneratorSpec::BinaryPopulation { seed, .. }
            | GeneratorSpec::NoisyLinear { seed, .. }
            | GeneratorSpec::NullAssociationTable { seed, .. } => seed,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::BinaryPopulation { .. } => "binary_population",
            GeneratorSpec::NoisyLinear { .. } => "noisy_linear",
            GeneratorSpec::NullAssociationTable { .. } => "null_association_table",
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(ValidationError::config(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        let size = |name: &str, n: usize| {
            if n >= 1 {
                Ok(())
            } else {
                Err(ValidationError::config(format!("{name} must be at least 1")))
            }
        };
        match *self {
            GeneratorSpec::BinaryPopulation { p, size: n, .. } => {
                prob("p", p)?;
                size("size", n)
            }
            GeneratorSpec::NoisyLinear {
                slope,
                intercept,
                noise_sd,
                x_min,
                x_max,
                size: n,
                ..
            } => {
                if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
                    return Err(ValidationError::config(format!(
                        "noise_sd must be finite and >= 0, got {noise_sd}"
                    )));
                }
                if ![slope, intercept, x_min, x_max].iter().all(|v| v.is_finite()) || x_min > x_max {
                    return Err(ValidationError::config(
                        "slope, intercept and x range must be finite with x_min <= x_max",
                    ));
                }
                size("size", n)
            }
            GeneratorSpec::NullAssociationTable {
                features,
                rows,
                outcome_p,
                feature_p,
                ..
            } => {
                prob("outcome_p", outcome_p)?;
                prob("feature_p", feature_p)?;
                size("features", features)?;
                size("rows", rows)
            }
        }
    }
}

/// Name of feature column `i` in a null association table.
pub fn feature_name(i: usize) -> String {
    format!("f{i:04}")
}

fn bernoulli(seed: u64, stream: u64, p: f64, n: usize) -> Column {
    let mut rng = SplitMix64::stream(seed, stream);
    Column::Boolean((0..n).map(|_| Some(rng.unit_f64() < p)).collect())
}

fn field(name: impl Into<String>, kind: ColumnKind) -> Field {
    Field {
        name: name.into(),
        kind,
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<Dataset, ValidationError> {
    spec.validate()?;
    let seed = spec.seed();
    let (fields, columns) = match *spec {
        GeneratorSpec::BinaryPopulation { p, size, .. } => (
            vec![field("value", ColumnKind::Boolean)],
            vec![bernoulli(seed, 0, p, size)],
        ),
        GeneratorSpec::NoisyLinear {
            slope,
            intercept,
            noise_sd,
            x_min,
            x_max,
            size,
            ..
        } => {
            let mut xr = SplitMix64::stream(seed, 0);
            let mut er = SplitMix64::stream(seed, 1);
            let noise = Normal::new(0.0, noise_sd).expect("validated noise_sd");
            let xs: Vec<f64> = (0..size).map(|_| x_min + (x_max - x_min) * xr.unit_f64()).collect();
            let ys: Vec<Option<f64>> = xs
                .iter()
                .map(|&x| {
                    let e = if noise_sd == 0.0 { 0.0 } else { noise.sample(&mut er) };
                    Some(slope * x + intercept + e)
                })
                .collect();
            (
                vec![field("x", ColumnKind::Number), field("y", ColumnKind::Number)],
                vec![Column::Number(xs.into_iter().map(Some).collect()), Column::Number(ys)],
            )
        }
        GeneratorSpec::NullAssociationTable {
            features,
            rows,
            outcome_p,
            feature_p,
            ..
        } => {
            let mut fields: Vec<Field> = (0..features)
                .map(|i| field(feature_name(i), ColumnKind::Boolean))
                .collect();
            fields.push(field("outcome", ColumnKind::Boolean));
            let mut columns: Vec<Column> = (0..features)
                .map(|i| bernoulli(seed, i as u64 + 1, feature_p, rows))
                .collect();
            columns.push(bernoulli(seed, 0, outcome_p, rows));
            (fields, columns)
        }
    };
    Ok(DatasetBuilder::from_columns(spec.name(), Schema::new(fields), columns))
}
