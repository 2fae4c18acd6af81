//! Fold partitioning of a measure subset.
//!
//! Four modes are supported:
//!
//! * **disjoint**: shuffle the members with the seeded generator, then deal
//!   them round-robin into `n_effective` folds. Folds are pairwise disjoint,
//!   their union is the subset, and sizes differ by at most one.
//! * **partial**: the same shuffle, but only the first `ceil(fraction * |m|)`
//!   members are dealt. With `fraction = 1` this is exactly disjoint mode.
//! * **with_replacement**: `n_requested` bootstrap folds of `fold_size`
//!   members each; fold `j` draws from sub-stream `j` of the seed.
//! * **incremental**: records are dealt as they arrive. Each block of `n`
//!   arrivals goes to a fresh seeded permutation of the fold indices, so fold
//!   sizes never differ by more than one.
//!
//! `n_effective = max(1, min(n_requested, floor(sample / min_fold_size)))`
//! for the disjoint and partial modes. With `n_requested = 1` the partition
//! is the identity: one fold holding the members in their original order.

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::dataset::{GroupKey, MeasureSubset, RowId};
use crate::error::ValidationError;
use crate::rng::SplitMix64;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_MIN_FOLD_SIZE: usize = 25;
/// Upper bound offered by interactive fold-count controls.
pub const MAX_UI_FOLDS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error(transparent)]
    Config(#[from] ValidationError),
    #[error("cannot resample from an empty subset")]
    EmptySubset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionMode {
    Disjoint,
    Partial { fraction: f64 },
    WithReplacement { fold_size: usize },
    Incremental,
}

impl PartitionMode {
    pub fn name(&self) -> &'static str {
        match self {
            PartitionMode::Disjoint => "disjoint",
            PartitionMode::Partial { .. } => "partial",
            PartitionMode::WithReplacement { .. } => "with_replacement",
            PartitionMode::Incremental => "incremental",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(alias = "n")]
    pub n_requested: usize,
    pub min_fold_size: usize,
    pub mode: PartitionMode,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            n_requested: DEFAULT_FOLDS,
            min_fold_size: DEFAULT_MIN_FOLD_SIZE,
            mode: PartitionMode::Disjoint,
            seed: 0,
        }
    }
}

impl PartitionConfig {
    pub fn new(
        n_requested: usize,
        min_fold_size: usize,
        mode: PartitionMode,
        seed: u64,
    ) -> Result<Self, ValidationError> {
        let config = Self {
            n_requested,
            min_fold_size,
            mode,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn disjoint(n_requested: usize, min_fold_size: usize, seed: u64) -> Self {
        Self::new(n_requested, min_fold_size, PartitionMode::Disjoint, seed).expect("valid disjoint config")
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.n_requested < 1 {
            return Err(ValidationError::config("n must be at least 1"));
        }
        if self.min_fold_size < 1 {
            return Err(ValidationError::config("min_fold_size must be at least 1"));
        }
        match self.mode {
            PartitionMode::Partial { fraction } if !(fraction > 0.0 && fraction <= 1.0) => Err(
                ValidationError::config(format!("partial fraction {fraction} is outside (0, 1]")),
            ),
            PartitionMode::WithReplacement { fold_size } if fold_size < self.min_fold_size => {
                Err(ValidationError::config(format!(
                    "fold_size {fold_size} is below min_fold_size {}",
                    self.min_fold_size
                )))
            }
            _ => Ok(()),
        }
    }

    /// Fold count for a sample of `len` members in disjoint or partial mode.
    pub fn n_effective(&self, len: usize) -> usize {
        if self.n_requested == 1 {
            return 1;
        }
        self.n_requested.min(len / self.min_fold_size).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fold {
    pub index: usize,
    pub member_row_ids: Vec<RowId>,
}

impl Fold {
    pub fn len(&self) -> usize {
        self.member_row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_row_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldSet {
    pub folds: Vec<Fold>,
    pub n_effective: usize,
    pub config: PartitionConfig,
    pub source: GroupKey,
}

impl FoldSet {
    fn from_members(folds: Vec<Vec<RowId>>, config: PartitionConfig, source: &GroupKey) -> Self {
        let folds: Vec<Fold> = folds
            .into_iter()
            .enumerate()
            .map(|(index, member_row_ids)| Fold { index, member_row_ids })
            .collect();
        Self {
            n_effective: folds.len(),
            folds,
            config,
            source: source.clone(),
        }
    }

    pub fn is_degraded(&self) -> bool {
        self.n_effective < self.config.n_requested
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Fold::len).collect()
    }
}

impl Serialize for FoldSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            n_effective: usize,
            mode: &'a PartitionMode,
            seed: u64,
            folds: Vec<&'a [RowId]>,
        }
        Wire {
            n_effective: self.n_effective,
            mode: &self.config.mode,
            seed: self.config.seed,
            folds: self.folds.iter().map(|f| f.member_row_ids.as_slice()).collect(),
        }
        .serialize(s)
    }
}

/// Partitions `subset` according to `config.mode`.
pub fn partition(subset: &MeasureSubset, config: &PartitionConfig) -> Result<FoldSet, PartitionError> {
    config.validate()?;
    match config.mode {
        PartitionMode::Disjoint => Ok(deal(subset, config, subset.len())),
        PartitionMode::Partial { .. } => partition_partial(subset, config),
        PartitionMode::WithReplacement { .. } => partition_with_replacement(subset, config),
        PartitionMode::Incremental => {
            let mut state = IncrementalPartitionState::new(*config)?;
            for &id in &subset.member_row_ids {
                state.add(id);
            }
            Ok(state.snapshot_for(&subset.group_key))
        }
    }
}

pub fn partition_partial(subset: &MeasureSubset, config: &PartitionConfig) -> Result<FoldSet, PartitionError> {
    config.validate()?;
    let PartitionMode::Partial { fraction } = config.mode else {
        return Err(ValidationError::config("partition_partial needs partial mode").into());
    };
    Ok(deal(subset, config, sample_size(fraction, subset.len())))
}

/// `ceil(fraction * len)`, ignoring rounding noise in the product.
fn sample_size(fraction: f64, len: usize) -> usize {
    let exact = fraction * len as f64;
    let nearest = exact.round();
    let k = if (exact - nearest).abs() < 1e-9 {
        nearest
    } else {
        exact.ceil()
    };
    (k as usize).min(len)
}

/// Shuffles the members and deals the first `take` of them round-robin.
fn deal(subset: &MeasureSubset, config: &PartitionConfig, take: usize) -> FoldSet {
    let members = &subset.member_row_ids;
    if config.n_requested == 1 {
        let sample = if take == members.len() {
            members.clone()
        } else {
            let mut positions: Vec<usize> = (0..members.len()).collect();
            SplitMix64::new(config.seed).shuffle(&mut positions);
            positions.truncate(take);
            positions.sort_unstable();
            positions.into_iter().map(|p| members[p]).collect()
        };
        return FoldSet::from_members(vec![sample], *config, &subset.group_key);
    }

    let mut shuffled = members.clone();
    SplitMix64::new(config.seed).shuffle(&mut shuffled);
    shuffled.truncate(take);

    let n = config.n_effective(take);
    let mut folds = vec![Vec::with_capacity(take / n + 1); n];
    for (k, id) in shuffled.into_iter().enumerate() {
        folds[k % n].push(id);
    }
    FoldSet::from_members(folds, *config, &subset.group_key)
}

/// Bootstrap folds: exactly `n_requested` folds of `fold_size` draws each.
pub fn partition_with_replacement(subset: &MeasureSubset, config: &PartitionConfig) -> Result<FoldSet, PartitionError> {
    config.validate()?;
    let PartitionMode::WithReplacement { fold_size } = config.mode else {
        return Err(ValidationError::config("partition_with_replacement needs with_replacement mode").into());
    };
    let members = &subset.member_row_ids;
    if members.is_empty() {
        return Err(PartitionError::EmptySubset);
    }
    let len = members.len() as u64;
    let folds = (0..config.n_requested)
        .map(|j| {
            let mut rng = SplitMix64::stream(config.seed, j as u64);
            (0..fold_size).map(|_| members[rng.below(len) as usize]).collect()
        })
        .collect();
    Ok(FoldSet::from_members(folds, *config, &subset.group_key))
}

/// Assigns arriving rows to folds, one seeded permutation of fold indices per
/// block of `n_requested` arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalPartitionState {
    config: PartitionConfig,
    folds: Vec<Vec<RowId>>,
    block: Vec<usize>,
    arrivals_seen: u64,
}

impl IncrementalPartitionState {
    pub fn new(config: PartitionConfig) -> Result<Self, ValidationError> {
        config.validate()?;
        if config.mode != PartitionMode::Incremental {
            return Err(ValidationError::config(
                "incremental partitioning needs incremental mode",
            ));
        }
        Ok(Self {
            folds: vec![Vec::new(); config.n_requested],
            block: Vec::with_capacity(config.n_requested),
            arrivals_seen: 0,
            config,
        })
    }

    pub fn config(&self) -> &PartitionConfig {
        &self.config
    }

    pub fn arrivals_seen(&self) -> u64 {
        self.arrivals_seen
    }

    /// Places `row` and returns the fold index it went to.
    pub fn add(&mut self, row: RowId) -> usize {
        let n = self.config.n_requested as u64;
        let pos = (self.arrivals_seen % n) as usize;
        if pos == 0 {
            self.block.clear();
            self.block.extend(0..self.config.n_requested);
            SplitMix64::stream(self.config.seed, self.arrivals_seen / n).shuffle(&mut self.block);
        }
        let fold = self.block[pos];
        self.folds[fold].push(row);
        self.arrivals_seen += 1;
        fold
    }

    pub fn snapshot(&self) -> FoldSet {
        self.snapshot_for(&GroupKey::default())
    }

    pub fn snapshot_for(&self, source: &GroupKey) -> FoldSet {
        FoldSet::from_members(self.folds.clone(), self.config, source)
    }
}
