//! Metric checks against independent oracles: exact and Monte Carlo
//! permutation tests for the chi-square p-value, closed-form least squares,
//! and whole-subset computations for aggregation.

use ir_core::aggregate::{aggregate, vote_tally, AggregationSpec};
use ir_core::dataset::{MeasureSubset, RowId, Scalar};
use ir_core::metrics::{fit_line, run_metrics, FoldStats, MetricSpec, StatValue, TwoByTwo};
use ir_core::partition::{partition, PartitionConfig};
use ir_core::synth::{generate, GeneratorSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn chi2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let n = a + b + c + d;
    let den = (a + b) * (c + d) * (a + c) * (b + d);
    if den == 0.0 {
        0.0
    } else {
        n * (a * d - b * c).powi(2) / den
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Exact permutation p-value: outcome labels permuted over the rows with
/// both margins fixed, so cell `a` is hypergeometric. Two-sided through the
/// chi-square statistic.
fn exact_permutation_p(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (present, good, n) = (a + c, a + b, a + b + c + d);
    let observed = chi2(a as f64, b as f64, c as f64, d as f64);
    let lo = good.saturating_sub(n - present);
    let hi = present.min(good);
    let denom = ln_choose(n, good);
    (lo..=hi)
        .filter(|&x| {
            let (xa, xb, xc) = (x, good - x, present - x);
            let xd = n - xa - xb - xc;
            chi2(xa as f64, xb as f64, xc as f64, xd as f64) >= observed * (1.0 - 1e-12)
        })
        .map(|x| (ln_choose(present, x) + ln_choose(n - present, good - x) - denom).exp())
        .sum()
}

/// Monte Carlo version: shuffle the outcome column `draws` times.
fn monte_carlo_permutation_p(a: u64, b: u64, c: u64, d: u64, draws: usize, seed: u64) -> f64 {
    let present = (a + c) as usize;
    let mut outcomes: Vec<bool> = std::iter::repeat_n(true, (a + b) as usize)
        .chain(std::iter::repeat_n(false, (c + d) as usize))
        .collect();
    let n = outcomes.len();
    let good = (a + b) as usize;
    let observed = chi2(a as f64, b as f64, c as f64, d as f64);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..draws {
        outcomes.shuffle(&mut rng);
        let xa = outcomes[..present].iter().filter(|&&g| g).count();
        let (xb, xc) = (good - xa, present - xa);
        let xd = n - xa - xb - xc;
        if chi2(xa as f64, xb as f64, xc as f64, xd as f64) >= observed * (1.0 - 1e-12) {
            hits += 1;
        }
    }
    hits as f64 / draws as f64
}

#[test]
fn chi_square_matches_permutation_on_the_worked_table() {
    let assoc = TwoByTwo::new(20, 10, 10, 20).association(0.05);
    let p = assoc.p_value.unwrap();
    let exact = exact_permutation_p(20, 10, 10, 20);
    let mc = monte_carlo_permutation_p(20, 10, 10, 20, 200_000, 11);
    // the two oracles agree with each other to Monte Carlo precision
    assert!((exact - mc).abs() < 0.002, "exact {exact} mc {mc}");
    assert!((p - exact).abs() <= 0.01, "chi-square {p} vs permutation {exact}");
    assert!((p - mc).abs() <= 0.01, "chi-square {p} vs permutation {mc}");
    assert_eq!(assoc.significant, Ok(true));
}

#[test]
fn association_edge_tables() {
    let perfect = TwoByTwo::new(10, 0, 0, 10).association(0.05);
    assert_eq!(perfect.phi, Ok(1.0));
    assert_eq!(perfect.significant, Ok(true));
    // Haldane correction: (10.5 * 10.5) / (0.5 * 0.5)
    assert_eq!(perfect.odds_ratio, Ok(441.0));
    assert!(perfect.odds_ratio_uncorrected.is_err());

    let null = TwoByTwo::new(5, 5, 5, 5).association(0.05);
    assert_eq!(null.phi, Ok(0.0));
    assert_eq!(null.p_value, Ok(1.0));
    assert_eq!(null.significant, Ok(false));

    let one_class = TwoByTwo::new(4, 6, 0, 0).association(0.05);
    assert_eq!(one_class.positive_support, Ok(0.4));
    assert!(one_class.negative_support.is_err());
    assert!(one_class.phi.is_err() && one_class.p_value.is_err() && one_class.significant.is_err());
}

proptest! {
    #[test]
    fn association_ranges(a in 0u64..60, b in 0u64..60, c in 0u64..60, d in 0u64..60) {
        let assoc = TwoByTwo::new(a, b, c, d).association(0.05);
        if let Ok(phi) = assoc.phi {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&phi));
        }
        if let Ok(or) = assoc.odds_ratio {
            prop_assert!(or > 0.0);
        }
        if let Ok(p) = assoc.p_value {
            prop_assert!(p > 0.0 && p <= 1.0);
            prop_assert_eq!(assoc.significant, Ok(p < 0.05));
        }
        if let (Ok(x), Ok(y)) = (assoc.positive_support, assoc.negative_support) {
            prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn least_squares_residuals_are_orthogonal(
        pts in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..200)
    ) {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assume!(xs.iter().any(|x| (x - mean).abs() > 1e-6));
        let fit = fit_line(&pts).unwrap();
        let scale = pts.iter().map(|p| p.0.abs().max(p.1.abs())).fold(1.0, f64::max);
        let resid: Vec<f64> = pts.iter().map(|&(x, y)| y - fit.slope * x - fit.intercept).collect();
        let n = pts.len() as f64;
        let sum: f64 = resid.iter().sum();
        let dot: f64 = resid.iter().zip(&xs).map(|(r, x)| r * x).sum();
        prop_assert!(sum.abs() <= 1e-9 * n * scale, "sum {sum}");
        prop_assert!(dot.abs() <= 1e-9 * n * scale * scale, "dot {dot}");
    }

    #[test]
    fn least_squares_recovers_integer_lines(slope in -50i32..50, intercept in -1000i32..1000, xs in prop::collection::btree_set(-500i32..500, 2..60)) {
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x as f64, (slope * x + intercept) as f64)).collect();
        let fit = fit_line(&pts).unwrap();
        prop_assert_eq!(fit.slope, slope as f64);
        prop_assert_eq!(fit.intercept, intercept as f64);
        prop_assert_eq!(fit.r2.map(|r| (r - 1.0).abs() < 1e-12), (slope != 0).then_some(true));
    }
}

#[test]
fn least_squares_hand_example() {
    // mean x = 1, mean y = 1/3, cov = 0, so the line is flat at 1/3
    let fit = fit_line(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
    assert_eq!(fit.slope, 0.0);
    assert!((fit.intercept - 1.0 / 3.0).abs() < 1e-15);
    assert!(fit_line(&[(1.0, 2.0)]).is_err());
    assert!(fit_line(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
}

fn population() -> std::sync::Arc<ir_core::dataset::Dataset> {
    std::sync::Arc::new(
        generate(&GeneratorSpec::BinaryPopulation {
            p: 0.37,
            size: 1000,
            seed: 5,
        })
        .unwrap(),
    )
}

fn whole(n: u64) -> MeasureSubset {
    MeasureSubset::ungrouped((0..n).map(RowId).collect())
}

#[test]
fn summed_counts_equal_the_direct_count() {
    let ds = population();
    for n in 1..=10 {
        let fs = partition(&whole(997), &PartitionConfig::disjoint(n, 1, n as u64)).unwrap();
        let stats = run_metrics(&fs, &MetricSpec::Count, &ds).unwrap();
        let m = aggregate(stats, &AggregationSpec::defaults_for(&MetricSpec::Count)).unwrap();
        assert_eq!(m.number("count"), Some(997.0));
    }
}

#[test]
fn averaged_proportions_equal_the_whole_subset() {
    let ds = population();
    let spec = MetricSpec::Proportion {
        column: "value".into(),
        value: Scalar::Bool(true),
    };
    let direct = {
        let col = ds.column("value").unwrap();
        (0..1000).filter(|&r| col.binary(r) == Some(true)).count() as f64 / 1000.0
    };
    // equal folds: plain mean
    let fs = partition(&whole(1000), &PartitionConfig::disjoint(5, 1, 2)).unwrap();
    let stats = run_metrics(&fs, &spec, &ds).unwrap();
    let mean = AggregationSpec::defaults_for(&spec).with("proportion", ir_core::aggregate::Strategy::Mean);
    let m = aggregate(stats, &mean).unwrap();
    assert!((m.number("proportion").unwrap() - direct).abs() <= 1e-12 * direct);
    // unequal folds: weighted mean
    let fs = partition(&whole(1000), &PartitionConfig::disjoint(7, 1, 2)).unwrap();
    let stats = run_metrics(&fs, &spec, &ds).unwrap();
    let m = aggregate(stats, &AggregationSpec::defaults_for(&spec)).unwrap();
    assert!((m.number("proportion").unwrap() - direct).abs() <= 1e-12 * direct);
    let sum = m.number("proportion").unwrap() + m.number("complement").unwrap();
    assert!((sum - 1.0).abs() < 1e-12);
}

fn flag_folds(flags: &[Option<bool>]) -> Vec<FoldStats> {
    flags
        .iter()
        .enumerate()
        .map(|(i, f)| FoldStats {
            fold_index: i,
            values: [("significant".to_string(), f.map(StatValue::Flag))].into(),
            support_n: 1,
            dropped_missing: 0,
            reasons: Default::default(),
            flags: Vec::new(),
        })
        .collect()
}

proptest! {
    #[test]
    fn vote_flags_nest_and_ignore_order(flags in prop::collection::vec(prop::option::of(any::<bool>()), 1..11), rot in 0usize..11) {
        let d = vote_tally(&flag_folds(&flags), "significant");
        if let (Some(u), Some(m), Some(a)) = (d.unanimous, d.majority, d.at_least_one) {
            prop_assert!(!u || m);
            prop_assert!(!m || a);
        }
        prop_assert_eq!(d.counts.values().sum::<usize>(), d.defined);
        let mut rotated = flags.clone();
        rotated.rotate_left(rot % flags.len());
        let spec = AggregationSpec::defaults_for(&MetricSpec::binary_association("f", "o", 0.05))
            .with("significant", ir_core::aggregate::Strategy::MajorityVote);
        let mut spec_only = AggregationSpec::default().with("significant", ir_core::aggregate::Strategy::MajorityVote);
        spec_only.vote_defaults = spec.vote_defaults.clone();
        let a = aggregate(flag_folds(&flags), &spec_only).unwrap();
        let b = aggregate(flag_folds(&rotated), &spec_only).unwrap();
        prop_assert_eq!(a.get("significant"), b.get("significant"));
        let trues = flags.iter().filter(|f| **f == Some(true)).count();
        if flags.iter().any(Option::is_some) {
            prop_assert_eq!(a.flag("significant"), Some(2 * trues > flags.len()));
        }
    }
}
