use mi_updates::attacks::*;
use mi_updates::mean_lab::{grad_step_mean, MeanLoss, MeanStep};
use mi_updates::seed::rng;
use proptest::prelude::*;
use rand::Rng;

/// Type-7 quantile by sorting and interpolating at position (n-1)q.
fn quantile_oracle(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = (v.len() - 1) as f64 * q;
    let i = pos.floor() as usize;
    if i + 1 >= v.len() {
        return v[i];
    }
    v[i] * (1.0 - (pos - i as f64)) + v[i + 1] * (pos - i as f64)
}

#[test]
fn batch_and_rank_quantiles() {
    let v: Vec<f64> = (1..=100).map(f64::from).collect();
    assert!((calibrate_batch(&v, ThresholdMode::Precision).unwrap() - 10.9).abs() < 1e-12);
    assert!((calibrate_rank(&v, 0.1).unwrap() - quantile_oracle(&v, 0.1)).abs() < 1e-12);
    assert_eq!(calibrate_batch(&[1.0, 2.0, 3.0], ThresholdMode::Accuracy).unwrap(), 2.0);
    for mode in [ThresholdMode::Accuracy, ThresholdMode::Precision] {
        assert_eq!(calibrate_batch(&[4.5], mode).unwrap(), 4.5);
    }
    assert!(calibrate_rank(&v, 1.0).is_err());
}

proptest! {
    #[test]
    fn quantiles_match_oracle(v in prop::collection::vec(-1e3f64..1e3, 1..200), q in 0.01f64..0.99) {
        let got = calibrate_rank(&v, q).unwrap();
        prop_assert!((got - quantile_oracle(&v, q)).abs() <= 1e-9 * (1.0 + got.abs()));
    }

    #[test]
    fn quantiles_are_translation_equivariant(v in prop::collection::vec(-10f64..10.0, 1..100), shift in -5f64..5.0) {
        let shifted: Vec<f64> = v.iter().map(|s| s + shift).collect();
        let a = calibrate_batch(&v, ThresholdMode::Accuracy).unwrap();
        let b = calibrate_batch(&shifted, ThresholdMode::Accuracy).unwrap();
        prop_assert!((b - (a + shift)).abs() < 1e-9);
    }

    #[test]
    fn decision_is_strict_less_than(s in -1e6f64..1e6, t in -1e6f64..1e6) {
        prop_assert_eq!(decide(s, t).is_in(), s < t);
    }

    #[test]
    fn combiners_increase_with_later_score(l0 in 1e-6f64..20.0, l1 in 0.0f64..20.0, bump in 1e-6f64..5.0) {
        for c in [Combiner::Diff, Combiner::ratio()] {
            let a = c.combine(l0, l1).unwrap();
            let b = c.combine(l0, l1 + bump).unwrap();
            prop_assert!(b > a);
        }
    }

    #[test]
    fn diff_is_antisymmetric(l0 in 0.0f64..20.0, l1 in 0.0f64..20.0) {
        prop_assert_eq!(Combiner::Diff.combine(l0, l1).unwrap(), -Combiner::Diff.combine(l1, l0).unwrap());
    }

    #[test]
    fn heavy_damping_flattens_ratio(l0 in 0.0f64..20.0, l1 in 0.0f64..20.0) {
        let r = Combiner::Ratio { damping: 1e12 }.combine(l0, l1).unwrap();
        prop_assert!((r - 1.0).abs() < 1e-10);
    }

    #[test]
    fn delta_assigns_exactly_n_up_per_epoch(seed in any::<u64>(), k in 1usize..5, n_up in 1usize..8) {
        let mut r = rng(seed);
        let n = 2 * k * n_up;
        let batch: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let t = delta_thresholds(&batch, k, n_up).unwrap();
        let mut counts = vec![0usize; k];
        for p in 0..n {
            let scores: Vec<f64> = batch.iter().map(|b| b[p]).collect();
            if let Some(e) = delta_decide(&scores, &t).epoch() {
                counts[e - 1] += 1;
            }
        }
        prop_assert_eq!(counts, vec![n_up; k]);
    }
}

#[test]
fn delta_first_match_semantics() {
    let t = [0.0; 5];
    assert_eq!(delta_decide(&[1.0, 1.0, 1.0, 1.0, 1.0], &t), MultiUpdateDecision::Out);
    assert_eq!(delta_decide(&[1.0, 1.0, -1.0, 1.0, 1.0], &t), MultiUpdateDecision::In { epoch: 3 });
    assert_eq!(delta_decide(&[1.0, -1.0, 1.0, -1.0, 1.0], &t), MultiUpdateDecision::In { epoch: 2 });
}

#[test]
fn mean_surrogate_combined_scores() {
    // One update point x, squared loss, eta = 0.25: l1 = (1 - 2 eta)^2 l0.
    let f0 = vec![1.0, -2.0, 0.5];
    let x = vec![vec![0.0, 1.0, 1.0]];
    let eta = 0.25;
    let f1 = grad_step_mean(&f0, &x, &[], eta, MeanStep::New, MeanLoss::L2Squared).unwrap();
    let l0 = MeanLoss::L2Squared.eval(&f0, &x[0]);
    let l1 = MeanLoss::L2Squared.eval(&f1, &x[0]);
    assert!((Combiner::Diff.combine(l0, l1).unwrap() + 0.75 * l0).abs() < 1e-12);
    let ratio = Combiner::Ratio { damping: 1e-12 }.combine(l0, l1).unwrap();
    assert!((ratio - 0.25).abs() < 1e-9);
    assert_eq!(Combiner::Diff.combine(l0, l0).unwrap(), 0.0);
    assert_eq!(Combiner::ratio().combine(l0, l0).unwrap(), 1.0);
}

/// Best accuracy with both outcomes: pick the likelier family per cell.
fn with_updates_oracle(t: &ZeroOneTable) -> f64 {
    0.5 * (0..4).map(|c| t.u[c].max(t.t[c])).sum::<f64>()
}

/// Best accuracy seeing only `f1`: pick per `f1` outcome.
fn without_updates_oracle(t: &ZeroOneTable) -> f64 {
    let right = (t.u[P11] + t.u[P01]).max(t.t[P11] + t.t[P01]);
    let wrong = (t.u[P10] + t.u[P00]).max(t.t[P10] + t.t[P00]);
    0.5 * (right + wrong)
}

#[test]
fn zero_one_updates_add_nothing_under_assumptions() {
    let mut r = rng(2024);
    for _ in 0..2000 {
        let table = ZeroOneTable::sample_under_assumptions(&mut r);
        assert!(table.satisfies_assumption1(1e-12) && table.satisfies_assumption2());
        let (_, with) = optimal_01_attack(&table, true).unwrap();
        let (_, without) = optimal_01_attack(&table, false).unwrap();
        assert!((with - with_updates_oracle(&table)).abs() < 1e-12);
        assert!((without - without_updates_oracle(&table)).abs() < 1e-12);
        assert_eq!(with, without);
    }
}

#[test]
fn zero_one_gain_when_initial_accuracy_differs() {
    let table = ZeroOneTable {
        u: [0.5, 0.4, 0.05, 0.05],
        t: [0.3, 0.2, 0.3, 0.2],
    };
    assert!(!table.satisfies_assumption1(1e-9));
    let (_, with) = optimal_01_attack(&table, true).unwrap();
    let (_, without) = optimal_01_attack(&table, false).unwrap();
    assert!((with - 0.7).abs() < 1e-12);
    assert!((without - 0.525).abs() < 1e-12);
    assert!(with > without);
}

#[test]
fn rank_threshold_controls_false_positives() {
    let mut r = rng(77);
    let q = 0.1;
    let calib: Vec<f64> = (0..20_000).map(|_| r.random::<f64>()).collect();
    let t = calibrate_rank(&calib, q).unwrap();
    let n = 5000;
    let fp = (0..n).filter(|_| decide(r.random::<f64>(), t).is_in()).count();
    let rate = fp as f64 / n as f64;
    assert!((rate - q).abs() <= 3.0 * (q * (1.0 - q) / n as f64).sqrt() + 0.005, "{rate}");
}

#[test]
fn median_splits_balanced_batch() {
    let mut r = rng(5);
    let scores: Vec<f64> = (0..101).map(|_| r.random::<f64>()).collect();
    let t = calibrate_batch(&scores, ThresholdMode::Accuracy).unwrap();
    assert_eq!(scores.iter().filter(|&&s| decide(s, t).is_in()).count(), 50);
}
