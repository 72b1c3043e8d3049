use mi_updates::attacks::Verdict;
use mi_updates::mean_lab::*;
use mi_updates::seed::{child, rng};
use mi_updates::Execution;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_points(n: usize, d: usize, r: &mut mi_updates::seed::Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect()).collect()
}

/// Φ by Simpson integration of the density on [0, |x|].
fn phi_oracle(x: f64) -> f64 {
    let n = 20_000;
    let h = x.abs() / n as f64;
    let pdf = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(x.abs());
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let half = s * h / 3.0;
    if x >= 0.0 { 0.5 + half } else { 0.5 - half }
}

#[test]
fn bound_update_matches_integrated_cdf() {
    for (d, n1) in [(80, 2), (2000, 10), (10, 5), (500, 40)] {
        let x = (d as f64 / (80.0 * (n1 - 1) as f64)).sqrt();
        assert!((bound_update(d, n1).unwrap() - phi_oracle(x)).abs() < 1e-7);
    }
}

#[test]
fn bound_no_update_arithmetic() {
    assert!((bound_no_update(1, 101).unwrap() - 0.6168).abs() < 1e-4);
    assert_eq!(bound_no_update(30, 20).unwrap(), 1.0);
    assert!(bound_no_update(10, 500).unwrap() < bound_no_update(20, 500).unwrap());
    assert!(bound_no_update(10, 500).unwrap() > bound_no_update(10, 800).unwrap());
    assert!(bound_update(100, 5).unwrap() < bound_update(200, 5).unwrap());
}

#[test]
fn full_step_equals_rescaled_new_step() {
    let mut r = rng(42);
    for w in 0..100u64 {
        let n0 = r.random_range(1..60);
        let n1 = r.random_range(1..30);
        let d = r.random_range(1..20);
        let eta: f64 = r.random_range(0.0..1.0);
        let mut pr = rng(child(7, w));
        let d0 = gaussian_points(n0, d, &mut pr);
        let d1 = gaussian_points(n1, d, &mut pr);
        let f0 = sample_mean(&d0).unwrap();
        let full = grad_step_mean(&f0, &d1, &d0, eta, MeanStep::Full, MeanLoss::L2Squared).unwrap();
        let eta_new = n1 as f64 * eta / (n0 + n1) as f64;
        let new = grad_step_mean(&f0, &d1, &d0, eta_new, MeanStep::New, MeanLoss::L2Squared).unwrap();
        for (a, b) in full.iter().zip(&new) {
            assert!((a - b).abs() <= 1e-10, "world {w}: {a} vs {b}");
        }
    }
}

proptest! {
    #[test]
    fn squared_loss_shrinks_by_fixed_ratio(seed in any::<u64>(), eta in 0.0f64..0.45, d in 1usize..30) {
        let mut r = rng(seed);
        let f0 = gaussian_points(1, d, &mut r).remove(0);
        let x = gaussian_points(1, d, &mut r);
        let f1 = grad_step_mean(&f0, &x, &[], eta, MeanStep::New, MeanLoss::L2Squared).unwrap();
        let before = MeanLoss::L2Squared.eval(&f0, &x[0]);
        let after = MeanLoss::L2Squared.eval(&f1, &x[0]);
        let expect = (1.0 - 2.0 * eta).powi(2) * before;
        prop_assert!((after - expect).abs() <= 1e-9 * expect.max(1e-300));
    }

    #[test]
    fn l2_loss_drops_by_eta(seed in any::<u64>(), frac in 0.0f64..0.99, d in 1usize..30) {
        let mut r = rng(seed);
        let f0 = gaussian_points(1, d, &mut r).remove(0);
        let x = gaussian_points(1, d, &mut r);
        let before = MeanLoss::L2.eval(&f0, &x[0]);
        let eta = frac * before;
        let f1 = grad_step_mean(&f0, &x, &[], eta, MeanStep::New, MeanLoss::L2).unwrap();
        let after = MeanLoss::L2.eval(&f1, &x[0]);
        prop_assert!((after - (before - eta)).abs() <= 1e-9 * before);
    }

    #[test]
    fn recovered_mean_is_update_mean(seed in any::<u64>(), n0 in 0usize..50, n1 in 1usize..20, d in 1usize..10) {
        let mut r = rng(seed);
        let d0 = gaussian_points(n0, d, &mut r);
        let d1 = gaussian_points(n1, d, &mut r);
        let est = MeanEstimates::from_sets(&d0, &d1).unwrap();
        let direct = sample_mean(&d1).unwrap();
        for (a, b) in est.mu_delta.iter().zip(&direct) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn concatenated_mean_is_weighted(seed in any::<u64>(), n0 in 1usize..20, n1 in 1usize..20) {
        let mut r = rng(seed);
        let a = gaussian_points(n0, 3, &mut r);
        let b = gaussian_points(n1, 3, &mut r);
        let all: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
        let (ma, mb, m) = (sample_mean(&a).unwrap(), sample_mean(&b).unwrap(), sample_mean(&all).unwrap());
        for j in 0..3 {
            let w = (n0 as f64 * ma[j] + n1 as f64 * mb[j]) / (n0 + n1) as f64;
            prop_assert!((w - m[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn np_decision_matches_linear_densities(seed in any::<u64>(), n in 2usize..30) {
        // Low dimension keeps the linear-space densities representable.
        let mut r = rng(seed);
        let mu = vec![0.3, -0.2];
        let sigma = 0.7;
        let v = gaussian_points(1, 2, &mut r).remove(0);
        let mu_hat: Vec<f64> = gaussian_points(1, 2, &mut r)[0].iter().map(|z| 0.4 * z).collect();
        let nf = n as f64;
        let s2 = sigma * sigma;
        let c_in: f64 = (0..2).map(|j| (mu_hat[j] - (nf - 1.0) * mu[j] / nf - v[j] / nf).powi(2)).sum();
        let c_out: f64 = (0..2).map(|j| (mu_hat[j] - mu[j]).powi(2)).sum();
        let p_in = ((nf - 1.0) / (2.0 * std::f64::consts::PI * s2)) * (-(nf - 1.0) / (2.0 * s2) * c_in).exp();
        let p_out = (nf / (2.0 * std::f64::consts::PI * s2)) * (-nf / (2.0 * s2) * c_out).exp();
        prop_assume!((p_in - p_out).abs() > 1e-12 * p_in.max(p_out));
        let expect = if p_in > p_out { Verdict::In } else { Verdict::Out };
        prop_assert_eq!(np_no_update(&v, &mu_hat, &mu, sigma, n).unwrap(), expect);
    }
}

#[test]
fn np_center_point_is_out() {
    let mu = vec![0.0; 250];
    assert_eq!(np_no_update(&mu, &mu, &mu, 0.1, 200).unwrap(), Verdict::Out);
    assert!(np_no_update(&mu, &mu, &mu, 0.0, 200).is_err());
}

#[test]
fn empty_initial_set_reduces_to_no_update() {
    let mut r = rng(3);
    let d1 = gaussian_points(12, 5, &mut r);
    let est = MeanEstimates::from_sets(&[], &d1).unwrap();
    assert_eq!(est.mu_delta, est.mu1);
    let mu = vec![0.0; 5];
    for v in d1.iter().chain(&gaussian_points(12, 5, &mut r)) {
        assert_eq!(
            np_with_update(v, &est, &mu, 1.0).unwrap(),
            np_no_update(v, &est.mu1, &mu, 1.0, 12).unwrap()
        );
    }
}

#[test]
fn single_point_update_is_identified() {
    let mut r = rng(5);
    let d0 = gaussian_points(40, 6, &mut r);
    let d1 = gaussian_points(1, 6, &mut r);
    let est = MeanEstimates::from_sets(&d0, &d1).unwrap();
    let mu = vec![0.0; 6];
    assert_eq!(np_with_update(&d1[0], &est, &mu, 1.0).unwrap(), Verdict::In);
    let other = gaussian_points(1, 6, &mut r).remove(0);
    assert_eq!(np_with_update(&other, &est, &mu, 1.0).unwrap(), Verdict::Out);
}

#[test]
fn mean_experiment_is_reproducible_and_shaped() {
    let mut c = MeanLabConfig::reference_grid(9);
    c.trials = 5;
    c.n1_values = vec![10, 50];
    let a = run_mean_experiment(&c, Execution::Sequential).unwrap();
    let b = run_mean_experiment(&c, Execution::Parallel { workers: Some(3) }).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 4);
    assert_eq!(a[0].attack, ATTACK_NO_UPDATE);
    assert_eq!(a[1].attack, ATTACK_UPDATE);
    let mut buf = Vec::new();
    write_mean_csv_to(&a, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n1,attack,trials,accuracy,stderr");
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn config_json_rejects_unknown_keys() {
    let ok = r#"{"n0": 200, "d": 250, "sigma": 0.1, "n1_values": [10], "trials": 2}"#;
    assert!(MeanLabConfig::from_json(ok).is_ok());
    let bad = r#"{"n0": 200, "d": 250, "sigma": 0.1, "n1_values": [10], "trials": 2, "trails": 3}"#;
    assert!(MeanLabConfig::from_json(bad).unwrap_err().is_config());
}

#[test]
fn dot_attack_beats_its_bound() {
    let mc = dot_attack_accuracy(2000, 50, 10, 1.0, 40, 20, 3, Execution::default()).unwrap();
    assert!(mc.accuracy > bound_update(2000, 10).unwrap() - 0.02);
}

#[test]
fn scorediff_without_step_is_chance() {
    let acc = scorediff_theorem_check(200, 10, 50, 0.0, 50, 1).unwrap();
    assert_eq!(acc, 0.5);
}

#[test]
fn scorediff_accuracy_grows_with_dimension() {
    let run = |d| ScoreDiffCheck::new(d, 10, 100, 0.1, 300, 4).run(Execution::default()).unwrap();
    let accs: Vec<MonteCarlo> = [20, 80, 320].into_iter().map(run).collect();
    for w in accs.windows(2) {
        let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        assert!(w[1].accuracy >= w[0].accuracy - 2.0 * se, "{accs:?}");
    }
}
