// Monte Carlo checks with fixed seeds. Tolerances are at least three Monte Carlo
// standard errors wide at the replicate counts used.

use adaptive_rmst::comparators::{fixed_rmst_test, logrank, oracle_rmst_test};
use adaptive_rmst::criterion::{maximize_continuous, maximize_discrete, uniform_grid};
use adaptive_rmst::inference::{bootstrap_interval, hulc_interval, BootstrapOptions};
use adaptive_rmst::rng::substream;
use adaptive_rmst::sim::{generate_trial, replicate_seed};
use adaptive_rmst::stats::{mean, sample_sd};
use adaptive_rmst::truth::{true_optimum, true_variance, ScenarioSpec};
use adaptive_rmst::{kappa_hat, PenaltyConfig, SubjectRecord, TimeUnit, TrialDataset};
use rand::Rng;

const SEED: u64 = 314_159;

fn scenario(name: &str) -> ScenarioSpec {
    ScenarioSpec::named(name).unwrap()
}

fn trial(s: &ScenarioSpec, n: usize, rep: usize) -> TrialDataset {
    generate_trial(s, n, replicate_seed(SEED, s, n, rep)).unwrap()
}

fn variance(xs: &[f64]) -> f64 {
    sample_sd(xs).unwrap().powi(2)
}

#[test]
fn asymptotic_variance_matches_simulation() {
    // 2000 replicates instead of 200: at 200 the Monte Carlo SE of a variance is
    // about 10%, too coarse for a 5% check.
    let s = scenario("null");
    let n = 20_000;
    let kappas: Vec<f64> = (0..2000).map(|r| kappa_hat(&trial(&s, n, r), 1.0).unwrap().kappa).collect();
    let empirical = n as f64 * variance(&kappas);
    let v = true_variance(&s, 1.0).unwrap();
    assert!((empirical / v - 1.0).abs() < 0.05, "n Var = {empirical}, V = {v}");
}

#[test]
fn variance_estimate_matches_sampling_variance() {
    let s = scenario("ph");
    let n = 500;
    let (mut kappas, mut sigmas) = (Vec::new(), Vec::new());
    for r in 0..2000 {
        let est = kappa_hat(&trial(&s, n, r), 1.0).unwrap();
        kappas.push((n as f64).sqrt() * est.kappa);
        sigmas.push(est.sigma2);
    }
    let ratio = variance(&kappas) / mean(&sigmas);
    assert!((ratio - 1.0).abs() < 0.10, "ratio {ratio}");
}

#[test]
fn variance_estimate_matches_bootstrap() {
    let s = scenario("ph");
    let ds = trial(&s, 200, 0);
    let est = kappa_hat(&ds, 1.0).unwrap();
    let mut rng = substream(SEED, &[1], 0);
    let boot: Vec<f64> = (0..500)
        .map(|_| {
            let idx: Vec<usize> = (0..ds.n()).map(|_| rng.random_range(0..ds.n())).collect();
            ds.select(&idx).and_then(|b| kappa_hat(&b, 1.0)).unwrap().kappa
        })
        .collect();
    let ratio = variance(&boot) / (est.sigma2 / ds.n() as f64);
    assert!((ratio - 1.0).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn large_sample_selection_is_near_truth() {
    let s = scenario("tran");
    let pen = PenaltyConfig::new(0.002, 2.2).unwrap();
    let truth = true_optimum(&s, 0.2, 4.2, pen).unwrap().l;
    for r in 0..5 {
        let (sel, _) = maximize_continuous(&trial(&s, 5000, r), 0.2, 4.2, pen).unwrap();
        assert!((sel.l_hat - truth).abs() < 0.15, "rep {r}: {} vs {truth}", sel.l_hat);
    }
}

#[test]
fn penalized_null_selection_concentrates() {
    let s = scenario("null");
    let pen = PenaltyConfig::new(0.002, 2.2).unwrap();
    let spread = |n: usize| {
        let errs: Vec<f64> = (0..200)
            .map(|r| (maximize_continuous(&trial(&s, n, r), 0.2, 4.2, pen).unwrap().0.l_hat - 2.2).abs())
            .collect();
        mean(&errs)
    };
    let (a, b, c) = (spread(300), spread(1000), spread(3000));
    assert!(a > b && b > c, "mean |L_hat - 2.2|: {a}, {b}, {c}");
}

#[test]
fn identical_arms_give_null_intervals() {
    let s = scenario("null");
    let base = trial(&s, 500, 0);
    let recs: Vec<SubjectRecord> = base
        .arm_records(adaptive_rmst::Arm::Control)
        .into_iter()
        .flat_map(|(t, e)| [adaptive_rmst::Arm::Control, adaptive_rmst::Arm::Treatment].map(|a| SubjectRecord::new(a, t, e)))
        .collect();
    let ds = TrialDataset::new(recs, TimeUnit::Years).unwrap();
    let pen = PenaltyConfig::new(0.002, 2.2).unwrap();
    let opts = BootstrapOptions { resamples: 400, stratified: false };
    let r = bootstrap_interval(&ds, 0.05, opts, 0.2, 4.2, pen, 7).unwrap();
    assert_eq!(r.kappa_hat, 0.0);
    assert!((r.l_hat - 2.2).abs() < 1e-9, "{}", r.l_hat);
    assert!(r.ci_kappa.contains(0.0) && !r.reject);
    let ci_l = r.ci_l.unwrap();
    assert!(ci_l.contains(2.2) && ci_l.lower >= 0.2 && ci_l.upper <= 4.2, "{ci_l:?}");
}

#[test]
fn hulc_is_median_unbiased_under_null() {
    let s = scenario("null");
    let reps = 500;
    let above = (0..reps)
        .filter(|&r| hulc_interval(&trial(&s, 600, r), 0.05, true, 0.2, 4.2, r as u64).unwrap().ci_kappa.lower > 0.0)
        .count();
    let bound = 1.0 / 32.0;
    let tol = 3.0 * (bound * (1.0 - bound) / reps as f64).sqrt();
    let frac = above as f64 / reps as f64;
    assert!(frac <= bound + tol, "fraction with all folds positive: {frac}");
}

#[test]
fn logrank_power_under_proportional_hazards() {
    let s = scenario("ph");
    let rejections = (0..500).filter(|&r| logrank(&trial(&s, 1000, r)).unwrap().p_value < 0.05).count();
    assert!(rejections as f64 / 500.0 >= 0.85, "power {}", rejections as f64 / 500.0);
}

#[test]
fn oracle_restriction_time_beats_maximal_follow_up() {
    let s = scenario("tran");
    let l_star = true_optimum(&s, 0.2, 4.2, PenaltyConfig::new(0.0, 0.0).unwrap()).unwrap().l;
    let (mut oracle, mut fixed) = (0, 0);
    for r in 0..500 {
        let ds = trial(&s, 600, r);
        oracle += (oracle_rmst_test(&ds, l_star, 0.05).unwrap().test.p_value < 0.05) as usize;
        fixed += (fixed_rmst_test(&ds, None, 0.05).unwrap().test.p_value < 0.05) as usize;
    }
    assert!(oracle >= fixed, "oracle {oracle} vs max follow-up {fixed} rejections");
}

#[test]
fn discrete_selection_usually_hits_grid_optimum() {
    let s = scenario("ph");
    let grid = uniform_grid(0.2, 4.2, 10);
    let pen = PenaltyConfig::new(0.005, grid[4]).unwrap();
    let truth = grid.iter().copied().max_by(|&a, &b| {
        let m = |l: f64| adaptive_rmst::truth::true_criterion(&s, l).unwrap() - pen.c * (l - pen.l_tilde).powi(2);
        m(a).total_cmp(&m(b))
    });
    let hits = (0..500)
        .filter(|&r| Some(maximize_discrete(&trial(&s, 1000, r), &grid, pen).unwrap().selection.l_hat) == truth)
        .count();
    assert!(hits > 250, "grid optimum chosen in {hits}/500");
}
