//! Baseline tests: Fleming–Harrington weighted log-rank, MaxCombo, and
//! fixed-horizon RMST.

use serde::Serialize;

use crate::data::{Arm, TrialDataset};
use crate::error::{Error, Result};
use crate::inference::{CiMethod, ConfidenceInterval};
use crate::mvn::symmetric_box_probability;
use crate::rmst::{kappa_hat, RmstEstimate};
use crate::stats::{normal_quantile, two_sided_p};

/// Quasi-Monte Carlo nodes for the MaxCombo p-value.
pub const MAXCOMBO_POINTS: usize = 1 << 16;
/// FH(ρ, γ) components of MaxCombo.
pub const MAXCOMBO_WEIGHTS: [(f64, f64); 4] = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TestDetails {
    pub z_scores: Vec<f64>,
    pub correlation: Option<Vec<Vec<f64>>>,
    /// Set when the p-value came from a fallback bound.
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub details: TestDetails,
}

/// One row per distinct event time of the pooled sample.
struct RiskRow {
    at_risk: f64,
    at_risk_control: f64,
    deaths: f64,
    deaths_control: f64,
    /// Pooled Kaplan–Meier just before this time.
    surv_before: f64,
}

fn risk_table(ds: &TrialDataset) -> Result<Vec<RiskRow>> {
    let mut recs: Vec<(f64, bool, Arm)> = ds.records().iter().map(|r| (r.time, r.event, r.arm)).collect();
    recs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rows = Vec::new();
    let mut remaining = [ds.n0() as f64, ds.n1() as f64];
    let mut surv = 1.0;
    let mut i = 0;
    while i < recs.len() {
        let t = recs[i].0;
        let mut deaths = [0.0; 2];
        let mut leaving = [0.0; 2];
        while i < recs.len() && recs[i].0 == t {
            let a = recs[i].2.index();
            if recs[i].1 {
                deaths[a] += 1.0;
            }
            leaving[a] += 1.0;
            i += 1;
        }
        let d = deaths[0] + deaths[1];
        if d > 0.0 {
            let y = remaining[0] + remaining[1];
            rows.push(RiskRow {
                at_risk: y,
                at_risk_control: remaining[0],
                deaths: d,
                deaths_control: deaths[0],
                surv_before: surv,
            });
            surv *= 1.0 - d / y;
        }
        remaining[0] -= leaving[0];
        remaining[1] -= leaving[1];
    }
    if rows.is_empty() {
        return Err(Error::NoEvents);
    }
    Ok(rows)
}

fn fh_weight(s: f64, rho: f64, gamma: f64) -> f64 {
    s.powf(rho) * (1.0 - s).powf(gamma)
}

/// Score statistics `Σ w_k (O − E)` for the control arm and their covariance
/// `Σ w_k w_l V` under the hypergeometric variance.
fn weighted_scores(rows: &[RiskRow], weights: &[(f64, f64)]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = weights.len();
    let mut scores = vec![0.0; k];
    let mut cov = vec![vec![0.0; k]; k];
    let mut w = vec![0.0; k];
    for row in rows {
        let y = row.at_risk;
        let frac = row.at_risk_control / y;
        let expected = row.deaths * frac;
        let var = if y > 1.0 {
            row.deaths * frac * (1.0 - frac) * (y - row.deaths) / (y - 1.0)
        } else {
            0.0
        };
        for (wi, &(rho, gamma)) in w.iter_mut().zip(weights) {
            *wi = fh_weight(row.surv_before, rho, gamma);
        }
        for a in 0..k {
            scores[a] += w[a] * (row.deaths_control - expected);
            for b in 0..k {
                cov[a][b] += w[a] * w[b] * var;
            }
        }
    }
    (scores, cov)
}

/// FH(ρ, γ) weighted log-rank test with weights Ŝ(t−)^ρ (1 − Ŝ(t−))^γ from
/// the pooled Kaplan–Meier curve. The score is observed minus expected events
/// in the control arm, so positive z favors treatment; the p-value is two-sided.
pub fn weighted_logrank(ds: &TrialDataset, rho: f64, gamma: f64) -> Result<TestOutcome> {
    let rows = risk_table(ds)?;
    let (scores, cov) = weighted_scores(&rows, &[(rho, gamma)]);
    let z = if cov[0][0] > 0.0 {
        scores[0] / cov[0][0].sqrt()
    } else {
        0.0
    };
    Ok(TestOutcome {
        statistic: z,
        p_value: two_sided_p(z),
        details: TestDetails {
            z_scores: vec![z],
            ..Default::default()
        },
    })
}

/// Standard (unweighted) log-rank test.
pub fn logrank(ds: &TrialDataset) -> Result<TestOutcome> {
    weighted_logrank(ds, 0.0, 0.0)
}

/// P(max_i |Z_i| > z_max) for the given component correlation.
pub fn maxcombo_p_value(corr: &[Vec<f64>], z_max: f64) -> Option<f64> {
    symmetric_box_probability(corr, z_max, MAXCOMBO_POINTS).map(|p| (1.0 - p).clamp(0.0, 1.0))
}

/// Maximum of |z| over FH(0,0), FH(0,1), FH(1,0), FH(1,1), with the p-value
/// from their joint Gaussian limit. A singular correlation falls back to the
/// Bonferroni bound and says so in `details.fallback`.
pub fn maxcombo(ds: &TrialDataset) -> Result<TestOutcome> {
    let rows = risk_table(ds)?;
    let (scores, cov) = weighted_scores(&rows, &MAXCOMBO_WEIGHTS);
    let k = scores.len();
    let z: Vec<f64> = (0..k)
        .map(|i| if cov[i][i] > 0.0 { scores[i] / cov[i][i].sqrt() } else { 0.0 })
        .collect();
    let z_max = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_p = z.iter().map(|&v| two_sided_p(v)).fold(1.0, f64::min);
    let bonferroni = (k as f64 * min_p).min(1.0);

    let degenerate = (0..k).any(|i| cov[i][i] <= 0.0);
    let corr: Option<Vec<Vec<f64>>> = (!degenerate).then(|| {
        (0..k)
            .map(|i| (0..k).map(|j| cov[i][j] / (cov[i][i] * cov[j][j]).sqrt()).collect())
            .collect()
    });
    let p = corr.as_ref().and_then(|c| maxcombo_p_value(c, z_max));
    let (p_value, fallback) = match p {
        // Keep the QMC value inside the analytic single-component and union bounds.
        Some(p) => (p.clamp(min_p, bonferroni), None),
        None => (bonferroni, Some("singular correlation: Bonferroni bound".to_string())),
    };
    Ok(TestOutcome {
        statistic: z_max,
        p_value,
        details: TestDetails {
            z_scores: z,
            correlation: corr,
            fallback,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedRmstOutcome {
    pub test: TestOutcome,
    pub estimate: RmstEstimate,
    pub ci: ConfidenceInterval,
}

/// Wald test of κ(L) = 0 at a fixed restriction time; `None` uses the largest
/// estimable time (the smaller of the two arms' maximum follow-up).
pub fn fixed_rmst_test(ds: &TrialDataset, l: Option<f64>, alpha: f64) -> Result<FixedRmstOutcome> {
    let l = l.unwrap_or_else(|| ds.max_estimable_time());
    let estimate = kappa_hat(ds, l)?;
    let se = (estimate.sigma2 / ds.n() as f64).sqrt();
    let z = if se > 0.0 {
        estimate.kappa / se
    } else if estimate.kappa == 0.0 {
        0.0
    } else {
        return Err(Error::NotEstimable {
            l,
            max_estimable: ds.max_estimable_time(),
        });
    };
    let half = normal_quantile(1.0 - alpha / 2.0) * se;
    Ok(FixedRmstOutcome {
        test: TestOutcome {
            statistic: z,
            p_value: two_sided_p(z),
            details: TestDetails {
                z_scores: vec![z],
                ..Default::default()
            },
        },
        ci: ConfidenceInterval {
            lower: estimate.kappa - half,
            upper: estimate.kappa + half,
            level: 1.0 - alpha,
            method: CiMethod::Wald,
        },
        estimate,
    })
}

/// Fixed-horizon RMST test at the true optimal restriction time of the
/// generating scenario.
pub fn oracle_rmst_test(ds: &TrialDataset, true_l: f64, alpha: f64) -> Result<FixedRmstOutcome> {
    fixed_rmst_test(ds, Some(true_l), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SubjectRecord, TimeUnit};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy() -> TrialDataset {
        TrialDataset::new(
            vec![
                SubjectRecord::new(Arm::Control, 1.0, true),
                SubjectRecord::new(Arm::Control, 2.0, false),
                SubjectRecord::new(Arm::Treatment, 1.5, true),
                SubjectRecord::new(Arm::Treatment, 2.0, false),
            ],
            TimeUnit::Years,
        )
        .unwrap()
    }

    fn mirrored(times: &[(f64, bool)]) -> TrialDataset {
        let recs = times
            .iter()
            .flat_map(|&(t, e)| Arm::BOTH.map(|a| SubjectRecord::new(a, t, e)))
            .collect();
        TrialDataset::new(recs, TimeUnit::Years).unwrap()
    }

    /// Log-rank by explicit 2×2 tables at each distinct event time.
    fn brute_force_logrank(ds: &TrialDataset) -> f64 {
        let mut times: Vec<f64> = ds.records().iter().filter(|r| r.event).map(|r| r.time).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let (mut num, mut var) = (0.0, 0.0);
        for t in times {
            let at_risk = |a: Arm| ds.records().iter().filter(|r| r.arm == a && r.time >= t).count() as f64;
            let dead = |a: Arm| {
                ds.records().iter().filter(|r| r.arm == a && r.time == t && r.event).count() as f64
            };
            let (n0, n1) = (at_risk(Arm::Control), at_risk(Arm::Treatment));
            let (d0, d1) = (dead(Arm::Control), dead(Arm::Treatment));
            let (n, d) = (n0 + n1, d0 + d1);
            num += d0 - d * n0 / n;
            if n > 1.0 {
                var += d * (n0 / n) * (n1 / n) * (n - d) / (n - 1.0);
            }
        }
        num / var.sqrt()
    }

    #[test]
    fn identical_arms_are_null() {
        let ds = mirrored(&[(1.0, true), (2.0, false), (2.5, true), (3.0, true)]);
        let lr = logrank(&ds).unwrap();
        assert_eq!(lr.statistic, 0.0);
        assert_eq!(lr.p_value, 1.0);
        let mc = maxcombo(&ds).unwrap();
        assert!(mc.details.z_scores.iter().all(|&z| z == 0.0));
        assert_eq!(mc.p_value, 1.0);
        let fx = fixed_rmst_test(&ds, None, 0.05).unwrap();
        assert_eq!(fx.test.statistic, 0.0);
        assert_eq!(fx.test.p_value, 1.0);
    }

    #[test]
    fn fixed_rmst_on_toy() {
        let fx = fixed_rmst_test(&toy(), Some(2.0), 0.05).unwrap();
        assert_relative_eq!(fx.test.statistic, 0.25 / (0.625f64 / 4.0).sqrt(), epsilon = 1e-12);
        assert!((fx.test.statistic - 0.632).abs() < 5e-4);
        assert!((fx.test.p_value - 0.527).abs() < 5e-4);
        let auto = fixed_rmst_test(&toy(), None, 0.05).unwrap();
        assert_eq!(auto.estimate.l, 2.0);
        assert!(matches!(
            oracle_rmst_test(&toy(), 2.5, 0.05),
            Err(Error::NotEstimable { .. })
        ));
    }

    #[test]
    fn no_events() {
        let ds = mirrored(&[(1.0, false), (2.0, false)]);
        assert_eq!(logrank(&ds).unwrap_err(), Error::NoEvents);
        assert_eq!(maxcombo(&ds).unwrap_err(), Error::NoEvents);
    }

    #[test]
    fn single_event_falls_back_to_bonferroni() {
        let recs = vec![
            SubjectRecord::new(Arm::Control, 1.0, true),
            SubjectRecord::new(Arm::Control, 2.0, false),
            SubjectRecord::new(Arm::Treatment, 1.5, false),
            SubjectRecord::new(Arm::Treatment, 2.0, false),
        ];
        let ds = TrialDataset::new(recs, TimeUnit::Years).unwrap();
        let mc = maxcombo(&ds).unwrap();
        assert!(mc.details.fallback.is_some());
        assert!((0.0..=1.0).contains(&mc.p_value));
    }

    fn small_dataset() -> impl Strategy<Value = TrialDataset> {
        let rec = (any::<bool>(), 1u32..10, prop::bool::weighted(0.7));
        prop::collection::vec(rec, 4..=20).prop_filter_map("valid", |rows| {
            let recs: Vec<SubjectRecord> = rows
                .into_iter()
                .map(|(a, t, e)| {
                    SubjectRecord::new(if a { Arm::Treatment } else { Arm::Control }, t as f64, e)
                })
                .collect();
            if !recs.iter().any(|r| r.event) {
                return None;
            }
            TrialDataset::new(recs, TimeUnit::Years).ok()
        })
    }

    proptest! {
        #[test]
        fn logrank_matches_tabulation(ds in small_dataset()) {
            let z = logrank(&ds).unwrap().statistic;
            let oracle = brute_force_logrank(&ds);
            if oracle.is_finite() {
                prop_assert!((z - oracle).abs() < 1e-12, "{} vs {}", z, oracle);
            }
        }

        #[test]
        fn maxcombo_within_bounds(ds in small_dataset()) {
            let mc = maxcombo(&ds).unwrap();
            let ps: Vec<f64> = mc.details.z_scores.iter().map(|&z| two_sided_p(z)).collect();
            let min_p = ps.iter().copied().fold(1.0, f64::min);
            prop_assert!(mc.p_value >= min_p - 1e-12);
            prop_assert!(mc.p_value <= (4.0 * min_p).min(1.0) + 1e-12);
        }

        #[test]
        fn order_invariant(ds in small_dataset(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut recs = ds.records().to_vec();
            recs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled = TrialDataset::new(recs, TimeUnit::Years).unwrap();
            prop_assert_eq!(maxcombo(&ds).unwrap(), maxcombo(&shuffled).unwrap());
        }
    }

    #[test]
    fn maxcombo_p_monotone_in_statistic() {
        let corr = vec![
            vec![1.0, 0.6, 0.8, 0.5],
            vec![0.6, 1.0, 0.3, 0.9],
            vec![0.8, 0.3, 1.0, 0.4],
            vec![0.5, 0.9, 0.4, 1.0],
        ];
        let mut prev = 1.0;
        for k in 0..40 {
            let p = maxcombo_p_value(&corr, k as f64 * 0.1).unwrap();
            assert!(p <= prev + 1e-12, "z={}: {p} > {prev}", k as f64 * 0.1);
            prev = p;
        }
    }
}
