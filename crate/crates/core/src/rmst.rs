//! Restricted mean survival time, the between-arm difference, and its
//! Greenwood-form variance.
//!
//! The variance reported here is that of the √n-scaled estimator:
//!
//! ```text
//! σ̂²(L) = n Σ_a Σ_{T_aj ≤ L} d_aj / (Y_aj (Y_aj − d_aj)) · (θ̂_a(L) − θ̂_a(T_aj))²
//! ```
//!
//! so Wald intervals use `σ̂ / √n`.

use serde::Serialize;

use crate::data::{Arm, TrialDataset};
use crate::error::{Error, Result};
use crate::km::{fit_km, SurvivalCurve};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmstEstimate {
    #[serde(rename = "L")]
    pub l: f64,
    pub theta1: f64,
    pub theta0: f64,
    pub kappa: f64,
    pub sigma2: f64,
    pub estimable: bool,
}

/// Exact area under the step function on `[0, l]`.
pub fn rmst_arm(curve: &SurvivalCurve, l: f64) -> Result<f64> {
    if l > curve.max_follow_up() || l.is_nan() {
        return Err(Error::BeyondFollowUp {
            t: l,
            max_follow_up: curve.max_follow_up(),
        });
    }
    let mut area = 0.0;
    let mut prev_t = 0.0;
    let mut prev_s = 1.0;
    for (&t, &s) in curve.event_times().iter().zip(curve.survival()) {
        if t > l {
            break;
        }
        area += prev_s * (t - prev_t);
        prev_t = t;
        prev_s = s;
    }
    Ok(area + prev_s * (l - prev_t).max(0.0))
}

fn check_estimable(ds: &TrialDataset, l: f64) -> Result<()> {
    let max_estimable = ds.max_estimable_time();
    if l.is_nan() || l > max_estimable || l < 0.0 {
        return Err(Error::NotEstimable { l, max_estimable });
    }
    Ok(())
}

fn arm_variance_sum(curve: &SurvivalCurve, l: f64) -> Result<f64> {
    let theta_l = rmst_arm(curve, l)?;
    let mut sum = 0.0;
    for j in 0..curve.events_through(l) {
        let t = curve.event_times()[j];
        let d = curve.deaths()[j] as f64;
        let y = curve.at_risk()[j] as f64;
        let gap = theta_l - rmst_arm(curve, t)?;
        if y == d {
            if gap != 0.0 {
                return Err(Error::DegenerateRiskSet { t });
            }
            continue;
        }
        sum += d / (y * (y - d)) * gap * gap;
    }
    Ok(sum)
}

/// Variance estimate of √n·κ̂(L), evaluated term by term.
pub fn variance_hat(ds: &TrialDataset, l: f64) -> Result<f64> {
    check_estimable(ds, l)?;
    let mut total = 0.0;
    for arm in Arm::BOTH {
        total += arm_variance_sum(&fit_km(&ds.arm_records(arm))?, l)?;
    }
    Ok(ds.n() as f64 * total)
}

/// Plug-in RMST difference (treatment minus control) at `l`.
pub fn kappa_hat(ds: &TrialDataset, l: f64) -> Result<RmstEstimate> {
    check_estimable(ds, l)?;
    let c0 = fit_km(&ds.arm_records(Arm::Control))?;
    let c1 = fit_km(&ds.arm_records(Arm::Treatment))?;
    let theta0 = rmst_arm(&c0, l)?;
    let theta1 = rmst_arm(&c1, l)?;
    Ok(RmstEstimate {
        l,
        theta1,
        theta0,
        kappa: theta1 - theta0,
        sigma2: variance_hat(ds, l)?,
        estimable: true,
    })
}

/// Per-arm cumulative quantities that make θ̂(L) and the variance sum O(1)
/// to evaluate for any L.
///
/// For L in `[t_k, t_{k+1})`, θ̂(L) = θ_k + S_k (L − t_k) and, with
/// δ = θ̂(L) − θ_k,
/// `Σ_{j≤k} w_j (θ̂(L) − θ_j)² = C_k + 2δ A_k + δ² W_k`
/// where `W_k = Σ w_j`, `A_k = Σ w_j (θ_k − θ_j)`, `C_k = Σ w_j (θ_k − θ_j)²`.
/// All three are updated recursively with nonnegative increments.
#[derive(Debug, Clone)]
pub(crate) struct ArmIntegrals {
    times: Vec<f64>,
    surv: Vec<f64>,
    theta: Vec<f64>,
    w_sum: Vec<f64>,
    a_sum: Vec<f64>,
    c_sum: Vec<f64>,
    max_follow_up: f64,
}

impl ArmIntegrals {
    pub(crate) fn new(curve: &SurvivalCurve) -> Self {
        let m = curve.event_times().len();
        let mut out = ArmIntegrals {
            times: Vec::with_capacity(m),
            surv: Vec::with_capacity(m),
            theta: Vec::with_capacity(m),
            w_sum: Vec::with_capacity(m),
            a_sum: Vec::with_capacity(m),
            c_sum: Vec::with_capacity(m),
            max_follow_up: curve.max_follow_up(),
        };
        let (mut theta, mut w, mut a, mut c) = (0.0, 0.0, 0.0, 0.0);
        let (mut prev_t, mut prev_s) = (0.0, 1.0);
        for j in 0..m {
            let t = curve.event_times()[j];
            let step = prev_s * (t - prev_t);
            theta += step;
            c += 2.0 * step * a + step * step * w;
            a += step * w;
            let d = curve.deaths()[j] as f64;
            let y = curve.at_risk()[j] as f64;
            // A risk set emptied by deaths leaves θ̂ flat afterwards, so its
            // 0·∞ term is zero for every L.
            if y > d {
                w += d / (y * (y - d));
            }
            prev_t = t;
            prev_s = curve.survival()[j];
            out.times.push(t);
            out.surv.push(prev_s);
            out.theta.push(theta);
            out.w_sum.push(w);
            out.a_sum.push(a);
            out.c_sum.push(c);
        }
        out
    }

    /// (θ̂(L), variance sum) given the number `k` of event times `<= l`.
    #[inline]
    fn eval_at(&self, l: f64, k: usize) -> (f64, f64) {
        if k == 0 {
            return (l, 0.0);
        }
        let i = k - 1;
        let delta = self.surv[i] * (l - self.times[i]);
        let var = self.c_sum[i] + 2.0 * delta * self.a_sum[i] + delta * delta * self.w_sum[i];
        (self.theta[i] + delta, var)
    }

    pub(crate) fn eval(&self, l: f64) -> (f64, f64) {
        self.eval_at(l, self.times.partition_point(|&t| t <= l))
    }

    pub(crate) fn times(&self) -> &[f64] {
        &self.times
    }
}

/// Evaluates κ̂(L) and σ̂²(L) for a fixed dataset at arbitrary L.
#[derive(Debug, Clone)]
pub struct RmstEvaluator {
    arms: [ArmIntegrals; 2],
    n: f64,
    max_estimable: f64,
}

impl RmstEvaluator {
    pub fn new(ds: &TrialDataset) -> Result<Self> {
        let c0 = fit_km(&ds.arm_records(Arm::Control))?;
        let c1 = fit_km(&ds.arm_records(Arm::Treatment))?;
        Ok(Self::from_curves(&c0, &c1))
    }

    pub fn from_curves(control: &SurvivalCurve, treatment: &SurvivalCurve) -> Self {
        let arms = [ArmIntegrals::new(control), ArmIntegrals::new(treatment)];
        let n = (control.n_arm() + treatment.n_arm()) as f64;
        let max_estimable = arms[0].max_follow_up.min(arms[1].max_follow_up);
        Self {
            arms,
            n,
            max_estimable,
        }
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn max_estimable_time(&self) -> f64 {
        self.max_estimable
    }

    /// Pooled distinct event times of both arms, sorted.
    pub fn event_times(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.arms.iter().flat_map(|a| a.times().iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// `(κ̂(L), σ̂²(L))`; the caller is responsible for estimability of `l`.
    pub fn eval(&self, l: f64) -> (f64, f64) {
        let (t0, v0) = self.arms[0].eval(l);
        let (t1, v1) = self.arms[1].eval(l);
        (t1 - t0, self.n * (v0 + v1))
    }

    /// Same as [`eval`](Self::eval) for an increasing sequence, in one sweep.
    pub fn eval_sorted(&self, ls: &[f64]) -> Vec<(f64, f64)> {
        let mut k = [0usize; 2];
        ls.iter()
            .map(|&l| {
                let mut parts = [(0.0, 0.0); 2];
                for a in 0..2 {
                    let times = &self.arms[a].times;
                    while k[a] < times.len() && times[k[a]] <= l {
                        k[a] += 1;
                    }
                    parts[a] = self.arms[a].eval_at(l, k[a]);
                }
                (parts[1].0 - parts[0].0, self.n * (parts[0].1 + parts[1].1))
            })
            .collect()
    }
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

    #[test]
    fn rectangle_sums() {
        let c = fit_km(&[(1.0, true), (2.0, true), (3.0, false)]).unwrap();
        assert_relative_eq!(rmst_arm(&c, 3.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(rmst_arm(&c, 1.5).unwrap(), 1.0 + 2.0 / 3.0 * 0.5, epsilon = 1e-12);
        assert_eq!(rmst_arm(&c, 0.0).unwrap(), 0.0);
        assert_eq!(rmst_arm(&c, 0.7).unwrap(), 0.7);
        assert!(rmst_arm(&c, 3.5).is_err());
    }

    #[test]
    fn toy_kappa_and_variance() {
        let est = kappa_hat(&toy(), 2.0).unwrap();
        assert_relative_eq!(est.theta0, 1.5, epsilon = 1e-12);
        assert_relative_eq!(est.theta1, 1.75, epsilon = 1e-12);
        assert_relative_eq!(est.kappa, 0.25, epsilon = 1e-12);
        // 4 * (0.5 * 0.5^2 + 0.5 * 0.25^2)
        assert_relative_eq!(est.sigma2, 0.625, epsilon = 1e-12);
        assert!(matches!(kappa_hat(&toy(), 2.5), Err(Error::NotEstimable { .. })));
        assert!(matches!(variance_hat(&toy(), 2.5), Err(Error::NotEstimable { .. })));
    }

    #[test]
    fn variance_is_zero_before_first_event() {
        assert_eq!(variance_hat(&toy(), 0.9).unwrap(), 0.0);
    }

    #[test]
    fn identical_arms_give_zero_kappa() {
        let ds = toy();
        let mirrored: Vec<SubjectRecord> = ds
            .records()
            .iter()
            .filter(|r| r.arm == Arm::Control)
            .flat_map(|r| [*r, SubjectRecord::new(Arm::Treatment, r.time, r.event)])
            .collect();
        let ds = TrialDataset::new(mirrored, TimeUnit::Years).unwrap();
        assert_eq!(kappa_hat(&ds, 1.7).unwrap().kappa, 0.0);
    }

    #[test]
    fn exhausted_final_risk_set_is_skipped() {
        let recs = vec![
            SubjectRecord::new(Arm::Control, 1.0, true),
            SubjectRecord::new(Arm::Control, 2.0, true),
            SubjectRecord::new(Arm::Treatment, 1.5, true),
            SubjectRecord::new(Arm::Treatment, 3.0, false),
        ];
        let ds = TrialDataset::new(recs, TimeUnit::Years).unwrap();
        let direct = variance_hat(&ds, 2.0).unwrap();
        let fast = RmstEvaluator::new(&ds).unwrap().eval(2.0).1;
        assert!(direct.is_finite());
        assert_relative_eq!(direct, fast, max_relative = 1e-12);
    }

    fn dataset_strategy() -> impl Strategy<Value = TrialDataset> {
        let rec = (any::<bool>(), 1u32..40, prop::bool::weighted(0.7));
        prop::collection::vec(rec, 4..40).prop_filter_map("two per arm", |rows| {
            let recs = rows
                .into_iter()
                .map(|(a, t, e)| {
                    let arm = if a { Arm::Treatment } else { Arm::Control };
                    SubjectRecord::new(arm, t as f64 * 0.125, e)
                })
                .collect();
            TrialDataset::new(recs, TimeUnit::Years).ok()
        })
    }

    proptest! {
        #[test]
        fn fast_path_matches_direct(ds in dataset_strategy(), frac in 0.0f64..=1.0) {
            let l = frac * ds.max_estimable_time();
            let est = kappa_hat(&ds, l).unwrap();
            let (kappa, sigma2) = RmstEvaluator::new(&ds).unwrap().eval(l);
            prop_assert!((kappa - est.kappa).abs() < 1e-12);
            prop_assert!((sigma2 - est.sigma2).abs() <= 1e-9 * est.sigma2.max(1e-12));
        }

        #[test]
        fn bounded_and_monotone(ds in dataset_strategy(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = (a.min(b) * ds.max_estimable_time(), a.max(b) * ds.max_estimable_time());
            let e_lo = kappa_hat(&ds, lo).unwrap();
            let e_hi = kappa_hat(&ds, hi).unwrap();
            prop_assert!(e_hi.kappa.abs() <= hi + 1e-12);
            prop_assert!(e_lo.theta0 <= e_hi.theta0 + 1e-12);
            prop_assert!(e_lo.theta1 <= e_hi.theta1 + 1e-12);
            prop_assert!(e_hi.theta0 <= hi + 1e-12 && e_hi.theta0 >= 0.0);
            prop_assert!(e_hi.sigma2 >= 0.0);
        }

        #[test]
        fn swapping_arms_negates_kappa(ds in dataset_strategy(), frac in 0.0f64..=1.0) {
            let l = frac * ds.max_estimable_time();
            let e = kappa_hat(&ds, l).unwrap();
            let s = kappa_hat(&ds.swap_arms(), l).unwrap();
            prop_assert_eq!(s.kappa, -e.kappa);
            prop_assert!((s.sigma2 - e.sigma2).abs() <= 1e-12 * e.sigma2.max(1.0));
        }

        #[test]
        fn sweep_matches_pointwise(ds in dataset_strategy()) {
            let ev = RmstEvaluator::new(&ds).unwrap();
            let ls: Vec<f64> = (0..50).map(|i| i as f64 / 49.0 * ds.max_estimable_time()).collect();
            for (l, swept) in ls.iter().zip(ev.eval_sorted(&ls)) {
                prop_assert_eq!(swept, ev.eval(*l));
            }
        }
    }
}
