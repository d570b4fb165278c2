//! Kaplan–Meier product-limit estimation with tie-aware risk-set bookkeeping.

use serde::Serialize;

use crate::error::{Error, Result};

/// Right-continuous Kaplan–Meier step function for one arm.
///
/// Only times with at least one event are stored. A subject censored at an
/// event time is still counted in the risk set at that time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    event_times: Vec<f64>,
    deaths: Vec<u32>,
    at_risk: Vec<u32>,
    survival: Vec<f64>,
    max_follow_up: f64,
    n_arm: u32,
}

impl SurvivalCurve {
    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn deaths(&self) -> &[u32] {
        &self.deaths
    }

    pub fn at_risk(&self) -> &[u32] {
        &self.at_risk
    }

    /// Survival just after each event time.
    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    pub fn max_follow_up(&self) -> f64 {
        self.max_follow_up
    }

    pub fn n_arm(&self) -> u32 {
        self.n_arm
    }

    /// Number of event times `<= t`.
    pub(crate) fn events_through(&self, t: f64) -> usize {
        self.event_times.partition_point(|&e| e <= t)
    }

    pub fn survival_at(&self, t: f64) -> Result<f64> {
        if t > self.max_follow_up || t.is_nan() {
            return Err(Error::BeyondFollowUp {
                t,
                max_follow_up: self.max_follow_up,
            });
        }
        Ok(match self.events_through(t) {
            0 => 1.0,
            k => self.survival[k - 1],
        })
    }

    /// Left limit S(t-).
    pub fn survival_before(&self, t: f64) -> f64 {
        match self.event_times.partition_point(|&e| e < t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    /// Builds the curve from observations sorted by time, each carrying an
    /// integer multiplicity (bootstrap resamples use multiplicities > 1).
    pub(crate) fn from_sorted_weighted<I>(sorted: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, bool, u32)>,
    {
        let items: Vec<(f64, bool, u32)> = sorted.into_iter().filter(|o| o.2 > 0).collect();
        let n_arm: u32 = items.iter().map(|o| o.2).sum();
        if n_arm == 0 {
            return Err(Error::EmptyArm);
        }
        let mut curve = SurvivalCurve {
            event_times: Vec::new(),
            deaths: Vec::new(),
            at_risk: Vec::new(),
            survival: Vec::new(),
            max_follow_up: items.last().map_or(0.0, |o| o.0),
            n_arm,
        };
        let mut remaining = n_arm;
        let mut surv = 1.0;
        let mut i = 0;
        while i < items.len() {
            let t = items[i].0;
            let (mut d, mut leaving) = (0u32, 0u32);
            while i < items.len() && items[i].0 == t {
                if items[i].1 {
                    d += items[i].2;
                }
                leaving += items[i].2;
                i += 1;
            }
            if d > 0 {
                surv = if d == remaining {
                    0.0
                } else {
                    surv * (1.0 - d as f64 / remaining as f64)
                };
                curve.event_times.push(t);
                curve.deaths.push(d);
                curve.at_risk.push(remaining);
                curve.survival.push(surv);
            }
            remaining -= leaving;
        }
        Ok(curve)
    }
}

/// Fits the product-limit estimator to `(time, event)` pairs of one arm.
pub fn fit_km(records: &[(f64, bool)]) -> Result<SurvivalCurve> {
    if records.is_empty() {
        return Err(Error::EmptyArm);
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    SurvivalCurve::from_sorted_weighted(sorted.into_iter().map(|(t, e)| (t, e, 1)))
}
