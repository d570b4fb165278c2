//! Signal-to-noise criterion M(L) = κ̂²(L)/σ̂²(L), its quadratic penalization,
//! and maximization over a continuous interval or a discrete grid.

use serde::{Deserialize, Serialize};

use crate::data::{TimeUnit, TrialDataset};
use crate::error::{Error, Result};
use crate::rmst::RmstEvaluator;

/// Penalty `c (L − L̃)²` subtracted from the criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub c: f64,
    pub l_tilde: f64,
}

impl PenaltyConfig {
    pub const NONE: PenaltyConfig = PenaltyConfig {
        c: 0.0,
        l_tilde: 0.0,
    };

    pub fn new(c: f64, l_tilde: f64) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::InvalidConfig(format!("penalty c must be >= 0, got {c}")));
        }
        if !l_tilde.is_finite() {
            return Err(Error::InvalidConfig("initial guess must be finite".into()));
        }
        Ok(Self { c, l_tilde })
    }

    #[inline]
    pub fn apply(&self, l: f64, m: f64) -> f64 {
        if self.c == 0.0 {
            m
        } else {
            let dl = l - self.l_tilde;
            m - self.c * dl * dl
        }
    }

    fn check_inside(&self, l_min: f64, l_max: f64) -> Result<()> {
        if self.c > 0.0 && !(l_min < self.l_tilde && self.l_tilde < l_max) {
            return Err(Error::InvalidConfig(format!(
                "initial guess {} must lie strictly inside ({l_min}, {l_max})",
                self.l_tilde
            )));
        }
        Ok(())
    }
}

/// Criterion sampled over increasing restriction times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionProfile {
    pub ls: Vec<f64>,
    pub m_values: Vec<f64>,
    pub m_pen_values: Vec<f64>,
    pub argmax_index: usize,
}

impl CriterionProfile {
    /// CSV with header `L,M,M_penalized`; −∞ is written as `-inf`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("L,M,M_penalized\n");
        for i in 0..self.ls.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.ls[i], self.m_values[i], self.m_pen_values[i]
            ));
        }
        out
    }
}

/// Selected restriction time together with the estimates there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Selection {
    pub l_hat: f64,
    pub kappa: f64,
    pub sigma2: f64,
    /// Penalized criterion at `l_hat`.
    pub value: f64,
}

#[inline]
fn ratio(kappa: f64, sigma2: f64) -> f64 {
    if sigma2 > 0.0 {
        kappa * kappa / sigma2
    } else {
        f64::NEG_INFINITY
    }
}

/// Penalized criterion at `l`, with −∞ wherever it is not estimable.
pub fn criterion_value(ds: &TrialDataset, l: f64, pen: PenaltyConfig) -> Result<f64> {
    let ev = RmstEvaluator::new(ds)?;
    Ok(criterion_from(&ev, l, pen))
}

pub(crate) fn criterion_from(ev: &RmstEvaluator, l: f64, pen: PenaltyConfig) -> f64 {
    if !(l >= 0.0 && l <= ev.max_estimable_time()) {
        return f64::NEG_INFINITY;
    }
    let (kappa, sigma2) = ev.eval(l);
    pen.apply(l, ratio(kappa, sigma2))
}

fn index_of_max(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v == f64::NEG_INFINITY || v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

const TERNARY_ITERATIONS: usize = 60;
const MIN_GRID_POINTS: usize = 1000;

/// Ternary search for the maximum of `f` on `[lo, hi]`.
fn ternary_max(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..TERNARY_ITERATIONS {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    0.5 * (lo + hi)
}

fn check_range(l_min: f64, l_max: f64) -> Result<()> {
    if !(l_min > 0.0 && l_min < l_max && l_max.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "search range must satisfy 0 < L_min < L_max, got [{l_min}, {l_max}]"
        )));
    }
    Ok(())
}

/// Continuous maximization on a prepared evaluator.
///
/// Candidates are every event time in range plus a uniform grid of
/// `max(1000, 10 × #events)` points; the best candidate is refined by ternary
/// search on each adjacent candidate segment (each lies inside one inter-event
/// interval, where the criterion is smooth). Ties resolve to the smallest L.
pub(crate) fn select_continuous(
    ev: &RmstEvaluator,
    l_min: f64,
    l_max: f64,
    pen: PenaltyConfig,
    keep_profile: bool,
) -> Result<(Selection, Option<CriterionProfile>)> {
    let hi = l_max.min(ev.max_estimable_time());
    if hi < l_min {
        return Err(Error::NoEstimablePoint);
    }
    let events = ev.event_times();
    let mut ls: Vec<f64> = events
        .iter()
        .copied()
        .filter(|&t| t >= l_min && t <= hi)
        .collect();
    if hi > l_min {
        let m = MIN_GRID_POINTS.max(10 * events.len());
        let step = (hi - l_min) / (m - 1) as f64;
        ls.extend((0..m - 1).map(|i| l_min + step * i as f64));
    }
    ls.push(l_min);
    ls.push(hi);
    ls.sort_by(f64::total_cmp);
    ls.dedup();

    let evals = ev.eval_sorted(&ls);
    let raw: Vec<f64> = evals.iter().map(|&(k, s)| ratio(k, s)).collect();
    let pen_values: Vec<f64> = ls.iter().zip(&raw).map(|(&l, &m)| pen.apply(l, m)).collect();
    let best = index_of_max(&pen_values).ok_or(Error::NoEstimablePoint)?;

    let f = |l: f64| criterion_from(ev, l, pen);
    let mut chosen = (ls[best], pen_values[best]);
    let mut refined: Vec<f64> = Vec::with_capacity(2);
    if best > 0 {
        refined.push(ternary_max(ls[best - 1], ls[best], f));
    }
    if best + 1 < ls.len() {
        refined.push(ternary_max(ls[best], ls[best + 1], f));
    }
    // Candidates are visited in increasing L, so strict improvement keeps the
    // smallest maximizer.
    for &l in &refined {
        let v = f(l);
        if v > chosen.1 || (v == chosen.1 && l < chosen.0) {
            chosen = (l, v);
        }
    }
    let (kappa, sigma2) = ev.eval(chosen.0);
    let selection = Selection {
        l_hat: chosen.0,
        kappa,
        sigma2,
        value: chosen.1,
    };

    let profile = keep_profile.then(|| {
        let mut ls = ls;
        let mut raw = raw;
        let mut pen_values = pen_values;
        let argmax_index = match ls.binary_search_by(|x| x.total_cmp(&chosen.0)) {
            Ok(i) => i,
            Err(i) => {
                ls.insert(i, chosen.0);
                raw.insert(i, ratio(kappa, sigma2));
                pen_values.insert(i, chosen.1);
                i
            }
        };
        CriterionProfile {
            ls,
            m_values: raw,
            m_pen_values: pen_values,
            argmax_index,
        }
    });
    Ok((selection, profile))
}

/// Maximizes the penalized criterion over `[l_min, min(l_max, max estimable time)]`.
pub fn maximize_continuous(
    ds: &TrialDataset,
    l_min: f64,
    l_max: f64,
    pen: PenaltyConfig,
) -> Result<(Selection, CriterionProfile)> {
    check_range(l_min, l_max)?;
    pen.check_inside(l_min, l_max)?;
    let ev = RmstEvaluator::new(ds)?;
    let (sel, profile) = select_continuous(&ev, l_min, l_max, pen, true)?;
    Ok((sel, profile.expect("profile requested")))
}

/// Result of a discrete-grid selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteSelection {
    pub selection: Selection,
    pub index: usize,
    pub profile: CriterionProfile,
}

pub(crate) fn validate_grid(grid: &[f64], pen: PenaltyConfig) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("grid must not be empty".into()));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::InvalidConfig("grid points must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("grid must be strictly increasing".into()));
    }
    if pen.c > 0.0 {
        let scale = grid[grid.len() - 1].abs().max(1.0);
        if !grid.iter().any(|&g| (g - pen.l_tilde).abs() <= 1e-9 * scale) {
            return Err(Error::InvalidConfig(format!(
                "initial guess {} is not a grid point",
                pen.l_tilde
            )));
        }
    }
    Ok(())
}

pub(crate) fn select_discrete(
    ev: &RmstEvaluator,
    grid: &[f64],
    pen: PenaltyConfig,
) -> Result<DiscreteSelection> {
    let m_values: Vec<f64> = grid
        .iter()
        .map(|&l| criterion_from(ev, l, PenaltyConfig::NONE))
        .collect();
    let m_pen_values: Vec<f64> = grid
        .iter()
        .zip(&m_values)
        .map(|(&l, &m)| pen.apply(l, m))
        .collect();
    let index = index_of_max(&m_pen_values).ok_or(Error::NoEstimablePoint)?;
    let l_hat = grid[index];
    let (kappa, sigma2) = ev.eval(l_hat);
    Ok(DiscreteSelection {
        selection: Selection {
            l_hat,
            kappa,
            sigma2,
            value: m_pen_values[index],
        },
        index,
        profile: CriterionProfile {
            ls: grid.to_vec(),
            m_values,
            m_pen_values,
            argmax_index: index,
        },
    })
}

/// Maximizes the penalized criterion over the points of `grid`.
pub fn maximize_discrete(
    ds: &TrialDataset,
    grid: &[f64],
    pen: PenaltyConfig,
) -> Result<DiscreteSelection> {
    validate_grid(grid, pen)?;
    let ev = RmstEvaluator::new(ds)?;
    select_discrete(&ev, grid, pen)
}

/// `m` equally spaced points from `l_min` to `l_max` inclusive.
pub fn uniform_grid(l_min: f64, l_max: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![l_min],
        _ => {
            let step = (l_max - l_min) / (m - 1) as f64;
            (0..m)
                .map(|i| if i == m - 1 { l_max } else { l_min + step * i as f64 })
                .collect()
        }
    }
}

/// Default initial guess on a grid: the point with 1-based index ⌊(m+1)/2⌋.
pub fn default_grid_l_tilde(grid: &[f64]) -> f64 {
    grid[grid.len().div_ceil(2) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Continuous,
    Discrete,
}

/// Recommended penalty: `k · 16 / (L_max − L_min)² · (unit / year)²`, with
/// `k = 0.002` for continuous and `k = 0.005` for discrete selection.
pub fn default_penalty(l_min: f64, l_max: f64, unit: TimeUnit, kind: PenaltyKind) -> Result<f64> {
    if l_max.is_nan() || l_min.is_nan() || l_max <= l_min {
        return Err(Error::InvalidConfig(format!(
            "L_max must exceed L_min, got [{l_min}, {l_max}]"
        )));
    }
    let coefficient = match kind {
        PenaltyKind::Continuous => 0.002,
        PenaltyKind::Discrete => 0.005,
    };
    let width = l_max - l_min;
    let unit_sq = unit.in_years() * unit.in_years();
    Ok(coefficient * 16.0 / (width * width) * unit_sq)
}

/// Rule-of-thumb grid size range `(⌈n^{1/4}⌉, ⌊2 n^{1/4}⌋)`, computed in
/// integer arithmetic.
pub fn suggest_grid_size(n: usize) -> Result<(usize, usize)> {
    if n < 16 {
        return Err(Error::TooFewSubjects { n });
    }
    let n = n as u128;
    let fourth = |k: u128| k * k * k * k;
    let mut lo = 1u128;
    while fourth(lo) < n {
        lo += 1;
    }
    let mut hi = lo;
    while fourth(hi + 1) <= 16 * n {
        hi += 1;
    }
    Ok((lo as usize, hi as usize))
}

/// Default range: 5th percentile of pooled follow-up times to the largest
/// estimable time.
pub fn default_range(ds: &TrialDataset) -> (f64, f64) {
    let mut times: Vec<f64> = ds.records().iter().map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    (crate::stats::quantile_sorted(&times, 0.05), ds.max_estimable_time())
}
