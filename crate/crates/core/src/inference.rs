//! Confidence intervals and dual tests for the adaptively selected effect:
//! convex-hull intervals over data folds, percentile bootstrap, and Wald
//! intervals on a discrete grid.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::criterion::{
    default_grid_l_tilde, default_penalty, default_range, select_continuous, select_discrete,
    uniform_grid, validate_grid, PenaltyConfig, PenaltyKind,
};
use crate::data::{Arm, TrialDataset};
use crate::error::{Error, Result};
use crate::km::SurvivalCurve;
use crate::rmst::RmstEvaluator;
use crate::rng::substream;
use crate::stats::{normal_quantile, quantile_sorted, two_sided_p};

const FOLD_STREAM_KEY: u64 = 0x4855_4C43;
const BOOT_STREAM_KEY: u64 = 0x424F_4F54;
/// Largest tolerated fraction of unestimable bootstrap resamples.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ct,
    Dt,
    Hulc,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ct" => Ok(Method::Ct),
            "dt" => Ok(Method::Dt),
            "hulc" => Ok(Method::Hulc),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ct => "ct",
            Method::Dt => "dt",
            Method::Hulc => "hulc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Hulc,
    HulcAnti,
    Bootstrap,
    Wald,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    /// Folds (HulC) or resamples (bootstrap) attempted.
    pub tasks: usize,
    /// Resamples dropped because the criterion was not estimable on them.
    pub skipped: usize,
}

/// Parameters after `auto` resolution, echoed in the result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub method: Method,
    pub alpha: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub c: f64,
    pub l_tilde: Option<f64>,
    pub grid: Option<Vec<f64>>,
    pub bootstrap_resamples: Option<usize>,
    pub stratified_bootstrap: bool,
    pub hulc_folds: Option<usize>,
    pub anti_conservative: bool,
    pub seed: u64,
    pub time_unit: crate::data::TimeUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub method: Method,
    pub l_hat: f64,
    pub kappa_hat: f64,
    pub sigma2: f64,
    pub ci_kappa: ConfidenceInterval,
    pub ci_l: Option<ConfidenceInterval>,
    pub p_value: Option<f64>,
    pub p_value_kind: Option<&'static str>,
    pub reject: bool,
    pub seed: u64,
    pub diagnostics: Diagnostics,
    pub config: Option<ResolvedConfig>,
}

impl AnalysisResult {
    fn with_ci(method: Method, sel: &crate::Selection, ci: ConfidenceInterval, seed: u64) -> Self {
        Self {
            method,
            l_hat: sel.l_hat,
            kappa_hat: sel.kappa,
            sigma2: sel.sigma2,
            reject: !ci.contains(0.0),
            ci_kappa: ci,
            ci_l: None,
            p_value: None,
            p_value_kind: None,
            seed,
            diagnostics: Diagnostics::default(),
            config: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "method: {}\nselected L: {:.6}\nkappa: {:.6}\nCI ({:.0}%, {:?}): [{:.6}, {:.6}]\n",
            self.method,
            self.l_hat,
            self.kappa_hat,
            100.0 * self.ci_kappa.level,
            self.ci_kappa.method,
            self.ci_kappa.lower,
            self.ci_kappa.upper
        );
        if let Some(ci) = &self.ci_l {
            s.push_str(&format!("CI for L: [{:.6}, {:.6}]\n", ci.lower, ci.upper));
        }
        match self.p_value {
            Some(p) if p < 1e-3 => s.push_str(&format!("p-value: {p:.3e}\n")),
            Some(p) => s.push_str(&format!("p-value: {p:.4}\n")),
            None => s.push_str("p-value: n/a\n"),
        }
        s.push_str(&format!("reject H0: {}\n", self.reject));
        s
    }
}

#[derive(Serialize)]
struct FlatResult<'a> {
    method: Method,
    #[serde(rename = "L_hat")]
    l_hat: f64,
    kappa_hat: f64,
    sigma2: f64,
    ci_kappa_lower: f64,
    ci_kappa_upper: f64,
    ci_level: f64,
    ci_method: CiMethod,
    #[serde(rename = "ci_L_lower")]
    ci_l_lower: Option<f64>,
    #[serde(rename = "ci_L_upper")]
    ci_l_upper: Option<f64>,
    p_value: Option<f64>,
    p_value_kind: Option<&'static str>,
    reject: bool,
    seed: u64,
    tasks: usize,
    skipped: usize,
    config: Option<&'a ResolvedConfig>,
}

impl Serialize for AnalysisResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        FlatResult {
            method: self.method,
            l_hat: self.l_hat,
            kappa_hat: self.kappa_hat,
            sigma2: self.sigma2,
            ci_kappa_lower: self.ci_kappa.lower,
            ci_kappa_upper: self.ci_kappa.upper,
            ci_level: self.ci_kappa.level,
            ci_method: self.ci_kappa.method,
            ci_l_lower: self.ci_l.map(|c| c.lower),
            ci_l_upper: self.ci_l.map(|c| c.upper),
            p_value: self.p_value,
            p_value_kind: self.p_value_kind,
            reject: self.reject,
            seed: self.seed,
            tasks: self.diagnostics.tasks,
            skipped: self.diagnostics.skipped,
            config: self.config.as_ref(),
        }
        .serialize(serializer)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Number of folds `⌈1 − ln α / ln 2⌉` (conservative) or `⌊·⌋` (anti-conservative).
pub fn hulc_fold_count(alpha: f64, anti_conservative: bool) -> Result<usize> {
    check_alpha(alpha)?;
    let x = 1.0 - alpha.ln() / 2f64.ln();
    let rounded = x.round();
    let b = if (x - rounded).abs() < 1e-9 {
        rounded
    } else if anti_conservative {
        x.floor()
    } else {
        x.ceil()
    };
    Ok(b as usize)
}

/// Observations of each arm sorted by time, remembering their record index,
/// so sub-samples given as multiplicities need no re-sorting.
struct SortedArms {
    arms: [Vec<(f64, bool, usize)>; 2],
}

impl SortedArms {
    fn new(ds: &TrialDataset) -> Self {
        let mut arms: [Vec<(f64, bool, usize)>; 2] = [Vec::new(), Vec::new()];
        for (i, r) in ds.records().iter().enumerate() {
            arms[r.arm.index()].push((r.time, r.event, i));
        }
        for arm in &mut arms {
            arm.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        Self { arms }
    }

    /// Evaluator for the sub-sample with the given per-record multiplicities;
    /// `None` when an arm ends up with fewer than two subjects.
    fn evaluator(&self, weights: &[u32]) -> Option<RmstEvaluator> {
        let mut curves = Vec::with_capacity(2);
        for arm in &self.arms {
            let count: u32 = arm.iter().map(|o| weights[o.2]).sum();
            if count < 2 {
                return None;
            }
            let curve =
                SurvivalCurve::from_sorted_weighted(arm.iter().map(|o| (o.0, o.1, weights[o.2])))
                    .ok()?;
            curves.push(curve);
        }
        Some(RmstEvaluator::from_curves(&curves[0], &curves[1]))
    }
}

/// Arm-stratified random partition into `folds` near-equal folds.
fn stratified_folds(ds: &TrialDataset, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = substream(seed, &[FOLD_STREAM_KEY], 0);
    let mut assignment = vec![0usize; ds.n()];
    let mut next = 0usize;
    for arm in Arm::BOTH {
        let mut idx: Vec<usize> = (0..ds.n()).filter(|&i| ds.records()[i].arm == arm).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

/// Convex-hull interval: the range of the unpenalized fold-wise estimates.
pub fn hulc_interval(
    ds: &TrialDataset,
    alpha: f64,
    anti_conservative: bool,
    l_min: f64,
    l_max: f64,
    seed: u64,
) -> Result<AnalysisResult> {
    let folds = hulc_fold_count(alpha, anti_conservative)?;
    let assignment = stratified_folds(ds, folds, seed);
    for fold in 0..folds {
        for arm in Arm::BOTH {
            let count = ds
                .records()
                .iter()
                .zip(&assignment)
                .filter(|(r, &f)| f == fold && r.arm == arm)
                .count();
            if count < 2 {
                return Err(Error::FoldTooSmall {
                    fold,
                    arm: arm as u8,
                    count,
                });
            }
        }
    }
    let sorted = SortedArms::new(ds);
    let estimates: Vec<f64> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let weights: Vec<u32> = assignment.iter().map(|&f| (f == fold) as u32).collect();
            let ev = sorted.evaluator(&weights).expect("fold sizes checked");
            select_continuous(&ev, l_min, l_max, PenaltyConfig::NONE, false).map(|s| s.0.kappa)
        })
        .collect::<Result<_>>()?;

    let full = RmstEvaluator::new(ds)?;
    let (sel, _) = select_continuous(&full, l_min, l_max, PenaltyConfig::NONE, false)?;
    let lower = estimates.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ci = ConfidenceInterval {
        lower,
        upper,
        level: 1.0 - alpha,
        method: if anti_conservative {
            CiMethod::HulcAnti
        } else {
            CiMethod::Hulc
        },
    };
    let mut result = AnalysisResult::with_ci(Method::Hulc, &sel, ci, seed);
    result.diagnostics.tasks = folds;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub stratified: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            resamples: 1000,
            stratified: false,
        }
    }
}

fn percentile_ci(sorted: &[f64], alpha: f64, method: CiMethod) -> ConfidenceInterval {
    ConfidenceInterval {
        lower: quantile_sorted(sorted, alpha / 2.0),
        upper: quantile_sorted(sorted, 1.0 - alpha / 2.0),
        level: 1.0 - alpha,
        method,
    }
}

/// Smallest level on a 1e-4 grid at which the percentile interval excludes 0.
fn percentile_p_value(sorted: &[f64]) -> f64 {
    (1..=10_000)
        .map(|k| k as f64 * 1e-4)
        .find(|&a| {
            let ci = percentile_ci(sorted, a, CiMethod::Bootstrap);
            !ci.contains(0.0)
        })
        .unwrap_or(1.0)
}

/// Percentile bootstrap intervals for the penalized effect and restriction time.
pub fn bootstrap_interval(
    ds: &TrialDataset,
    alpha: f64,
    opts: BootstrapOptions,
    l_min: f64,
    l_max: f64,
    pen: PenaltyConfig,
    seed: u64,
) -> Result<AnalysisResult> {
    check_alpha(alpha)?;
    if opts.resamples < 100 {
        return Err(Error::InvalidConfig(format!(
            "at least 100 bootstrap resamples are required, got {}",
            opts.resamples
        )));
    }
    let full = RmstEvaluator::new(ds)?;
    let (sel, _) = select_continuous(&full, l_min, l_max, pen, false)?;

    let sorted = SortedArms::new(ds);
    let n = ds.n();
    let arm_index: [Vec<usize>; 2] = [
        (0..n).filter(|&i| ds.records()[i].arm == Arm::Control).collect(),
        (0..n).filter(|&i| ds.records()[i].arm == Arm::Treatment).collect(),
    ];
    let draws: Vec<Option<(f64, f64)>> = (0..opts.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, &[BOOT_STREAM_KEY], b as u64);
            let mut weights = vec![0u32; n];
            if opts.stratified {
                for idx in &arm_index {
                    for _ in 0..idx.len() {
                        weights[idx[rng.random_range(0..idx.len())]] += 1;
                    }
                }
            } else {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1;
                }
            }
            let ev = sorted.evaluator(&weights)?;
            select_continuous(&ev, l_min, l_max, pen, false)
                .ok()
                .map(|(s, _)| (s.kappa, s.l_hat))
        })
        .collect();

    let skipped = draws.iter().filter(|d| d.is_none()).count();
    if skipped as f64 > MAX_DEGENERATE_FRACTION * opts.resamples as f64 {
        return Err(Error::TooManyDegenerateResamples {
            dropped: skipped,
            total: opts.resamples,
        });
    }
    let mut kappas: Vec<f64> = draws.iter().flatten().map(|d| d.0).collect();
    let mut ls: Vec<f64> = draws.iter().flatten().map(|d| d.1).collect();
    kappas.sort_by(f64::total_cmp);
    ls.sort_by(f64::total_cmp);

    let ci = percentile_ci(&kappas, alpha, CiMethod::Bootstrap);
    let mut result = AnalysisResult::with_ci(Method::Ct, &sel, ci, seed);
    result.ci_l = Some(percentile_ci(&ls, alpha, CiMethod::Bootstrap));
    result.p_value = Some(percentile_p_value(&kappas));
    result.p_value_kind = Some("percentile_inversion");
    result.diagnostics = Diagnostics {
        tasks: opts.resamples,
        skipped,
    };
    Ok(result)
}

/// Wald interval at the grid point selected by the penalized criterion; the
/// interval for L is the singleton at the selected point.
pub fn wald_interval_discrete(
    ds: &TrialDataset,
    grid: &[f64],
    alpha: f64,
    pen: PenaltyConfig,
) -> Result<AnalysisResult> {
    check_alpha(alpha)?;
    validate_grid(grid, pen)?;
    let ev = RmstEvaluator::new(ds)?;
    let sel = select_discrete(&ev, grid, pen)?.selection;
    let se = (sel.sigma2 / ds.n() as f64).sqrt();
    let z = normal_quantile(1.0 - alpha / 2.0);
    let ci = ConfidenceInterval {
        lower: sel.kappa - z * se,
        upper: sel.kappa + z * se,
        level: 1.0 - alpha,
        method: CiMethod::Wald,
    };
    let mut result = AnalysisResult::with_ci(Method::Dt, &sel, ci, 0);
    result.ci_l = Some(ConfidenceInterval {
        lower: sel.l_hat,
        upper: sel.l_hat,
        level: 1.0 - alpha,
        method: CiMethod::Wald,
    });
    result.p_value = Some(two_sided_p(sel.kappa / se));
    result.p_value_kind = Some("wald");
    Ok(result)
}

/// User-facing configuration; `None` fields are resolved to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub method: Method,
    pub alpha: f64,
    pub l_min: Option<f64>,
    pub l_max: Option<f64>,
    pub c: Option<f64>,
    pub l_tilde: Option<f64>,
    pub grid: Option<Vec<f64>>,
    pub grid_points: usize,
    pub bootstrap_resamples: usize,
    pub stratified_bootstrap: bool,
    pub anti_conservative: bool,
    pub seed: u64,
}

impl AnalysisConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            alpha: 0.05,
            l_min: None,
            l_max: None,
            c: None,
            l_tilde: None,
            grid: None,
            grid_points: 10,
            bootstrap_resamples: 1000,
            stratified_bootstrap: false,
            anti_conservative: true,
            seed,
        }
    }

    /// Fills every `auto` parameter for `ds`.
    pub fn resolve(&self, ds: &TrialDataset) -> Result<ResolvedConfig> {
        check_alpha(self.alpha)?;
        let (auto_min, auto_max) = default_range(ds);
        let l_min = self.l_min.unwrap_or(auto_min);
        let l_max = self.l_max.unwrap_or(auto_max);
        if !(l_min > 0.0 && l_min < l_max) {
            return Err(Error::InvalidConfig(format!(
                "search range must satisfy 0 < L_min < L_max, got [{l_min}, {l_max}]"
            )));
        }
        let unit = ds.time_unit();
        let mut resolved = ResolvedConfig {
            method: self.method,
            alpha: self.alpha,
            l_min,
            l_max,
            c: 0.0,
            l_tilde: None,
            grid: None,
            bootstrap_resamples: None,
            stratified_bootstrap: false,
            hulc_folds: None,
            anti_conservative: self.anti_conservative,
            seed: self.seed,
            time_unit: unit,
        };
        match self.method {
            Method::Ct => {
                resolved.c = match self.c {
                    Some(c) => c,
                    None => default_penalty(l_min, l_max, unit, PenaltyKind::Continuous)?,
                };
                resolved.l_tilde = Some(self.l_tilde.unwrap_or(0.5 * (l_min + l_max)));
                resolved.bootstrap_resamples = Some(self.bootstrap_resamples);
                resolved.stratified_bootstrap = self.stratified_bootstrap;
            }
            Method::Dt => {
                let grid = match &self.grid {
                    Some(g) => g.clone(),
                    None => uniform_grid(l_min, l_max, self.grid_points),
                };
                if grid.is_empty() {
                    return Err(Error::InvalidConfig("grid must not be empty".into()));
                }
                resolved.c = match self.c {
                    Some(c) => c,
                    // A single candidate needs no penalty.
                    None if grid.len() == 1 => 0.0,
                    None => default_penalty(grid[0], grid[grid.len() - 1], unit, PenaltyKind::Discrete)?,
                };
                resolved.l_tilde = Some(self.l_tilde.unwrap_or_else(|| default_grid_l_tilde(&grid)));
                resolved.grid = Some(grid);
            }
            Method::Hulc => {
                resolved.hulc_folds = Some(hulc_fold_count(self.alpha, self.anti_conservative)?);
            }
        }
        Ok(resolved)
    }
}

/// Runs the configured method with defaults filled in.
pub fn analyze(ds: &TrialDataset, config: &AnalysisConfig) -> Result<AnalysisResult> {
    let rc = config.resolve(ds)?;
    let pen = || PenaltyConfig::new(rc.c, rc.l_tilde.unwrap_or(0.0));
    let mut result = match rc.method {
        Method::Ct => bootstrap_interval(
            ds,
            rc.alpha,
            BootstrapOptions {
                resamples: config.bootstrap_resamples,
                stratified: config.stratified_bootstrap,
            },
            rc.l_min,
            rc.l_max,
            pen()?,
            rc.seed,
        )?,
        Method::Dt => wald_interval_discrete(ds, rc.grid.as_deref().unwrap_or(&[]), rc.alpha, pen()?)?,
        Method::Hulc => hulc_interval(ds, rc.alpha, rc.anti_conservative, rc.l_min, rc.l_max, rc.seed)?,
    };
    result.seed = rc.seed;
    result.config = Some(rc);
    Ok(result)
}
