//! Trial generation and the Monte Carlo study harness.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::{fixed_rmst_test, logrank, maxcombo, oracle_rmst_test};
use crate::criterion::{default_grid_l_tilde, uniform_grid, PenaltyConfig};
use crate::data::{Arm, SubjectRecord, TimeUnit, TrialDataset};
use crate::error::{Error, Result};
use crate::inference::{analyze, AnalysisConfig, ConfidenceInterval, Method};
use crate::rng::derive_seed;
use crate::stats::{mean, sample_sd};
use crate::truth::{true_kappa, true_optimum, true_optimum_discrete, ScenarioSpec, TrueOptimum};

/// Draws one trial of `n` subjects; with odd `n` control gets the extra subject.
pub fn generate_trial_with<R: Rng + ?Sized>(s: &ScenarioSpec, n: usize, rng: &mut R) -> Result<TrialDataset> {
    let n1 = (n as f64 * s.beta).floor() as usize;
    let n0 = n - n1;
    let mut records = Vec::with_capacity(n);
    for (arm, count, dist) in [(Arm::Control, n0, &s.control), (Arm::Treatment, n1, &s.treatment)] {
        for _ in 0..count {
            let t = dist.sample(rng);
            let u: f64 = rng.sample(Open01);
            let c = (-u.ln() / s.censor_rate).min(s.admin_time);
            records.push(SubjectRecord::new(arm, t.min(c), t <= c));
        }
    }
    TrialDataset::new(records, TimeUnit::Years)
}

pub fn generate_trial(s: &ScenarioSpec, n: usize, seed: u64) -> Result<TrialDataset> {
    generate_trial_with(s, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Seed of replicate `rep` of scenario `s` at sample size `n`.
pub fn replicate_seed(master: u64, s: &ScenarioSpec, n: usize, rep: usize) -> u64 {
    derive_seed(master, &[s.index(), n as u64, rep as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyMethod {
    Ct,
    Dt,
    Hulc,
    Rmst,
    Logrank,
    Maxcombo,
    Oracle,
}

impl StudyMethod {
    pub const ALL: [StudyMethod; 7] = [
        StudyMethod::Ct,
        StudyMethod::Dt,
        StudyMethod::Hulc,
        StudyMethod::Rmst,
        StudyMethod::Logrank,
        StudyMethod::Maxcombo,
        StudyMethod::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StudyMethod::Ct => "ct",
            StudyMethod::Dt => "dt",
            StudyMethod::Hulc => "hulc",
            StudyMethod::Rmst => "rmst",
            StudyMethod::Logrank => "logrank",
            StudyMethod::Maxcombo => "maxcombo",
            StudyMethod::Oracle => "oracle",
        }
    }

    /// Whether the method estimates an RMST contrast (and so has coverage).
    pub fn has_estimate(self) -> bool {
        !matches!(self, StudyMethod::Logrank | StudyMethod::Maxcombo)
    }

    /// Whether the method selects L from the data.
    pub fn selects_l(self) -> bool {
        matches!(self, StudyMethod::Ct | StudyMethod::Dt | StudyMethod::Hulc)
    }
}

impl fmt::Display for StudyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudyMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StudyMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenarios: Vec<String>,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub methods: Vec<StudyMethod>,
    pub alpha: f64,
    pub bootstrap_resamples: usize,
    pub l_min: f64,
    pub l_max: f64,
    pub grid_points: usize,
    pub c_ct: f64,
    pub c_dt: f64,
    /// `None` means the midpoint of the range.
    pub l_tilde_ct: Option<f64>,
    /// `None` means the middle grid point.
    pub l_tilde_dt: Option<f64>,
    pub seed: u64,
    /// Record per-method mean runtime (makes reports machine-dependent).
    pub timing: bool,
}

impl StudyConfig {
    /// Desk-scale defaults: 500 replicates, 200 bootstrap resamples.
    pub fn new(scenarios: Vec<String>, ns: Vec<usize>, methods: Vec<StudyMethod>, seed: u64) -> Self {
        Self {
            scenarios,
            ns,
            reps: 500,
            methods,
            alpha: 0.05,
            bootstrap_resamples: 200,
            l_min: 0.2,
            l_max: 4.2,
            grid_points: 10,
            c_ct: 0.002,
            c_dt: 0.005,
            l_tilde_ct: None,
            l_tilde_dt: None,
            seed,
            timing: false,
        }
    }

    /// Full design: 2000 replicates, 1000 bootstrap resamples.
    pub fn full_scale(mut self) -> Self {
        self.reps = 2000;
        self.bootstrap_resamples = 1000;
        self
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.l_min, self.l_max, self.grid_points)
    }

    pub fn pen_ct(&self) -> Result<PenaltyConfig> {
        PenaltyConfig::new(self.c_ct, self.l_tilde_ct.unwrap_or(0.5 * (self.l_min + self.l_max)))
    }

    pub fn pen_dt(&self) -> Result<PenaltyConfig> {
        PenaltyConfig::new(self.c_dt, self.l_tilde_dt.unwrap_or_else(|| default_grid_l_tilde(&self.grid())))
    }

    fn validate(&self) -> Result<Vec<ScenarioSpec>> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.methods.is_empty() || self.scenarios.is_empty() || self.ns.is_empty() {
            return Err(Error::InvalidConfig("scenarios, sample sizes and methods must be nonempty".into()));
        }
        if let Some(&n) = self.ns.iter().find(|&&n| n < 4) {
            return Err(Error::TooFewSubjects { n });
        }
        if !(self.l_min > 0.0 && self.l_min < self.l_max) {
            return Err(Error::InvalidConfig(format!("invalid range [{}, {}]", self.l_min, self.l_max)));
        }
        self.scenarios.iter().map(|s| ScenarioSpec::named(s)).collect()
    }
}

/// Population target of one method in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodTruth {
    pub scenario: String,
    pub method: StudyMethod,
    #[serde(rename = "L")]
    pub l: f64,
    pub kappa: f64,
    /// False when the criterion has no unique maximizer and the range
    /// midpoint stands in for L.
    pub unique: bool,
}

/// Targets for every method that has one; `rmst` is evaluated per replicate.
pub fn method_truths(s: &ScenarioSpec, cfg: &StudyConfig) -> Result<Vec<MethodTruth>> {
    let mut out = Vec::new();
    let unpenalized = match true_optimum(s, cfg.l_min, cfg.l_max, PenaltyConfig::NONE) {
        Ok(opt) => Some(opt),
        Err(Error::NonUniqueMaximizer { .. }) => None,
        Err(e) => return Err(e),
    };
    for &m in &cfg.methods {
        let (opt, unique) = match m {
            StudyMethod::Ct => (true_optimum(s, cfg.l_min, cfg.l_max, cfg.pen_ct()?)?, true),
            StudyMethod::Dt => (true_optimum_discrete(s, &cfg.grid(), cfg.pen_dt()?)?, true),
            StudyMethod::Hulc | StudyMethod::Oracle => match unpenalized {
                Some(opt) => (opt, true),
                None => {
                    let l = 0.5 * (cfg.l_min + cfg.l_max);
                    (
                        TrueOptimum {
                            l,
                            kappa: true_kappa(s, l),
                            value: 0.0,
                        },
                        false,
                    )
                }
            },
            _ => continue,
        };
        out.push(MethodTruth {
            scenario: s.name.clone(),
            method: m,
            l: opt.l,
            kappa: opt.kappa,
            unique,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub reject: bool,
    pub p_value: f64,
    #[serde(rename = "L_hat")]
    pub l_hat: Option<f64>,
    pub kappa_hat: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
    /// CI contains the method's true κ.
    pub covered: Option<bool>,
    /// `L_hat` minus the method's true L.
    pub l_error: Option<f64>,
}

/// Result of one method on one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub scenario: String,
    pub n: usize,
    pub method: StudyMethod,
    pub rep: usize,
    pub outcome: std::result::Result<MethodOutcome, String>,
    pub runtime_s: f64,
}

fn analysis_config(m: Method, cfg: &StudyConfig, seed: u64) -> Result<AnalysisConfig> {
    let mut ac = AnalysisConfig::new(m, seed);
    ac.alpha = cfg.alpha;
    ac.l_min = Some(cfg.l_min);
    ac.l_max = Some(cfg.l_max);
    match m {
        Method::Ct => {
            let pen = cfg.pen_ct()?;
            ac.c = Some(pen.c);
            ac.l_tilde = Some(pen.l_tilde);
            ac.bootstrap_resamples = cfg.bootstrap_resamples;
        }
        Method::Dt => {
            let pen = cfg.pen_dt()?;
            ac.c = Some(pen.c);
            ac.l_tilde = Some(pen.l_tilde);
            ac.grid = Some(cfg.grid());
        }
        Method::Hulc => ac.anti_conservative = true,
    }
    Ok(ac)
}

/// Runs one study method on `ds`; `truth` is the method's target if it has one.
pub fn run_method(
    m: StudyMethod,
    ds: &TrialDataset,
    s: &ScenarioSpec,
    cfg: &StudyConfig,
    truth: Option<&MethodTruth>,
    seed: u64,
) -> Result<MethodOutcome> {
    let mut out = match m {
        StudyMethod::Ct | StudyMethod::Dt | StudyMethod::Hulc => {
            let method = match m {
                StudyMethod::Ct => Method::Ct,
                StudyMethod::Dt => Method::Dt,
                _ => Method::Hulc,
            };
            let r = analyze(ds, &analysis_config(method, cfg, seed)?)?;
            MethodOutcome {
                reject: r.reject,
                p_value: r.p_value.unwrap_or(f64::NAN),
                l_hat: Some(r.l_hat),
                kappa_hat: Some(r.kappa_hat),
                ci: Some(r.ci_kappa),
                covered: None,
                l_error: None,
            }
        }
        StudyMethod::Rmst | StudyMethod::Oracle => {
            let f = if m == StudyMethod::Rmst {
                fixed_rmst_test(ds, None, cfg.alpha)?
            } else {
                let l = truth.map(|t| t.l).ok_or_else(|| Error::InvalidConfig("oracle needs a truth".into()))?;
                oracle_rmst_test(ds, l, cfg.alpha)?
            };
            MethodOutcome {
                reject: f.test.p_value < cfg.alpha,
                p_value: f.test.p_value,
                l_hat: Some(f.estimate.l),
                kappa_hat: Some(f.estimate.kappa),
                ci: Some(f.ci),
                covered: None,
                l_error: None,
            }
        }
        StudyMethod::Logrank | StudyMethod::Maxcombo => {
            let t = if m == StudyMethod::Logrank { logrank(ds)? } else { maxcombo(ds)? };
            MethodOutcome {
                reject: t.p_value < cfg.alpha,
                p_value: t.p_value,
                l_hat: None,
                kappa_hat: None,
                ci: None,
                covered: None,
                l_error: None,
            }
        }
    };
    if let Some(ci) = &out.ci {
        let target = match (m, truth) {
            (StudyMethod::Rmst, _) => Some(true_kappa(s, out.l_hat.unwrap_or(0.0))),
            (_, Some(t)) => Some(t.kappa),
            _ => None,
        };
        out.covered = target.map(|k| ci.contains(k));
    }
    if m.selects_l() {
        if let (Some(l), Some(t)) = (out.l_hat, truth) {
            out.l_error = Some(l - t.l);
        }
    }
    Ok(out)
}

/// One point estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metric {
    pub value: f64,
    pub mc_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCell {
    pub scenario: String,
    pub n: usize,
    pub method: StudyMethod,
    pub reps: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
    pub rejection_rate: Option<Metric>,
    pub coverage: Option<Metric>,
    #[serde(rename = "L_bias")]
    pub l_bias: Option<Metric>,
    #[serde(rename = "L_sd")]
    pub l_sd: Option<Metric>,
    #[serde(rename = "L_rmse")]
    pub l_rmse: Option<Metric>,
    pub kappa_mean: Option<Metric>,
    pub kappa_sd: Option<Metric>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_mean_s: Option<Metric>,
}

impl MetricCell {
    fn named_metrics(&self) -> Vec<(&'static str, Option<Metric>)> {
        vec![
            ("reps", Some(Metric { value: self.reps as f64, mc_se: None })),
            ("failures", Some(Metric { value: self.failures as f64, mc_se: None })),
            ("rejection_rate", self.rejection_rate),
            ("coverage", self.coverage),
            ("L_bias", self.l_bias),
            ("L_sd", self.l_sd),
            ("L_rmse", self.l_rmse),
            ("kappa_mean", self.kappa_mean),
            ("kappa_sd", self.kappa_sd),
            ("runtime_mean_s", self.runtime_mean_s),
        ]
    }
}

fn proportion(hits: impl Iterator<Item = bool>) -> Option<Metric> {
    let (mut k, mut total) = (0usize, 0usize);
    for h in hits {
        total += 1;
        k += h as usize;
    }
    (total > 0).then(|| {
        let p = k as f64 / total as f64;
        Metric {
            value: p,
            mc_se: Some((p * (1.0 - p) / total as f64).sqrt()),
        }
    })
}

fn location_and_spread(xs: &[f64]) -> (Option<Metric>, Option<Metric>) {
    if xs.is_empty() {
        return (None, None);
    }
    let m = mean(xs);
    let sd = sample_sd(xs);
    let n = xs.len() as f64;
    let loc = Metric {
        value: m,
        mc_se: sd.map(|s| s / n.sqrt()),
    };
    let spread = sd.map(|s| Metric {
        value: s,
        mc_se: Some(s / (2.0 * (n - 1.0)).sqrt()),
    });
    (Some(loc), spread)
}

/// Aggregates replicate records into one cell per (scenario, n, method).
/// The result does not depend on the order of `records`.
pub fn summarize_metrics(records: &[ReplicateRecord], timing: bool) -> Result<Vec<MetricCell>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scenario_rank = |name: &str| {
        crate::truth::SCENARIO_NAMES
            .iter()
            .position(|s| *s == name)
            .unwrap_or(usize::MAX)
    };
    let mut groups: BTreeMap<(usize, String, usize, StudyMethod), Vec<&ReplicateRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((scenario_rank(&r.scenario), r.scenario.clone(), r.n, r.method))
            .or_default()
            .push(r);
    }
    let mut cells = Vec::with_capacity(groups.len());
    for ((_, scenario, n, method), mut group) in groups {
        group.sort_by_key(|r| r.rep);
        let ok: Vec<&MethodOutcome> = group.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
        let first_failure = group.iter().find_map(|r| r.outcome.as_ref().err().cloned());
        let errors: Vec<f64> = ok.iter().filter_map(|o| o.l_error).collect();
        let kappas: Vec<f64> = ok.iter().filter_map(|o| o.kappa_hat).collect();
        let (l_bias, l_sd) = location_and_spread(&errors);
        let l_rmse = match (l_bias, l_sd) {
            (Some(b), Some(s)) => {
                let rmse = b.value.hypot(s.value);
                // Delta method on the mean squared error.
                let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
                let se = sample_sd(&sq).map(|v| v / (sq.len() as f64).sqrt() / (2.0 * rmse));
                Some(Metric {
                    value: rmse,
                    mc_se: se.filter(|v| v.is_finite()),
                })
            }
            _ => None,
        };
        let (kappa_mean, kappa_sd) = location_and_spread(&kappas);
        let runtime_mean_s = if timing {
            let rt: Vec<f64> = group.iter().map(|r| r.runtime_s).collect();
            location_and_spread(&rt).0
        } else {
            None
        };
        cells.push(MetricCell {
            scenario,
            n,
            method,
            reps: group.len(),
            failures: group.len() - ok.len(),
            first_failure,
            rejection_rate: proportion(ok.iter().map(|o| o.reject)),
            coverage: proportion(ok.iter().filter_map(|o| o.covered)),
            l_bias,
            l_sd,
            l_rmse,
            kappa_mean,
            kappa_sd,
            runtime_mean_s,
        });
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: StudyConfig,
    pub truths: Vec<MethodTruth>,
    pub cells: Vec<MetricCell>,
}

impl SimulationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Tidy `scenario,n,method,metric,value,mc_se` rows.
    pub fn to_tidy_csv(&self) -> String {
        let mut out = String::from("scenario,n,method,metric,value,mc_se\n");
        for cell in &self.cells {
            for (name, metric) in cell.named_metrics() {
                if let Some(m) = metric {
                    let se = m.mc_se.map(|v| v.to_string()).unwrap_or_default();
                    out.push_str(&format!("{},{},{},{},{},{}\n", cell.scenario, cell.n, cell.method, name, m.value, se));
                }
            }
        }
        out
    }

    pub fn cell(&self, scenario: &str, n: usize, method: StudyMethod) -> Option<&MetricCell> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.n == n && c.method == method)
    }
}

/// Maximum tolerated fraction of failed replicates per cell.
pub const MAX_FAILURE_RATE: f64 = 0.02;

/// Runs every (scenario, n, replicate) task and returns raw records in a
/// scheduling-independent order.
pub fn run_replicates(cfg: &StudyConfig, progress: &(dyn Fn(usize, usize) + Sync)) -> Result<(Vec<MethodTruth>, Vec<ReplicateRecord>)> {
    let scenarios = cfg.validate()?;
    let mut truths = Vec::new();
    for s in &scenarios {
        truths.extend(method_truths(s, cfg)?);
    }
    let tasks: Vec<(usize, usize, usize)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(si, _)| cfg.ns.iter().flat_map(move |&n| (0..cfg.reps).map(move |rep| (si, n, rep))))
        .collect();
    let total = tasks.len();
    let done = AtomicUsize::new(0);
    let per_task: Vec<Result<Vec<ReplicateRecord>>> = tasks
        .into_par_iter()
        .map(|(si, n, rep)| {
            let s = &scenarios[si];
            let seed = replicate_seed(cfg.seed, s, n, rep);
            let ds = generate_trial(s, n, seed)?;
            let records = cfg
                .methods
                .iter()
                .map(|&m| {
                    let truth = truths.iter().find(|t| t.scenario == s.name && t.method == m);
                    let start = Instant::now();
                    let outcome = run_method(m, &ds, s, cfg, truth, derive_seed(seed, &[m as u64]))
                        .map_err(|e| e.to_string());
                    ReplicateRecord {
                        scenario: s.name.clone(),
                        n,
                        method: m,
                        rep,
                        outcome,
                        runtime_s: start.elapsed().as_secs_f64(),
                    }
                })
                .collect();
            progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
            Ok(records)
        })
        .collect();
    let mut records = Vec::with_capacity(total * cfg.methods.len());
    for r in per_task {
        records.extend(r?);
    }
    Ok((truths, records))
}

pub fn run_study(cfg: &StudyConfig) -> Result<SimulationReport> {
    run_study_with_progress(cfg, &|_, _| {})
}

pub fn run_study_with_progress(cfg: &StudyConfig, progress: &(dyn Fn(usize, usize) + Sync)) -> Result<SimulationReport> {
    let (truths, records) = run_replicates(cfg, progress)?;
    let cells = summarize_metrics(&records, cfg.timing)?;
    if let Some(c) = cells
        .iter()
        .find(|c| c.failures as f64 > MAX_FAILURE_RATE * c.reps as f64)
    {
        return Err(Error::TooManyFailures {
            scenario: c.scenario.clone(),
            n: c.n,
            method: c.method.to_string(),
            failed: c.failures,
            total: c.reps,
            first: c.first_failure.clone().unwrap_or_default(),
        });
    }
    Ok(SimulationReport {
        config: cfg.clone(),
        truths,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(rep: usize, reject: bool, l_error: Option<f64>) -> ReplicateRecord {
        ReplicateRecord {
            scenario: "null".into(),
            n: 100,
            method: StudyMethod::Ct,
            rep,
            outcome: Ok(MethodOutcome {
                reject,
                p_value: 0.5,
                l_hat: l_error.map(|e| 2.2 + e),
                kappa_hat: Some(0.0),
                ci: None,
                covered: Some(true),
                l_error,
            }),
            runtime_s: 0.0,
        }
    }

    #[test]
    fn trial_shape_and_determinism() {
        let s = ScenarioSpec::named("tran").unwrap();
        let a = generate_trial(&s, 101, 9).unwrap();
        assert_eq!(a.n0(), 51);
        assert_eq!(a.n1(), 50);
        assert_eq!(a, generate_trial(&s, 101, 9).unwrap());
        assert_ne!(a, generate_trial(&s, 101, 10).unwrap());
        assert!(a.records().iter().all(|r| r.time > 0.0 && r.time <= 5.0));
    }

    #[test]
    fn null_event_fraction() {
        let s = ScenarioSpec::named("null").unwrap();
        let ds = generate_trial(&s, 100_000, 1).unwrap();
        let frac = ds.event_count() as f64 / ds.n() as f64;
        assert!((frac - s.event_probability(false)).abs() < 0.01, "{frac}");
    }

    #[test]
    fn admin_cap_binds() {
        let mut s = ScenarioSpec::named("null").unwrap();
        s.censor_rate = 1e-9;
        s.control = crate::truth::PiecewiseExponential::exponential(0.01).unwrap();
        s.treatment = s.control.clone();
        let ds = generate_trial(&s, 200, 3).unwrap();
        assert!(ds.records().iter().any(|r| r.time == 5.0 && !r.event));
    }

    #[test]
    fn single_replicate_summary() {
        let cells = summarize_metrics(&[record(0, true, None)], false).unwrap();
        assert_eq!(cells[0].rejection_rate.unwrap().value, 1.0);
        assert!(matches!(summarize_metrics(&[], false), Err(Error::EmptyInput)));
    }

    #[test]
    fn bias_sd_rmse_by_hand() {
        let cells = summarize_metrics(&[record(0, false, Some(0.1)), record(1, false, Some(-0.1))], false).unwrap();
        let c = &cells[0];
        assert!(c.l_bias.unwrap().value.abs() < 1e-15);
        assert_relative_eq!(c.l_sd.unwrap().value, 0.1 * 2f64.sqrt(), epsilon = 1e-15);
        let (b, s, r) = (c.l_bias.unwrap().value, c.l_sd.unwrap().value, c.l_rmse.unwrap().value);
        assert_relative_eq!(r * r, b * b + s * s, epsilon = 1e-15);
    }

    #[test]
    fn summary_is_order_independent() {
        let recs: Vec<ReplicateRecord> = (0..20)
            .map(|i| record(i, i % 3 == 0, Some((i as f64 * 0.37).sin())))
            .collect();
        let mut shuffled = recs.clone();
        shuffled.reverse();
        shuffled.swap(2, 11);
        assert_eq!(summarize_metrics(&recs, false).unwrap(), summarize_metrics(&shuffled, false).unwrap());
    }

    #[test]
    fn truths_per_method() {
        let s = ScenarioSpec::named("null").unwrap();
        let cfg = StudyConfig::new(vec!["null".into()], vec![100], StudyMethod::ALL.to_vec(), 1);
        let truths = method_truths(&s, &cfg).unwrap();
        let ct = truths.iter().find(|t| t.method == StudyMethod::Ct).unwrap();
        assert!((ct.l - 2.2).abs() < 1e-8);
        let dt = truths.iter().find(|t| t.method == StudyMethod::Dt).unwrap();
        assert!((dt.l - default_grid_l_tilde(&cfg.grid())).abs() < 1e-12);
        let oracle = truths.iter().find(|t| t.method == StudyMethod::Oracle).unwrap();
        assert!(!oracle.unique);
        assert_eq!(truths.len(), 4);
    }

    #[test]
    fn small_study_runs_every_method() {
        let mut cfg = StudyConfig::new(vec!["tran".into()], vec![200], StudyMethod::ALL.to_vec(), 5);
        cfg.reps = 4;
        cfg.bootstrap_resamples = 100;
        let report = run_study(&cfg).unwrap();
        assert_eq!(report.cells.len(), 7);
        for c in &report.cells {
            let r = c.rejection_rate.unwrap().value;
            assert!((0.0..=1.0).contains(&r));
            assert_eq!(c.coverage.is_some(), c.method.has_estimate(), "{}", c.method);
            assert_eq!(c.l_bias.is_some(), c.method.selects_l(), "{}", c.method);
        }
        let csv = report.to_tidy_csv();
        assert!(csv.starts_with("scenario,n,method,metric,value,mc_se\n"));
        assert_eq!(report, run_study(&cfg).unwrap());
    }

    #[test]
    fn method_names_round_trip() {
        for m in StudyMethod::ALL {
            assert_eq!(m.as_str().parse::<StudyMethod>().unwrap(), m);
        }
        assert!("foo".parse::<StudyMethod>().is_err());
    }
}
