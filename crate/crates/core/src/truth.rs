//! Ground truth for piecewise-exponential trial scenarios: survival, hazard,
//! RMST, the asymptotic variance of √n·κ̂(L), and the optimal restriction time.

use rand::distr::Open01;
use rand::Rng;
use serde::Serialize;

use crate::criterion::PenaltyConfig;
use crate::error::{Error, Result};

/// Event-time distribution with constant hazard `rates[i]` on
/// `[change_points[i], change_points[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseExponential {
    change_points: Vec<f64>,
    rates: Vec<f64>,
}

impl PiecewiseExponential {
    pub fn new(change_points: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if change_points.is_empty() || change_points.len() != rates.len() {
            return Err(Error::InvalidConfig(
                "change points and rates must be nonempty and of equal length".into(),
            ));
        }
        if change_points[0] != 0.0 || change_points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "change points must start at 0 and increase strictly".into(),
            ));
        }
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidConfig("rates must be positive".into()));
        }
        Ok(Self {
            change_points,
            rates,
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![rate])
    }

    pub fn change_points(&self) -> &[f64] {
        &self.change_points
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    fn piece_end(&self, i: usize) -> f64 {
        self.change_points.get(i + 1).copied().unwrap_or(f64::INFINITY)
    }

    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let mut h = 0.0;
        for (i, &rate) in self.rates.iter().enumerate() {
            let start = self.change_points[i];
            if t <= start {
                break;
            }
            h += rate * (t.min(self.piece_end(i)) - start);
        }
        h
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t.max(0.0))).exp()
    }

    /// Right-continuous hazard.
    pub fn hazard(&self, t: f64) -> f64 {
        let i = self.change_points.partition_point(|&c| c <= t).max(1) - 1;
        self.rates[i]
    }

    /// ∫₀ᴸ S(t) dt in closed form.
    pub fn rmst(&self, l: f64) -> f64 {
        let mut area = 0.0;
        let mut s_start = 1.0;
        for (i, &rate) in self.rates.iter().enumerate() {
            let start = self.change_points[i];
            if l <= start {
                break;
            }
            let width = l.min(self.piece_end(i)) - start;
            area += s_start * (-(-rate * width).exp_m1()) / rate;
            s_start *= (-rate * width).exp();
        }
        area
    }

    /// Draws an event time by inverting the cumulative hazard.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        let mut target = -u.ln();
        for (i, &rate) in self.rates.iter().enumerate() {
            let start = self.change_points[i];
            let width = self.piece_end(i) - start;
            let piece = rate * width;
            if target < piece {
                return start + target / rate;
            }
            target -= piece;
        }
        unreachable!("last piece is unbounded")
    }
}

pub const SCENARIO_NAMES: [&str; 9] = [
    "null", "ph", "early", "tran", "cs", "msep", "delay_1", "delay_2", "delaycon",
];

/// Data-generating process of one simulated trial design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub treatment: PiecewiseExponential,
    pub control: PiecewiseExponential,
    pub censor_rate: f64,
    pub admin_time: f64,
    /// Fraction allocated to treatment.
    pub beta: f64,
}

impl ScenarioSpec {
    /// One of the nine built-in scenarios (control arm exponential with rate 1).
    pub fn named(name: &str) -> Result<Self> {
        let (rates, changes): (&[f64], &[f64]) = match name {
            "null" => (&[1.0], &[0.0]),
            "ph" => (&[0.75], &[0.0]),
            "early" => (&[0.65, 1.0], &[0.0, 0.5]),
            "tran" => (&[0.5, 1.5, 1.0], &[0.0, 0.6, 1.2]),
            "cs" => (&[0.5, 1.4], &[0.0, 0.5]),
            "msep" => (&[0.5, 1.1], &[0.0, 0.5]),
            "delay_1" => (&[1.0, 0.7], &[0.0, 0.2]),
            "delay_2" => (&[1.0, 0.7], &[0.0, 0.4]),
            "delaycon" => (&[1.0, 0.7, 1.2], &[0.0, 0.2, 1.0]),
            other => return Err(Error::UnknownScenario(other.to_string())),
        };
        Ok(Self {
            name: name.to_string(),
            treatment: PiecewiseExponential::new(changes.to_vec(), rates.to_vec())?,
            control: PiecewiseExponential::exponential(1.0)?,
            censor_rate: 0.5,
            admin_time: 5.0,
            beta: 0.5,
        })
    }

    pub fn all() -> Vec<Self> {
        SCENARIO_NAMES
            .iter()
            .map(|n| Self::named(n).expect("built-in scenario"))
            .collect()
    }

    pub fn index(&self) -> u64 {
        SCENARIO_NAMES
            .iter()
            .position(|n| *n == self.name)
            .unwrap_or(SCENARIO_NAMES.len()) as u64
    }

    pub fn is_null(&self) -> bool {
        self.treatment == self.control
    }

    /// P(C ≥ v) for C = min(Exp(censor_rate), admin_time).
    pub fn censor_survival(&self, v: f64) -> f64 {
        if v > self.admin_time {
            0.0
        } else {
            (-self.censor_rate * v).exp()
        }
    }

    /// Probability that a subject's event is observed.
    pub fn event_probability(&self, arm_treatment: bool) -> f64 {
        let d = if arm_treatment { &self.treatment } else { &self.control };
        // ∫₀^A f(t) G(t) dt with G(t) = e^{−r t}; piecewise closed form.
        let mut total = 0.0;
        let mut s_start = 1.0;
        for (i, &rate) in d.rates.iter().enumerate() {
            let start = d.change_points[i];
            if start >= self.admin_time {
                break;
            }
            let end = d.piece_end(i).min(self.admin_time);
            let k = rate + self.censor_rate;
            let width = end - start;
            total += s_start * (-self.censor_rate * start).exp() * rate / k * (-(-k * width).exp_m1());
            s_start *= (-rate * width).exp();
        }
        total
    }
}

pub fn pwexp_survival(d: &PiecewiseExponential, t: f64) -> f64 {
    d.survival(t)
}

pub fn pwexp_hazard(d: &PiecewiseExponential, t: f64) -> f64 {
    d.hazard(t)
}

pub fn pwexp_sample<R: Rng + ?Sized>(d: &PiecewiseExponential, rng: &mut R) -> f64 {
    d.sample(rng)
}

pub fn true_rmst(d: &PiecewiseExponential, l: f64) -> f64 {
    d.rmst(l)
}

pub fn true_kappa(s: &ScenarioSpec, l: f64) -> f64 {
    s.treatment.rmst(l) - s.control.rmst(l)
}

// 15-point Kronrod rule with its embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

const MAX_DEPTH: u32 = 40;

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64, depth: u32) -> Result<f64> {
    let (value, err) = kronrod_panel(f, a, b);
    if err <= abs_tol.max(rel_tol * value.abs()) {
        return Ok(value);
    }
    if depth >= MAX_DEPTH || !value.is_finite() {
        return Err(Error::QuadratureFailure { a, b });
    }
    let m = 0.5 * (a + b);
    Ok(adaptive(f, a, m, rel_tol, abs_tol * 0.5, depth + 1)?
        + adaptive(f, m, b, rel_tol, abs_tol * 0.5, depth + 1)?)
}

/// Adaptive Gauss–Kronrod quadrature with panels split at `breaks`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], rel_tol: f64) -> Result<f64> {
    let mut knots = vec![a];
    knots.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut total = 0.0;
    for w in knots.windows(2) {
        total += adaptive(&f, w[0], w[1], rel_tol, 1e-300, 0)?;
    }
    Ok(total)
}

const VARIANCE_REL_TOL: f64 = 1e-8;

fn arm_variance(s: &ScenarioSpec, d: &PiecewiseExponential, l: f64) -> Result<f64> {
    let theta_l = d.rmst(l);
    let integrand = |v: f64| {
        let gap = theta_l - d.rmst(v);
        gap * gap * d.hazard(v) / (d.survival(v) * s.censor_survival(v))
    };
    integrate(integrand, 0.0, l, d.change_points(), VARIANCE_REL_TOL)
}

/// Asymptotic variance of √n·κ̂(L):
/// `V₁(L)/β + V₀(L)/(1−β)` with `V_a(L) = ∫₀ᴸ (θ_a(L) − θ_a(v))² λ_a(v) / (S_a(v) G(v)) dv`.
pub fn true_variance(s: &ScenarioSpec, l: f64) -> Result<f64> {
    if !(l >= 0.0 && l < s.admin_time) {
        return Err(Error::InvalidConfig(format!(
            "restriction time {l} must lie in [0, {}) for the variance integral",
            s.admin_time
        )));
    }
    Ok(arm_variance(s, &s.treatment, l)? / s.beta + arm_variance(s, &s.control, l)? / (1.0 - s.beta))
}

/// Population criterion κ²(L)/V(L) (0 where κ vanishes identically).
pub fn true_criterion(s: &ScenarioSpec, l: f64) -> Result<f64> {
    let kappa = true_kappa(s, l);
    if kappa == 0.0 {
        return Ok(0.0);
    }
    let v = true_variance(s, l)?;
    Ok(if v > 0.0 { kappa * kappa / v } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueOptimum {
    #[serde(rename = "L")]
    pub l: f64,
    pub kappa: f64,
    /// Penalized population criterion at `l`.
    pub value: f64,
}

const TRUTH_GRID: usize = 2048;
const PLATEAU_TOL: f64 = 1e-9;

/// Maximizer of `κ²(L)/V(L) − c (L − L̃)²` on `[l_min, l_max]`: a 2048-point
/// grid followed by ternary refinement to 1e-9 relative width.
pub fn true_optimum(s: &ScenarioSpec, l_min: f64, l_max: f64, pen: PenaltyConfig) -> Result<TrueOptimum> {
    if !(l_min > 0.0 && l_min < l_max) {
        return Err(Error::InvalidConfig(format!("invalid range [{l_min}, {l_max}]")));
    }
    let objective = |l: f64| -> Result<f64> { Ok(pen.apply(l, true_criterion(s, l)?)) };
    let step = (l_max - l_min) / (TRUTH_GRID - 1) as f64;
    let grid: Vec<f64> = (0..TRUTH_GRID)
        .map(|i| if i == TRUTH_GRID - 1 { l_max } else { l_min + step * i as f64 })
        .collect();
    let values: Vec<f64> = grid.iter().map(|&l| objective(l)).collect::<Result<_>>()?;

    let best = (0..values.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    let is_local_max = |i: usize| {
        (i == 0 || values[i] >= values[i - 1]) && (i + 1 == values.len() || values[i] >= values[i + 1])
    };
    let runner_up = (0..values.len())
        .filter(|&i| i.abs_diff(best) > 1 && is_local_max(i))
        .map(|i| values[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if values[best] - runner_up <= PLATEAU_TOL * values[best].abs().max(1.0) {
        return Err(Error::NonUniqueMaximizer { value: values[best] });
    }

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid.len() - 1)];
    while hi - lo > PLATEAU_TOL * hi.abs().max(1.0) {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if objective(m1)? < objective(m2)? {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let mut l = 0.5 * (lo + hi);
    let mut value = objective(l)?;
    if values[best] > value {
        l = grid[best];
        value = values[best];
    }
    Ok(TrueOptimum {
        l,
        kappa: true_kappa(s, l),
        value,
    })
}

/// Maximizer of the penalized population criterion over the points of `grid`.
pub fn true_optimum_discrete(s: &ScenarioSpec, grid: &[f64], pen: PenaltyConfig) -> Result<TrueOptimum> {
    let mut best: Option<TrueOptimum> = None;
    for &l in grid {
        let value = pen.apply(l, true_criterion(s, l)?);
        if best.is_none_or(|b| value > b.value) {
            best = Some(TrueOptimum {
                l,
                kappa: true_kappa(s, l),
                value,
            });
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("grid must not be empty".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthRow {
    pub t: f64,
    pub s0: f64,
    pub s1: f64,
    pub h0: f64,
    pub h1: f64,
    pub kappa: f64,
    pub m: f64,
    pub m_pen: f64,
}

/// Population curves on a uniform grid of `points` times over `[t_min, t_max]`.
pub fn truth_table(
    s: &ScenarioSpec,
    t_min: f64,
    t_max: f64,
    points: usize,
    pen: PenaltyConfig,
) -> Result<Vec<TruthRow>> {
    if points < 2 {
        return Err(Error::InvalidConfig("truth grid needs at least 2 points".into()));
    }
    let step = (t_max - t_min) / (points - 1) as f64;
    (0..points)
        .map(|i| {
            let t = if i == points - 1 { t_max } else { t_min + step * i as f64 };
            let m = true_criterion(s, t)?;
            Ok(TruthRow {
                t,
                s0: s.control.survival(t),
                s1: s.treatment.survival(t),
                h0: s.control.hazard(t),
                h1: s.treatment.hazard(t),
                kappa: true_kappa(s, t),
                m,
                m_pen: pen.apply(t, m),
            })
        })
        .collect()
}

pub fn truth_table_csv(rows: &[TruthRow]) -> String {
    let mut out = String::from("t,S0,S1,h0,h1,kappa,M,M_pen\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.t, r.s0, r.s1, r.h0, r.h1, r.kappa, r.m, r.m_pen
        ));
    }
    out
}
