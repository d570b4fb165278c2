//! Adaptive restricted mean survival time (RMST) analysis for two-arm
//! right-censored trials.
//!
//! The restriction time is chosen from the data by maximizing the squared
//! signal-to-noise ratio `κ̂²(L)/σ̂²(L)`, optionally with a quadratic penalty
//! toward an initial guess. Inference is available through convex-hull
//! (fold-wise) intervals, percentile bootstrap, or Wald intervals on a
//! discrete grid. The crate also ships classical comparators (log-rank,
//! Fleming–Harrington, MaxCombo, fixed-horizon RMST), exact ground truth for
//! piecewise-exponential scenarios, and a Monte Carlo study harness.

pub mod cli;
pub mod comparators;
pub mod criterion;
pub mod data;
pub mod error;
pub mod inference;
pub mod km;
pub mod mvn;
pub mod rmst;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod truth;

pub use criterion::{
    criterion_value, default_penalty, maximize_continuous, maximize_discrete, suggest_grid_size,
    CriterionProfile, PenaltyConfig, PenaltyKind, Selection,
};
pub use data::{parse_dataset, Arm, SubjectRecord, TimeUnit, TrialDataset};
pub use error::{Error, Result};
pub use inference::{analyze, AnalysisConfig, AnalysisResult, ConfidenceInterval, Method};
pub use km::{fit_km, SurvivalCurve};
pub use rmst::{kappa_hat, rmst_arm, variance_hat, RmstEstimate, RmstEvaluator};
