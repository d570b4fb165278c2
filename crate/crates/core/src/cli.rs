//! Command-line front end. Exit codes: 0 ok, 2 usage or data error, 3 numeric failure.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::criterion::{maximize_continuous, maximize_discrete, PenaltyConfig};
use crate::data::{parse_dataset, Arm, TimeUnit, TrialDataset};
use crate::error::{Error, Result};
use crate::inference::{analyze, AnalysisConfig, AnalysisResult, Method};
use crate::km::fit_km;
use crate::sim::{run_study_with_progress, StudyConfig, StudyMethod};
use crate::truth::{true_optimum, truth_table, truth_table_csv, ScenarioSpec, SCENARIO_NAMES};

#[derive(Debug, Parser)]
#[command(name = "adaptive-rmst", version, about = "Adaptive restricted mean survival time analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a two-arm trial CSV (`arm,time,event`).
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo study over built-in scenarios.
    Simulate(SimulateArgs),
    /// Emit population curves for a built-in scenario.
    Truth(TruthArgs),
}

/// A number or the literal `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auto(pub Option<f64>);

fn parse_auto(s: &str) -> std::result::Result<Auto, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Auto(None));
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(|v| Auto(Some(v)))
        .ok_or_else(|| format!("expected a number or 'auto', got '{s}'"))
}

/// `auto`, a point count, or an explicit comma-separated list of times.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Auto,
    Count(usize),
    Points(Vec<f64>),
}

fn parse_grid(s: &str) -> std::result::Result<GridSpec, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(GridSpec::Auto);
    }
    if !s.contains(',') {
        if let Ok(m) = s.trim().parse::<usize>() {
            return if m >= 1 {
                Ok(GridSpec::Count(m))
            } else {
                Err("grid needs at least one point".into())
            };
        }
    }
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad grid point '{p}'")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(GridSpec::Points)
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Input CSV with header `arm,time,event`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "ct")]
    pub method: Method,
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    pub lmin: Auto,
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    pub lmax: Auto,
    /// Time unit of the data; only affects the automatic penalty.
    #[arg(long, default_value = "years")]
    pub unit: TimeUnit,
    /// Bootstrap resamples (ct).
    #[arg(long, default_value_t = 1000)]
    pub boot: usize,
    /// Resample within arms.
    #[arg(long)]
    pub stratified_bootstrap: bool,
    /// Conservative fold count (hulc).
    #[arg(long)]
    pub conservative: bool,
    /// Required for ct and hulc.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Penalty weight.
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    pub c: Auto,
    /// Penalty center.
    #[arg(long = "l-tilde", default_value = "auto", value_parser = parse_auto)]
    pub l_tilde: Auto,
    /// Grid for dt: point count or comma-separated times.
    #[arg(long, default_value = "auto", value_parser = parse_grid)]
    pub grid: GridSpec,
    /// Result JSON path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the criterion profile CSV here.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Write the Kaplan–Meier curves CSV here.
    #[arg(long)]
    pub km: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated scenario names, or `all`.
    #[arg(long, default_value = "all")]
    pub scenario: String,
    #[arg(long, value_delimiter = ',', default_value = "300,600,1000")]
    pub n: Vec<usize>,
    /// Replicates per cell (default 500, or 2000 with --full-scale).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "ct,dt,hulc,rmst,logrank,maxcombo,oracle")]
    pub methods: Vec<StudyMethod>,
    #[arg(long)]
    pub seed: u64,
    /// Bootstrap resamples for ct (default 200, or 1000 with --full-scale).
    #[arg(long)]
    pub boot: Option<usize>,
    /// 2000 replicates and 1000 bootstrap resamples.
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    pub lmin: f64,
    #[arg(long, default_value_t = 4.2)]
    pub lmax: f64,
    #[arg(long, default_value_t = 10)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 0.002)]
    pub c_ct: f64,
    #[arg(long, default_value_t = 0.005)]
    pub c_dt: f64,
    /// Report JSON path (stdout when neither output is given).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Tidy CSV path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Include mean runtimes (reports then vary between runs).
    #[arg(long)]
    pub timing: bool,
    /// No progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 420)]
    pub points: usize,
    #[arg(long, default_value_t = 0.01)]
    pub tmin: f64,
    #[arg(long, default_value_t = 4.2)]
    pub tmax: f64,
    /// Penalty weight for the M_pen column.
    #[arg(long, default_value_t = 0.002)]
    pub c: f64,
    #[arg(long = "l-tilde", default_value_t = 2.2)]
    pub l_tilde: f64,
    /// CSV path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        None => f(),
        Some(0) => Err(Error::InvalidConfig("--workers must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn km_csv(ds: &TrialDataset) -> Result<String> {
    let mut out = String::from("arm,time,at_risk,deaths,survival\n");
    for arm in Arm::BOTH {
        let curve = fit_km(&ds.arm_records(arm))?;
        for i in 0..curve.event_times().len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                arm.index(),
                curve.event_times()[i],
                curve.at_risk()[i],
                curve.deaths()[i],
                curve.survival()[i]
            ));
        }
    }
    Ok(out)
}

fn profile_csv(ds: &TrialDataset, result: &AnalysisResult) -> Result<String> {
    let rc = result
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("result carries no configuration".into()))?;
    let pen = match rc.l_tilde {
        Some(lt) => PenaltyConfig::new(rc.c, lt)?,
        None => PenaltyConfig::NONE,
    };
    let profile = match (&rc.grid, rc.method) {
        (Some(grid), Method::Dt) => maximize_discrete(ds, grid, pen)?.profile,
        _ => maximize_continuous(ds, rc.l_min, rc.l_max, pen)?.1,
    };
    Ok(profile.to_csv_string())
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let file = File::open(&args.input).map_err(|e| io_err(&args.input, e))?;
    let ds = parse_dataset(file, args.unit)?;
    let seed = match (args.seed, args.method) {
        (Some(s), _) => s,
        (None, Method::Dt) => 0,
        (None, m) => return Err(Error::InvalidConfig(format!("--seed is required for method {m}"))),
    };
    let mut cfg = AnalysisConfig::new(args.method, seed);
    cfg.alpha = args.alpha;
    cfg.l_min = args.lmin.0;
    cfg.l_max = args.lmax.0;
    cfg.c = args.c.0;
    cfg.l_tilde = args.l_tilde.0;
    cfg.bootstrap_resamples = args.boot;
    cfg.stratified_bootstrap = args.stratified_bootstrap;
    cfg.anti_conservative = !args.conservative;
    match &args.grid {
        GridSpec::Auto => {}
        GridSpec::Count(m) => cfg.grid_points = *m,
        GridSpec::Points(p) => cfg.grid = Some(p.clone()),
    }
    let result = with_workers(args.workers, || analyze(&ds, &cfg))?;
    let json = result.to_json();
    match &args.output {
        Some(path) => {
            write_file(path, &(json + "\n"))?;
            println!("{}", result.summary());
        }
        None => {
            eprintln!("{}", result.summary());
            println!("{json}");
        }
    }
    if let Some(path) = &args.profile {
        write_file(path, &profile_csv(&ds, &result)?)?;
    }
    if let Some(path) = &args.km {
        write_file(path, &km_csv(&ds)?)?;
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let scenarios: Vec<String> = if args.scenario.trim().eq_ignore_ascii_case("all") {
        SCENARIO_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        args.scenario.split(',').map(|s| s.trim().to_string()).collect()
    };
    for s in &scenarios {
        ScenarioSpec::named(s)?;
    }
    let mut cfg = StudyConfig::new(scenarios, args.n.clone(), args.methods.clone(), args.seed);
    if args.full_scale {
        cfg = cfg.full_scale();
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(b) = args.boot {
        cfg.bootstrap_resamples = b;
    }
    cfg.alpha = args.alpha;
    cfg.l_min = args.lmin;
    cfg.l_max = args.lmax;
    cfg.grid_points = args.grid_points;
    cfg.c_ct = args.c_ct;
    cfg.c_dt = args.c_dt;
    cfg.timing = args.timing;

    let quiet = args.quiet;
    let progress = move |done: usize, total: usize| {
        let step = (total / 20).max(1);
        if !quiet && (done.is_multiple_of(step) || done == total) {
            eprintln!("simulate: {done}/{total} replicates");
        }
    };
    let report = with_workers(args.workers, || run_study_with_progress(&cfg, &progress))?;
    if let Some(path) = &args.output {
        write_file(path, &(report.to_json() + "\n"))?;
    }
    if let Some(path) = &args.csv {
        write_file(path, &report.to_tidy_csv())?;
    }
    if args.output.is_none() && args.csv.is_none() {
        println!("{}", report.to_json());
    }
    Ok(())
}

pub fn cmd_truth(args: &TruthArgs) -> Result<()> {
    let s = ScenarioSpec::named(&args.scenario)?;
    let pen = PenaltyConfig::new(args.c, args.l_tilde)?;
    let rows = truth_table(&s, args.tmin, args.tmax, args.points, pen)?;
    let csv = truth_table_csv(&rows);
    match &args.output {
        Some(path) => write_file(path, &csv)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(csv.as_bytes())?;
        }
    }
    match true_optimum(&s, args.tmin.max(0.2), args.tmax, PenaltyConfig::NONE) {
        Ok(opt) => eprintln!("L* = {:.6}, kappa* = {:.6}", opt.l, opt.kappa),
        Err(Error::NonUniqueMaximizer { .. }) => eprintln!("L* is not unique"),
        Err(e) => return Err(e),
    }
    let opt = true_optimum(&s, args.tmin.max(0.2), args.tmax, pen)?;
    eprintln!("L_dagger = {:.6}, kappa_dagger = {:.6}", opt.l, opt.kappa);
    Ok(())
}

pub fn exit_code(result: &Result<()>) -> u8 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_data_error() => 2,
        Err(_) => 3,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Truth(a) => cmd_truth(a),
    }
}

/// Parses the process arguments and runs the selected subcommand.
pub fn main_exit() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_values() {
        assert_eq!(parse_auto("auto").unwrap(), Auto(None));
        assert_eq!(parse_auto("2.5").unwrap(), Auto(Some(2.5)));
        assert!(parse_auto("x").is_err());
        assert!(parse_auto("nan").is_err());
    }

    #[test]
    fn grid_values() {
        assert_eq!(parse_grid("10").unwrap(), GridSpec::Count(10));
        assert_eq!(parse_grid("1,2.5").unwrap(), GridSpec::Points(vec![1.0, 2.5]));
        assert_eq!(parse_grid("AUTO").unwrap(), GridSpec::Auto);
        assert!(parse_grid("0").is_err());
        assert!(parse_grid("1,a").is_err());
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(exit_code(&Ok(())), 0);
        assert_eq!(exit_code(&Err(Error::UnknownScenario("foo".into()))), 2);
        assert_eq!(exit_code(&Err(Error::NoEstimablePoint)), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
