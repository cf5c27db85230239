//! Command-line front end: `fit`, `scb`, `select-bandwidth`, `simulate`, `replicate`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bandwidth::{select_bandwidth_with_splits, BandwidthGrid, BandwidthSelection};
use crate::data::{BandwidthPair, CoefficientCurve, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{fit_curve, SolverConfig};
use crate::inference::{
    attach_sandwich, normal_quantile, pointwise_ci, scb, unit_contrast, MultiplierKind, WeightMode,
};
use crate::io::{export, ingest};
use crate::kernels::KernelKind;
use crate::simulation::process::{Beta0, ObservationProcess};
use crate::simulation::study::{monte_carlo_study, write_study_csv, BandwidthSpec, Method, ScbStudy, StudyConfig};
use crate::simulation::{
    calibrate_gamma, substream, CensoringMeasure, ScenarioConfig, Simulator, CALIBRATION_SUBJECTS,
};

#[derive(Debug, Parser)]
#[command(
    name = "vcox",
    version,
    about = "Time-varying coefficient hazards regression with sparse longitudinal covariates"
)]
pub struct Cli {
    /// Worker threads for bootstrap and replication loops (0 = all cores).
    #[arg(long, global = true, env = "VCOX_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Directory for output artifacts.
    #[arg(long, global = true, env = "VCOX_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the coefficient curve with pointwise intervals.
    Fit(FitArgs),
    /// Simultaneous confidence band for one contrast of the curve.
    Scb(ScbArgs),
    /// Choose (h1, h2) by estimated integrated MSE.
    SelectBandwidth(SelectArgs),
    /// Write one synthetic dataset.
    Simulate(SimulateArgs),
    /// Monte Carlo replication study.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Subjects CSV: id,time,event.
    #[arg(long, env = "VCOX_SUBJECTS")]
    pub subjects: PathBuf,
    /// Longitudinal CSV: id,obs_time,z1..zp.
    #[arg(long, env = "VCOX_LONGITUDINAL")]
    pub longitudinal: PathBuf,
    /// Study horizon; defaults to the largest follow-up time.
    #[arg(long, env = "VCOX_TAU")]
    pub tau: Option<f64>,
    #[arg(long, env = "VCOX_KERNEL", default_value = "epanechnikov")]
    pub kernel: KernelKind,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Candidate h1 values (comma separated) for automatic selection.
    #[arg(long, env = "VCOX_H1_GRID", value_delimiter = ',')]
    pub h1_grid: Option<Vec<f64>>,
    /// Candidate h2 values (comma separated) for automatic selection.
    #[arg(long, env = "VCOX_H2_GRID", value_delimiter = ',')]
    pub h2_grid: Option<Vec<f64>>,
    /// Restrict candidates to h1 = h2.
    #[arg(long, env = "VCOX_EQUAL_BANDWIDTHS")]
    pub equal_bandwidths: bool,
    /// Values per axis of the default candidate grid.
    #[arg(long, env = "VCOX_GRID_PER_AXIS", default_value_t = 8)]
    pub per_axis: usize,
    /// Random splits averaged in the variance estimate.
    #[arg(long = "selection-splits", env = "VCOX_SELECTION_SPLITS", default_value_t = 1)]
    pub splits: usize,
    /// Evaluation times used by the integrated MSE.
    #[arg(long, env = "VCOX_MSE_POINTS", default_value_t = 10)]
    pub mse_points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BandwidthArgs {
    #[arg(long, env = "VCOX_H1", requires = "h2", conflicts_with = "auto_bandwidth")]
    pub h1: Option<f64>,
    #[arg(long, env = "VCOX_H2", requires = "h1", conflicts_with = "auto_bandwidth")]
    pub h2: Option<f64>,
    #[arg(long, env = "VCOX_AUTO_BANDWIDTH")]
    pub auto_bandwidth: bool,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub bandwidth: BandwidthArgs,
    #[arg(long, env = "VCOX_GRID_POINTS", default_value_t = 50)]
    pub grid_points: usize,
    #[arg(long, env = "VCOX_ALPHA", default_value_t = 0.05)]
    pub alpha: f64,
    /// Seed for the sample split used by automatic bandwidth selection.
    #[arg(long, env = "VCOX_SEED", default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ScbArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Bootstrap draws.
    #[arg(long = "B", env = "VCOX_B", default_value_t = 5000)]
    pub n_boot: usize,
    #[arg(long, env = "VCOX_MULTIPLIER", default_value = "centered-exponential")]
    pub multiplier: MultiplierKind,
    /// Covariate component (0-based) the band is built for.
    #[arg(long, env = "VCOX_CONTRAST", default_value_t = 0)]
    pub contrast: usize,
    #[arg(long, env = "VCOX_WEIGHT", default_value = "inverse-se")]
    pub weight: WeightMode,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, env = "VCOX_SEED", default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long, env = "VCOX_N", default_value_t = 400)]
    pub n: usize,
    /// Target censoring proportion.
    #[arg(long, env = "VCOX_CENSOR", default_value_t = 0.15)]
    pub censor: f64,
    /// True coefficient: sin, quad, exp-decay, zero or const:<value>.
    #[arg(long, env = "VCOX_BETA0")]
    pub beta0: Option<String>,
    /// Observation process: homogeneous or intensity.
    #[arg(long, env = "VCOX_OBS_PROCESS")]
    pub obs_process: Option<String>,
    /// Censoring proportion the calibration targets: total or before-horizon
    /// (default total; before-horizon for the quadratic preset).
    #[arg(long, env = "VCOX_CENSOR_MEASURE")]
    pub censor_measure: Option<String>,
    /// Drop observations made after follow-up ends.
    #[arg(long, env = "VCOX_TRUNCATE_AT_EXIT")]
    pub truncate_at_exit: bool,
    /// Censoring location; calibrated to --censor when absent.
    #[arg(long, env = "VCOX_GAMMA")]
    pub gamma: Option<f64>,
    #[arg(long, env = "VCOX_SEED", default_value_t = 20240101)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Pointwise bias, SD, SE and coverage.
    Pointwise,
    /// Uniform coverage of simultaneous bands.
    Band,
    /// Quadratic coefficient with non-homogeneous visits.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Proposed,
    Lvcf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplicateArgs {
    pub preset: Preset,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, env = "VCOX_REPS", default_value_t = 500)]
    pub reps: usize,
    #[arg(long, env = "VCOX_METHOD", value_enum, default_value = "proposed")]
    pub method: MethodArg,
    /// Rate exponent for h1 = n^-a1.
    #[arg(long, env = "VCOX_A1")]
    pub a1: Option<f64>,
    /// Rate exponent for h2 = n^-a2.
    #[arg(long, env = "VCOX_A2")]
    pub a2: Option<f64>,
    #[arg(long, env = "VCOX_H1", requires = "h2")]
    pub h1: Option<f64>,
    #[arg(long, env = "VCOX_H2", requires = "h1")]
    pub h2: Option<f64>,
    /// Select bandwidths per replication from the rate grid.
    #[arg(long, env = "VCOX_AUTO_BANDWIDTH")]
    pub auto_bandwidth: bool,
    /// Random splits averaged in the selection variance estimate.
    #[arg(long, env = "VCOX_SPLITS", default_value_t = 1)]
    pub splits: usize,
    /// Candidate exponents a1 for automatic selection.
    #[arg(long, env = "VCOX_AUTO_EXPS1", value_delimiter = ',')]
    pub auto_exps1: Option<Vec<f64>>,
    /// Candidate exponents a2 for automatic selection.
    #[arg(long, env = "VCOX_AUTO_EXPS2", value_delimiter = ',')]
    pub auto_exps2: Option<Vec<f64>>,
    #[arg(
        long,
        env = "VCOX_EVAL_POINTS",
        value_delimiter = ',',
        default_value = "0.2,0.4,0.6,0.8"
    )]
    pub eval_points: Vec<f64>,
    #[arg(long, env = "VCOX_GRID_POINTS", default_value_t = 50)]
    pub grid_points: usize,
    #[arg(long = "B", env = "VCOX_B", default_value_t = 1000)]
    pub n_boot: usize,
    #[arg(long, env = "VCOX_MULTIPLIER", default_value = "centered-exponential")]
    pub multiplier: MultiplierKind,
    #[arg(long, env = "VCOX_ALPHA", default_value_t = 0.05)]
    pub alpha: f64,
}

/// Error body printed on failure: `{code, message, context}`.
pub fn error_json(err: &Error, command: &str) -> Value {
    let mut context = json!({ "command": command });
    let extra = match err {
        Error::Ingest { file, row, column, .. } => json!({ "file": file, "row": row, "column": column }),
        Error::InvalidBandwidth { h1, h2, .. } => json!({ "h1": h1, "h2": h2 }),
        Error::NoConvergence {
            s,
            iterations,
            residual,
        } => {
            json!({ "s": s, "iterations": iterations, "residual": finite_or_null(*residual) })
        }
        Error::InsufficientData { s, effective, required } => {
            json!({ "s": s, "effective": effective, "required": required })
        }
        Error::SparseRegion { t } => json!({ "t": finite_or_null(*t) }),
        Error::CalibrationFailure { target, min, max } => json!({ "target": target, "min": min, "max": max }),
        Error::StudyInvalid {
            failures,
            replications,
            first,
        } => {
            json!({ "failures": failures, "replications": replications, "first_failure": first })
        }
        _ => json!({}),
    };
    if let (Some(c), Value::Object(e)) = (context.as_object_mut(), extra) {
        c.extend(e);
    }
    json!({ "code": err.code(), "message": err.to_string(), "context": context })
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NA".into()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(path, body)?;
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

fn candidate_grid(data: &Dataset, g: &GridArgs) -> Result<BandwidthGrid> {
    match (&g.h1_grid, &g.h2_grid) {
        (Some(a), Some(b)) => BandwidthGrid::from_axes(a, b, g.equal_bandwidths, data.tau(), g.mse_points),
        (Some(a), None) | (None, Some(a)) => {
            BandwidthGrid::from_axes(a, a, g.equal_bandwidths, data.tau(), g.mse_points)
        }
        (None, None) => BandwidthGrid::default_for(data, g.per_axis, g.equal_bandwidths, g.mse_points),
    }
}

struct Bandwidths {
    chosen: BandwidthPair,
    selection: Option<BandwidthSelection>,
}

fn resolve_bandwidth(data: &Dataset, b: &BandwidthArgs, seed: u64, kind: KernelKind) -> Result<Bandwidths> {
    match (b.h1, b.h2, b.auto_bandwidth) {
        (Some(h1), Some(h2), false) => Ok(Bandwidths {
            chosen: BandwidthPair::new(h1, h2)?,
            selection: None,
        }),
        (None, None, true) => {
            let grid = candidate_grid(data, &b.grid)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sel =
                select_bandwidth_with_splits(data, &grid, &mut rng, &SolverConfig::default(), kind, b.grid.splits)?;
            Ok(Bandwidths {
                chosen: sel.chosen,
                selection: Some(sel),
            })
        }
        _ => Err(Error::Config("pass either --h1 and --h2 or --auto-bandwidth".into())),
    }
}

struct Fitted {
    data: Dataset,
    curve: CoefficientCurve,
    bandwidths: Bandwidths,
}

fn fit_common(a: &FitArgs) -> Result<Fitted> {
    check_alpha(a.alpha)?;
    if a.grid_points < 2 {
        return Err(Error::Config("--grid-points must be at least 2".into()));
    }
    let kind = a.data.kernel;
    let data = ingest(&a.data.subjects, &a.data.longitudinal, a.data.tau)?;
    let bandwidths = resolve_bandwidth(&data, &a.bandwidth, a.seed, kind)?;
    let h = bandwidths.chosen;
    h.check_interior(data.tau())?;
    let grid = h.interior_grid(data.tau(), a.grid_points);
    let mut curve = fit_curve(&data, &grid, &h, &SolverConfig::default(), kind)?;
    attach_sandwich(&data, &mut curve, kind)?;
    Ok(Fitted {
        data,
        curve,
        bandwidths,
    })
}

fn failures(curve: &CoefficientCurve) -> Vec<Value> {
    curve
        .grid
        .iter()
        .zip(&curve.failures)
        .filter_map(|(s, f)| f.as_ref().map(|m| json!({ "s": s, "reason": m })))
        .collect()
}

fn data_summary(data: &Dataset) -> Value {
    json!({ "n": data.n(), "p": data.dim(), "tau": data.tau(), "events": data.n_events() })
}

fn bandwidth_summary(b: &Bandwidths) -> Value {
    json!({
        "h1": b.chosen.h1,
        "h2": b.chosen.h2,
        "selected": b.selection.is_some(),
        "split_draws": b.selection.as_ref().map(|s| s.split_draws),
    })
}

/// Writes `fit.csv` with columns `s, beta_j, se_j, ci_lo_j, ci_hi_j` per component.
pub fn write_curve_csv(curve: &CoefficientCurve, alpha: f64, path: &Path) -> Result<()> {
    let p = curve.dim();
    let ci = pointwise_ci(curve, alpha)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["s".to_string()];
    for j in 1..=p {
        header.extend([
            format!("beta_{j}"),
            format!("se_{j}"),
            format!("ci_lo_{j}"),
            format!("ci_hi_{j}"),
        ]);
    }
    w.write_record(&header)?;
    for (idx, s) in curve.grid.iter().enumerate() {
        let mut row = vec![fmt(*s)];
        for j in 0..p {
            match &ci[idx] {
                Some(c) => row.extend([fmt(c.estimate[j]), fmt(c.se[j]), fmt(c.lower[j]), fmt(c.upper[j])]),
                None => row.extend([fmt(curve.beta[idx][j]), fmt(f64::NAN), fmt(f64::NAN), fmt(f64::NAN)]),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn run_fit(a: &FitArgs, out: &Path) -> Result<()> {
    let f = fit_common(a)?;
    write_curve_csv(&f.curve, a.alpha, &out.join("fit.csv"))?;
    write_json(
        &out.join("fit_manifest.json"),
        &json!({
            "command": "fit",
            "version": env!("CARGO_PKG_VERSION"),
            "data": data_summary(&f.data),
            "bandwidth": bandwidth_summary(&f.bandwidths),
            "kernel": a.data.kernel,
            "alpha": a.alpha,
            "grid_points": a.grid_points,
            "converged": f.curve.n_converged(),
            "failures": failures(&f.curve),
            "seed": a.seed,
        }),
    )
}

fn run_scb(a: &ScbArgs, out: &Path) -> Result<()> {
    let f = fit_common(&a.fit)?;
    let l = unit_contrast(f.data.dim(), a.contrast)?;
    let band = scb(
        &f.data,
        &f.curve,
        &l,
        a.fit.alpha,
        a.n_boot,
        a.multiplier,
        a.weight,
        a.fit.seed,
        a.fit.data.kernel,
    )?;
    let z = normal_quantile(1.0 - a.fit.alpha / 2.0);
    let mut w = csv::Writer::from_path(out.join("band.csv"))?;
    w.write_record(["s", "estimate", "scb_lo", "scb_hi", "ci_lo", "ci_hi"])?;
    for j in 0..band.grid.len() {
        let (e, se) = (band.estimate[j], band.se[j]);
        w.write_record([
            fmt(band.grid[j]),
            fmt(e),
            fmt(band.lower[j]),
            fmt(band.upper[j]),
            fmt(e - z * se),
            fmt(e + z * se),
        ])?;
    }
    w.flush()?;
    write_json(
        &out.join("scb_manifest.json"),
        &json!({
            "command": "scb",
            "version": env!("CARGO_PKG_VERSION"),
            "data": data_summary(&f.data),
            "bandwidth": bandwidth_summary(&f.bandwidths),
            "kernel": a.fit.data.kernel,
            "alpha": a.fit.alpha,
            "c_alpha": band.c_alpha,
            "B": band.n_boot,
            "multiplier": band.multiplier,
            "weight": a.weight,
            "contrast": band.contrast,
            "seed": band.seed,
            "converged": f.curve.n_converged(),
            "failures": failures(&f.curve),
        }),
    )
}

fn run_select(a: &SelectArgs, out: &Path) -> Result<()> {
    let data = ingest(&a.data.subjects, &a.data.longitudinal, a.data.tau)?;
    let grid = candidate_grid(&data, &a.grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let sel = select_bandwidth_with_splits(
        &data,
        &grid,
        &mut rng,
        &SolverConfig::default(),
        a.data.kernel,
        a.grid.splits,
    )?;
    let mut w = csv::Writer::from_path(out.join("bandwidth_mse.csv"))?;
    w.write_record(["h1", "h2", "imse", "bias_sq", "variance"])?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6e}"));
    for r in &sel.table {
        w.write_record([fmt(r.h1), fmt(r.h2), opt(r.imse), opt(r.bias_sq), opt(r.variance)])?;
    }
    w.flush()?;
    write_json(
        &out.join("bandwidth_manifest.json"),
        &json!({
            "command": "select-bandwidth",
            "version": env!("CARGO_PKG_VERSION"),
            "data": data_summary(&data),
            "h1": sel.chosen.h1,
            "h2": sel.chosen.h2,
            "eval_times": grid.eval_times,
            "split_draws": sel.split_draws,
            "seed": a.seed,
        }),
    )?;
    println!("h1={} h2={}", sel.chosen.h1, sel.chosen.h2);
    Ok(())
}

fn scenario(a: &ScenarioArgs, preset: Option<Preset>, reps: usize) -> Result<ScenarioConfig> {
    let quadratic = preset == Some(Preset::Quadratic);
    let beta0 = match &a.beta0 {
        Some(s) => Beta0::parse(s).ok_or_else(|| Error::Config(format!("unknown coefficient '{s}'")))?,
        None if quadratic => Beta0::Quad,
        None => Beta0::Sin,
    };
    let obs_process = match &a.obs_process {
        Some(s) => {
            ObservationProcess::parse(s).ok_or_else(|| Error::Config(format!("unknown observation process '{s}'")))?
        }
        None if quadratic => ObservationProcess::Intensity8Quadratic,
        None => ObservationProcess::Homogeneous,
    };
    let censor_measure = match &a.censor_measure {
        Some(s) => {
            CensoringMeasure::parse(s).ok_or_else(|| Error::Config(format!("unknown censoring measure '{s}'")))?
        }
        None if quadratic => CensoringMeasure::BeforeHorizon,
        None => CensoringMeasure::Total,
    };
    let cfg = ScenarioConfig {
        n: a.n,
        censor_measure,
        beta0,
        censor_target: a.censor,
        obs_process,
        truncate_obs_at_exit: a.truncate_at_exit,
        seed: a.seed,
        replications: reps,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run_simulate(a: &SimulateArgs, out: &Path) -> Result<()> {
    let cfg = scenario(&a.scenario, None, 1)?;
    let gamma = match a.scenario.gamma {
        Some(g) => g,
        None => calibrate_gamma(&cfg, CALIBRATION_SUBJECTS)?,
    };
    let data = Simulator::new(cfg.clone())?.dataset(gamma, &mut substream(cfg.seed, 1))?;
    export(&data, &out.join("subjects.csv"), &out.join("longitudinal.csv"))?;
    write_json(
        &out.join("simulate_manifest.json"),
        &json!({
            "command": "simulate",
            "version": env!("CARGO_PKG_VERSION"),
            "scenario": cfg,
            "gamma": gamma,
            "data": data_summary(&data),
            "realized_censoring": 1.0 - data.n_events() as f64 / data.n() as f64,
        }),
    )
}

fn run_replicate(a: &ReplicateArgs, out: &Path) -> Result<()> {
    check_alpha(a.alpha)?;
    let sc = scenario(&a.scenario, Some(a.preset), a.reps)?;
    let method = match a.method {
        MethodArg::Proposed => Method::Proposed,
        MethodArg::Lvcf => Method::Lvcf,
    };
    let bandwidth = if a.auto_bandwidth {
        match BandwidthSpec::default_auto() {
            BandwidthSpec::Auto {
                exps1, exps2, n_eval, ..
            } => BandwidthSpec::Auto {
                exps1: a.auto_exps1.clone().unwrap_or(exps1),
                exps2: a.auto_exps2.clone().unwrap_or(exps2),
                n_eval,
                splits: a.splits,
            },
            other => other,
        }
    } else if let (Some(h1), Some(h2)) = (a.h1, a.h2) {
        BandwidthSpec::Fixed { h1, h2 }
    } else {
        let default_a2 = if a.preset == Preset::Quadratic { 0.25 } else { 0.35 };
        BandwidthSpec::Rates {
            a1: a.a1.unwrap_or(0.35),
            a2: a.a2.unwrap_or(default_a2),
        }
    };
    let mut cfg = StudyConfig::new(sc, method, bandwidth, a.eval_points.clone());
    cfg.alpha = a.alpha;
    cfg.gamma = a.scenario.gamma;
    if a.preset == Preset::Band {
        cfg.scb = Some(ScbStudy {
            grid_points: a.grid_points,
            n_boot: a.n_boot,
            multiplier: a.multiplier,
        });
    }
    let report = monte_carlo_study(&cfg)?;
    write_study_csv(&report.rows, &out.join("study.csv"))?;
    write_json(&out.join("study_manifest.json"), &report.manifest(&cfg))?;
    for r in &report.rows {
        println!(
            "s={} bias={:.4} sd={:.4} se={:.4} cp={:.1}{}",
            r.s,
            r.bias,
            r.sd,
            r.se,
            r.cp,
            r.scb_cp.map_or_else(String::new, |c| format!(" scb_cp={c:.1}"))
        );
    }
    Ok(())
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Scb(_) => "scb",
            Command::SelectBandwidth(_) => "select-bandwidth",
            Command::Simulate(_) => "simulate",
            Command::Replicate(_) => "replicate",
        }
    }
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    fs::create_dir_all(&cli.out_dir)?;
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Fit(a) => run_fit(a, out),
        Command::Scb(a) => run_scb(a, out),
        Command::SelectBandwidth(a) => run_select(a, out),
        Command::Simulate(a) => run_simulate(a, out),
        Command::Replicate(a) => run_replicate(a, out),
    }
}

/// Process entry point: parses arguments, runs, and prints error JSON on failure.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e, cli.command.name()));
            ExitCode::FAILURE
        }
    }
}
