//! Monte Carlo replication studies: bias, spread, sandwich SE and coverage
//! at fixed time points, plus uniform coverage of simultaneous bands.

use std::path::Path;

use nalgebra::DVector;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lvcf::lvcf_fit_with_variance;
use super::{substream, ScenarioConfig, Simulator, CALIBRATION_STREAM, CALIBRATION_SUBJECTS};
use crate::bandwidth::{select_bandwidth_with_splits, BandwidthGrid};
use crate::data::{BandwidthPair, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{fit_curve, solve_beta, SolverConfig};
use crate::inference::{
    attach_sandwich, empirical_quantile, meat_matrix, normal_quantile, sandwich_variance, unit_contrast,
    MultiplierKind, ScbPlan, WeightMode,
};
use crate::kernels::KernelKind;

/// Largest tolerated fraction of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    Lvcf,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Lvcf => "lvcf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthSpec {
    Fixed {
        h1: f64,
        h2: f64,
    },
    /// `h1 = n^{-a1}`, `h2 = n^{-a2}`.
    Rates {
        a1: f64,
        a2: f64,
    },
    /// Data-driven selection over the rate grid `n^{-a}`.
    Auto {
        exps1: Vec<f64>,
        exps2: Vec<f64>,
        n_eval: usize,
        /// Random splits averaged in the variance estimate.
        splits: usize,
    },
}

impl BandwidthSpec {
    /// Candidate exponents for automatic selection in the simulation studies.
    pub fn default_auto() -> Self {
        let exps = vec![0.30, 0.35, 0.40, 0.45];
        BandwidthSpec::Auto {
            exps1: exps.clone(),
            exps2: exps,
            n_eval: 10,
            splits: 1,
        }
    }

    fn label(&self, n: usize) -> (String, String) {
        match self {
            BandwidthSpec::Fixed { h1, h2 } => (h1.to_string(), h2.to_string()),
            BandwidthSpec::Rates { a1, a2 } => ((n as f64).powf(-a1).to_string(), (n as f64).powf(-a2).to_string()),
            BandwidthSpec::Auto { .. } => ("auto".into(), "auto".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScbStudy {
    pub grid_points: usize,
    pub n_boot: usize,
    pub multiplier: MultiplierKind,
}

impl Default for ScbStudy {
    fn default() -> Self {
        Self {
            grid_points: 50,
            n_boot: 5000,
            multiplier: MultiplierKind::CenteredExponential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: ScenarioConfig,
    pub method: Method,
    pub bandwidth: BandwidthSpec,
    pub eval_points: Vec<f64>,
    pub alpha: f64,
    pub scb: Option<ScbStudy>,
    pub solver: SolverConfig,
    pub kernel: KernelKind,
    /// Skip calibration and use this `gamma`.
    pub gamma: Option<f64>,
}

impl StudyConfig {
    pub fn new(scenario: ScenarioConfig, method: Method, bandwidth: BandwidthSpec, eval_points: Vec<f64>) -> Self {
        Self {
            scenario,
            method,
            bandwidth,
            eval_points,
            alpha: 0.05,
            scb: None,
            solver: SolverConfig::default(),
            kernel: KernelKind::Epanechnikov,
            gamma: None,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// One row of the study table.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub s: f64,
    pub n: usize,
    pub h1: String,
    pub h2: String,
    pub censor: f64,
    pub method: String,
    pub bias: f64,
    pub sd: f64,
    pub se: f64,
    pub cp: f64,
    /// Uniform coverage of the simultaneous band (percent).
    pub scb_cp: Option<f64>,
    /// Uniform coverage of the pointwise intervals over the band grid (percent).
    pub ci_uniform_cp: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub gamma: f64,
    pub realized_censoring: f64,
    pub replications: usize,
    pub failures: usize,
    pub failure_reasons: Vec<String>,
    pub seed: u64,
    pub config_hash: String,
}

/// Per-replication outcome.
#[derive(Debug, Clone)]
struct Replicate {
    beta: Vec<f64>,
    se: Vec<f64>,
    censored: f64,
    scb_cover: Option<bool>,
    ci_cover: Option<bool>,
}

fn bandwidth_for<R: RngCore>(cfg: &StudyConfig, data: &Dataset, rng: &mut R) -> Result<BandwidthPair> {
    let n = data.n();
    match &cfg.bandwidth {
        BandwidthSpec::Fixed { h1, h2 } => BandwidthPair::new(*h1, *h2),
        BandwidthSpec::Rates { a1, a2 } => BandwidthPair::from_rates(n, *a1, *a2),
        BandwidthSpec::Auto {
            exps1,
            exps2,
            n_eval,
            splits,
        } => {
            let grid = BandwidthGrid::from_rates(n, exps1, exps2, data.tau(), *n_eval)?;
            Ok(select_bandwidth_with_splits(data, &grid, rng, &cfg.solver, cfg.kernel, *splits)?.chosen)
        }
    }
}

fn run_replicate(sim: &Simulator, cfg: &StudyConfig, gamma: f64, rep: usize) -> Result<Replicate> {
    let mut rng = substream(cfg.scenario.seed, rep as u64 + 1);
    let data = sim.dataset(gamma, &mut rng)?;
    let censored = 1.0 - data.n_events() as f64 / data.n() as f64;
    let h = bandwidth_for(cfg, &data, &mut rng)?;
    let init = DVector::zeros(1);
    let mut beta = Vec::with_capacity(cfg.eval_points.len());
    let mut se = Vec::with_capacity(cfg.eval_points.len());
    for &s in &cfg.eval_points {
        let (b, v) = match cfg.method {
            Method::Proposed => {
                let system = crate::estimator::LocalSystem::new(&data, s, &h, cfg.kernel)?;
                let (b, _) = crate::estimator::solve_system(&system, &init, &cfg.solver)?;
                let (jac, _) = system.jacobian(&b)?;
                let meat = meat_matrix(&data, s, &b, &h, cfg.kernel)?;
                (b, sandwich_variance(&jac, &meat)?)
            }
            Method::Lvcf => {
                let (b, v, _) = lvcf_fit_with_variance(&data, s, h.h1, &cfg.solver, cfg.kernel)?;
                (b, v)
            }
        };
        beta.push(b[0]);
        se.push(v[(0, 0)].max(0.0).sqrt());
    }

    let (mut scb_cover, mut ci_cover) = (None, None);
    if let (Some(scb), Method::Proposed) = (&cfg.scb, cfg.method) {
        let grid = h.interior_grid(data.tau(), scb.grid_points);
        let mut curve = fit_curve(&data, &grid, &h, &cfg.solver, cfg.kernel)?;
        if let Some(j) = curve.converged.iter().position(|c| !c) {
            return Err(Error::NoConvergence {
                s: grid[j],
                iterations: 0,
                residual: f64::NAN,
            });
        }
        attach_sandwich(&data, &mut curve, cfg.kernel)?;
        let plan = ScbPlan::new(&data, &curve, &unit_contrast(1, 0)?, WeightMode::InverseSe, cfg.kernel)?;
        let stats = plan.bootstrap(scb.n_boot, scb.multiplier, rng.next_u64());
        let c_alpha = empirical_quantile(&stats, cfg.alpha);
        let (lower, upper) = plan.band(c_alpha);
        let z = normal_quantile(1.0 - cfg.alpha / 2.0);
        let truth: Vec<f64> = grid.iter().map(|&s| cfg.scenario.beta0.value(s)).collect();
        scb_cover = Some(
            truth
                .iter()
                .zip(lower.iter().zip(&upper))
                .all(|(b, (l, u))| l <= b && b <= u),
        );
        ci_cover = Some(
            truth
                .iter()
                .enumerate()
                .all(|(j, b)| (curve.beta[j][0] - b).abs() <= z * curve.se(j, 0).unwrap_or(0.0)),
        );
    }
    Ok(Replicate {
        beta,
        se,
        censored,
        scb_cover,
        ci_cover,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Runs `cfg.scenario.replications` independent replications.
///
/// Replication `r` draws from ChaCha stream `r + 1` of the scenario seed, so
/// the table does not depend on the thread count or scheduling order.
pub fn monte_carlo_study(cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.scenario.replications < 100 {
        return Err(Error::Config(format!(
            "{} replications; at least 100 required",
            cfg.scenario.replications
        )));
    }
    monte_carlo_study_unchecked(cfg)
}

/// [`monte_carlo_study`] without the minimum-replication guard, for smoke runs.
pub fn monte_carlo_study_unchecked(cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.eval_points.is_empty() && cfg.scb.is_none() {
        return Err(Error::Config("no evaluation points".into()));
    }
    if cfg.method == Method::Lvcf && cfg.scb.is_some() {
        return Err(Error::Config(
            "simultaneous bands are only available for the proposed method".into(),
        ));
    }
    let sim = Simulator::new(cfg.scenario.clone())?;
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => sim.calibrate_gamma(
            &mut substream(cfg.scenario.seed, CALIBRATION_STREAM),
            CALIBRATION_SUBJECTS,
        )?,
    };
    let reps = cfg.scenario.replications;
    let outcomes: Vec<Result<Replicate>> = (0..reps)
        .into_par_iter()
        .map(|r| run_replicate(&sim, cfg, gamma, r))
        .collect();

    let mut ok = Vec::with_capacity(reps);
    let mut failure_reasons = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => ok.push(r),
            Err(e) => failure_reasons.push(e.to_string()),
        }
    }
    let failures = failure_reasons.len();
    if failures as f64 > MAX_FAILURE_RATE * reps as f64 || ok.len() < 2 {
        return Err(Error::StudyInvalid {
            failures,
            replications: reps,
            first: failure_reasons.first().cloned().unwrap_or_default(),
        });
    }

    let n = cfg.scenario.n;
    let (h1, h2) = cfg.bandwidth.label(n);
    let z = normal_quantile(1.0 - cfg.alpha / 2.0);
    let pct = |flags: Vec<bool>| 100.0 * flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64;
    let scb_cp = cfg
        .scb
        .as_ref()
        .map(|_| pct(ok.iter().map(|r| r.scb_cover.unwrap_or(false)).collect()));
    let ci_uniform_cp = cfg
        .scb
        .as_ref()
        .map(|_| pct(ok.iter().map(|r| r.ci_cover.unwrap_or(false)).collect()));

    let mut rows: Vec<StudyRow> = cfg
        .eval_points
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let truth = cfg.scenario.beta0.value(s);
            let est: Vec<f64> = ok.iter().map(|r| r.beta[j]).collect();
            let ses: Vec<f64> = ok.iter().map(|r| r.se[j]).collect();
            let covered = ok.iter().map(|r| (r.beta[j] - truth).abs() <= z * r.se[j]).collect();
            StudyRow {
                s,
                n,
                h1: h1.clone(),
                h2: h2.clone(),
                censor: cfg.scenario.censor_target,
                method: cfg.method.as_str().into(),
                bias: mean(&est) - truth,
                sd: sample_sd(&est),
                se: mean(&ses),
                cp: pct(covered),
                scb_cp,
                ci_uniform_cp,
            }
        })
        .collect();
    if rows.is_empty() {
        rows.push(StudyRow {
            s: f64::NAN,
            n,
            h1,
            h2,
            censor: cfg.scenario.censor_target,
            method: cfg.method.as_str().into(),
            bias: f64::NAN,
            sd: f64::NAN,
            se: f64::NAN,
            cp: f64::NAN,
            scb_cp,
            ci_uniform_cp,
        });
    }

    Ok(StudyReport {
        rows,
        gamma,
        realized_censoring: mean(&ok.iter().map(|r| r.censored).collect::<Vec<_>>()),
        replications: reps,
        failures,
        failure_reasons,
        seed: cfg.scenario.seed,
        config_hash: cfg.hash(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.1}"))
}

/// Study table as CSV: `s,n,h1,h2,censor,method,bias,sd,se,cp,scb_cp`.
pub fn write_study_csv(rows: &[StudyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "s", "n", "h1", "h2", "censor", "method", "bias", "sd", "se", "cp", "scb_cp",
    ])?;
    for r in rows {
        w.write_record([
            format!("{}", r.s),
            r.n.to_string(),
            r.h1.clone(),
            r.h2.clone(),
            format!("{}", r.censor),
            r.method.clone(),
            format!("{:.4}", r.bias),
            format!("{:.4}", r.sd),
            format!("{:.4}", r.se),
            format!("{:.1}", r.cp),
            fmt_opt(r.scb_cp),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run manifest written next to the study table.
#[derive(Debug, Clone, Serialize)]
pub struct StudyManifest<'a> {
    pub seed: u64,
    pub config_hash: &'a str,
    pub gamma: f64,
    pub realized_censoring: f64,
    pub replications: usize,
    pub failures: usize,
    pub failure_reasons: &'a [String],
    pub ci_uniform_cp: Option<f64>,
    pub config: &'a StudyConfig,
}

impl StudyReport {
    pub fn manifest<'a>(&'a self, cfg: &'a StudyConfig) -> StudyManifest<'a> {
        StudyManifest {
            seed: self.seed,
            config_hash: &self.config_hash,
            gamma: self.gamma,
            realized_censoring: self.realized_censoring,
            replications: self.replications,
            failures: self.failures,
            failure_reasons: &self.failure_reasons,
            ci_uniform_cp: self.rows.first().and_then(|r| r.ci_uniform_cp),
            config: cfg,
        }
    }
}

/// Fit at a single point with the sandwich standard error; shared by the CLI.
pub fn fit_point(
    data: &Dataset,
    s: f64,
    h: &BandwidthPair,
    cfg: &SolverConfig,
    kind: KernelKind,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (b, _) = solve_beta(data, s, h, &DVector::zeros(data.dim()), cfg, kind)?;
    let jac = crate::estimator::jacobian(data, s, &b, h, kind)?;
    let v = sandwich_variance(&jac, &meat_matrix(data, s, &b, h, kind)?)?;
    let se = v.diagonal().map(|x| x.max(0.0).sqrt());
    Ok((b, se))
}
