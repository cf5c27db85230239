//! Data-generating process for the Monte Carlo studies, censoring
//! calibration, the last-value-carried-forward baseline, and the study driver.

pub mod lvcf;
pub mod process;
pub mod quadrature;
pub mod study;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use process::{
    gen_observation_schedule, BaselineHazard, Beta0, CovariatePath, FailureTime, HazardProfile, ObservationProcess,
    PathSampler,
};
use quadrature::{gauss_legendre, QuadratureRule};

/// Gauss-Legendre nodes per covariate piece.
pub const QUADRATURE_ORDER: usize = 10;

/// Upper end of the censoring uniform `C* ~ U(gamma, 1.5)`.
pub const CENSOR_UPPER: f64 = 1.5;

/// Simulated subjects used to calibrate `gamma`.
pub const CALIBRATION_SUBJECTS: usize = 20_000;

/// Which censored subjects count toward the calibrated censoring proportion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensoringMeasure {
    /// Every subject without an observed event, including those still event-free at `tau`.
    #[default]
    Total,
    /// Only subjects censored strictly before `tau`.
    BeforeHorizon,
}

impl CensoringMeasure {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "total" => Some(CensoringMeasure::Total),
            "before-horizon" => Some(CensoringMeasure::BeforeHorizon),
            _ => None,
        }
    }

    /// Whether a subject with this outcome counts as censored.
    pub fn counts(self, event: bool, censor: f64) -> bool {
        match self {
            CensoringMeasure::Total => !event,
            CensoringMeasure::BeforeHorizon => !event && censor < 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub beta0: Beta0,
    pub lambda0: BaselineHazard,
    /// Target censoring proportion.
    pub censor_target: f64,
    pub censor_measure: CensoringMeasure,
    pub obs_process: ObservationProcess,
    /// Drop observations made after the subject leaves follow-up.
    pub truncate_obs_at_exit: bool,
    pub seed: u64,
    pub replications: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 400,
            beta0: Beta0::Sin,
            lambda0: BaselineHazard::default(),
            censor_target: 0.15,
            censor_measure: CensoringMeasure::Total,
            obs_process: ObservationProcess::Homogeneous,
            truncate_obs_at_exit: false,
            seed: 20240101,
            replications: 500,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::Config(format!("n = {} below the minimum of 50", self.n)));
        }
        if !(self.censor_target > 0.0 && self.censor_target < 1.0) {
            return Err(Error::Config(format!(
                "censoring target {} must lie in (0, 1)",
                self.censor_target
            )));
        }
        Ok(())
    }
}

/// One generated subject with its latent quantities.
#[derive(Debug, Clone)]
pub struct SimulatedSubject {
    pub path: CovariatePath,
    pub schedule: Vec<f64>,
    pub failure: FailureTime,
    /// `min(1, C*)`, floored at 0.
    pub censor: f64,
    pub follow_up_time: f64,
    pub event: bool,
}

/// Reusable generator state: the path factorization and the quadrature rule.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub cfg: ScenarioConfig,
    sampler: PathSampler,
    rule: QuadratureRule,
}

/// `min(1, gamma + (1.5 - gamma) v)`, floored at 0.
fn censor_time(gamma: f64, v: f64) -> f64 {
    (gamma + (CENSOR_UPPER - gamma) * v).clamp(0.0, 1.0)
}

fn resolve(failure: FailureTime, censor: f64) -> (f64, bool) {
    match failure {
        FailureTime::At(t) if t <= censor => (t, true),
        FailureTime::At(t) => (t.min(censor), false),
        FailureTime::BeyondHorizon => (censor, false),
    }
}

impl Simulator {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            sampler: PathSampler::new(),
            rule: gauss_legendre(QUADRATURE_ORDER),
        })
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn sampler(&self) -> &PathSampler {
        &self.sampler
    }

    fn failure<R: Rng + ?Sized>(&self, path: &CovariatePath, rng: &mut R) -> FailureTime {
        let profile = HazardProfile::new(path, self.cfg.beta0, self.cfg.lambda0, &self.rule);
        let u: f64 = 1.0 - rng.random::<f64>();
        process::failure_time_from_uniform(&profile, u)
    }

    /// Draws path, schedule, failure time and censoring, in that order.
    pub fn subject<R: Rng + ?Sized>(&self, gamma: f64, rng: &mut R) -> SimulatedSubject {
        let path = self.sampler.sample(rng);
        let mut schedule = gen_observation_schedule(self.cfg.obs_process, rng);
        let failure = self.failure(&path, rng);
        let censor = censor_time(gamma, rng.random::<f64>());
        let (follow_up_time, event) = resolve(failure, censor);
        if self.cfg.truncate_obs_at_exit {
            schedule.retain(|&r| r <= follow_up_time);
        }
        SimulatedSubject {
            path,
            schedule,
            failure,
            censor,
            follow_up_time,
            event,
        }
    }

    /// `n` subjects with covariates recorded at their schedule times; `tau = 1`.
    pub fn dataset<R: Rng + ?Sized>(&self, gamma: f64, rng: &mut R) -> Result<Dataset> {
        let subjects = (0..self.cfg.n)
            .map(|i| {
                let s = self.subject(gamma, rng);
                let z: Vec<f64> = s.schedule.iter().map(|&r| s.path.at(r)).collect();
                SubjectRecord::from_flat((i + 1).to_string(), s.follow_up_time, s.event, s.schedule, z, 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(subjects, 1.0, 1)
    }

    /// Bisection on `gamma` in `(-1.5, 1.5)` so that the censoring proportion
    /// of `n_subjects` common-random-number draws matches the target.
    pub fn calibrate_gamma<R: Rng + ?Sized>(&self, rng: &mut R, n_subjects: usize) -> Result<f64> {
        let draws: Vec<(FailureTime, f64)> = (0..n_subjects)
            .map(|_| {
                let path = self.sampler.sample(rng);
                let failure = self.failure(&path, rng);
                (failure, rng.random::<f64>())
            })
            .collect();
        let measure = self.cfg.censor_measure;
        let censored = |gamma: f64| -> f64 {
            let c = draws
                .iter()
                .filter(|(f, v)| {
                    let c = censor_time(gamma, *v);
                    measure.counts(resolve(*f, c).1, c)
                })
                .count();
            c as f64 / draws.len() as f64
        };
        let target = self.cfg.censor_target;
        let (mut lo, mut hi) = (-CENSOR_UPPER, CENSOR_UPPER);
        let (max, min) = (censored(lo), censored(hi));
        if target > max || target < min {
            return Err(Error::CalibrationFailure { target, min, max });
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let c = censored(mid);
            if (c - target).abs() <= 0.0005 {
                return Ok(mid);
            }
            if c > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let gamma = 0.5 * (lo + hi);
        if (censored(gamma) - target).abs() > 0.005 {
            return Err(Error::CalibrationFailure { target, min, max });
        }
        Ok(gamma)
    }
}

/// Stream index reserved for calibration; replication `r` uses stream `r + 1`.
pub const CALIBRATION_STREAM: u64 = 0;

/// Deterministic substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Calibrates `gamma` on the reserved substream of the scenario seed.
pub fn calibrate_gamma(cfg: &ScenarioConfig, n_subjects: usize) -> Result<f64> {
    let sim = Simulator::new(cfg.clone())?;
    sim.calibrate_gamma(&mut substream(cfg.seed, CALIBRATION_STREAM), n_subjects)
}

/// One dataset from the scenario with a given `gamma`.
pub fn simulate_dataset<R: Rng + ?Sized>(cfg: &ScenarioConfig, gamma: f64, rng: &mut R) -> Result<Dataset> {
    Simulator::new(cfg.clone())?.dataset(gamma, rng)
}
