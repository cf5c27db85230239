//! Last-value-carried-forward baseline: the most recent covariate record
//! stands in for the value at each event time, and the coefficient is
//! localized with a univariate kernel in event time only.

use nalgebra::{DMatrix, DVector};

use crate::data::{BandwidthPair, Dataset, SolveDiagnostics};
use crate::error::{Error, Result};
use crate::estimator::{solve_system, ScoreSystem, SolverConfig, DENOM_EPS, ETA_CLAMP};
use crate::inference::sandwich_variance;
use crate::kernels::KernelKind;

struct LvcfEvent {
    subject: usize,
    kt: f64,
    t: f64,
    own: Vec<f64>,
    /// Carried-forward covariates of the risk set at `t`, row-major.
    risk: Vec<f64>,
}

/// Localized score with carried-forward covariates.
///
/// Subjects without any record at or before an event time are left out of
/// that event's numerator and risk set.
pub struct LvcfSystem {
    s: f64,
    n: usize,
    p: usize,
    events: Vec<LvcfEvent>,
}

impl LvcfSystem {
    pub fn new(data: &Dataset, s: f64, h1: f64, kind: KernelKind) -> Result<Self> {
        let h = BandwidthPair::new(h1, h1)?;
        h.check_interior(data.tau())?;
        if !h.contains(s, data.tau()) {
            return Err(Error::Config(format!(
                "target time {s} outside the interior [{h1}, {}]",
                data.tau() - h1
            )));
        }
        let p = data.dim();
        let subjects = data.subjects();
        let mut events = Vec::new();
        for (i, subj) in subjects.iter().enumerate() {
            let Some(t) = subj.event_time(data.tau()) else { continue };
            let kt = kind.scaled_univariate(t - s, h1);
            if kt <= 0.0 {
                continue;
            }
            let Some(k) = subj.last_obs_at_or_before(t) else {
                continue;
            };
            let mut risk = Vec::new();
            for other in subjects.iter().filter(|j| j.at_risk(t)) {
                if let Some(kk) = other.last_obs_at_or_before(t) {
                    risk.extend_from_slice(other.covariate(kk));
                }
            }
            events.push(LvcfEvent {
                subject: i,
                kt,
                t,
                own: subj.covariate(k).to_vec(),
                risk,
            });
        }
        Ok(Self {
            s,
            n: data.n(),
            p,
            events,
        })
    }

    /// `(Zbar, S2/S0)` over the risk set of one event.
    fn moments(&self, e: &LvcfEvent, beta: &DVector<f64>, second: bool) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p = self.p;
        let rows = e.risk.len() / p;
        let etas: Vec<f64> = (0..rows)
            .map(|r| (0..p).map(|a| e.risk[r * p + a] * beta[a]).sum())
            .collect();
        if let Some(&eta) = etas.iter().find(|v| !(**v <= ETA_CLAMP)) {
            return Err(Error::NonFiniteMoment { eta });
        }
        let offset = etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        let mut s2 = DMatrix::zeros(p, p);
        for (r, eta) in etas.iter().enumerate() {
            let z = DVector::from_column_slice(&e.risk[r * p..(r + 1) * p]);
            let w = (eta - offset).exp();
            s0 += w;
            s1.axpy(w, &z, 1.0);
            if second {
                s2.ger(w, &z, &z, 1.0);
            }
        }
        if !(s0 > DENOM_EPS) {
            return Err(Error::SparseRegion { t: e.t });
        }
        Ok((s1 / s0, s2 / s0))
    }

    pub fn contributions(&self, beta: &DVector<f64>) -> Result<Vec<(usize, DVector<f64>)>> {
        self.events
            .iter()
            .map(|e| {
                let (zbar, _) = self.moments(e, beta, false)?;
                Ok((e.subject, (DVector::from_column_slice(&e.own) - zbar) * e.kt))
            })
            .collect()
    }
}

impl ScoreSystem for LvcfSystem {
    fn dim(&self) -> usize {
        self.p
    }

    fn location(&self) -> f64 {
        self.s
    }

    fn effective_events(&self) -> usize {
        self.events.len()
    }

    fn score(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        let mut u = DVector::zeros(self.p);
        for (_, c) in self.contributions(beta)? {
            u += c;
        }
        Ok(u / self.n as f64)
    }

    fn jacobian_scaled(&self, beta: &DVector<f64>) -> Result<(DMatrix<f64>, f64)> {
        let mut jac = DMatrix::zeros(self.p, self.p);
        let mut scale = 0.0;
        for e in &self.events {
            let (zbar, second) = self.moments(e, beta, true)?;
            jac -= (second.clone() - &zbar * zbar.transpose()) * e.kt;
            scale += e.kt * second.diagonal().amax();
        }
        let inv_n = 1.0 / self.n as f64;
        Ok((jac * inv_n, scale * inv_n))
    }
}

/// LVCF estimate at `s` with event-time bandwidth `h1`.
pub fn lvcf_fit(data: &Dataset, s: f64, h1: f64, cfg: &SolverConfig, kind: KernelKind) -> Result<DVector<f64>> {
    let system = LvcfSystem::new(data, s, h1, kind)?;
    Ok(solve_system(&system, &DVector::zeros(data.dim()), cfg)?.0)
}

/// LVCF estimate with its sandwich covariance.
pub fn lvcf_fit_with_variance(
    data: &Dataset,
    s: f64,
    h1: f64,
    cfg: &SolverConfig,
    kind: KernelKind,
) -> Result<(DVector<f64>, DMatrix<f64>, SolveDiagnostics)> {
    let system = LvcfSystem::new(data, s, h1, kind)?;
    let (beta, diag) = solve_system(&system, &DVector::zeros(data.dim()), cfg)?;
    let (jac, _) = system.jacobian_scaled(&beta)?;
    let n = data.n() as f64;
    let mut meat = DMatrix::zeros(data.dim(), data.dim());
    for (_, c) in system.contributions(&beta)? {
        meat.ger(1.0, &c, &c, 1.0);
    }
    let cov = sandwich_variance(&jac, &(meat / (n * n)))?;
    Ok((beta, cov, diag))
}
