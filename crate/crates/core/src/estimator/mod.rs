//! Kernel-weighted estimating equation for the time-varying coefficient.
//!
//! At a target time `s` the score is
//!
//! ```text
//! U(beta) = n^-1 sum_i sum_k K_h(X_i - s, R_ik - s) [Z_i(R_ik) - Zbar(beta, X_i)] delta_i
//! ```
//!
//! where `Zbar = S1 / S0` and the moments `S_l` smooth the at-risk covariate
//! records around `(t, s)`. The counting-process integral is an exact sum
//! over event times.

mod local;
mod solver;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{BandwidthPair, CoefficientCurve, Dataset, SolveDiagnostics};
use crate::error::{Error, Result};
use crate::kernels::KernelKind;

pub use local::{LocalSystem, SubjectContribution};
pub use solver::{solve_system, ScoreSystem};

/// Largest linear predictor allowed inside `exp`; larger values abort the iterate.
pub const ETA_CLAMP: f64 = 700.0;

/// Relative guard on the risk-set denominator `S0`.
pub const DENOM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Sup-norm threshold on the score.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step length, halved while the residual increases.
    pub step_damping: f64,
    pub min_effective_events: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            step_damping: 1.0,
            min_effective_events: 5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if !(self.step_damping > 0.0 && self.step_damping <= 1.0) {
            return Err(Error::Config("step_damping must lie in (0, 1]".into()));
        }
        if self.min_effective_events == 0 {
            return Err(Error::Config("min_effective_events must be positive".into()));
        }
        Ok(())
    }
}

/// Kernel-weighted moments `S0`, `S1`, `S2` at `(s, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMoments {
    pub s0: f64,
    pub s1: DVector<f64>,
    pub s2: DMatrix<f64>,
}

pub(crate) fn check_target(data: &Dataset, s: f64, h: &BandwidthPair) -> Result<()> {
    h.check_interior(data.tau())?;
    if !s.is_finite() || !h.contains(s, data.tau()) {
        return Err(Error::Config(format!(
            "target time {s} outside the interior [{}, {}]",
            h.h(),
            data.tau() - h.h()
        )));
    }
    Ok(())
}

/// `S_l{beta, t} = n^-1 sum_j sum_k K_h(t - s, R_jk - s) Y_j(t) Z_jk^{(x)l} exp(beta'Z_jk)`
/// for `l = 0, 1, 2` in one pass over the data.
pub fn weighted_moments(
    data: &Dataset,
    s: f64,
    t: f64,
    beta: &DVector<f64>,
    h: &BandwidthPair,
    kind: KernelKind,
) -> Result<WeightedMoments> {
    check_target(data, s, h)?;
    let p = data.dim();
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(p);
    let mut s2 = DMatrix::zeros(p, p);
    let kt = kind.scaled_univariate(t - s, h.h1);
    if kt > 0.0 {
        for subj in data.subjects().iter().filter(|j| j.at_risk(t)) {
            for (k, &r) in subj.obs_times().iter().enumerate() {
                let kr = kind.scaled_univariate(r - s, h.h2);
                if kr == 0.0 {
                    continue;
                }
                let z = DVector::from_column_slice(subj.covariate(k));
                let eta = beta.dot(&z);
                if eta > ETA_CLAMP || !eta.is_finite() {
                    return Err(Error::NonFiniteMoment { eta });
                }
                let w = kt * kr * eta.exp();
                s0 += w;
                s1.axpy(w, &z, 1.0);
                s2.ger(w, &z, &z, 1.0);
            }
        }
    }
    let inv_n = 1.0 / data.n() as f64;
    Ok(WeightedMoments {
        s0: s0 * inv_n,
        s1: s1 * inv_n,
        s2: s2 * inv_n,
    })
}

/// `Zbar = S1 / S0`.
pub fn zbar(m: &WeightedMoments) -> Result<DVector<f64>> {
    if !(m.s0 >= DENOM_EPS) {
        return Err(Error::SparseRegion { t: f64::NAN });
    }
    Ok(&m.s1 / m.s0)
}

/// The score `U_n{beta(s)}`.
pub fn estimating_equation(
    data: &Dataset,
    s: f64,
    beta: &DVector<f64>,
    h: &BandwidthPair,
    kind: KernelKind,
) -> Result<DVector<f64>> {
    LocalSystem::new(data, s, h, kind)?.score(beta)
}

/// `dU_n / dbeta`, symmetric negative semidefinite.
pub fn jacobian(
    data: &Dataset,
    s: f64,
    beta: &DVector<f64>,
    h: &BandwidthPair,
    kind: KernelKind,
) -> Result<DMatrix<f64>> {
    Ok(LocalSystem::new(data, s, h, kind)?.jacobian(beta)?.0)
}

/// Root of the score at `s` by Broyden's method seeded with the analytic Jacobian.
pub fn solve_beta(
    data: &Dataset,
    s: f64,
    h: &BandwidthPair,
    init: &DVector<f64>,
    cfg: &SolverConfig,
    kind: KernelKind,
) -> Result<(DVector<f64>, SolveDiagnostics)> {
    let system = LocalSystem::new(data, s, h, kind)?;
    solve_system(&system, init, cfg)
}

/// Solves along `grid`, warm-starting each point from the last converged one.
///
/// The grid must be strictly monotone; a descending grid runs the warm
/// starts in the opposite direction. Failed points are flagged, not fatal.
pub fn fit_curve(
    data: &Dataset,
    grid: &[f64],
    h: &BandwidthPair,
    cfg: &SolverConfig,
    kind: KernelKind,
) -> Result<CoefficientCurve> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    let ascending = grid.windows(2).all(|w| w[1] > w[0]);
    let descending = grid.windows(2).all(|w| w[1] < w[0]);
    if !(ascending || descending) {
        return Err(Error::Config("grid must be strictly monotone".into()));
    }
    for &s in grid {
        check_target(data, s, h)?;
    }
    let p = data.dim();
    let mut start = DVector::zeros(p);
    let mut curve = CoefficientCurve {
        grid: grid.to_vec(),
        beta: Vec::with_capacity(grid.len()),
        cov: vec![None; grid.len()],
        converged: Vec::with_capacity(grid.len()),
        diagnostics: Vec::with_capacity(grid.len()),
        failures: Vec::with_capacity(grid.len()),
        bandwidths: *h,
    };
    for &s in grid {
        match solve_beta(data, s, h, &start, cfg, kind) {
            Ok((beta, diag)) => {
                start = beta.clone();
                curve.beta.push(beta);
                curve.converged.push(true);
                curve.diagnostics.push(Some(diag));
                curve.failures.push(None);
            }
            Err(e) => {
                curve.beta.push(DVector::from_element(p, f64::NAN));
                curve.converged.push(false);
                curve.diagnostics.push(None);
                curve.failures.push(Some(e.to_string()));
            }
        }
    }
    if curve.n_converged() == 0 {
        return Err(Error::AllPointsFailed);
    }
    Ok(curve)
}
