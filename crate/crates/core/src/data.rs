//! Observational data structures: subjects, datasets, bandwidths and fitted curves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject: follow-up time, event flag and the sparse covariate record.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    /// `X = min(T, C)`.
    pub follow_up_time: f64,
    pub event: bool,
    obs_times: Vec<f64>,
    /// Row-major `M x p`.
    covariates: Vec<f64>,
    p: usize,
}

impl SubjectRecord {
    /// Builds a record from rows of covariates, one row per observation time.
    pub fn new(
        id: impl Into<String>,
        follow_up_time: f64,
        event: bool,
        obs_times: Vec<f64>,
        covariates: Vec<Vec<f64>>,
        p: usize,
    ) -> Result<Self> {
        let id = id.into();
        if covariates.len() != obs_times.len() {
            return Err(Error::InvalidData(format!(
                "subject {id}: {} observation times but {} covariate rows",
                obs_times.len(),
                covariates.len()
            )));
        }
        let mut flat = Vec::with_capacity(obs_times.len() * p);
        for (k, row) in covariates.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidData(format!(
                    "subject {id}: covariate row {k} has {} columns, expected {p}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(id, follow_up_time, event, obs_times, flat, p)
    }

    /// Builds a record from a row-major `M x p` covariate buffer.
    pub fn from_flat(
        id: impl Into<String>,
        follow_up_time: f64,
        event: bool,
        obs_times: Vec<f64>,
        covariates: Vec<f64>,
        p: usize,
    ) -> Result<Self> {
        let id = id.into();
        if p == 0 {
            return Err(Error::InvalidData("covariate dimension must be positive".into()));
        }
        if !follow_up_time.is_finite() || follow_up_time < 0.0 {
            return Err(Error::InvalidData(format!(
                "subject {id}: follow-up time {follow_up_time} must be finite and nonnegative"
            )));
        }
        if covariates.len() != obs_times.len() * p {
            return Err(Error::InvalidData(format!(
                "subject {id}: covariate buffer has {} entries, expected {}",
                covariates.len(),
                obs_times.len() * p
            )));
        }
        if obs_times.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidData(format!(
                "subject {id}: observation times must be finite and nonnegative"
            )));
        }
        if obs_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidData(format!(
                "subject {id}: observation times must be strictly ascending"
            )));
        }
        if covariates.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidData(format!("subject {id}: covariates must be finite")));
        }
        Ok(Self {
            id,
            follow_up_time,
            event,
            obs_times,
            covariates,
            p,
        })
    }

    pub fn obs_times(&self) -> &[f64] {
        &self.obs_times
    }

    /// Number of observation times `M_i`.
    pub fn n_obs(&self) -> usize {
        self.obs_times.len()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Covariate vector observed at the `k`-th observation time.
    pub fn covariate(&self, k: usize) -> &[f64] {
        &self.covariates[k * self.p..(k + 1) * self.p]
    }

    pub fn covariates_flat(&self) -> &[f64] {
        &self.covariates
    }

    /// `Y_i(t) = I(X_i >= t)`.
    #[inline]
    pub fn at_risk(&self, t: f64) -> bool {
        self.follow_up_time >= t
    }

    /// The single jump of `N_i` on `[0, tau]`, if any.
    #[inline]
    pub fn event_time(&self, tau: f64) -> Option<f64> {
        (self.event && self.follow_up_time <= tau).then_some(self.follow_up_time)
    }

    /// Index of the last observation at or before `t`.
    pub fn last_obs_at_or_before(&self, t: f64) -> Option<usize> {
        self.obs_times.partition_point(|&r| r <= t).checked_sub(1)
    }
}

/// Free-function form of [`SubjectRecord::at_risk`].
pub fn at_risk(subject: &SubjectRecord, t: f64) -> bool {
    subject.at_risk(t)
}

/// Free-function form of [`SubjectRecord::event_time`].
pub fn event_time(subject: &SubjectRecord, tau: f64) -> Option<f64> {
    subject.event_time(tau)
}

/// A collection of subjects with a study horizon and covariate dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    subjects: Vec<SubjectRecord>,
    tau: f64,
    p: usize,
}

impl Dataset {
    pub fn new(subjects: Vec<SubjectRecord>, tau: f64, p: usize) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidData(format!("tau = {tau} must be positive and finite")));
        }
        if p == 0 {
            return Err(Error::InvalidData("covariate dimension must be positive".into()));
        }
        if subjects.is_empty() {
            return Err(Error::InvalidData("dataset has no subjects".into()));
        }
        if let Some(s) = subjects.iter().find(|s| s.dim() != p) {
            return Err(Error::InvalidData(format!(
                "subject {} has {} covariate columns, expected {p}",
                s.id,
                s.dim()
            )));
        }
        if !subjects.iter().any(|s| s.event) {
            return Err(Error::InvalidData("dataset has no events".into()));
        }
        Ok(Self { subjects, tau, p })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Subset of subjects by index, keeping `tau` and `p`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let subjects = indices.iter().map(|&i| self.subjects[i].clone()).collect();
        Self::new(subjects, self.tau, self.p)
    }

    /// Same subjects with a new horizon.
    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidData(format!("tau = {tau} must be positive and finite")));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn n_events(&self) -> usize {
        self.subjects
            .iter()
            .filter(|s| s.event_time(self.tau).is_some())
            .count()
    }

    /// All observation times pooled across subjects.
    pub fn pooled_obs_times(&self) -> Vec<f64> {
        self.subjects
            .iter()
            .flat_map(|s| s.obs_times().iter().copied())
            .collect()
    }
}

/// Smoothing bandwidths for event time (`h1`) and observation time (`h2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPair {
    pub h1: f64,
    pub h2: f64,
}

impl BandwidthPair {
    pub fn new(h1: f64, h2: f64) -> Result<Self> {
        if !(h1 > 0.0 && h2 > 0.0 && h1.is_finite() && h2.is_finite()) {
            return Err(Error::InvalidBandwidth {
                h1,
                h2,
                reason: "bandwidths must be positive and finite".into(),
            });
        }
        Ok(Self { h1, h2 })
    }

    /// `h1 = n^{-a1}`, `h2 = n^{-a2}`.
    pub fn from_rates(n: usize, a1: f64, a2: f64) -> Result<Self> {
        let n = n as f64;
        Self::new(n.powf(-a1), n.powf(-a2))
    }

    /// `h = max(h1, h2)`.
    pub fn h(&self) -> f64 {
        self.h1.max(self.h2)
    }

    /// Checks that the interior `[h, tau - h]` is nonempty.
    pub fn check_interior(&self, tau: f64) -> Result<()> {
        if self.h() >= tau / 2.0 {
            return Err(Error::InvalidBandwidth {
                h1: self.h1,
                h2: self.h2,
                reason: format!("max(h1, h2) must be below tau / 2 = {}", tau / 2.0),
            });
        }
        Ok(())
    }

    /// Whether `s` lies in the interior `[h, tau - h]`.
    pub fn contains(&self, s: f64, tau: f64) -> bool {
        let h = self.h();
        s >= h - 1e-12 && s <= tau - h + 1e-12
    }

    /// `n` equally spaced points spanning `[h, tau - h]`.
    pub fn interior_grid(&self, tau: f64, n: usize) -> Vec<f64> {
        linspace(self.h(), tau - self.h(), n)
    }
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect(),
    }
}

/// Per-point solver diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub effective_events: usize,
    pub jacobian_resets: usize,
}

/// Estimated coefficient function on a time grid.
#[derive(Debug, Clone)]
pub struct CoefficientCurve {
    pub grid: Vec<f64>,
    /// `beta[j]` is the estimate at `grid[j]`; all-NaN where the solve failed.
    pub beta: Vec<DVector<f64>>,
    /// Sandwich covariance per point, filled by the inference module.
    pub cov: Vec<Option<DMatrix<f64>>>,
    pub converged: Vec<bool>,
    pub diagnostics: Vec<Option<SolveDiagnostics>>,
    pub failures: Vec<Option<String>>,
    pub bandwidths: BandwidthPair,
}

impl CoefficientCurve {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.beta.first().map_or(0, |b| b.len())
    }

    pub fn n_converged(&self) -> usize {
        self.converged.iter().filter(|c| **c).count()
    }

    /// Standard error of component `j` at grid point `idx`, when available.
    pub fn se(&self, idx: usize, j: usize) -> Option<f64> {
        self.cov[idx].as_ref().map(|c| c[(j, j)].max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(x: f64, event: bool) -> SubjectRecord {
        SubjectRecord::new("a", x, event, vec![0.1, 0.3], vec![vec![1.0], vec![2.0]], 1).unwrap()
    }

    #[test]
    fn at_risk_is_inclusive() {
        let s = subject(0.7, true);
        assert!(at_risk(&s, 0.5));
        assert!(at_risk(&s, 0.7));
        assert!(!at_risk(&s, 0.9));
    }

    #[test]
    fn event_time_respects_flag_and_horizon() {
        assert_eq!(event_time(&subject(0.4, true), 1.0), Some(0.4));
        assert_eq!(event_time(&subject(0.4, false), 1.0), None);
        assert_eq!(event_time(&subject(1.3, true), 1.0), None);
    }

    #[test]
    fn record_invariants() {
        let bad_order = SubjectRecord::new("b", 1.0, true, vec![0.3, 0.3], vec![vec![0.0]; 2], 1);
        assert!(bad_order.is_err());
        let bad_rows = SubjectRecord::new("b", 1.0, true, vec![0.3], vec![], 1);
        assert!(bad_rows.is_err());
        let bad_cols = SubjectRecord::new("b", 1.0, true, vec![0.3], vec![vec![0.0, 1.0]], 1);
        assert!(bad_cols.is_err());
        let nan = SubjectRecord::new("b", 1.0, true, vec![0.3], vec![vec![f64::NAN]], 1);
        assert!(nan.is_err());
        let inf_time = SubjectRecord::new("b", f64::INFINITY, true, vec![], vec![], 1);
        assert!(inf_time.is_err());
    }

    #[test]
    fn dataset_invariants() {
        assert!(Dataset::new(vec![subject(0.5, false)], 1.0, 1).is_err());
        assert!(Dataset::new(vec![subject(0.5, true)], 0.0, 1).is_err());
        assert!(Dataset::new(vec![subject(0.5, true)], 1.0, 2).is_err());
        let d = Dataset::new(vec![subject(0.5, true), subject(0.8, false)], 1.0, 1).unwrap();
        assert_eq!(d.n_events(), 1);
        assert_eq!(d.pooled_obs_times().len(), 4);
    }

    #[test]
    fn last_observation_lookup() {
        let s = subject(1.0, true);
        assert_eq!(s.last_obs_at_or_before(0.05), None);
        assert_eq!(s.last_obs_at_or_before(0.1), Some(0));
        assert_eq!(s.last_obs_at_or_before(0.2), Some(0));
        assert_eq!(s.last_obs_at_or_before(0.9), Some(1));
    }

    #[test]
    fn bandwidth_pair_checks() {
        assert!(BandwidthPair::new(0.0, 0.1).is_err());
        let h = BandwidthPair::new(0.1, 0.2).unwrap();
        assert_eq!(h.h(), 0.2);
        assert!(h.check_interior(1.0).is_ok());
        assert!(h.check_interior(0.4).is_err());
        let g = h.interior_grid(1.0, 5);
        assert_eq!(g.first().copied(), Some(0.2));
        assert!((g[4] - 0.8).abs() < 1e-15);
        let r = BandwidthPair::from_rates(400, 0.35, 0.35).unwrap();
        assert!((r.h1 - 400f64.powf(-0.35)).abs() < 1e-15);
    }
}
