use nalgebra::{DMatrix, DVector};

use super::{check_target, ScoreSystem, DENOM_EPS, ETA_CLAMP};
use crate::data::{BandwidthPair, Dataset};
use crate::error::{Error, Result};
use crate::kernels::KernelKind;

/// An event with nonzero kernel weight at the target time.
#[derive(Debug, Clone)]
struct EventTerm {
    subject: usize,
    x: f64,
    /// `k(X_i - s; h1)`.
    kt: f64,
    /// `sum_k k(R_ik - s; h2)`.
    w: f64,
    /// `sum_k k(R_ik - s; h2) Z_ik`.
    a: Vec<f64>,
    /// Number of window observations whose subject is at risk at `x`.
    risk_len: usize,
}

/// One subject's summand of the score, before the `1/n` factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectContribution {
    pub subject: usize,
    pub value: DVector<f64>,
}

/// The score at a fixed target time, with the kernel window precomputed.
///
/// Only observations with `k(R - s; h2) > 0` enter the moment sums and only
/// events with `k(X - s; h1) > 0` enter the outer sum. Window observations are
/// sorted by their subject's follow-up time, descending, so every risk set is
/// a prefix and the moments at all event times come from one cumulative pass.
/// The event-time kernel factor is common to `S1` and `S0` and cancels in
/// `Zbar`.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    s: f64,
    n: usize,
    p: usize,
    obs_x: Vec<f64>,
    obs_kr: Vec<f64>,
    obs_z: Vec<f64>,
    events: Vec<EventTerm>,
}

struct Prefix {
    p0: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
}

impl LocalSystem {
    pub fn new(data: &Dataset, s: f64, h: &BandwidthPair, kind: KernelKind) -> Result<Self> {
        check_target(data, s, h)?;
        let p = data.dim();
        let mut window: Vec<(f64, f64, usize, usize)> = Vec::new();
        let mut events = Vec::new();
        for (j, subj) in data.subjects().iter().enumerate() {
            let mut w = 0.0;
            let mut a = vec![0.0; p];
            for (k, &r) in subj.obs_times().iter().enumerate() {
                let kr = kind.scaled_univariate(r - s, h.h2);
                if kr > 0.0 {
                    window.push((subj.follow_up_time, kr, j, k));
                    w += kr;
                    for (ac, z) in a.iter_mut().zip(subj.covariate(k)) {
                        *ac += kr * z;
                    }
                }
            }
            if let Some(x) = subj.event_time(data.tau()) {
                let kt = kind.scaled_univariate(x - s, h.h1);
                if kt > 0.0 && w > 0.0 {
                    events.push(EventTerm {
                        subject: j,
                        x,
                        kt,
                        w,
                        a,
                        risk_len: 0,
                    });
                }
            }
        }
        window.sort_by(|l, r| r.0.total_cmp(&l.0));
        let mut obs_z = Vec::with_capacity(window.len() * p);
        for &(_, _, j, k) in &window {
            obs_z.extend_from_slice(data.subjects()[j].covariate(k));
        }
        let obs_x: Vec<f64> = window.iter().map(|o| o.0).collect();
        for e in &mut events {
            e.risk_len = obs_x.partition_point(|&x| x >= e.x);
        }
        Ok(Self {
            s,
            n: data.n(),
            p,
            obs_kr: window.iter().map(|o| o.1).collect(),
            obs_x,
            obs_z,
            events,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of covariate records inside the observation-time window.
    pub fn window_size(&self) -> usize {
        self.obs_x.len()
    }

    fn prefix(&self, beta: &DVector<f64>, second: bool) -> Result<Prefix> {
        let p = self.p;
        let m = self.obs_x.len();
        let mut eta = Vec::with_capacity(m);
        let mut offset = f64::NEG_INFINITY;
        for r in 0..m {
            let z = &self.obs_z[r * p..(r + 1) * p];
            let e: f64 = z.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            if !(e <= ETA_CLAMP) {
                return Err(Error::NonFiniteMoment { eta: e });
            }
            offset = offset.max(e);
            eta.push(e);
        }
        let mut p0 = vec![0.0; m + 1];
        let mut p1 = vec![0.0; (m + 1) * p];
        let mut p2 = if second { vec![0.0; (m + 1) * p * p] } else { Vec::new() };
        for r in 0..m {
            let z = &self.obs_z[r * p..(r + 1) * p];
            let w = self.obs_kr[r] * (eta[r] - offset).exp();
            p0[r + 1] = p0[r] + w;
            for a in 0..p {
                p1[(r + 1) * p + a] = p1[r * p + a] + w * z[a];
            }
            if second {
                let (base, next) = (r * p * p, (r + 1) * p * p);
                for a in 0..p {
                    for b in 0..p {
                        p2[next + a * p + b] = p2[base + a * p + b] + w * z[a] * z[b];
                    }
                }
            }
        }
        Ok(Prefix { p0, p1, p2 })
    }

    fn zbar_at(&self, pre: &Prefix, e: &EventTerm) -> Result<(f64, DVector<f64>)> {
        let c = e.risk_len;
        let s0 = pre.p0[c];
        let total = pre.p0[self.obs_x.len()];
        if !(s0 > DENOM_EPS * total) || !s0.is_finite() {
            return Err(Error::SparseRegion { t: e.x });
        }
        let zbar = DVector::from_iterator(self.p, (0..self.p).map(|a| pre.p1[c * self.p + a] / s0));
        Ok((s0, zbar))
    }

    /// Per-subject summands `kt_i (a_i - w_i Zbar(X_i))`; the score is their sum over `n`.
    pub fn contributions(&self, beta: &DVector<f64>) -> Result<Vec<SubjectContribution>> {
        let pre = self.prefix(beta, false)?;
        self.events
            .iter()
            .map(|e| {
                let (_, zbar) = self.zbar_at(&pre, e)?;
                let value = DVector::from_iterator(self.p, (0..self.p).map(|a| e.kt * (e.a[a] - e.w * zbar[a])));
                Ok(SubjectContribution {
                    subject: e.subject,
                    value,
                })
            })
            .collect()
    }

    /// `(dU/dbeta, scale)` where `scale` is the matching raw second moment,
    /// a reference magnitude for judging singularity.
    pub fn jacobian(&self, beta: &DVector<f64>) -> Result<(DMatrix<f64>, f64)> {
        let p = self.p;
        let pre = self.prefix(beta, true)?;
        let mut jac = DMatrix::zeros(p, p);
        let mut scale = 0.0;
        for e in &self.events {
            let (s0, zbar) = self.zbar_at(&pre, e)?;
            let c = e.risk_len;
            let weight = e.kt * e.w;
            let mut diag_max: f64 = 0.0;
            for a in 0..p {
                for b in 0..p {
                    let second = pre.p2[c * p * p + a * p + b] / s0;
                    if a == b {
                        diag_max = diag_max.max(second.abs());
                    }
                    jac[(a, b)] -= weight * (second - zbar[a] * zbar[b]);
                }
            }
            scale += weight * diag_max;
        }
        let inv_n = 1.0 / self.n as f64;
        jac *= inv_n;
        let sym = (&jac + jac.transpose()) * 0.5;
        Ok((sym, scale * inv_n))
    }
}

impl ScoreSystem for LocalSystem {
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
        let pre = self.prefix(beta, false)?;
        let mut u = DVector::zeros(self.p);
        for e in &self.events {
            let (_, zbar) = self.zbar_at(&pre, e)?;
            for a in 0..self.p {
                u[a] += e.kt * (e.a[a] - e.w * zbar[a]);
            }
        }
        Ok(u / self.n as f64)
    }

    fn jacobian_scaled(&self, beta: &DVector<f64>) -> Result<(DMatrix<f64>, f64)> {
        self.jacobian(beta)
    }
}
