//! Sandwich variance, pointwise intervals and multiplier-bootstrap
//! simultaneous confidence bands.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{BandwidthPair, CoefficientCurve, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{LocalSystem, SubjectContribution};
use crate::kernels::KernelKind;

/// Law of the bootstrap multipliers; every variant has mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierKind {
    /// `Exp(1) - 1`.
    #[default]
    CenteredExponential,
    Rademacher,
    StandardNormal,
}

impl MultiplierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MultiplierKind::CenteredExponential => "centered-exponential",
            MultiplierKind::Rademacher => "rademacher",
            MultiplierKind::StandardNormal => "standard-normal",
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            MultiplierKind::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            MultiplierKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            MultiplierKind::StandardNormal => StandardNormal.sample(rng),
        }
    }
}

impl fmt::Display for MultiplierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MultiplierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "centered-exponential" | "exponential" | "exp" => Ok(MultiplierKind::CenteredExponential),
            "rademacher" => Ok(MultiplierKind::Rademacher),
            "standard-normal" | "normal" | "gaussian" => Ok(MultiplierKind::StandardNormal),
            other => Err(Error::Config(format!("unknown multiplier '{other}'"))),
        }
    }
}

/// Band weighting `w(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Inverse of the estimated standard error of `l'beta(s)`.
    #[default]
    InverseSe,
    Constant,
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inverse-se" => Ok(WeightMode::InverseSe),
            "constant" => Ok(WeightMode::Constant),
            other => Err(Error::Config(format!("unknown weight mode '{other}'"))),
        }
    }
}

/// `n` i.i.d. multipliers.
pub fn draw_multipliers<R: Rng + ?Sized>(kind: MultiplierKind, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| kind.sample(rng)).collect()
}

fn outer_sum(contributions: &[SubjectContribution], p: usize, n: usize) -> DMatrix<f64> {
    let mut meat = DMatrix::zeros(p, p);
    for c in contributions {
        meat.ger(1.0, &c.value, &c.value, 1.0);
    }
    meat / (n as f64 * n as f64)
}

/// `n^-2 sum_i c_i c_i'` with `c_i` subject `i`'s summand of the score.
pub fn meat_matrix(
    data: &Dataset,
    s: f64,
    beta_hat: &DVector<f64>,
    h: &BandwidthPair,
    kind: KernelKind,
) -> Result<DMatrix<f64>> {
    let system = LocalSystem::new(data, s, h, kind)?;
    let contributions = system.contributions(beta_hat)?;
    Ok(outer_sum(&contributions, data.dim(), data.n()))
}

/// `J^-1 Sigma J^-T`.
pub fn sandwich_variance(jac: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = jac
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularSystem("sandwich bread is not invertible".into()))?;
    let v = &inv * sigma * inv.transpose();
    Ok((&v + v.transpose()) * 0.5)
}

/// The matrix inverted in the band statistic, `-dU/dbeta`.
pub fn scb_information(
    data: &Dataset,
    s: f64,
    beta_hat: &DVector<f64>,
    h: &BandwidthPair,
    kind: KernelKind,
) -> Result<DMatrix<f64>> {
    let system = LocalSystem::new(data, s, h, kind)?;
    Ok(-system.jacobian(beta_hat)?.0)
}

/// `n^-1 sum_i xi_i c_i`.
pub fn perturbed_equation(
    data: &Dataset,
    s: f64,
    beta_hat: &DVector<f64>,
    h: &BandwidthPair,
    xi: &[f64],
    kind: KernelKind,
) -> Result<DVector<f64>> {
    if xi.len() != data.n() {
        return Err(Error::Config(format!(
            "multiplier vector has length {}, expected {}",
            xi.len(),
            data.n()
        )));
    }
    let system = LocalSystem::new(data, s, h, kind)?;
    let contributions = system.contributions(beta_hat)?;
    let mut u = DVector::zeros(data.dim());
    for c in &contributions {
        u.axpy(xi[c.subject], &c.value, 1.0);
    }
    Ok(u / data.n() as f64)
}

/// Fills the sandwich covariance at every converged point of `curve`.
pub fn attach_sandwich(data: &Dataset, curve: &mut CoefficientCurve, kind: KernelKind) -> Result<()> {
    let h = curve.bandwidths;
    for j in 0..curve.len() {
        if !curve.converged[j] {
            continue;
        }
        let system = LocalSystem::new(data, curve.grid[j], &h, kind)?;
        let beta = &curve.beta[j];
        let (jac, _) = system.jacobian(beta)?;
        let meat = outer_sum(&system.contributions(beta)?, data.dim(), data.n());
        curve.cov[j] = Some(sandwich_variance(&jac, &meat)?);
    }
    Ok(())
}

/// `z_{1 - alpha/2}`.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseInterval {
    pub s: f64,
    pub estimate: DVector<f64>,
    pub se: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// Normal-approximation intervals `beta_j(s) +- z_{1-alpha/2} SE_j(s)` at
/// points that converged and carry a covariance.
pub fn pointwise_ci(curve: &CoefficientCurve, alpha: f64) -> Result<Vec<Option<PointwiseInterval>>> {
    check_alpha(alpha)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok((0..curve.len())
        .map(|j| {
            let cov = curve.cov[j].as_ref().filter(|_| curve.converged[j])?;
            let est = curve.beta[j].clone();
            let se = DVector::from_iterator(est.len(), (0..est.len()).map(|a| cov[(a, a)].max(0.0).sqrt()));
            Some(PointwiseInterval {
                s: curve.grid[j],
                lower: &est - &se * z,
                upper: &est + &se * z,
                estimate: est,
                se,
            })
        })
        .collect())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

/// Empirical `1 - alpha` quantile: the order statistic at 1-based index
/// `ceil((1 - alpha) B)`.
pub fn empirical_quantile(values: &[f64], alpha: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let idx = (((1.0 - alpha) * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    sorted[idx - 1]
}

/// Cached per-point loadings for the band statistic.
///
/// At grid point `j`, `l' I_j^-1 U~_j = sum_i xi_i g_ij` with
/// `g_ij = l' I_j^-1 c_ij / n`, so each bootstrap draw costs one sparse
/// dot product per grid point and no re-solving.
#[derive(Debug, Clone)]
pub struct ScbPlan {
    pub grid: Vec<f64>,
    /// `l' beta(s_j)`.
    pub estimate: Vec<f64>,
    /// Standard error of `l' beta(s_j)`.
    pub se: Vec<f64>,
    pub weight: Vec<f64>,
    loadings: Vec<Vec<(usize, f64)>>,
    n: usize,
}

impl ScbPlan {
    pub fn new(
        data: &Dataset,
        curve: &CoefficientCurve,
        contrast: &DVector<f64>,
        weight_mode: WeightMode,
        kind: KernelKind,
    ) -> Result<Self> {
        if contrast.len() != data.dim() {
            return Err(Error::Config(format!(
                "contrast has length {}, expected {}",
                contrast.len(),
                data.dim()
            )));
        }
        if let Some(j) = curve.converged.iter().position(|c| !c) {
            return Err(Error::Config(format!(
                "curve did not converge at s = {}",
                curve.grid[j]
            )));
        }
        let h = curve.bandwidths;
        let n = data.n();
        let mut plan = ScbPlan {
            grid: curve.grid.clone(),
            estimate: Vec::with_capacity(curve.len()),
            se: Vec::with_capacity(curve.len()),
            weight: Vec::with_capacity(curve.len()),
            loadings: Vec::with_capacity(curve.len()),
            n,
        };
        for (j, &s) in curve.grid.iter().enumerate() {
            let beta = &curve.beta[j];
            let system = LocalSystem::new(data, s, &h, kind)?;
            let (jac, scale) = system.jacobian(beta)?;
            let info = -jac;
            let singular = || Error::SingularSystem(format!("information matrix singular at s = {s}"));
            let sv = info.clone().svd(false, false).singular_values;
            let smin = sv.iter().fold(f64::INFINITY, |m, x| m.min(*x));
            if !(smin > 1e-10 * scale.max(sv.max())) {
                return Err(singular());
            }
            let inv = info.try_inverse().ok_or_else(singular)?;
            let direction = inv.transpose() * contrast;
            let row: Vec<(usize, f64)> = system
                .contributions(beta)?
                .iter()
                .map(|c| (c.subject, direction.dot(&c.value) / n as f64))
                .filter(|(_, g)| *g != 0.0)
                .collect();
            let se = row.iter().map(|(_, g)| g * g).sum::<f64>().sqrt();
            let weight = match weight_mode {
                WeightMode::InverseSe => {
                    if !(se > 0.0) {
                        return Err(Error::SingularSystem(format!("zero standard error at s = {s}")));
                    }
                    1.0 / se
                }
                WeightMode::Constant => 1.0,
            };
            plan.estimate.push(contrast.dot(beta));
            plan.se.push(se);
            plan.weight.push(weight);
            plan.loadings.push(row);
        }
        Ok(plan)
    }

    /// `max_j w(s_j) |sum_i xi_i g_ij|`.
    pub fn sup_statistic(&self, xi: &[f64]) -> f64 {
        debug_assert_eq!(xi.len(), self.n);
        self.loadings
            .iter()
            .zip(&self.weight)
            .map(|(row, w)| w * row.iter().map(|(i, g)| xi[*i] * g).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Sup statistics for `b` draws; draw `k` uses the ChaCha stream `k` of `seed`.
    pub fn bootstrap(&self, b: usize, multiplier: MultiplierKind, seed: u64) -> Vec<f64> {
        (0..b)
            .into_par_iter()
            .map_init(
                || vec![0.0; self.n],
                |xi, k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(k as u64);
                    for v in xi.iter_mut() {
                        *v = multiplier.sample(&mut rng);
                    }
                    self.sup_statistic(xi)
                },
            )
            .collect()
    }

    /// `l'beta(s_j) -+ c / w(s_j)`.
    pub fn band(&self, c_alpha: f64) -> (Vec<f64>, Vec<f64>) {
        self.estimate
            .iter()
            .zip(&self.weight)
            .map(|(e, w)| (e - c_alpha / w, e + c_alpha / w))
            .unzip()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScbResult {
    pub alpha: f64,
    pub c_alpha: f64,
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub weight: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_boot: usize,
    pub multiplier: MultiplierKind,
    pub contrast: Vec<f64>,
    pub seed: u64,
}

pub const MIN_BOOTSTRAP: usize = 100;

/// Simultaneous band for `l'beta(s)` over the curve's grid.
#[allow(clippy::too_many_arguments)]
pub fn scb(
    data: &Dataset,
    curve: &CoefficientCurve,
    contrast: &DVector<f64>,
    alpha: f64,
    n_boot: usize,
    multiplier: MultiplierKind,
    weight_mode: WeightMode,
    seed: u64,
    kind: KernelKind,
) -> Result<ScbResult> {
    check_alpha(alpha)?;
    if n_boot < MIN_BOOTSTRAP {
        return Err(Error::Config(format!(
            "B = {n_boot} bootstrap draws; at least {MIN_BOOTSTRAP} required"
        )));
    }
    let plan = ScbPlan::new(data, curve, contrast, weight_mode, kind)?;
    let stats = plan.bootstrap(n_boot, multiplier, seed);
    let c_alpha = empirical_quantile(&stats, alpha);
    let (lower, upper) = plan.band(c_alpha);
    Ok(ScbResult {
        alpha,
        c_alpha,
        grid: plan.grid,
        estimate: plan.estimate,
        se: plan.se,
        weight: plan.weight,
        lower,
        upper,
        n_boot,
        multiplier,
        contrast: contrast.iter().copied().collect(),
        seed,
    })
}

/// Unit contrast selecting component `j`.
pub fn unit_contrast(p: usize, j: usize) -> Result<DVector<f64>> {
    if j >= p {
        return Err(Error::Config(format!(
            "contrast component {j} out of range for p = {p}"
        )));
    }
    let mut l = DVector::zeros(p);
    l[j] = 1.0;
    Ok(l)
}
