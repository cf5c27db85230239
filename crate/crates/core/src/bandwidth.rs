//! Bandwidth selection by separately estimated squared bias and split-half
//! variance, summed over equally spaced evaluation times.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{linspace, BandwidthPair, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{fit_curve, solve_beta, SolverConfig};
use crate::kernels::KernelKind;

/// Maximum number of split redraws when every candidate fails on a split.
pub const MAX_SPLIT_REDRAWS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthGrid {
    pub pairs: Vec<BandwidthPair>,
    pub eval_times: Vec<f64>,
}

impl BandwidthGrid {
    /// A single pair (trivial selection) or at least four candidates.
    pub fn new(pairs: Vec<BandwidthPair>, eval_times: Vec<f64>) -> Result<Self> {
        if pairs.is_empty() || (pairs.len() > 1 && pairs.len() < 4) {
            return Err(Error::DegenerateGrid(format!(
                "{} candidate pairs; need one or at least four",
                pairs.len()
            )));
        }
        if eval_times.is_empty() {
            return Err(Error::DegenerateGrid("no evaluation times".into()));
        }
        Ok(Self { pairs, eval_times })
    }

    /// All pairs from per-axis candidate values, evaluated at `n_eval` points of
    /// the common interior `[h_max, tau - h_max]`.
    pub fn from_axes(h1s: &[f64], h2s: &[f64], equal: bool, tau: f64, n_eval: usize) -> Result<Self> {
        let pairs: Vec<BandwidthPair> = if equal {
            h1s.iter().map(|&h| BandwidthPair::new(h, h)).collect::<Result<_>>()?
        } else {
            h1s.iter()
                .flat_map(|&a| h2s.iter().map(move |&b| BandwidthPair::new(a, b)))
                .collect::<Result<_>>()?
        };
        let h_max = pairs.iter().map(|p| p.h()).fold(0.0, f64::max);
        if h_max >= tau / 2.0 {
            return Err(Error::DegenerateGrid(format!(
                "largest bandwidth {h_max} leaves no interior on [0, {tau}]"
            )));
        }
        Self::new(pairs, linspace(h_max, tau - h_max, n_eval))
    }

    /// Rate grid `h = n^{-a}` for each exponent.
    pub fn from_rates(n: usize, exps1: &[f64], exps2: &[f64], tau: f64, n_eval: usize) -> Result<Self> {
        let to_h = |e: &[f64]| e.iter().map(|a| (n as f64).powf(-a)).collect::<Vec<_>>();
        Self::from_axes(&to_h(exps1), &to_h(exps2), false, tau, n_eval)
    }

    /// Default grid: `per_axis` log-spaced values from `9 IQR n^{-1/2}` to
    /// `9 IQR n^{-1/6}` of the pooled observation times, the upper end capped
    /// at `tau / 4` so the evaluation interior stays nonempty.
    pub fn default_for(data: &Dataset, per_axis: usize, equal: bool, n_eval: usize) -> Result<Self> {
        let mut times = data.pooled_obs_times();
        if times.len() < 4 {
            return Err(Error::DegenerateGrid("too few observation times".into()));
        }
        times.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (times.len() - 1) as f64;
            let (lo, frac) = (pos.floor() as usize, pos.fract());
            let hi = (lo + 1).min(times.len() - 1);
            times[lo] + frac * (times[hi] - times[lo])
        };
        let iqr = q(0.75) - q(0.25);
        let n = data.n() as f64;
        let hi = (9.0 * iqr * n.powf(-1.0 / 6.0)).min(data.tau() / 4.0);
        let mut lo = 9.0 * iqr * n.powf(-0.5);
        if !(lo < hi) {
            lo = hi / 4.0;
        }
        if !(lo > 0.0) {
            return Err(Error::DegenerateGrid("observation times have zero spread".into()));
        }
        let axis = log_space(lo, hi, per_axis.max(1));
        Self::from_axes(&axis, &axis, equal, data.tau(), n_eval)
    }

    pub fn h_max(&self) -> f64 {
        self.pairs.iter().map(|p| p.h()).fold(0.0, f64::max)
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

fn is_equal_pair(p: &BandwidthPair) -> bool {
    (p.h1 - p.h2).abs() <= 1e-12 * p.h1.max(p.h2)
}

/// Slopes of the least-squares regression (with intercept) of the estimates on
/// `b = (h1^2, h1 h2, h2^2)`, one column per coefficient component.
///
/// When every pair has `h1 = h2` the three regressors coincide; the common
/// slope is then reported in the first row and the others are zero, which
/// leaves `C'b` unchanged.
pub fn bias_slope(estimates: &[(BandwidthPair, DVector<f64>)]) -> Result<DMatrix<f64>> {
    if estimates.len() < 4 {
        return Err(Error::DegenerateGrid(format!(
            "{} converged pairs; the bias regression needs at least four",
            estimates.len()
        )));
    }
    let p = estimates[0].1.len();
    let collapsed = estimates.iter().all(|(h, _)| is_equal_pair(h));
    let regressors = |h: &BandwidthPair| -> Vec<f64> {
        if collapsed {
            vec![h.h1 * h.h1]
        } else {
            vec![h.h1 * h.h1, h.h1 * h.h2, h.h2 * h.h2]
        }
    };
    let k = if collapsed { 1 } else { 3 };
    let rows = estimates.len();
    let mut design = DMatrix::zeros(rows, k + 1);
    for (r, (h, _)) in estimates.iter().enumerate() {
        design[(r, 0)] = 1.0;
        for (c, v) in regressors(h).into_iter().enumerate() {
            design[(r, c + 1)] = v;
        }
    }
    // Column equilibration keeps the rank test scale-free.
    let scales: Vec<f64> = (0..=k)
        .map(|c| design.column(c).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .collect();
    if scales.contains(&0.0) {
        return Err(Error::DegenerateGrid("a regressor is identically zero".into()));
    }
    for (c, s) in scales.iter().enumerate() {
        design.column_mut(c).unscale_mut(*s);
    }
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if sv.min() <= 1e-10 * smax {
        return Err(Error::DegenerateGrid("bandwidth regressors are collinear".into()));
    }
    let response = DMatrix::from_fn(rows, p, |r, c| estimates[r].1[c]);
    let coef = svd
        .solve(&response, 0.0)
        .map_err(|e| Error::DegenerateGrid(e.to_string()))?;
    let mut slopes = DMatrix::zeros(3, p);
    for c in 0..k {
        for comp in 0..p {
            slopes[(c, comp)] = coef[(c + 1, comp)] / scales[c + 1];
        }
    }
    Ok(slopes)
}

/// `C'b` per component.
pub fn bias_term(slopes: &DMatrix<f64>, h: &BandwidthPair) -> DVector<f64> {
    let b = DVector::from_vec(vec![h.h1 * h.h1, h.h1 * h.h2, h.h2 * h.h2]);
    slopes.transpose() * b
}

/// `(b1 - b2)^2 / 4` componentwise.
pub fn half_variance(b1: &DVector<f64>, b2: &DVector<f64>) -> DVector<f64> {
    (b1 - b2).map(|d| d * d / 4.0)
}

/// Random halving of the subjects.
pub fn split_halves<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> Result<(Dataset, Dataset)> {
    let mut idx: Vec<usize> = (0..data.n()).collect();
    idx.shuffle(rng);
    let (a, b) = idx.split_at(data.n() / 2);
    let half = |ix: &[usize]| {
        let mut ix = ix.to_vec();
        ix.sort_unstable();
        data.subset(&ix).map_err(|e| Error::SplitFailure(e.to_string()))
    };
    Ok((half(a)?, half(b)?))
}

/// Split-half variance estimate of the coefficient at `t`.
pub fn split_half_variance<R: Rng + ?Sized>(
    data: &Dataset,
    h: &BandwidthPair,
    t: f64,
    rng: &mut R,
    cfg: &SolverConfig,
    kind: KernelKind,
) -> Result<DVector<f64>> {
    let (first, second) = split_halves(data, rng)?;
    let init = DVector::zeros(data.dim());
    let fit = |d: &Dataset| {
        solve_beta(d, t, h, &init, cfg, kind)
            .map(|(b, _)| b)
            .map_err(|e| Error::SplitFailure(e.to_string()))
    };
    Ok(half_variance(&fit(&first)?, &fit(&second)?))
}

/// Per-candidate integrated MSE.
#[derive(Debug, Clone, Serialize)]
pub struct MseRow {
    pub h1: f64,
    pub h2: f64,
    /// `None` when the candidate failed at some evaluation time.
    pub imse: Option<f64>,
    pub bias_sq: Option<f64>,
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandwidthSelection {
    pub chosen: BandwidthPair,
    pub table: Vec<MseRow>,
    pub split_draws: usize,
}

/// Integrated MSE of each candidate from full-data estimates and split-half
/// variances, both indexed `[pair][time]`.
pub fn imse_table(
    grid: &BandwidthGrid,
    full: &[Vec<Option<DVector<f64>>>],
    variance: &[Vec<Option<DVector<f64>>>],
) -> Result<Vec<MseRow>> {
    let n_pairs = grid.pairs.len();
    let mut bias_sq = vec![Some(0.0); n_pairs];
    let mut var_sum = vec![Some(0.0); n_pairs];
    for (ti, _) in grid.eval_times.iter().enumerate() {
        let converged: Vec<(BandwidthPair, DVector<f64>)> = (0..n_pairs)
            .filter_map(|k| full[k][ti].clone().map(|b| (grid.pairs[k], b)))
            .collect();
        let slopes = bias_slope(&converged)?;
        for k in 0..n_pairs {
            match (&full[k][ti], &variance[k][ti]) {
                (Some(_), Some(v)) => {
                    let bias = bias_term(&slopes, &grid.pairs[k]);
                    if let (Some(b), Some(s)) = (bias_sq[k].as_mut(), var_sum[k].as_mut()) {
                        *b += bias.iter().map(|x| x * x).sum::<f64>();
                        *s += v.sum();
                    }
                }
                _ => {
                    bias_sq[k] = None;
                    var_sum[k] = None;
                }
            }
        }
    }
    Ok(grid
        .pairs
        .iter()
        .enumerate()
        .map(|(k, h)| MseRow {
            h1: h.h1,
            h2: h.h2,
            imse: bias_sq[k].zip(var_sum[k]).map(|(b, v)| b + v),
            bias_sq: bias_sq[k],
            variance: var_sum[k],
        })
        .collect())
}

/// Smallest integrated MSE; ties go to the larger `h1 h2`.
pub fn argmin_imse(rows: &[MseRow]) -> Option<usize> {
    rows.iter()
        .enumerate()
        .filter_map(|(k, r)| r.imse.filter(|v| v.is_finite()).map(|v| (k, v, r.h1 * r.h2)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(b.2.total_cmp(&a.2)))
        .map(|(k, _, _)| k)
}

fn fit_at_times(
    data: &Dataset,
    h: &BandwidthPair,
    times: &[f64],
    cfg: &SolverConfig,
    kind: KernelKind,
) -> Vec<Option<DVector<f64>>> {
    match fit_curve(data, times, h, cfg, kind) {
        Ok(curve) => curve
            .beta
            .into_iter()
            .zip(curve.converged)
            .map(|(b, ok)| ok.then_some(b))
            .collect(),
        Err(_) => vec![None; times.len()],
    }
}

/// Picks the candidate minimizing estimated integrated MSE, with the
/// variance taken from a single random split.
pub fn select_bandwidth<R: Rng + ?Sized>(
    data: &Dataset,
    grid: &BandwidthGrid,
    rng: &mut R,
    cfg: &SolverConfig,
    kind: KernelKind,
) -> Result<BandwidthSelection> {
    select_bandwidth_with_splits(data, grid, rng, cfg, kind, 1)
}

/// Split-half variances of every candidate on one random split, `[pair][time]`.
fn split_variances<R: Rng + ?Sized>(
    data: &Dataset,
    grid: &BandwidthGrid,
    rng: &mut R,
    cfg: &SolverConfig,
    kind: KernelKind,
) -> Result<Vec<Vec<Option<DVector<f64>>>>> {
    let (first, second) = split_halves(data, rng)?;
    let times = &grid.eval_times;
    Ok(grid
        .pairs
        .par_iter()
        .map(|h| {
            let a = fit_at_times(&first, h, times, cfg, kind);
            let b = fit_at_times(&second, h, times, cfg, kind);
            a.into_iter()
                .zip(b)
                .map(|(x, y)| Some(half_variance(&x?, &y?)))
                .collect()
        })
        .collect())
}

/// As [`select_bandwidth`], averaging the split-half variance over `splits`
/// independent random splits.
pub fn select_bandwidth_with_splits<R: Rng + ?Sized>(
    data: &Dataset,
    grid: &BandwidthGrid,
    rng: &mut R,
    cfg: &SolverConfig,
    kind: KernelKind,
    splits: usize,
) -> Result<BandwidthSelection> {
    if splits == 0 {
        return Err(Error::Config("at least one split is required".into()));
    }
    if grid.pairs.len() == 1 {
        let h = grid.pairs[0];
        return Ok(BandwidthSelection {
            chosen: h,
            table: vec![MseRow {
                h1: h.h1,
                h2: h.h2,
                imse: None,
                bias_sq: None,
                variance: None,
            }],
            split_draws: 0,
        });
    }
    let times = &grid.eval_times;
    let full: Vec<Vec<Option<DVector<f64>>>> = grid
        .pairs
        .par_iter()
        .map(|h| fit_at_times(data, h, times, cfg, kind))
        .collect();

    let mut last_err = None;
    let mut draws = 0;
    for _ in 0..MAX_SPLIT_REDRAWS {
        let mut sum: Option<Vec<Vec<Option<DVector<f64>>>>> = None;
        let mut failed = false;
        for _ in 0..splits {
            draws += 1;
            let v = match split_variances(data, grid, rng, cfg, kind) {
                Ok(v) => v,
                Err(e) => {
                    last_err = Some(e);
                    failed = true;
                    break;
                }
            };
            sum = Some(match sum {
                None => v,
                Some(acc) => acc
                    .into_iter()
                    .zip(v)
                    .map(|(ra, rb)| ra.into_iter().zip(rb).map(|(a, b)| Some(a? + b?)).collect())
                    .collect(),
            });
        }
        if failed {
            continue;
        }
        let scale = 1.0 / splits as f64;
        let variance: Vec<Vec<Option<DVector<f64>>>> = sum
            .expect("at least one split")
            .into_iter()
            .map(|row| row.into_iter().map(|v| v.map(|v| v * scale)).collect())
            .collect();
        let table = match imse_table(grid, &full, &variance) {
            Ok(t) => t,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        if let Some(k) = argmin_imse(&table) {
            return Ok(BandwidthSelection {
                chosen: grid.pairs[k],
                table,
                split_draws: draws,
            });
        }
        last_err = Some(Error::SelectionFailure("every candidate failed on this split".into()));
    }
    Err(Error::SelectionFailure(format!(
        "no feasible candidate after {MAX_SPLIT_REDRAWS} attempts: {}",
        last_err.map_or_else(String::new, |e| e.to_string())
    )))
}
