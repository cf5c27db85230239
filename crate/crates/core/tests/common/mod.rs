//! Shared test fixtures and brute-force reference implementations.
//!
//! The oracles below re-derive every quantity from the defining sums with
//! plain nested loops over subjects and observations and their own kernel,
//! sharing no code with the library beyond the data containers.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vcox::data::{BandwidthPair, Dataset, SubjectRecord};
use vcox::simulation::{calibrate_gamma, substream, ScenarioConfig, Simulator};

pub fn epan(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Product Epanechnikov kernel scaled by `h1 h2`.
pub fn kh(dt: f64, dr: f64, h1: f64, h2: f64) -> f64 {
    epan(dt / h1) * epan(dr / h2) / (h1 * h2)
}

fn z_of(subj: &SubjectRecord, k: usize) -> DVector<f64> {
    DVector::from_column_slice(subj.covariate(k))
}

/// `(S0, S1, S2)` at event time `t` by a double loop over `(j, k)`.
pub fn oracle_moments(
    data: &Dataset,
    s: f64,
    t: f64,
    beta: &DVector<f64>,
    h1: f64,
    h2: f64,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = data.dim();
    let n = data.n() as f64;
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(p);
    let mut s2 = DMatrix::zeros(p, p);
    for subj in data.subjects() {
        if subj.follow_up_time < t {
            continue;
        }
        for (k, &r) in subj.obs_times().iter().enumerate() {
            let z = z_of(subj, k);
            let w = kh(t - s, r - s, h1, h2) * beta.dot(&z).exp() / n;
            s0 += w;
            s1 += &z * w;
            s2 += &z * z.transpose() * w;
        }
    }
    (s0, s1, s2)
}

fn events(data: &Dataset) -> impl Iterator<Item = (usize, &SubjectRecord)> {
    let tau = data.tau();
    data.subjects()
        .iter()
        .enumerate()
        .filter(move |(_, s)| s.event && s.follow_up_time <= tau)
}

/// Per-subject score summands `c_i` (without `1/n`); `None` when a
/// contributing event has an empty local risk set.
pub fn oracle_contributions(
    data: &Dataset,
    s: f64,
    beta: &DVector<f64>,
    h1: f64,
    h2: f64,
) -> Option<Vec<DVector<f64>>> {
    let p = data.dim();
    let mut out = vec![DVector::zeros(p); data.n()];
    for (i, subj) in events(data) {
        let x = subj.follow_up_time;
        let (s0, s1, _) = oracle_moments(data, s, x, beta, h1, h2);
        for (k, &r) in subj.obs_times().iter().enumerate() {
            let w = kh(x - s, r - s, h1, h2);
            if w == 0.0 {
                continue;
            }
            if s0 <= 0.0 {
                return None;
            }
            out[i] += (z_of(subj, k) - &s1 / s0) * w;
        }
    }
    Some(out)
}

pub fn oracle_score(data: &Dataset, s: f64, beta: &DVector<f64>, h1: f64, h2: f64) -> Option<DVector<f64>> {
    let c = oracle_contributions(data, s, beta, h1, h2)?;
    let n = data.n() as f64;
    Some(c.into_iter().fold(DVector::zeros(data.dim()), |a, b| a + b) / n)
}

pub fn oracle_jacobian(data: &Dataset, s: f64, beta: &DVector<f64>, h1: f64, h2: f64) -> Option<DMatrix<f64>> {
    let p = data.dim();
    let n = data.n() as f64;
    let mut jac = DMatrix::zeros(p, p);
    for (_, subj) in events(data) {
        let x = subj.follow_up_time;
        let (s0, s1, s2) = oracle_moments(data, s, x, beta, h1, h2);
        for &r in subj.obs_times() {
            let w = kh(x - s, r - s, h1, h2);
            if w == 0.0 {
                continue;
            }
            if s0 <= 0.0 {
                return None;
            }
            let zb = &s1 / s0;
            jac -= (&s2 / s0 - &zb * zb.transpose()) * w;
        }
    }
    Some(jac / n)
}

pub fn oracle_meat(data: &Dataset, s: f64, beta: &DVector<f64>, h1: f64, h2: f64) -> Option<DMatrix<f64>> {
    let c = oracle_contributions(data, s, beta, h1, h2)?;
    let n = data.n() as f64;
    let p = data.dim();
    Some(c.iter().fold(DMatrix::zeros(p, p), |m, ci| m + ci * ci.transpose()) / (n * n))
}

/// Central finite-difference Jacobian of the oracle score.
pub fn numeric_jacobian(data: &Dataset, s: f64, beta: &DVector<f64>, h1: f64, h2: f64, step: f64) -> DMatrix<f64> {
    let p = data.dim();
    let mut jac = DMatrix::zeros(p, p);
    for b in 0..p {
        let mut up = beta.clone();
        let mut dn = beta.clone();
        up[b] += step;
        dn[b] -= step;
        let d =
            (oracle_score(data, s, &up, h1, h2).unwrap() - oracle_score(data, s, &dn, h1, h2).unwrap()) / (2.0 * step);
        jac.set_column(b, &d);
    }
    jac
}

/// Damped Newton on the oracle score with a finite-difference Jacobian.
pub fn dense_newton(data: &Dataset, s: f64, h1: f64, h2: f64, tol: f64) -> Option<DVector<f64>> {
    let mut beta = DVector::zeros(data.dim());
    let norm = |v: &DVector<f64>| v.amax();
    let mut u = oracle_score(data, s, &beta, h1, h2)?;
    for _ in 0..200 {
        if norm(&u) <= tol {
            return Some(beta);
        }
        let jac = numeric_jacobian(data, s, &beta, h1, h2, 1e-6);
        let step = jac.lu().solve(&u)?;
        let mut t = 1.0;
        loop {
            let cand = &beta - &step * t;
            if let Some(uc) = oracle_score(data, s, &cand, h1, h2) {
                if uc.norm() < u.norm() || t < 1e-6 {
                    beta = cand;
                    u = uc;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return None;
            }
        }
    }
    (norm(&u) <= tol).then_some(beta)
}

/// A random micro-dataset: `n <= 10` subjects, `M_i <= 4` visits, `p` in {1, 2}.
pub struct Micro {
    pub data: Dataset,
    pub s: f64,
    pub h: BandwidthPair,
    pub beta: DVector<f64>,
}

pub fn micro_dataset(seed: u64) -> Micro {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=10);
    let p = rng.random_range(1..=2);
    let h1 = rng.random_range(0.25..0.45);
    let h2 = rng.random_range(0.25..0.45);
    let hmax = f64::max(h1, h2);
    let s = rng.random_range(hmax..1.0 - hmax);
    loop {
        let subjects: Vec<SubjectRecord> = (0..n)
            .map(|i| {
                let x: f64 = rng.random_range(0.05..1.0);
                let event = rng.random_bool(0.7);
                let m = rng.random_range(1..=4);
                let mut times: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
                times.sort_by(f64::total_cmp);
                times.dedup();
                let z: Vec<f64> = (0..times.len() * p).map(|_| rng.random_range(-1.5..1.5)).collect();
                SubjectRecord::from_flat(format!("m{i}"), x, event, times, z, p).unwrap()
            })
            .collect();
        if let Ok(data) = Dataset::new(subjects, 1.0, p) {
            let beta = DVector::from_fn(p, |_, _| rng.random_range(-0.8..0.8));
            return Micro {
                data,
                s,
                h: BandwidthPair::new(h1, h2).unwrap(),
                beta,
            };
        }
    }
}

type Row = (&'static str, f64, bool, &'static [(f64, f64)]);

/// Five subjects, one covariate, every event inside the window at `s = 0.5`
/// with `h1 = h2 = 0.25`.
pub fn five_subject() -> Dataset {
    let rows: [Row; 5] = [
        ("a", 0.42, true, &[(0.30, 0.8), (0.45, 1.1), (0.60, 0.2)]),
        ("b", 0.55, true, &[(0.35, -0.4), (0.50, 0.3)]),
        ("c", 0.61, false, &[(0.40, 1.5), (0.58, 0.9)]),
        ("d", 0.68, true, &[(0.52, -1.0), (0.66, -0.2), (0.71, 0.4)]),
        ("e", 0.90, false, &[(0.33, 0.0), (0.47, -0.7), (0.62, 1.2)]),
    ];
    let subjects = rows
        .iter()
        .map(|(id, x, d, obs)| {
            SubjectRecord::new(
                *id,
                *x,
                *d,
                obs.iter().map(|o| o.0).collect(),
                obs.iter().map(|o| vec![o.1]).collect(),
                1,
            )
            .unwrap()
        })
        .collect();
    Dataset::new(subjects, 1.0, 1).unwrap()
}

/// `p = 2` variant of [`five_subject`] with a second, differently ordered covariate.
pub fn five_subject_p2() -> Dataset {
    let base = five_subject();
    let subjects = base
        .subjects()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let rows = (0..s.n_obs())
                .map(|k| {
                    let z = s.covariate(k)[0];
                    vec![z, ((i * 3 + k) % 5) as f64 * 0.4 - 0.8]
                })
                .collect();
            SubjectRecord::new(s.id.clone(), s.follow_up_time, s.event, s.obs_times().to_vec(), rows, 2).unwrap()
        })
        .collect();
    Dataset::new(subjects, 1.0, 2).unwrap()
}

/// Scenario dataset with the default design, `gamma` calibrated once per `(n, seed)`.
pub fn simulated(n: usize, seed: u64) -> Dataset {
    let cfg = ScenarioConfig {
        n,
        seed,
        ..Default::default()
    };
    let gamma = calibrate_gamma(&cfg, 20_000).unwrap();
    Simulator::new(cfg)
        .unwrap()
        .dataset(gamma, &mut substream(seed, 1))
        .unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    a.len() == b.len() && max_abs_diff(a, b) <= tol * scale
}
