//! Generative pieces of the simulation: covariate paths, hazards, failure
//! times and observation schedules on `[0, 1]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::quadrature::QuadratureRule;

/// Number of constant pieces of the covariate path on `[0, 1)`.
pub const N_PIECES: usize = 20;

/// Bisection tolerance in time when inverting the cumulative hazard.
pub const FAILURE_TIME_TOL: f64 = 1e-10;

/// True coefficient function.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Beta0 {
    /// `0.5 sin(2 pi t)`.
    #[default]
    Sin,
    /// `3 (0.5 - t)^2 + 0.25`.
    Quad,
    /// `exp(-2t - 0.5)`.
    ExpDecay,
    /// `0`, for sanity checks.
    Zero,
    /// A constant, for consistency checks.
    Constant(f64),
}

impl Beta0 {
    #[inline]
    pub fn value(self, t: f64) -> f64 {
        match self {
            Beta0::Sin => 0.5 * (2.0 * PI * t).sin(),
            Beta0::Quad => 3.0 * (0.5 - t).powi(2) + 0.25,
            Beta0::ExpDecay => (-2.0 * t - 0.5).exp(),
            Beta0::Zero => 0.0,
            Beta0::Constant(c) => c,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sin" => Some(Beta0::Sin),
            "quad" => Some(Beta0::Quad),
            "exp-decay" => Some(Beta0::ExpDecay),
            "zero" => Some(Beta0::Zero),
            other => other
                .strip_prefix("const:")
                .and_then(|v| v.parse().ok())
                .map(Beta0::Constant),
        }
    }
}

/// Baseline hazard `intercept + slope t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub intercept: f64,
    pub slope: f64,
}

impl Default for BaselineHazard {
    fn default() -> Self {
        Self {
            intercept: 2.0,
            slope: 0.1,
        }
    }
}

impl BaselineHazard {
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }
}

/// Piecewise-constant covariate path: `Z(t) = z_i` on `[(i-1)/20, i/20)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePath {
    pub levels: [f64; N_PIECES],
}

impl CovariatePath {
    pub fn constant(z: f64) -> Self {
        Self { levels: [z; N_PIECES] }
    }

    #[inline]
    pub fn piece(t: f64) -> usize {
        ((t * N_PIECES as f64).floor().max(0.0) as usize).min(N_PIECES - 1)
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        self.levels[Self::piece(t)]
    }
}

/// Samples covariate paths from the discretized Gaussian process with mean
/// `-1 - 2((i-1)/20 - 1)^2` and covariance `exp(-|i - j| / 20)`.
#[derive(Debug, Clone)]
pub struct PathSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl Default for PathSampler {
    fn default() -> Self {
        Self::new()
    }
}

impl PathSampler {
    pub fn new() -> Self {
        let m = N_PIECES as f64;
        let mean = DVector::from_fn(N_PIECES, |i, _| -1.0 - 2.0 * (i as f64 / m - 1.0).powi(2));
        let cov = DMatrix::from_fn(N_PIECES, N_PIECES, |i, j| (-(i as f64 - j as f64).abs() / m).exp());
        let factor = cov
            .cholesky()
            .expect("exponential covariance on a grid is positive definite")
            .unpack();
        Self { mean, factor }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CovariatePath {
        let e = DVector::from_fn(N_PIECES, |_, _| StandardNormal.sample(rng));
        let z = &self.mean + &self.factor * e;
        let mut levels = [0.0; N_PIECES];
        levels.copy_from_slice(z.as_slice());
        CovariatePath { levels }
    }
}

/// Cumulative hazard of one subject, tabulated at the piece boundaries.
///
/// Within a piece the integrand `lambda0(v) exp(beta0(v) z)` is smooth and is
/// integrated with the supplied Gauss-Legendre rule.
#[derive(Debug, Clone)]
pub struct HazardProfile<'a> {
    path: &'a CovariatePath,
    beta0: Beta0,
    lambda0: BaselineHazard,
    rule: &'a QuadratureRule,
    cumulative: [f64; N_PIECES + 1],
}

impl<'a> HazardProfile<'a> {
    pub fn new(path: &'a CovariatePath, beta0: Beta0, lambda0: BaselineHazard, rule: &'a QuadratureRule) -> Self {
        let mut profile = Self {
            path,
            beta0,
            lambda0,
            rule,
            cumulative: [0.0; N_PIECES + 1],
        };
        for i in 0..N_PIECES {
            let a = i as f64 / N_PIECES as f64;
            let b = (i + 1) as f64 / N_PIECES as f64;
            profile.cumulative[i + 1] = profile.cumulative[i] + profile.piece_integral(i, a, b);
        }
        profile
    }

    fn piece_integral(&self, i: usize, a: f64, b: f64) -> f64 {
        let z = self.path.levels[i];
        self.rule
            .integrate(a, b, |v| self.lambda0.value(v) * (self.beta0.value(v) * z).exp())
    }

    /// Hazard `lambda0(t) exp(beta0(t) Z(t))`.
    pub fn hazard(&self, t: f64) -> f64 {
        self.lambda0.value(t) * (self.beta0.value(t) * self.path.at(t)).exp()
    }

    /// `Lambda(t)` for `t` in `[0, 1]`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        if t >= 1.0 {
            return self.cumulative[N_PIECES];
        }
        let i = CovariatePath::piece(t);
        let a = i as f64 / N_PIECES as f64;
        self.cumulative[i] + self.piece_integral(i, a, t)
    }

    pub fn total(&self) -> f64 {
        self.cumulative[N_PIECES]
    }

    /// Solves `Lambda(T) = target` by bisection inside the bracketing piece.
    pub fn invert(&self, target: f64) -> FailureTime {
        if target <= 0.0 {
            return FailureTime::At(0.0);
        }
        if self.total() < target {
            return FailureTime::BeyondHorizon;
        }
        let i = self.cumulative[1..].partition_point(|&c| c < target).min(N_PIECES - 1);
        let mut lo = i as f64 / N_PIECES as f64;
        let mut hi = (i + 1) as f64 / N_PIECES as f64;
        while hi - lo > FAILURE_TIME_TOL {
            let mid = 0.5 * (lo + hi);
            if self.cumulative(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        FailureTime::At(0.5 * (lo + hi))
    }
}

/// `Lambda(t) = int_0^t lambda0(v) exp(beta0(v) Z(v)) dv`.
pub fn cumulative_hazard(
    path: &CovariatePath,
    beta0: Beta0,
    lambda0: BaselineHazard,
    t: f64,
    rule: &QuadratureRule,
) -> f64 {
    HazardProfile::new(path, beta0, lambda0, rule).cumulative(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailureTime {
    At(f64),
    /// `T > 1`.
    BeyondHorizon,
}

impl FailureTime {
    pub fn time(self) -> Option<f64> {
        match self {
            FailureTime::At(t) => Some(t),
            FailureTime::BeyondHorizon => None,
        }
    }
}

/// Inverse-transform draw: `u ~ U(0, 1)`, then `Lambda(T) = -log u`.
pub fn gen_failure_time<R: Rng + ?Sized>(
    path: &CovariatePath,
    beta0: Beta0,
    lambda0: BaselineHazard,
    rng: &mut R,
    rule: &QuadratureRule,
) -> FailureTime {
    let u: f64 = 1.0 - rng.random::<f64>();
    failure_time_from_uniform(&HazardProfile::new(path, beta0, lambda0, rule), u)
}

/// Failure time for a given uniform `u` in `(0, 1]`.
pub fn failure_time_from_uniform(profile: &HazardProfile<'_>, u: f64) -> FailureTime {
    profile.invert(-u.ln())
}

/// Longitudinal observation process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationProcess {
    /// `Pois(5) + 1` visits at i.i.d. `U(0, 1)` times.
    #[default]
    Homogeneous,
    /// Poisson process with intensity `8 (0.75 + (0.5 - t)^2)`.
    Intensity8Quadratic,
}

impl ObservationProcess {
    pub fn intensity(self, t: f64) -> f64 {
        match self {
            ObservationProcess::Homogeneous => 5.0,
            ObservationProcess::Intensity8Quadratic => 8.0 * (0.75 + (0.5 - t).powi(2)),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "homogeneous" => Some(ObservationProcess::Homogeneous),
            "intensity-8-quadratic" | "intensity" => Some(ObservationProcess::Intensity8Quadratic),
            _ => None,
        }
    }
}

/// Sorted observation times in `(0, 1)`.
pub fn gen_observation_schedule<R: Rng + ?Sized>(process: ObservationProcess, rng: &mut R) -> Vec<f64> {
    let mut times: Vec<f64> = match process {
        ObservationProcess::Homogeneous => {
            let count = Poisson::new(5.0).expect("valid rate").sample(rng) as usize + 1;
            (0..count).map(|_| open_unit(rng)).collect()
        }
        ObservationProcess::Intensity8Quadratic => {
            // Thinning of a rate-8 process; the intensity peaks at 8 on [0, 1].
            let count = Poisson::new(8.0).expect("valid rate").sample(rng) as usize;
            let mut kept = Vec::with_capacity(count);
            for _ in 0..count {
                let t = open_unit(rng);
                if rng.random::<f64>() * 8.0 < process.intensity(t) {
                    kept.push(t);
                }
            }
            kept
        }
    };
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::quadrature::gauss_legendre;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_indexing() {
        let mut levels = [0.0; N_PIECES];
        for (i, l) in levels.iter_mut().enumerate() {
            *l = i as f64 + 1.0;
        }
        let path = CovariatePath { levels };
        assert_eq!(path.at(0.07), 2.0);
        assert_eq!(path.at(0.0), 1.0);
        assert_eq!(path.at(0.999), 20.0);
        assert_eq!(path.at(1.0), 20.0);
    }

    #[test]
    fn linear_baseline_integral() {
        let rule = gauss_legendre(10);
        let path = CovariatePath::constant(0.0);
        let lam = BaselineHazard::default();
        assert_eq!(cumulative_hazard(&path, Beta0::Zero, lam, 0.0, &rule), 0.0);
        assert_abs_diff_eq!(
            cumulative_hazard(&path, Beta0::Zero, lam, 1.0, &rule),
            2.05,
            epsilon = 1e-14
        );
    }

    #[test]
    fn exponential_inverse_transform() {
        let rule = gauss_legendre(10);
        let path = CovariatePath::constant(0.0);
        let lam = BaselineHazard {
            intercept: 2.0,
            slope: 0.0,
        };
        let profile = HazardProfile::new(&path, Beta0::Zero, lam, &rule);
        assert_eq!(failure_time_from_uniform(&profile, 1.0), FailureTime::At(0.0));
        for u in [0.9, 0.5, 0.2, 0.14] {
            let t = failure_time_from_uniform(&profile, u).time().unwrap();
            assert_abs_diff_eq!(t, -u.ln() / 2.0, epsilon = 1e-9);
        }
        assert_eq!(failure_time_from_uniform(&profile, 0.1), FailureTime::BeyondHorizon);
    }

    #[test]
    fn cumulative_hazard_monotone() {
        let rule = gauss_legendre(10);
        let sampler = PathSampler::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let path = sampler.sample(&mut rng);
            let prof = HazardProfile::new(&path, Beta0::Sin, BaselineHazard::default(), &rule);
            assert_eq!(prof.cumulative(0.0), 0.0);
            let vals: Vec<f64> = (0..=200).map(|i| prof.cumulative(i as f64 / 200.0)).collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn schedules_sorted_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for process in [ObservationProcess::Homogeneous, ObservationProcess::Intensity8Quadratic] {
            for _ in 0..500 {
                let s = gen_observation_schedule(process, &mut rng);
                assert!(s.iter().all(|t| *t > 0.0 && *t < 1.0));
                assert!(s.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn schedule_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 100_000;
        let hom: usize = (0..reps)
            .map(|_| gen_observation_schedule(ObservationProcess::Homogeneous, &mut rng).len())
            .sum();
        assert!((hom as f64 / reps as f64 - 6.0).abs() < 0.05);
        let inten: usize = (0..reps)
            .map(|_| gen_observation_schedule(ObservationProcess::Intensity8Quadratic, &mut rng).len())
            .sum();
        // int_0^1 8 (0.75 + (0.5 - t)^2) dt = 6 + 2/3
        assert!((inten as f64 / reps as f64 - 20.0 / 3.0).abs() < 0.1);
    }

    #[test]
    fn beta0_shapes() {
        assert_abs_diff_eq!(Beta0::Sin.value(0.2), 0.5 * (0.4 * PI).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(Beta0::Quad.value(0.4), 0.28, epsilon = 1e-15);
        assert_abs_diff_eq!(Beta0::ExpDecay.value(0.0), (-0.5f64).exp(), epsilon = 1e-15);
        assert_eq!(Beta0::parse("const:0.3").map(|b| b.value(0.9)), Some(0.3));
    }
}
