use nalgebra::{DMatrix, DVector};

use super::SolverConfig;
use crate::data::SolveDiagnostics;
use crate::error::{Error, Result};

/// A local estimating equation that can be handed to [`solve_system`].
pub trait ScoreSystem {
    fn dim(&self) -> usize;

    /// Target time, used in diagnostics.
    fn location(&self) -> f64;

    /// Events with nonzero total kernel weight.
    fn effective_events(&self) -> usize;

    fn score(&self, beta: &DVector<f64>) -> Result<DVector<f64>>;

    /// Analytic Jacobian plus a positive reference scale for the singularity test.
    fn jacobian_scaled(&self, beta: &DVector<f64>) -> Result<(DMatrix<f64>, f64)>;
}

/// Relative singular-value floor below which a Jacobian counts as singular.
const SINGULAR_RTOL: f64 = 1e-10;

/// Maximum step halvings per iteration.
const MAX_HALVINGS: usize = 40;

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn analytic_jacobian<S: ScoreSystem + ?Sized>(system: &S, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (jac, scale) = system.jacobian_scaled(beta)?;
    let sv = jac.clone().svd(false, false).singular_values;
    let smin = sv.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    let smax = sv.iter().fold(0.0_f64, |m, x| m.max(*x));
    let reference = scale.max(smax);
    if !(smin > SINGULAR_RTOL * reference) {
        return Err(Error::SingularSystem(format!(
            "jacobian at s = {} has smallest singular value {smin:e} (reference {reference:e})",
            system.location()
        )));
    }
    Ok(jac)
}

/// Broyden's method on `system`, seeded with the analytic Jacobian.
///
/// Steps are halved while the residual norm fails to decrease; an iteration
/// whose halvings are exhausted under a Broyden-updated Jacobian falls back to
/// a fresh analytic Jacobian once before giving up.
pub fn solve_system<S: ScoreSystem + ?Sized>(
    system: &S,
    init: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolveDiagnostics)> {
    cfg.validate()?;
    let s = system.location();
    let effective = system.effective_events();
    if effective < cfg.min_effective_events {
        return Err(Error::InsufficientData {
            s,
            effective,
            required: cfg.min_effective_events,
        });
    }
    if init.len() != system.dim() {
        return Err(Error::Config(format!(
            "initial value has length {}, expected {}",
            init.len(),
            system.dim()
        )));
    }

    let mut x = init.clone();
    let mut f = system.score(&x)?;
    let mut diag = SolveDiagnostics {
        iterations: 0,
        residual: sup_norm(&f),
        effective_events: effective,
        jacobian_resets: 0,
    };
    if diag.residual <= cfg.tol {
        return Ok((x, diag));
    }

    let mut jac = analytic_jacobian(system, &x)?;
    let mut fresh = true;
    while diag.iterations < cfg.max_iter {
        diag.iterations += 1;
        let step = match jac.clone().lu().solve(&(-&f)) {
            Some(step) if step.iter().all(|v| v.is_finite()) => step,
            _ if !fresh => {
                jac = analytic_jacobian(system, &x)?;
                fresh = true;
                diag.jacobian_resets += 1;
                continue;
            }
            _ => {
                return Err(Error::SingularSystem(format!("jacobian at s = {s} is not invertible")));
            }
        };

        let f_norm = f.norm();
        let mut lambda = cfg.step_damping;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &x + &step * lambda;
            match system.score(&trial) {
                Ok(f_trial) if f_trial.norm() < f_norm || sup_norm(&f_trial) <= cfg.tol => {
                    accepted = Some((trial, f_trial));
                    break;
                }
                Ok(_) | Err(Error::NonFiniteMoment { .. }) | Err(Error::SparseRegion { .. }) => {
                    lambda *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }

        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break;
            }
            jac = analytic_jacobian(system, &x)?;
            fresh = true;
            diag.jacobian_resets += 1;
            continue;
        };

        // Good Broyden rank-one update.
        let dx = &x_new - &x;
        let df = &f_new - &f;
        let denom = dx.dot(&dx);
        if denom > 0.0 {
            let correction = (&df - &jac * &dx) / denom;
            jac.ger(1.0, &correction, &dx, 1.0);
            fresh = false;
        }
        x = x_new;
        f = f_new;
        diag.residual = sup_norm(&f);
        if diag.residual <= cfg.tol {
            return Ok((x, diag));
        }
    }
    Err(Error::NoConvergence {
        s,
        iterations: diag.iterations,
        residual: diag.residual,
    })
}
