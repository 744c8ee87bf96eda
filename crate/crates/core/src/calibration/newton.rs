//! Modified Newton-Raphson iteration with step-length variation.
//!
//! The search direction is the least-squares solution of the thin system
//! `J dx = -f` (the left pseudoinverse applied to the residual), computed on
//! column-scaled variables. The L1 merit drives an Armijo-style acceptance
//! test with quadratic, then cubic, backtracking.

use nalgebra::{DMatrix, DVector};

use super::{CalibrationProblem, EvalWarning};
use crate::error::{Error, Result};

/// Residual norm selector for reporting and merit-surface scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

/// Norm of a residual vector under the selected measure.
pub fn merit(f: &DVector<f64>, norm: Norm) -> f64 {
    match norm {
        Norm::L1 => f.iter().map(|v| v.abs()).sum(),
        Norm::L2 => f.norm(),
        Norm::LInf => f.abs().max(),
    }
}

/// Directional derivative of the L1 merit along the Newton direction:
/// `-sign(f)^T f = -|f|_1`, strictly negative away from a root.
pub fn descent_rate(f: &DVector<f64>) -> f64 {
    -merit(f, Norm::L1)
}

/// Condition-number threshold above which the scaled Jacobian is treated as
/// rank deficient.
const CONDITION_LIMIT: f64 = 1e12;

/// Least-squares Newton direction `dx = -D (J D)^+ f` with an optional
/// diagonal column scaling `D`.
///
/// Scaling changes the conditioning of the factorization, not the exact
/// minimizer. Fails with the weakest column directions when the scaled
/// Jacobian loses full column rank.
pub fn newton_direction(
    jacobian: &DMatrix<f64>,
    f: &DVector<f64>,
    scaling: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let scaled = match scaling {
        Some(d) => {
            let mut j = jacobian.clone();
            for (col, &s) in d.iter().enumerate() {
                j.column_mut(col).scale_mut(s);
            }
            j
        }
        None => jacobian.clone(),
    };
    let svd = scaled.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    if sigma_min <= 0.0 || !sigma_min.is_finite() || sigma_max / sigma_min > CONDITION_LIMIT {
        let condition = if sigma_min > 0.0 {
            sigma_max / sigma_min
        } else {
            f64::INFINITY
        };
        // The right singular vector of the smallest singular value names
        // the degenerate directions.
        let directions = svd
            .v_t
            .as_ref()
            .map(|v_t| {
                let weakest = svd
                    .singular_values
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                let row = v_t.row(weakest);
                let peak = row.amax();
                (0..row.ncols())
                    .filter(|&c| row[c].abs() >= 0.5 * peak)
                    .collect()
            })
            .unwrap_or_default();
        return Err(Error::DegenerateJacobian {
            condition,
            directions,
        });
    }
    let y = svd
        .solve(&(-f), 0.0)
        .map_err(|e| Error::NetworkBuild(e.to_string()))?;
    let mut dx = y.column(0).into_owned();
    if let Some(d) = scaling {
        dx.component_mul_assign(d);
    }
    Ok(dx)
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Merit-progress tolerance (eps_f).
    pub tol_merit: f64,
    /// Step-size tolerance on the L2 norm of `mu * dx` (eps_x).
    pub tol_step: f64,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol_merit: 1e-7,
            tol_step: 5e-7,
            max_iterations: 1000,
        }
    }
}

/// An accepted line-search step.
#[derive(Debug, Clone, Copy)]
pub struct AcceptedStep {
    /// Merit after the step.
    pub merit: f64,
    /// Step length that was accepted.
    pub step_length: f64,
}

/// One backtracking event of the step-length control.
#[derive(Debug, Clone, Copy)]
pub struct Backtrack {
    pub mu_old: f64,
    pub mu_new: f64,
    /// False for the first (quadratic) backtrack, true for cubic ones.
    pub cubic: bool,
}

/// Outcome of one Newton run.
#[derive(Debug, Clone)]
pub struct NewtonRun {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    /// L1 merit of `residual`.
    pub merit: f64,
    /// Newton directions computed.
    pub iterations: usize,
    /// False when the iteration cap ended the run.
    pub converged: bool,
    pub accepted: Vec<AcceptedStep>,
    pub backtracks: Vec<Backtrack>,
    pub warnings: Vec<EvalWarning>,
}

/// Runs the damped Newton iteration from `x0`.
///
/// Follows the step-length strategy exactly: full step first, acceptance
/// test `v_k <= v_{k-1} + 1e-4 mu s_k`, quadratic then cubic backtracking
/// with the `[0.1, 0.5] mu_old` clamps, roughness components replaced by
/// their absolute value after every step, and termination once both the
/// merit progress and the step size fall below their tolerances.
pub fn newton_solve(
    problem: &CalibrationProblem,
    x0: &DVector<f64>,
    opts: &NewtonOptions,
    scaling: Option<&DVector<f64>>,
) -> Result<NewtonRun> {
    problem.check_dim(x0)?;
    let n_pipes = problem.n_pipes();
    let mut warnings = Vec::new();
    let mut accepted = Vec::new();
    let mut backtracks = Vec::new();

    let eval = problem.evaluate(x0, true)?;
    warnings.extend(eval.warnings.iter().copied());
    let mut f_cur = eval.residual;
    let mut jac_cur = eval.jacobian.expect("requested");
    let mut v_cur = merit(&f_cur, Norm::L1);
    if !v_cur.is_finite() {
        return Err(Error::NonFiniteMerit { iteration: 0 });
    }
    let mut x_cur = x0.clone();

    let mut dx = newton_direction(&jac_cur, &f_cur, scaling)?;
    let mut direction_fresh = true;
    let mut rate = descent_rate(&f_cur);
    let mut mu = 1.0_f64;
    let mut iterations = 0usize;

    // Last point at which a direction was computed; this is what the run
    // returns.
    let mut x_base = x_cur.clone();
    let mut f_base = f_cur.clone();
    let mut v_base = v_cur;
    // Previous backtracking sample (mu, merit) for the cubic model.
    let mut previous_trial: Option<(f64, f64)> = None;
    let mut backtracks_here = 0usize;

    while ((v_cur - v_base).abs() > opts.tol_merit || mu * dx.norm() > opts.tol_step)
        && iterations < opts.max_iterations
    {
        if mu == 1.0 {
            if !direction_fresh {
                dx = newton_direction(&jac_cur, &f_cur, scaling)?;
            }
            direction_fresh = false;
            rate = descent_rate(&f_cur);
            v_cur = merit(&f_cur, Norm::L1);
            x_base = x_cur.clone();
            f_base = f_cur.clone();
            v_base = v_cur;
            iterations += 1;
            previous_trial = None;
            backtracks_here = 0;
        }

        x_cur = &x_base + mu * &dx;
        for j in 0..n_pipes {
            x_cur[j] = x_cur[j].abs();
        }
        let eval = problem.evaluate(&x_cur, true)?;
        warnings.extend(eval.warnings.iter().copied());
        f_cur = eval.residual;
        jac_cur = eval.jacobian.expect("requested");
        v_cur = merit(&f_cur, Norm::L1);
        if !v_cur.is_finite() {
            return Err(Error::NonFiniteMerit {
                iteration: iterations,
            });
        }

        let mu_old = mu;
        if v_cur > v_base + 1e-4 * mu * rate {
            if mu_old == 1.0 {
                // Minimum of the quadratic through g(0), g'(0), g(1).
                mu = -rate / (2.0 * (v_cur - v_base - rate));
                backtracks.push(Backtrack {
                    mu_old,
                    mu_new: mu.max(0.1 * mu_old),
                    cubic: false,
                });
            } else {
                let (mu_prev, v_prev) = previous_trial.expect("set by the first backtrack");
                mu = cubic_minimum(v_base, rate, (mu_old, v_cur), (mu_prev, v_prev))
                    .unwrap_or(0.5 * mu_old);
                mu = mu.min(0.5 * mu_old);
                backtracks.push(Backtrack {
                    mu_old,
                    mu_new: mu.max(0.1 * mu_old),
                    cubic: true,
                });
            }
            previous_trial = Some((mu_old, v_cur));
            mu = mu.max(0.1 * mu_old);
            backtracks_here += 1;
            if backtracks_here > 100 {
                // The step has shrunk past any representable progress;
                // treat the run as stalled at the last accepted point.
                return Ok(NewtonRun {
                    merit: merit(&f_base, Norm::L1),
                    x: x_base,
                    residual: f_base,
                    iterations,
                    converged: false,
                    accepted,
                    backtracks,
                    warnings,
                });
            }
        } else {
            accepted.push(AcceptedStep {
                merit: v_cur,
                step_length: mu_old,
            });
            mu = 1.0;
        }
    }

    Ok(NewtonRun {
        merit: merit(&f_base, Norm::L1),
        x: x_base,
        residual: f_base,
        converged: iterations < opts.max_iterations,
        iterations,
        accepted,
        backtracks,
        warnings,
    })
}

/// Minimizer of the cubic `a t^3 + b t^2 + s t + v0` fitted through
/// `g(0) = v0`, `g'(0) = s` and the two most recent trials.
fn cubic_minimum(v0: f64, s: f64, latest: (f64, f64), previous: (f64, f64)) -> Option<f64> {
    let (mu1, g1) = latest;
    let (mu2, g2) = previous;
    if mu1 == mu2 {
        return None;
    }
    let r1 = (g1 - v0 - s * mu1) / (mu1 * mu1);
    let r2 = (g2 - v0 - s * mu2) / (mu2 * mu2);
    let a = (r1 - r2) / (mu1 - mu2);
    let b = (-mu2 * r1 + mu1 * r2) / (mu1 - mu2);
    let mu = if a == 0.0 {
        -s / (2.0 * b)
    } else {
        let disc = b * b - 3.0 * a * s;
        if disc < 0.0 {
            return None;
        }
        (-b + disc.sqrt()) / (3.0 * a)
    };
    mu.is_finite().then_some(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn merit_norms() {
        let f = dvector![3.0, -4.0];
        assert_eq!(merit(&f, Norm::L1), 7.0);
        assert_eq!(merit(&f, Norm::L2), 5.0);
        assert_eq!(merit(&f, Norm::LInf), 4.0);
        let zero = DVector::zeros(3);
        assert_eq!(merit(&zero, Norm::L1), 0.0);
    }

    #[test]
    fn norm_ordering_holds() {
        let f = dvector![0.3, -1.2, 0.0, 2.5, -0.7];
        assert!(merit(&f, Norm::LInf) <= merit(&f, Norm::L2));
        assert!(merit(&f, Norm::L2) <= merit(&f, Norm::L1));
    }

    #[test]
    fn descent_rate_is_negative_l1() {
        assert_eq!(descent_rate(&dvector![1.0, -2.0]), -3.0);
        assert_eq!(descent_rate(&DVector::zeros(2)), 0.0);
    }

    #[test]
    fn quadratic_backtrack_unit_case() {
        // s = -1, v: 1 -> 2 gives mu = -s / (2 (v_k - v_{k-1} - s)) = 0.25.
        let s = -1.0;
        let (v_prev, v_new) = (1.0, 2.0);
        let mu = -s / (2.0 * (v_new - v_prev - s));
        assert_eq!(mu, 0.25);
    }

    #[test]
    fn direction_zero_residual_is_zero() {
        let j = DMatrix::<f64>::identity(3, 2);
        let f = DVector::zeros(3);
        let dx = newton_direction(&j, &f, None).unwrap();
        assert!(dx.abs().max() <= 1e-15);
    }

    #[test]
    fn direction_square_case_is_newton() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let f = dvector![1.0, -2.0];
        let dx = newton_direction(&j, &f, None).unwrap();
        let expected = -j.clone().lu().solve(&f).unwrap();
        assert_relative_eq!(dx, expected, max_relative = 1e-12);
    }

    #[test]
    fn scaling_does_not_change_the_minimizer() {
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 2000.0, -0.5, 300.0, 2.0, -4000.0]);
        let f = dvector![0.3, -0.1, 0.7];
        let plain = newton_direction(&j, &f, None).unwrap();
        let scaled = newton_direction(&j, &f, Some(&dvector![0.01, 1000.0])).unwrap();
        assert_relative_eq!(plain, scaled, max_relative = 1e-8);
    }

    #[test]
    fn rank_deficient_jacobian_is_reported() {
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let f = dvector![1.0, 1.0, 1.0];
        match newton_direction(&j, &f, None) {
            Err(Error::DegenerateJacobian { directions, .. }) => {
                assert!(!directions.is_empty());
            }
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn cubic_minimum_recovers_known_polynomial() {
        // g(t) = t^3 - 2 t^2 + 0.5 t + 1: a = 1, b = -2, s = 0.5, v0 = 1.
        let g = |t: f64| t.powi(3) - 2.0 * t.powi(2) + 0.5 * t + 1.0;
        let mu = cubic_minimum(1.0, 0.5, (1.0, g(1.0)), (0.6, g(0.6))).unwrap();
        let deriv = 3.0 * mu * mu - 4.0 * mu + 0.5;
        assert!(deriv.abs() < 1e-12, "stationary point expected, got {mu}");
        assert!(6.0 * mu - 4.0 > 0.0, "must be the minimum branch");
    }
}
