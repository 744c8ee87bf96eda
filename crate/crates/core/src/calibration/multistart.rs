//! Initial values, physical bounds and the multistart loop around the
//! Newton iteration.

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::newton::{newton_solve, NewtonOptions};
use super::{CalibrationProblem, PhysicalBounds};
use crate::error::{Error, Result};
use crate::topology::min_measurement_sets;

/// Seed used when the caller does not pick one.
pub const DEFAULT_SEED: u64 = 1;

/// Fraction of the diameter that bounds a physically plausible roughness.
pub const ROUGHNESS_DIAMETER_FRACTION: f64 = 0.05;

/// Starting point: roughness at 1% of each pipe's diameter, every unknown
/// head at the mean of the known piezometric heads around its node
/// (converted to a pressure head). Returns the indices of (set, node) pairs
/// that had no known-head neighbor and fell back to the set-wide mean.
pub fn initial_guess(problem: &CalibrationProblem) -> (DVector<f64>, Vec<(usize, usize)>) {
    let n_pipes = problem.n_pipes();
    let n_free = problem.n_free();
    let mut x = DVector::zeros(problem.dim());
    let mut fallbacks = Vec::new();
    for j in 0..n_pipes {
        x[j] = 0.01 * problem.pipes()[j].diameter;
    }
    for set in 0..problem.n_sets() {
        for (slot, &node) in problem.sensors().unmeasured().iter().enumerate() {
            let (heads, fell_back) = problem.known_neighbor_heads(node, set);
            if fell_back {
                fallbacks.push((set, node));
                log::warn!(
                    "initial guess: node '{}' has no neighbor with known head; using the set-wide mean",
                    problem.network().inner_nodes()[node].id
                );
            }
            let mean = heads.iter().sum::<f64>() / heads.len() as f64;
            let z = problem.network().inner_nodes()[node].elevation;
            x[n_pipes + set * n_free + slot] = mean - z;
        }
    }
    (x, fallbacks)
}

/// Physical box: roughness in `[0, 0.05 d]`, each unknown head between the
/// extreme known piezometric heads adjacent to its node (pressure-head
/// convention).
pub fn default_bounds(problem: &CalibrationProblem) -> PhysicalBounds {
    let n_pipes = problem.n_pipes();
    let n_free = problem.n_free();
    let mut lower = DVector::zeros(problem.dim());
    let mut upper = DVector::zeros(problem.dim());
    for j in 0..n_pipes {
        lower[j] = 0.0;
        upper[j] = ROUGHNESS_DIAMETER_FRACTION * problem.pipes()[j].diameter;
    }
    for set in 0..problem.n_sets() {
        for (slot, &node) in problem.sensors().unmeasured().iter().enumerate() {
            let (heads, _) = problem.known_neighbor_heads(node, set);
            let min = heads.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = heads.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z = problem.network().inner_nodes()[node].elevation;
            let i = n_pipes + set * n_free + slot;
            lower[i] = min - z;
            upper[i] = max - z;
        }
    }
    PhysicalBounds { lower, upper }
}

/// Diagonal column scaling for the Newton direction: the roughness bound
/// `0.05 d` for roughness columns, the bound-interval width (floored at
/// 1 m) for head columns.
pub fn column_scaling(problem: &CalibrationProblem, bounds: &PhysicalBounds) -> DVector<f64> {
    let n_pipes = problem.n_pipes();
    let mut d = DVector::zeros(problem.dim());
    for j in 0..n_pipes {
        d[j] = ROUGHNESS_DIAMETER_FRACTION * problem.pipes()[j].diameter;
    }
    for i in n_pipes..problem.dim() {
        d[i] = (bounds.upper[i] - bounds.lower[i]).max(1.0);
    }
    d
}

#[derive(Debug, Clone)]
pub struct MultistartOptions {
    pub seed: u64,
    /// Total number of Newton launches (the initial one included).
    pub max_outer: usize,
    /// Outer merit tolerance; the loop stops early once the buffered best
    /// drops below it.
    pub outer_tol_merit: f64,
    /// Outer step tolerance on the distance between the latest solution and
    /// the buffered best.
    pub outer_tol_step: f64,
    pub inner: NewtonOptions,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            max_outer: 7,
            outer_tol_merit: 1e-9,
            outer_tol_step: 1e-6,
            inner: NewtonOptions::default(),
        }
    }
}

/// One row of the multistart trace.
#[derive(Debug, Clone)]
pub struct OuterIteration {
    /// 1-based launch number.
    pub outer_iter: usize,
    pub x0: DVector<f64>,
    pub x: DVector<f64>,
    /// L1 merit of the launch result.
    pub merit: f64,
}

/// Best-of-multistart calibration outcome.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    /// Best buffered decision vector.
    pub x: DVector<f64>,
    /// L1 merit at `x`.
    pub merit: f64,
    pub residual: DVector<f64>,
    /// True when the unmeasured heads of `x` lie inside the physical box.
    pub feasible: bool,
    pub trace: Vec<OuterIteration>,
    pub seed: u64,
    pub bounds: PhysicalBounds,
    /// Flags raised by the final solution: zero-loss pipes and pipes whose
    /// implied flow falls below the turbulent regime. Intermediate
    /// iterates are allowed to stray; only the final state is reported.
    pub final_warnings: Vec<super::EvalWarning>,
}

impl CalibrationResult {
    pub fn roughness<'a>(&'a self, problem: &CalibrationProblem) -> nalgebra::DVectorView<'a, f64> {
        self.x.rows(0, problem.n_pipes())
    }
}

/// Repeated Newton launches with roughness re-seeding.
///
/// The first launch starts from [`initial_guess`]. Every following launch
/// reuses the buffered best solution, redrawing only those roughness
/// components that strayed above `0.05 d` uniformly into `[0, 0.05 d]`. A
/// result is buffered only when its merit does not exceed the best so far
/// and its unmeasured heads stay inside the physical box. Deterministic for
/// a fixed seed.
pub fn multistart_calibrate(
    problem: &CalibrationProblem,
    opts: &MultistartOptions,
) -> Result<CalibrationResult> {
    let need = min_measurement_sets(problem.n_pipes(), problem.sensors().n_measured())?;
    if problem.n_sets() < need {
        return Err(Error::InsufficientMeasurementSets {
            have: problem.n_sets(),
            need,
        });
    }
    if opts.max_outer == 0 {
        return Err(Error::DimensionMismatch {
            what: "max_outer",
            expected: 1,
            got: 0,
        });
    }

    let bounds = default_bounds(problem);
    let scaling = column_scaling(problem, &bounds);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let (x0, _) = initial_guess(problem);
    let run = newton_solve(problem, &x0, &opts.inner, Some(&scaling))?;
    let mut best_x = run.x.clone();
    let mut best_f = run.residual.clone();
    let mut best_v = run.merit;
    let mut trace = vec![OuterIteration {
        outer_iter: 1,
        x0,
        x: run.x.clone(),
        merit: run.merit,
    }];

    let mut latest_x = trace[0].x0.clone();
    let mut launches = 1;
    while (best_v > opts.outer_tol_merit || (&latest_x - &best_x).norm() > opts.outer_tol_step)
        && launches < opts.max_outer
    {
        let mut x_start = best_x.clone();
        for j in 0..problem.n_pipes() {
            let cap = ROUGHNESS_DIAMETER_FRACTION * problem.pipes()[j].diameter;
            if best_x[j] > cap {
                x_start[j] = rng.random_range(0.0..cap);
            }
        }
        let run = newton_solve(problem, &x_start, &opts.inner, Some(&scaling))?;
        latest_x = run.x.clone();
        if run.merit <= best_v && bounds.heads_within(&run.x, problem.n_pipes()) {
            best_x = run.x.clone();
            best_f = run.residual.clone();
            best_v = run.merit;
        }
        launches += 1;
        trace.push(OuterIteration {
            outer_iter: launches,
            x0: x_start,
            x: run.x,
            merit: run.merit,
        });
    }

    let feasible = bounds.heads_within(&best_x, problem.n_pipes());
    if !feasible {
        log::warn!(
            "multistart: best candidate has unmeasured heads outside the physical range; \
             result flagged infeasible"
        );
    }
    let (_, final_warnings) = problem.residual(&best_x)?;
    Ok(CalibrationResult {
        x: best_x,
        merit: best_v,
        residual: best_f,
        feasible,
        trace,
        seed: opts.seed,
        bounds,
        final_warnings,
    })
}
