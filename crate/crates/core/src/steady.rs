//! Forward solver of the steady-state network equations.
//!
//! Solves mass balance `A x_Q = q` together with the energy equation
//! `A^T (h + z) = C_s h_s - h_loss(x_Q)` by a damped Newton iteration in the
//! joint unknowns (flows, piezometric heads). Friction is Colebrook-White
//! with Darcy-Weisbach losses; iterates that dip below the turbulent regime
//! use a clamped friction factor so the model stays defined everywhere.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::friction::{
    d_flow_d_headloss, friction_factor_cw, headloss_dw, reynolds, PipeHydraulics, TURBULENT_RE_MIN,
};
use crate::network::Network;
use crate::topology::{build_incidence, SensorConfig};

/// Flow magnitude added when linearizing the loss derivative near zero flow.
const FLOW_FLOOR: f64 = 1e-8;

/// One loading condition: nodal demands and source heads.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingCondition {
    /// Demand per inner node in m3/s, node order.
    pub demands: DVector<f64>,
    /// Head per source in m, elevation-inclusive.
    pub source_heads: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Combined mass/energy residual bound (infinity norm).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

/// Converged network state.
#[derive(Debug, Clone)]
pub struct SteadyStateSolution {
    /// Pipe flows in m3/s, pipe order.
    pub flows: DVector<f64>,
    /// Pressure heads h at inner nodes in m (piezometric minus elevation).
    pub pressure_heads: DVector<f64>,
    /// Reynolds number per pipe.
    pub reynolds: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Pipes outside the turbulent regime in a solved state.
#[derive(Debug, Clone, Default)]
pub struct TurbulenceReport {
    pub flagged: Vec<RegimeFlag>,
}

#[derive(Debug, Clone)]
pub struct RegimeFlag {
    pub pipe: String,
    pub reynolds: f64,
}

impl TurbulenceReport {
    /// True exactly when every pipe is turbulent.
    pub fn all_turbulent(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// One steady-state snapshot used by the calibration: demands, source heads
/// and the sensed pressure heads (pressure-head convention, sensor order).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub demands: DVector<f64>,
    pub source_heads: DVector<f64>,
    pub sensed_heads: DVector<f64>,
}

/// Optional sensor noise for synthesized measurements.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    /// Standard deviation of the zero-mean Gaussian noise in m.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            seed: 0,
        }
    }
}

/// Measurement sets together with the full solutions they came from.
#[derive(Debug, Clone)]
pub struct GeneratedMeasurements {
    pub sets: Vec<MeasurementSet>,
    pub solutions: Vec<SteadyStateSolution>,
}

struct LossEvaluation {
    head_loss: DVector<f64>,
    derivative: DVector<f64>,
    reynolds: DVector<f64>,
}

/// Head losses, loss derivatives and Reynolds numbers for a flow vector.
fn evaluate_losses(
    flows: &DVector<f64>,
    pipes: &[PipeHydraulics],
    net: &Network,
) -> Result<LossEvaluation> {
    let fluid = net.fluid();
    let n = pipes.len();
    let mut head_loss = DVector::zeros(n);
    let mut derivative = DVector::zeros(n);
    let mut re_out = DVector::zeros(n);
    for j in 0..n {
        let pipe = &pipes[j];
        let q = flows[j];
        let re = reynolds(q, pipe, fluid);
        // Below the turbulent regime the friction factor is held at its
        // Re = 4000 value; such iterates are transient and the final state
        // is checked separately.
        let lambda = friction_factor_cw(re.max(TURBULENT_RE_MIN), pipe.roughness, pipe.diameter)
            .map_err(|e| Error::PipeEvaluation {
                pipe: net.pipes()[j].id.clone(),
                detail: e.to_string(),
            })?;
        let hl = headloss_dw(q, lambda, pipe.resistance);
        let dh_dq = if re >= TURBULENT_RE_MIN {
            let p_dh = d_flow_d_headloss(pipe.roughness, hl, pipe, fluid).map_err(|e| {
                Error::PipeEvaluation {
                    pipe: net.pipes()[j].id.clone(),
                    detail: e.to_string(),
                }
            })?;
            1.0 / p_dh
        } else {
            lambda * pipe.resistance * (q.abs() + FLOW_FLOOR)
        };
        head_loss[j] = hl;
        derivative[j] = dh_dq;
        re_out[j] = re;
    }
    Ok(LossEvaluation {
        head_loss,
        derivative,
        reynolds: re_out,
    })
}

/// Solves the steady-state equations for one loading condition.
///
/// Returns the unique flow/head state with combined residual below
/// `opts.tolerance`, or an error when the iteration does not get there.
pub fn solve_steady_state(
    net: &Network,
    load: &LoadingCondition,
    opts: &SolverOptions,
) -> Result<SteadyStateSolution> {
    net.require_valid()?;
    let n_inner = net.n_inner();
    let n_pipes = net.n_pipes();
    if load.demands.len() != n_inner {
        return Err(Error::DimensionMismatch {
            what: "demand vector",
            expected: n_inner,
            got: load.demands.len(),
        });
    }
    if load.source_heads.len() != net.n_sources() {
        return Err(Error::DimensionMismatch {
            what: "source-head vector",
            expected: net.n_sources(),
            got: load.source_heads.len(),
        });
    }

    let fluid = net.fluid();
    let pipes: Vec<PipeHydraulics> = net
        .pipes()
        .iter()
        .map(|p| PipeHydraulics::from_pipe(p, fluid))
        .collect::<Result<_>>()?;

    let (a_int, cs_int) = build_incidence(net)?;
    let a = a_int.map(|v| v as f64);
    let a_t = a.transpose();
    let cs = cs_int.map(|v| v as f64);
    let fixed_head = &cs * &load.source_heads;

    // Mass-consistent start: minimum-norm flow solving A x = q, then heads
    // from the linearized energy equation.
    let mut flows = if n_inner > 0 {
        a.clone()
            .svd(true, true)
            .solve(&load.demands, 1e-12)
            .map_err(|e| Error::NetworkBuild(e.to_string()))?
    } else {
        DVector::zeros(n_pipes)
    };
    let mut piezometric = if n_inner > 0 {
        let loss0 = evaluate_losses(&flows, &pipes, net)?.head_loss;
        let rhs = &fixed_head - &loss0;
        a_t.clone()
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::NetworkBuild(e.to_string()))?
    } else {
        DVector::zeros(0)
    };

    let residual = |flows: &DVector<f64>,
                    piezometric: &DVector<f64>,
                    losses: &LossEvaluation|
     -> DVector<f64> {
        let mass = &a * flows - &load.demands;
        let energy = &a_t * piezometric - &fixed_head + &losses.head_loss;
        let mut r = DVector::zeros(n_inner + n_pipes);
        r.rows_mut(0, n_inner).copy_from(&mass);
        r.rows_mut(n_inner, n_pipes).copy_from(&energy);
        r
    };

    let mut losses = evaluate_losses(&flows, &pipes, net)?;
    let mut r = residual(&flows, &piezometric, &losses);
    let mut r_norm = r.abs().max();

    for iteration in 0..=opts.max_iterations {
        if r_norm <= opts.tolerance {
            return Ok(SteadyStateSolution {
                flows,
                pressure_heads: &piezometric - net.elevations(),
                reynolds: losses.reynolds,
                iterations: iteration,
                residual_norm: r_norm,
            });
        }
        if iteration == opts.max_iterations {
            break;
        }

        // Jacobian blocks: [A 0; diag(dh/dQ) A^T].
        let dim = n_inner + n_pipes;
        let mut jac = DMatrix::zeros(dim, dim);
        jac.view_mut((0, 0), (n_inner, n_pipes)).copy_from(&a);
        for j in 0..n_pipes {
            jac[(n_inner + j, j)] = losses.derivative[j];
        }
        jac.view_mut((n_inner, n_pipes), (n_pipes, n_inner))
            .copy_from(&a_t);

        let delta = jac.lu().solve(&(-&r)).ok_or(Error::SolverDiverged {
            iterations: iteration,
            residual: r_norm,
        })?;
        let delta_q = delta.rows(0, n_pipes).into_owned();
        let delta_h = delta.rows(n_pipes, n_inner).into_owned();

        // Backtrack until the residual norm drops.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial_flows = &flows + step * &delta_q;
            let trial_piezo = &piezometric + step * &delta_h;
            let trial_losses = evaluate_losses(&trial_flows, &pipes, net)?;
            let trial_r = residual(&trial_flows, &trial_piezo, &trial_losses);
            let trial_norm = trial_r.abs().max();
            if trial_norm < r_norm {
                flows = trial_flows;
                piezometric = trial_piezo;
                losses = trial_losses;
                r = trial_r;
                r_norm = trial_norm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::SolverDiverged {
                iterations: iteration,
                residual: r_norm,
            });
        }
    }
    Err(Error::SolverDiverged {
        iterations: opts.max_iterations,
        residual: r_norm,
    })
}

/// Flags every pipe whose solved Reynolds number is below the turbulent
/// threshold. An empty report means the full-turbulence assumption holds.
pub fn check_turbulence(solution: &SteadyStateSolution, net: &Network) -> TurbulenceReport {
    let mut flagged = Vec::new();
    for (j, pipe) in net.pipes().iter().enumerate() {
        let re = solution.reynolds[j];
        if re < TURBULENT_RE_MIN {
            flagged.push(RegimeFlag {
                pipe: pipe.id.clone(),
                reynolds: re,
            });
        }
    }
    TurbulenceReport { flagged }
}

/// Solves every loading condition and emits the measurement sets the
/// calibration consumes. Sensed heads are pressure heads at the sensor
/// nodes; with `noise.sigma > 0` they are perturbed by seeded Gaussian
/// noise, so equal seeds give identical sets.
pub fn generate_measurement_sets(
    net: &Network,
    loads: &[LoadingCondition],
    sensors: &SensorConfig,
    noise: &NoiseSpec,
    opts: &SolverOptions,
) -> Result<GeneratedMeasurements> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = if noise.sigma > 0.0 {
        Some(rand_distr::Normal::new(0.0, noise.sigma).expect("sigma is finite and positive"))
    } else {
        None
    };

    let mut sets = Vec::with_capacity(loads.len());
    let mut solutions = Vec::with_capacity(loads.len());
    for (i, load) in loads.iter().enumerate() {
        let solution = solve_steady_state(net, load, opts).map_err(|e| Error::LoadSet {
            set: i + 1,
            source: Box::new(e),
        })?;
        let report = check_turbulence(&solution, net);
        if !report.all_turbulent() {
            log::warn!(
                "load set {}: {} pipe(s) outside the turbulent regime: {}",
                i + 1,
                report.flagged.len(),
                report
                    .flagged
                    .iter()
                    .map(|f| format!("{} (Re = {:.0})", f.pipe, f.reynolds))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
        let mut sensed = DVector::zeros(sensors.n_measured());
        for (row, &k) in sensors.measured().iter().enumerate() {
            sensed[row] = solution.pressure_heads[k];
            if let Some(normal) = &normal {
                sensed[row] += normal.sample(&mut rng);
            }
        }
        sets.push(MeasurementSet {
            demands: load.demands.clone(),
            source_heads: load.source_heads.clone(),
            sensed_heads: sensed,
        });
        solutions.push(solution);
    }
    Ok(GeneratedMeasurements { sets, solutions })
}
