//! Inverse problem: identify per-pipe roughness and unmeasured heads from
//! steady-state measurement sets.
//!
//! The decision vector stacks the roughnesses first, then the unmeasured
//! pressure heads of each measurement set:
//! `x = [eps; h_N(1); ...; h_N(n_m)]`.

mod multistart;
mod newton;
mod residual;
mod scan;

pub use multistart::{
    column_scaling, default_bounds, initial_guess, multistart_calibrate, CalibrationResult,
    MultistartOptions, OuterIteration, DEFAULT_SEED, ROUGHNESS_DIAMETER_FRACTION,
};
pub use newton::{
    descent_rate, merit, newton_direction, newton_solve, AcceptedStep, Backtrack, NewtonOptions,
    NewtonRun, Norm,
};
pub use residual::EvalWarning;
pub use scan::{scan_merit, ScanAxis, ScanAxisGrid, ScanSample};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::friction::PipeHydraulics;
use crate::network::{Network, NodeRef};
use crate::steady::MeasurementSet;
use crate::topology::{build_incidence, SensorConfig};

/// Head losses closer to zero than this are treated as zero flow; the pipe
/// contributes nothing to the residual or Jacobian and a warning is recorded.
pub const HEAD_LOSS_GUARD: f64 = 1e-9;

/// Physical box for the decision vector: roughness in `[0, 0.05 d]` per
/// pipe, unmeasured heads between the extreme known heads around the node.
#[derive(Debug, Clone)]
pub struct PhysicalBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl PhysicalBounds {
    /// True when all unmeasured-head components of `x` lie inside the box.
    /// Roughness components are deliberately not checked here; the
    /// multistart loop lets them stray and redraws them instead.
    pub fn heads_within(&self, x: &DVector<f64>, n_pipes: usize) -> bool {
        (n_pipes..x.len()).all(|i| self.lower[i] <= x[i] && x[i] <= self.upper[i])
    }
}

/// Immutable description of one calibration problem.
#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    net: Network,
    sensors: SensorConfig,
    sets: Vec<MeasurementSet>,
    pipes: Vec<PipeHydraulics>,
    incidence: DMatrix<f64>,
    /// `A^T Cbar^T`: maps unmeasured heads onto per-pipe head differences.
    unmeasured_map: DMatrix<f64>,
    /// Per set: `C_s h_s - A^T (C_h^T y + z)`, the head-loss part that does
    /// not depend on the unknowns.
    fixed_losses: Vec<DVector<f64>>,
}

impl CalibrationProblem {
    pub fn new(net: Network, sensors: SensorConfig, sets: Vec<MeasurementSet>) -> Result<Self> {
        net.require_valid()?;
        if sets.is_empty() {
            return Err(Error::InsufficientMeasurementSets { have: 0, need: 1 });
        }
        let n_inner = net.n_inner();
        for set in &sets {
            if set.demands.len() != n_inner {
                return Err(Error::DimensionMismatch {
                    what: "measurement-set demands",
                    expected: n_inner,
                    got: set.demands.len(),
                });
            }
            if set.source_heads.len() != net.n_sources() {
                return Err(Error::DimensionMismatch {
                    what: "measurement-set source heads",
                    expected: net.n_sources(),
                    got: set.source_heads.len(),
                });
            }
            if set.sensed_heads.len() != sensors.n_measured() {
                return Err(Error::DimensionMismatch {
                    what: "measurement-set sensed heads",
                    expected: sensors.n_measured(),
                    got: set.sensed_heads.len(),
                });
            }
        }

        let fluid = *net.fluid();
        let pipes: Vec<PipeHydraulics> = net
            .pipes()
            .iter()
            .map(|p| PipeHydraulics::new(p.length, p.diameter, fluid.gravity, 0.0))
            .collect();

        let (a_int, cs_int) = build_incidence(&net)?;
        let incidence = a_int.map(|v| v as f64);
        let cs = cs_int.map(|v| v as f64);
        let a_t = incidence.transpose();

        let n_free = sensors.n_unmeasured();
        let mut unmeasured_map = DMatrix::zeros(net.n_pipes(), n_free);
        for (col, &k) in sensors.unmeasured().iter().enumerate() {
            unmeasured_map.set_column(col, &a_t.column(k));
        }

        let elevations = net.elevations();
        let fixed_losses = sets
            .iter()
            .map(|set| {
                let mut known = elevations.clone();
                for (row, &k) in sensors.measured().iter().enumerate() {
                    known[k] += set.sensed_heads[row];
                }
                &cs * &set.source_heads - &a_t * known
            })
            .collect();

        Ok(Self {
            net,
            sensors,
            sets,
            pipes,
            incidence,
            unmeasured_map,
            fixed_losses,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn sensors(&self) -> &SensorConfig {
        &self.sensors
    }

    pub fn sets(&self) -> &[MeasurementSet] {
        &self.sets
    }

    pub fn pipes(&self) -> &[PipeHydraulics] {
        &self.pipes
    }

    pub(crate) fn incidence(&self) -> &DMatrix<f64> {
        &self.incidence
    }

    pub(crate) fn unmeasured_map(&self) -> &DMatrix<f64> {
        &self.unmeasured_map
    }

    pub fn n_pipes(&self) -> usize {
        self.net.n_pipes()
    }

    pub fn n_inner(&self) -> usize {
        self.net.n_inner()
    }

    pub fn n_sets(&self) -> usize {
        self.sets.len()
    }

    /// Unknown heads per measurement set.
    pub fn n_free(&self) -> usize {
        self.sensors.n_unmeasured()
    }

    /// Length of the decision vector.
    pub fn dim(&self) -> usize {
        self.n_pipes() + self.n_sets() * self.n_free()
    }

    /// Length of the stacked residual.
    pub fn residual_dim(&self) -> usize {
        self.n_sets() * self.n_inner()
    }

    /// View of the unmeasured heads of set `i` inside a decision vector.
    pub fn heads_of<'a>(&self, x: &'a DVector<f64>, set: usize) -> nalgebra::DVectorView<'a, f64> {
        x.rows(self.n_pipes() + set * self.n_free(), self.n_free())
    }

    /// Assembles a decision vector from roughnesses and per-set heads.
    pub fn pack(&self, roughness: &[f64], heads: &[Vec<f64>]) -> Result<DVector<f64>> {
        if roughness.len() != self.n_pipes() {
            return Err(Error::DimensionMismatch {
                what: "roughness vector",
                expected: self.n_pipes(),
                got: roughness.len(),
            });
        }
        if heads.len() != self.n_sets() || heads.iter().any(|h| h.len() != self.n_free()) {
            return Err(Error::DimensionMismatch {
                what: "unmeasured-head blocks",
                expected: self.n_sets() * self.n_free(),
                got: heads.iter().map(|h| h.len()).sum(),
            });
        }
        let mut x = DVector::zeros(self.dim());
        x.rows_mut(0, self.n_pipes()).copy_from_slice(roughness);
        for (i, block) in heads.iter().enumerate() {
            x.rows_mut(self.n_pipes() + i * self.n_free(), self.n_free())
                .copy_from_slice(block);
        }
        Ok(x)
    }

    pub(crate) fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "decision vector",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-pipe head losses of measurement set `i` implied by the decision
    /// vector: `C_s h_s - A^T C_h^T y - A^T Cbar^T h_N - A^T z`.
    pub fn head_losses(&self, x: &DVector<f64>, set: usize) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let h_n = self.heads_of(x, set);
        Ok(&self.fixed_losses[set] - &self.unmeasured_map * h_n)
    }

    /// Known piezometric heads adjacent to inner node `k` in set `i`:
    /// sensed nodes contribute `y + z`, sources contribute their head.
    /// Falls back to all known heads (with a flag) when the node has no
    /// known-head neighbor.
    pub(crate) fn known_neighbor_heads(&self, k: usize, set: usize) -> (Vec<f64>, bool) {
        let meas = &self.sets[set];
        let piezo_of = |r: NodeRef| -> Option<f64> {
            match r {
                NodeRef::Inner(m) => self
                    .sensors
                    .measured()
                    .iter()
                    .position(|&j| j == m)
                    .map(|row| meas.sensed_heads[row] + self.net.inner_nodes()[m].elevation),
                NodeRef::Source(s) => Some(meas.source_heads[s]),
            }
        };
        let adjacent: Vec<f64> = self
            .net
            .neighbors_of_inner(k)
            .into_iter()
            .filter_map(piezo_of)
            .collect();
        if !adjacent.is_empty() {
            return (adjacent, false);
        }
        let mut all = Vec::new();
        for (row, &m) in self.sensors.measured().iter().enumerate() {
            all.push(meas.sensed_heads[row] + self.net.inner_nodes()[m].elevation);
        }
        for s in 0..self.net.n_sources() {
            all.push(meas.source_heads[s]);
        }
        (all, true)
    }
}
