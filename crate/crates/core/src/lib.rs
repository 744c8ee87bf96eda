//! Water-distribution network hydraulics: a steady-state forward solver and
//! an inverse solver that identifies per-pipe roughness from sparse pressure
//! measurements.
//!
//! The crate is organized along the data flow:
//!
//! * [`network`] / [`topology`] — the graph, its validation and the exact
//!   integer structure matrices (incidence, cycle basis, selectors);
//! * [`friction`] — Colebrook-White / Darcy-Weisbach pipe hydraulics and the
//!   explicit turbulent flow with analytic derivatives;
//! * [`steady`] — forward solver used to synthesize measurement sets;
//! * [`calibration`] — residual/Jacobian of the inverse problem, damped
//!   Newton iteration with step-length control, multistart search and
//!   merit-surface scans;
//! * [`io`] — JSON/CSV document formats shared with the command-line tool.

pub mod calibration;
pub mod error;
pub mod friction;
pub mod io;
pub mod network;
pub mod steady;
pub mod topology;

pub use calibration::{
    default_bounds, descent_rate, initial_guess, merit, multistart_calibrate, newton_direction,
    newton_solve, scan_merit, CalibrationProblem, CalibrationResult, MultistartOptions,
    NewtonOptions, NewtonRun, Norm, PhysicalBounds, ScanAxis, ScanAxisGrid, ScanSample,
};
pub use error::{Error, Result};
pub use friction::{PipeHydraulics, TURBULENT_RE_MIN};
pub use network::{FluidProperties, InnerNode, Network, NodeRef, Pipe, SourceNode, Violation};
pub use steady::{
    check_turbulence, generate_measurement_sets, solve_steady_state, GeneratedMeasurements,
    LoadingCondition, MeasurementSet, NoiseSpec, SolverOptions, SteadyStateSolution,
    TurbulenceReport,
};
pub use topology::{
    build_cycle_basis, build_incidence, integer_rank, min_measurement_sets, SensorConfig,
    TopologyMatrices,
};
