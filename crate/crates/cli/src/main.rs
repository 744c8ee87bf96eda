//! `hydrocal`: validate networks, synthesize steady-state measurement sets,
//! calibrate per-pipe roughness, and scan merit surfaces.
//!
//! Exit codes: 0 ok, 1 domain violation, 2 usage/parse error, 3 solver
//! failure, 4 infeasible calibration result.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use hydrocal_core::{
    calibration, check_turbulence, generate_measurement_sets, initial_guess, io, merit,
    multistart_calibrate, scan_merit, CalibrationProblem, Error, MultistartOptions, NewtonOptions,
    NoiseSpec, Norm, ScanAxis, ScanAxisGrid, SolverOptions, TURBULENT_RE_MIN,
};

#[derive(Parser)]
#[command(
    name = "hydrocal",
    version,
    about = "Steady-state water-network simulation and pipe-roughness calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormArg {
    L1,
    L2,
    Linf,
}

impl From<NormArg> for Norm {
    fn from(value: NormArg) -> Self {
        match value {
            NormArg::L1 => Norm::L1,
            NormArg::L2 => Norm::L2,
            NormArg::Linf => Norm::LInf,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a network document against the modelling assumptions.
    Validate {
        /// Network JSON document.
        network: PathBuf,
    },
    /// Solve loading conditions and write the measurement-set document.
    Simulate {
        network: PathBuf,
        /// Loads JSON document (demands and source heads per set).
        loads: PathBuf,
        /// Measurement-set JSON to write.
        #[arg(short, long)]
        output: PathBuf,
        /// Standard deviation of Gaussian sensor noise in m.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Identify per-pipe roughness from a measurement-set document.
    Calibrate {
        network: PathBuf,
        measurements: PathBuf,
        /// Result JSON to write; a trace CSV is written next to it.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = calibration::DEFAULT_SEED)]
        seed: u64,
        /// Total number of Newton launches.
        #[arg(long, default_value_t = 7)]
        max_outer: usize,
        /// Norm used in the printed summary (the search itself is L1).
        #[arg(long, value_enum, default_value_t = NormArg::L1)]
        norm: NormArg,
        /// Treat sensed heads in the input as piezometric and subtract
        /// node elevations on ingestion.
        #[arg(long)]
        piezometric: bool,
        /// Inner merit-progress tolerance (eps_f).
        #[arg(long)]
        tol_merit: Option<f64>,
        /// Inner step-size tolerance (eps_x).
        #[arg(long)]
        tol_step: Option<f64>,
        /// Inner iteration cap per launch.
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Evaluate the merit surface on a grid over one or two coordinates.
    Scan {
        network: PathBuf,
        measurements: PathBuf,
        /// Axis spec: `eps:<pipe>:<min>:<max>:<count>` or
        /// `hn:<set>:<node>:<min>:<max>:<count>` (set is 1-based).
        #[arg(long)]
        axis_a: String,
        #[arg(long)]
        axis_b: Option<String>,
        /// Grid CSV to write (columns a, b, v_l1, v_l2, v_linf).
        #[arg(short, long)]
        output: PathBuf,
        /// Calibration result JSON fixing the non-scanned coordinates;
        /// defaults to the initial-guess point.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        piezometric: bool,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Self {
            code: exit_code(&err),
            message: err.to_string(),
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidNetwork(_) => 1,
        Error::Json(_)
        | Error::Io(_)
        | Error::UnknownId { .. }
        | Error::NetworkBuild(_)
        | Error::DimensionMismatch { .. }
        | Error::NoSensors
        | Error::InsufficientMeasurementSets { .. } => 2,
        Error::LoadSet { source, .. } => exit_code(source),
        _ => 3,
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HYDROCAL_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(failure) = run(cli.command) {
        eprintln!("error: {}", failure.message);
        std::process::exit(failure.code);
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { network } => validate(&network),
        Command::Simulate {
            network,
            loads,
            output,
            noise,
            seed,
        } => simulate(&network, &loads, &output, noise, seed),
        Command::Calibrate {
            network,
            measurements,
            output,
            seed,
            max_outer,
            norm,
            piezometric,
            tol_merit,
            tol_step,
            max_iter,
        } => {
            let mut inner = NewtonOptions::default();
            if let Some(v) = tol_merit {
                inner.tol_merit = v;
            }
            if let Some(v) = tol_step {
                inner.tol_step = v;
            }
            if let Some(v) = max_iter {
                inner.max_iterations = v;
            }
            let opts = MultistartOptions {
                seed,
                max_outer,
                inner,
                ..Default::default()
            };
            calibrate(
                &network,
                &measurements,
                &output,
                opts,
                norm.into(),
                piezometric,
            )
        }
        Command::Scan {
            network,
            measurements,
            axis_a,
            axis_b,
            output,
            base,
            piezometric,
        } => scan(
            &network,
            &measurements,
            &axis_a,
            axis_b.as_deref(),
            &output,
            base.as_deref(),
            piezometric,
        ),
    }
}

fn validate(network: &Path) -> Result<(), Failure> {
    let (net, _) = io::read_network(network)?;
    let violations = net.validate();
    if violations.is_empty() {
        println!(
            "network OK: {} inner node(s), {} source(s), {} pipe(s)",
            net.n_inner(),
            net.n_sources(),
            net.n_pipes()
        );
        Ok(())
    } else {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        Err(Failure {
            code: 1,
            message: format!("{} violation(s) found", violations.len()),
        })
    }
}

fn simulate(
    network: &Path,
    loads_path: &Path,
    output: &Path,
    noise: f64,
    seed: u64,
) -> Result<(), Failure> {
    if noise < 0.0 {
        return Err(Failure::usage("--noise must be non-negative"));
    }
    let (net, sensors) = io::read_network(network)?;
    let loads = io::read_loads(loads_path, &net)?;
    let generated = generate_measurement_sets(
        &net,
        &loads,
        &sensors,
        &NoiseSpec { sigma: noise, seed },
        &SolverOptions::default(),
    )?;
    for (i, sol) in generated.solutions.iter().enumerate() {
        let report = check_turbulence(sol, &net);
        println!(
            "set {}: {} iteration(s), residual {:.2e}, Re in [{:.0}, {:.0}]",
            i + 1,
            sol.iterations,
            sol.residual_norm,
            sol.reynolds.min(),
            sol.reynolds.max()
        );
        if !report.all_turbulent() {
            for flag in &report.flagged {
                eprintln!(
                    "warning: set {} pipe '{}' below the turbulent regime (Re = {:.0} < {:.0})",
                    i + 1,
                    flag.pipe,
                    flag.reynolds,
                    TURBULENT_RE_MIN
                );
            }
        }
    }
    io::write_measurements(output, &net, &sensors, &generated.sets)?;
    println!(
        "wrote {} measurement set(s) to {}",
        generated.sets.len(),
        output.display()
    );
    Ok(())
}

fn trace_path(output: &Path) -> PathBuf {
    output.with_extension("trace.csv")
}

fn calibrate(
    network: &Path,
    measurements: &Path,
    output: &Path,
    opts: MultistartOptions,
    report_norm: Norm,
    piezometric: bool,
) -> Result<(), Failure> {
    let (net, sensors) = io::read_network(network)?;
    let sets = io::read_measurements(measurements, &net, &sensors, piezometric)?;
    let problem = CalibrationProblem::new(net, sensors, sets)?;
    let result = multistart_calibrate(&problem, &opts)?;

    io::write_result(output, &problem, &result)?;
    let trace = trace_path(output);
    io::write_trace_csv(&trace, &problem, &result)?;

    let norm_name = match report_norm {
        Norm::L1 => "L1",
        Norm::L2 => "L2",
        Norm::LInf => "Linf",
    };
    println!(
        "merit ({norm_name}): {:.4e} m3/s over {} launch(es), seed {}",
        merit(&result.residual, report_norm),
        result.trace.len(),
        result.seed
    );
    let net = problem.network();
    let roughness: Vec<String> = (0..problem.n_pipes())
        .map(|j| format!("{}={:.4}", net.pipes()[j].id, result.x[j] * 1e3))
        .collect();
    println!("roughness (mm): {}", roughness.join(" "));
    for set in 0..problem.n_sets() {
        let heads: Vec<String> = problem
            .sensors()
            .unmeasured()
            .iter()
            .enumerate()
            .map(|(slot, &k)| {
                format!(
                    "{}={:.4}",
                    net.inner_nodes()[k].id,
                    result.x[problem.n_pipes() + set * problem.n_free() + slot]
                )
            })
            .collect();
        println!("set {} unmeasured heads (m): {}", set + 1, heads.join(" "));
    }
    for warning in &result.final_warnings {
        match warning {
            calibration::EvalWarning::Subturbulent { set, pipe, reynolds } => eprintln!(
                "warning: set {} pipe '{}' is below the turbulent regime at the solution (Re = {:.0})",
                set + 1,
                net.pipes()[*pipe].id,
                reynolds
            ),
            calibration::EvalWarning::ZeroHeadLoss { set, pipe } => eprintln!(
                "warning: set {} pipe '{}' carries no head loss at the solution",
                set + 1,
                net.pipes()[*pipe].id
            ),
        }
    }
    println!("wrote {} and {}", output.display(), trace.display());

    if result.feasible {
        Ok(())
    } else {
        Err(Failure {
            code: 4,
            message: format!(
                "best candidate is outside the physical head range (merit {:.4e}); result written for inspection",
                result.merit
            ),
        })
    }
}

fn parse_axis(spec: &str, problem: &CalibrationProblem) -> Result<ScanAxisGrid, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let parse_f = |s: &str, what: &str| -> Result<f64, Failure> {
        s.parse()
            .map_err(|_| Failure::usage(format!("axis {what} '{s}' is not a number")))
    };
    match parts.as_slice() {
        ["eps", pipe, min, max, count] => {
            let pipe_idx = problem
                .network()
                .pipe_index(pipe)
                .ok_or_else(|| Failure::usage(format!("unknown pipe id '{pipe}'")))?;
            Ok(ScanAxisGrid {
                axis: ScanAxis::Roughness { pipe: pipe_idx },
                start: parse_f(min, "min")?,
                end: parse_f(max, "max")?,
                points: count
                    .parse()
                    .map_err(|_| Failure::usage(format!("bad grid count '{count}'")))?,
            })
        }
        ["hn", set, node, min, max, count] => {
            let set_no: usize = set
                .parse()
                .map_err(|_| Failure::usage(format!("bad set index '{set}'")))?;
            if set_no == 0 || set_no > problem.n_sets() {
                return Err(Failure::usage(format!(
                    "set index {set_no} out of range (1..={})",
                    problem.n_sets()
                )));
            }
            let node_idx = problem
                .network()
                .inner_index(node)
                .ok_or_else(|| Failure::usage(format!("unknown inner node id '{node}'")))?;
            let slot = problem
                .sensors()
                .unmeasured()
                .iter()
                .position(|&k| k == node_idx)
                .ok_or_else(|| {
                    Failure::usage(format!("node '{node}' carries a sensor; its head is not scanned"))
                })?;
            Ok(ScanAxisGrid {
                axis: ScanAxis::UnmeasuredHead { set: set_no - 1, slot },
                start: parse_f(min, "min")?,
                end: parse_f(max, "max")?,
                points: count
                    .parse()
                    .map_err(|_| Failure::usage(format!("bad grid count '{count}'")))?,
            })
        }
        _ => Err(Failure::usage(format!(
            "axis spec '{spec}' must be eps:<pipe>:<min>:<max>:<count> or hn:<set>:<node>:<min>:<max>:<count>"
        ))),
    }
}

/// Rebuilds a decision vector from a written calibration result.
fn base_from_result(path: &Path, problem: &CalibrationProblem) -> Result<DVector<f64>, Failure> {
    let doc = io::read_result(path).map_err(|e| Failure::usage(e.to_string()))?;
    if doc.roughness_mm.len() != problem.n_pipes() {
        return Err(Failure::usage(format!(
            "result has {} roughness values, network has {} pipes",
            doc.roughness_mm.len(),
            problem.n_pipes()
        )));
    }
    let net = problem.network();
    let mut heads = Vec::new();
    for set in 0..problem.n_sets() {
        let per_node = doc
            .unmeasured_heads_m
            .get(&(set + 1).to_string())
            .ok_or_else(|| Failure::usage(format!("result lacks heads for set {}", set + 1)))?;
        let mut block = Vec::new();
        for &k in problem.sensors().unmeasured() {
            let id = &net.inner_nodes()[k].id;
            let value = per_node
                .get(id)
                .ok_or_else(|| Failure::usage(format!("result lacks head for node '{id}'")))?;
            block.push(*value);
        }
        heads.push(block);
    }
    let roughness: Vec<f64> = doc.roughness_mm.iter().map(|mm| mm * 1e-3).collect();
    problem
        .pack(&roughness, &heads)
        .map_err(|e| Failure::usage(e.to_string()))
}

fn scan(
    network: &Path,
    measurements: &Path,
    axis_a: &str,
    axis_b: Option<&str>,
    output: &Path,
    base: Option<&Path>,
    piezometric: bool,
) -> Result<(), Failure> {
    let (net, sensors) = io::read_network(network)?;
    let sets = io::read_measurements(measurements, &net, &sensors, piezometric)?;
    let problem = CalibrationProblem::new(net, sensors, sets)?;

    let grid_a = parse_axis(axis_a, &problem)?;
    let grid_b = axis_b.map(|s| parse_axis(s, &problem)).transpose()?;
    let x_base = match base {
        Some(path) => base_from_result(path, &problem)?,
        None => initial_guess(&problem).0,
    };

    let (samples, out_of_range) = scan_merit(&problem, &x_base, &grid_a, grid_b.as_ref())?;
    io::write_scan_csv(output, &samples)?;
    if out_of_range > 0 {
        eprintln!("warning: {out_of_range} grid point(s) outside the physical range");
    }
    println!(
        "wrote {} grid sample(s) to {}",
        samples.len(),
        output.display()
    );
    Ok(())
}
