//! Shared fixtures: the three-cycle benchmark network and a small random
//! network for oracle tests.
#![allow(dead_code)] // each test binary uses a different subset

use hydrocal_core::*;
use nalgebra::{dvector, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// True roughness of the benchmark network in mm, pipe order.
pub const TRUE_ROUGHNESS_MM: [f64; 8] = [2.0, 1.75, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25];

/// Demands of the three loading conditions in l/s at nodes 2, 3, 4.
pub const DEMANDS_LPS: [[f64; 3]; 3] = [
    [0.9002, 1.5002, 1.0502],
    [1.1001, 2.0001, 1.3501],
    [1.3000, 2.5000, 1.6500],
];

/// Published piezometric heads at the sensed nodes 2, 3, 4 per set, in m.
pub const SENSED_PIEZO_M: [[f64; 3]; 3] = [
    [90.9743, 90.8720, 90.8339],
    [85.0087, 84.8200, 84.7638],
    [77.5380, 77.2370, 77.1594],
];

/// Published best-known unmeasured heads (nodes 1 and 5) per set, in m.
pub const ROOT_HEADS_M: [[f64; 2]; 3] = [[93.104, 90.885], [88.538, 84.846], [82.818, 77.280]];

pub const SOURCE_HEAD_M: f64 = 100.0;

/// The five-node, eight-pipe, one-reservoir benchmark network with three
/// pressure sensors.
pub fn three_cycle_network() -> (Network, SensorConfig) {
    let lengths = [10.0, 10.0, 20.0, 15.0, 5.0, 10.0, 15.0, 5.0];
    let ends = [
        ("R", "1"),
        ("1", "2"),
        ("1", "3"),
        ("2", "4"),
        ("2", "5"),
        ("5", "4"),
        ("4", "3"),
        ("5", "3"),
    ];
    let pipes: Vec<Pipe> = (0..8)
        .map(|j| Pipe {
            id: format!("p{}", j + 1),
            from: ends[j].0.into(),
            to: ends[j].1.into(),
            length: lengths[j],
            diameter: 0.04,
            roughness: Some(TRUE_ROUGHNESS_MM[j] * 1e-3),
            minor_loss: 0.0,
        })
        .collect();
    let elevations = [0.0, 10.0, 5.0, 0.0, 0.0];
    let inner = (0..5)
        .map(|k| InnerNode {
            id: format!("{}", k + 1),
            elevation: elevations[k],
        })
        .collect();
    let net = Network::new(
        inner,
        vec![SourceNode { id: "R".into() }],
        pipes,
        FluidProperties::default(),
    )
    .unwrap();
    let sensors = SensorConfig::new(&net, &["2".into(), "3".into(), "4".into()]).unwrap();
    (net, sensors)
}

pub fn three_cycle_loads() -> Vec<LoadingCondition> {
    DEMANDS_LPS
        .iter()
        .map(|d| LoadingCondition {
            demands: dvector![0.0, d[0] * 1e-3, d[1] * 1e-3, d[2] * 1e-3, 0.0],
            source_heads: dvector![SOURCE_HEAD_M],
        })
        .collect()
}

/// Calibration problem fed by the forward solver (internally consistent
/// measurement data), plus the underlying solutions.
pub fn three_cycle_problem_generated() -> (CalibrationProblem, Vec<SteadyStateSolution>) {
    let (net, sensors) = three_cycle_network();
    let generated = generate_measurement_sets(
        &net,
        &three_cycle_loads(),
        &sensors,
        &NoiseSpec::default(),
        &SolverOptions::default(),
    )
    .unwrap();
    (
        CalibrationProblem::new(net, sensors, generated.sets).unwrap(),
        generated.solutions,
    )
}

/// Calibration problem built from the published table values (piezometric,
/// four decimals), converted to pressure heads.
pub fn three_cycle_problem_published() -> CalibrationProblem {
    let (net, sensors) = three_cycle_network();
    let elevations = [10.0, 5.0, 0.0]; // nodes 2, 3, 4
    let sets: Vec<MeasurementSet> = (0..3)
        .map(|i| MeasurementSet {
            demands: dvector![
                0.0,
                DEMANDS_LPS[i][0] * 1e-3,
                DEMANDS_LPS[i][1] * 1e-3,
                DEMANDS_LPS[i][2] * 1e-3,
                0.0
            ],
            source_heads: dvector![SOURCE_HEAD_M],
            sensed_heads: DVector::from_iterator(
                3,
                (0..3).map(|p| SENSED_PIEZO_M[i][p] - elevations[p]),
            ),
        })
        .collect();
    CalibrationProblem::new(net, sensors, sets).unwrap()
}

/// Decision vector at the true roughness with the given per-set heads.
pub fn pack_root(problem: &CalibrationProblem, heads: &[Vec<f64>]) -> DVector<f64> {
    let eps: Vec<f64> = TRUE_ROUGHNESS_MM.iter().map(|e| e * 1e-3).collect();
    problem.pack(&eps, heads).unwrap()
}

/// Random single-source network: chain R->1->2->3->4 with a 1->3 loop
/// pipe, sensors on nodes 2 and 4. Geometry, elevations and demands are
/// drawn from the seeded generator.
pub fn small_random_network(seed: u64) -> (Network, SensorConfig, Vec<LoadingCondition>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lengths = Vec::new();
    let mut eps = Vec::new();
    for _ in 0..5 {
        lengths.push(rng.random_range(5.0..25.0));
        eps.push(rng.random_range(0.2e-3..1.8e-3));
    }
    let ends = [("R", "1"), ("1", "2"), ("2", "3"), ("3", "4"), ("1", "3")];
    let pipes: Vec<Pipe> = (0..5)
        .map(|j| Pipe {
            id: format!("p{}", j + 1),
            from: ends[j].0.into(),
            to: ends[j].1.into(),
            length: lengths[j],
            diameter: 0.04,
            roughness: Some(eps[j]),
            minor_loss: 0.0,
        })
        .collect();
    let inner = (0..4)
        .map(|k| InnerNode {
            id: format!("{}", k + 1),
            elevation: rng.random_range(0.0..3.0),
        })
        .collect();
    let net = Network::new(
        inner,
        vec![SourceNode { id: "R".into() }],
        pipes,
        FluidProperties::default(),
    )
    .unwrap();
    let sensors = SensorConfig::new(&net, &["2".into(), "4".into()]).unwrap();
    let mut loads = Vec::new();
    for (hs, scale) in [(50.0, 1.0), (55.0, 1.35), (45.0, 0.75)] {
        let demands: Vec<f64> = (0..4)
            .map(|_| rng.random_range(0.5e-3..2.0e-3) * scale)
            .collect();
        loads.push(LoadingCondition {
            demands: DVector::from_vec(demands),
            source_heads: dvector![hs],
        });
    }
    (net, sensors, loads)
}
