//! Document formats: network, loading-condition, measurement and result
//! files (JSON) plus the CSV emitters for traces and merit scans.
//!
//! Units are SI throughout the files (m, m3/s); human-facing reports echo
//! roughness in mm. Map keys are node ids; maps are ordered so that writes
//! are byte-stable.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationProblem, CalibrationResult, ScanSample};
use crate::error::{Error, Result};
use crate::network::{FluidProperties, InnerNode, Network, Pipe, SourceNode};
use crate::steady::{LoadingCondition, MeasurementSet};
use crate::topology::SensorConfig;

/// Whether head values in a measurement document are pressure heads or
/// piezometric heads (pressure plus elevation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HeadConvention {
    #[default]
    Pressure,
    Piezometric,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FluidDoc {
    rho: f64,
    eta: f64,
    g: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeDoc {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    elevation: Option<f64>,
    #[serde(rename = "type")]
    kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NodeKind {
    Inner,
    Source,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PipeDoc {
    id: String,
    from: String,
    to: String,
    length: f64,
    diameter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roughness: Option<f64>,
}

/// On-disk network document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDoc {
    fluid: FluidDoc,
    nodes: Vec<NodeDoc>,
    pipes: Vec<PipeDoc>,
    #[serde(default)]
    sensors: Vec<String>,
}

impl NetworkDoc {
    pub fn from_network(net: &Network, sensors: &SensorConfig) -> Self {
        let mut nodes: Vec<NodeDoc> = net
            .inner_nodes()
            .iter()
            .map(|n| NodeDoc {
                id: n.id.clone(),
                elevation: Some(n.elevation),
                kind: NodeKind::Inner,
            })
            .collect();
        nodes.extend(net.source_nodes().iter().map(|n| NodeDoc {
            id: n.id.clone(),
            elevation: None,
            kind: NodeKind::Source,
        }));
        Self {
            fluid: FluidDoc {
                rho: net.fluid().density,
                eta: net.fluid().dynamic_viscosity,
                g: net.fluid().gravity,
            },
            nodes,
            pipes: net
                .pipes()
                .iter()
                .map(|p| PipeDoc {
                    id: p.id.clone(),
                    from: p.from.clone(),
                    to: p.to.clone(),
                    length: p.length,
                    diameter: p.diameter,
                    roughness: p.roughness,
                })
                .collect(),
            sensors: sensors
                .measured()
                .iter()
                .map(|&k| net.inner_nodes()[k].id.clone())
                .collect(),
        }
    }

    pub fn into_network(self) -> Result<(Network, SensorConfig)> {
        let mut inner = Vec::new();
        let mut sources = Vec::new();
        for node in self.nodes {
            match node.kind {
                NodeKind::Inner => inner.push(InnerNode {
                    id: node.id,
                    elevation: node.elevation.unwrap_or(0.0),
                }),
                NodeKind::Source => sources.push(SourceNode { id: node.id }),
            }
        }
        let pipes = self
            .pipes
            .into_iter()
            .map(|p| Pipe {
                id: p.id,
                from: p.from,
                to: p.to,
                length: p.length,
                diameter: p.diameter,
                roughness: p.roughness,
                minor_loss: 0.0,
            })
            .collect();
        let net = Network::new(
            inner,
            sources,
            pipes,
            FluidProperties {
                density: self.fluid.rho,
                dynamic_viscosity: self.fluid.eta,
                gravity: self.fluid.g,
            },
        )?;
        let sensors = SensorConfig::new(&net, &self.sensors)?;
        Ok((net, sensors))
    }
}

pub fn read_network(path: &Path) -> Result<(Network, SensorConfig)> {
    let text = std::fs::read_to_string(path)?;
    let doc: NetworkDoc = serde_json::from_str(&text)?;
    doc.into_network()
}

pub fn write_network(path: &Path, net: &Network, sensors: &SensorConfig) -> Result<()> {
    let doc = NetworkDoc::from_network(net, sensors);
    write_json(path, &doc)
}

/// One loading condition in a loads document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadDoc {
    /// Demand per inner node id in m3/s; omitted nodes draw nothing.
    pub demands: BTreeMap<String, f64>,
    /// Head per source id in m; every source must be listed.
    pub source_heads: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadsDoc {
    pub sets: Vec<LoadDoc>,
}

fn demands_vector(map: &BTreeMap<String, f64>, net: &Network) -> Result<DVector<f64>> {
    let mut demands = DVector::zeros(net.n_inner());
    for (id, &value) in map {
        let k = net.inner_index(id).ok_or_else(|| Error::UnknownId {
            kind: "inner node",
            id: id.clone(),
        })?;
        demands[k] = value;
    }
    Ok(demands)
}

fn source_vector(map: &BTreeMap<String, f64>, net: &Network) -> Result<DVector<f64>> {
    let mut heads = DVector::zeros(net.n_sources());
    for (id, &value) in map {
        let s = net.source_index(id).ok_or_else(|| Error::UnknownId {
            kind: "source node",
            id: id.clone(),
        })?;
        heads[s] = value;
    }
    for (s, node) in net.source_nodes().iter().enumerate() {
        if !map.contains_key(&node.id) {
            return Err(Error::NetworkBuild(format!(
                "source '{}' has no head in slot {s} of the document",
                node.id
            )));
        }
    }
    Ok(heads)
}

pub fn read_loads(path: &Path, net: &Network) -> Result<Vec<LoadingCondition>> {
    let text = std::fs::read_to_string(path)?;
    let doc: LoadsDoc = serde_json::from_str(&text)?;
    doc.sets
        .iter()
        .map(|set| {
            Ok(LoadingCondition {
                demands: demands_vector(&set.demands, net)?,
                source_heads: source_vector(&set.source_heads, net)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementSetDoc {
    pub demands: BTreeMap<String, f64>,
    pub source_heads: BTreeMap<String, f64>,
    pub sensed_heads: BTreeMap<String, f64>,
}

/// On-disk measurement document. `simulate` writes it; `calibrate` reads it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementsDoc {
    pub sets: Vec<MeasurementSetDoc>,
    #[serde(default)]
    pub head_convention: HeadConvention,
}

impl MeasurementsDoc {
    pub fn from_sets(net: &Network, sensors: &SensorConfig, sets: &[MeasurementSet]) -> Self {
        let set_docs = sets
            .iter()
            .map(|set| {
                let mut demands = BTreeMap::new();
                for (k, node) in net.inner_nodes().iter().enumerate() {
                    demands.insert(node.id.clone(), set.demands[k]);
                }
                let mut source_heads = BTreeMap::new();
                for (s, node) in net.source_nodes().iter().enumerate() {
                    source_heads.insert(node.id.clone(), set.source_heads[s]);
                }
                let mut sensed = BTreeMap::new();
                for (row, &k) in sensors.measured().iter().enumerate() {
                    sensed.insert(net.inner_nodes()[k].id.clone(), set.sensed_heads[row]);
                }
                MeasurementSetDoc {
                    demands,
                    source_heads,
                    sensed_heads: sensed,
                }
            })
            .collect();
        Self {
            sets: set_docs,
            head_convention: HeadConvention::Pressure,
        }
    }

    /// Resolves the document against a network; piezometric documents have
    /// the node elevation subtracted from every sensed head.
    pub fn into_sets(
        self,
        net: &Network,
        sensors: &SensorConfig,
        force_piezometric: bool,
    ) -> Result<Vec<MeasurementSet>> {
        let convention = if force_piezometric {
            HeadConvention::Piezometric
        } else {
            self.head_convention
        };
        self.sets
            .iter()
            .map(|doc| {
                let mut sensed = DVector::zeros(sensors.n_measured());
                for (id, &value) in &doc.sensed_heads {
                    let k = net.inner_index(id).ok_or_else(|| Error::UnknownId {
                        kind: "inner node",
                        id: id.clone(),
                    })?;
                    let row = sensors
                        .measured()
                        .iter()
                        .position(|&m| m == k)
                        .ok_or_else(|| {
                            Error::NetworkBuild(format!(
                                "sensed head given for '{id}', which carries no sensor"
                            ))
                        })?;
                    sensed[row] = match convention {
                        HeadConvention::Pressure => value,
                        HeadConvention::Piezometric => value - net.inner_nodes()[k].elevation,
                    };
                }
                if doc.sensed_heads.len() != sensors.n_measured() {
                    return Err(Error::DimensionMismatch {
                        what: "sensed heads",
                        expected: sensors.n_measured(),
                        got: doc.sensed_heads.len(),
                    });
                }
                Ok(MeasurementSet {
                    demands: demands_vector(&doc.demands, net)?,
                    source_heads: source_vector(&doc.source_heads, net)?,
                    sensed_heads: sensed,
                })
            })
            .collect()
    }
}

pub fn read_measurements(
    path: &Path,
    net: &Network,
    sensors: &SensorConfig,
    force_piezometric: bool,
) -> Result<Vec<MeasurementSet>> {
    let text = std::fs::read_to_string(path)?;
    let doc: MeasurementsDoc = serde_json::from_str(&text)?;
    doc.into_sets(net, sensors, force_piezometric)
}

pub fn write_measurements(
    path: &Path,
    net: &Network,
    sensors: &SensorConfig,
    sets: &[MeasurementSet],
) -> Result<()> {
    write_json(path, &MeasurementsDoc::from_sets(net, sensors, sets))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntryDoc {
    pub outer_iter: usize,
    /// Decision vector the launch started from, SI units.
    pub x0: Vec<f64>,
    /// Decision vector the launch returned, SI units.
    pub x: Vec<f64>,
    /// L1 merit of the returned vector in m3/s.
    pub v: f64,
}

/// Calibration result document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultDoc {
    /// Best roughness per pipe in mm, pipe order.
    pub roughness_mm: Vec<f64>,
    /// Unmeasured pressure heads in m: set number -> node id -> head.
    pub unmeasured_heads_m: BTreeMap<String, BTreeMap<String, f64>>,
    /// L1 merit of the best solution in m3/s.
    pub merit: f64,
    pub feasible: bool,
    pub trace: Vec<TraceEntryDoc>,
    pub seed: u64,
}

impl ResultDoc {
    pub fn new(problem: &CalibrationProblem, result: &CalibrationResult) -> Self {
        let net = problem.network();
        let roughness_mm = (0..problem.n_pipes()).map(|j| result.x[j] * 1e3).collect();
        let mut unmeasured = BTreeMap::new();
        for set in 0..problem.n_sets() {
            let mut per_node = BTreeMap::new();
            for (slot, &node) in problem.sensors().unmeasured().iter().enumerate() {
                per_node.insert(
                    net.inner_nodes()[node].id.clone(),
                    result.x[problem.n_pipes() + set * problem.n_free() + slot],
                );
            }
            unmeasured.insert((set + 1).to_string(), per_node);
        }
        Self {
            roughness_mm,
            unmeasured_heads_m: unmeasured,
            merit: result.merit,
            feasible: result.feasible,
            trace: result
                .trace
                .iter()
                .map(|t| TraceEntryDoc {
                    outer_iter: t.outer_iter,
                    x0: t.x0.iter().copied().collect(),
                    x: t.x.iter().copied().collect(),
                    v: t.merit,
                })
                .collect(),
            seed: result.seed,
        }
    }
}

pub fn write_result(
    path: &Path,
    problem: &CalibrationProblem,
    result: &CalibrationResult,
) -> Result<()> {
    write_json(path, &ResultDoc::new(problem, result))
}

pub fn read_result(path: &Path) -> Result<ResultDoc> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Trace table mirroring the presentation of the calibration tables: one
/// column per outer iteration, roughness rows in mm, head rows in m, and a
/// final `v * 1e5` row for the solutions.
pub fn write_trace_csv(
    path: &Path,
    problem: &CalibrationProblem,
    result: &CalibrationResult,
) -> Result<()> {
    let net = problem.network();
    let mut out = String::new();
    out.push_str("table,quantity");
    for entry in &result.trace {
        out.push_str(&format!(",iter_{}", entry.outer_iter));
    }
    out.push('\n');

    let mut row = |table: &str, quantity: &str, values: Vec<f64>| {
        out.push_str(table);
        out.push(',');
        out.push_str(quantity);
        for v in values {
            out.push_str(&format!(",{v:.4}"));
        }
        out.push('\n');
    };

    for which in ["x0", "x"] {
        let pick = |t: &crate::calibration::OuterIteration, i: usize| match which {
            "x0" => t.x0[i],
            _ => t.x[i],
        };
        for j in 0..problem.n_pipes() {
            row(
                which,
                &format!("eps_{}_mm", net.pipes()[j].id),
                result.trace.iter().map(|t| pick(t, j) * 1e3).collect(),
            );
        }
        for set in 0..problem.n_sets() {
            for (slot, &node) in problem.sensors().unmeasured().iter().enumerate() {
                let i = problem.n_pipes() + set * problem.n_free() + slot;
                row(
                    which,
                    &format!("hn_set{}_{}_m", set + 1, net.inner_nodes()[node].id),
                    result.trace.iter().map(|t| pick(t, i)).collect(),
                );
            }
        }
        if which == "x" {
            row(
                "x",
                "v_times_1e5",
                result.trace.iter().map(|t| t.merit * 1e5).collect(),
            );
        }
    }

    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Merit-scan grid as CSV with full double precision.
pub fn write_scan_csv(path: &Path, samples: &[ScanSample]) -> Result<()> {
    let mut out = String::from("a,b,v_l1,v_l2,v_linf\n");
    for s in samples {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            s.a, s.b, s.l1, s.l2, s.linf
        ));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
