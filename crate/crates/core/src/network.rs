//! Network description: nodes, pipes, fluid, and validation.
//!
//! A [`Network`] is immutable after construction. Node and pipe ordering is
//! the order of the input document; every matrix and vector in the crate is
//! indexed in that order.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Fluid constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FluidProperties {
    /// Density in kg/m3.
    pub density: f64,
    /// Dynamic viscosity in Pa*s.
    pub dynamic_viscosity: f64,
    /// Gravitational acceleration in m/s2.
    pub gravity: f64,
}

impl Default for FluidProperties {
    /// Water at 18 degrees Celsius.
    fn default() -> Self {
        Self {
            density: 998.5986,
            dynamic_viscosity: 1.0526e-3,
            gravity: 9.81,
        }
    }
}

impl FluidProperties {
    fn check(&self) -> Result<()> {
        if self.density > 0.0 && self.dynamic_viscosity > 0.0 && self.gravity > 0.0 {
            Ok(())
        } else {
            Err(Error::NetworkBuild(
                "fluid properties must be strictly positive".into(),
            ))
        }
    }
}

/// A junction with unknown pressure head.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerNode {
    pub id: String,
    /// Geodetic elevation z in m.
    pub elevation: f64,
}

/// A fixed-head node (reservoir). Its head is elevation-inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceNode {
    pub id: String,
}

/// A pipe edge with geometry and (optional) roughness.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipe {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Length l in m.
    pub length: f64,
    /// Diameter d in m.
    pub diameter: f64,
    /// Roughness height in m; absent when it is the calibration unknown.
    pub roughness: Option<f64>,
    /// Minor-loss coefficient in s2/m5; must be zero in this artifact.
    pub minor_loss: f64,
}

/// Resolved pipe endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRef {
    Inner(usize),
    Source(usize),
}

/// A diagnostic from [`Network::validate`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("pipe '{pipe}' is a self-loop")]
    SelfLoop { pipe: String },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("network has no source node")]
    NoSource,
    #[error("pipe '{pipe}' has non-positive length")]
    NonPositiveLength { pipe: String },
    #[error("pipe '{pipe}' has non-positive diameter")]
    NonPositiveDiameter { pipe: String },
    #[error("pipe '{pipe}' has negative roughness")]
    NegativeRoughness { pipe: String },
    #[error("pipe '{pipe}' has a non-zero minor-loss coefficient; minor losses are not modelled")]
    MinorLoss { pipe: String },
}

/// Immutable network graph.
#[derive(Debug, Clone)]
pub struct Network {
    inner: Vec<InnerNode>,
    sources: Vec<SourceNode>,
    pipes: Vec<Pipe>,
    fluid: FluidProperties,
    /// Resolved endpoints per pipe, in pipe order.
    endpoints: Vec<(NodeRef, NodeRef)>,
}

impl Network {
    /// Builds a network, resolving pipe endpoints against the node lists.
    ///
    /// Fails on duplicate or overlapping ids, unresolved endpoints, and
    /// non-positive fluid constants. Hydraulic validity (connectivity,
    /// self-loops, geometry) is reported by [`Network::validate`] instead.
    pub fn new(
        inner: Vec<InnerNode>,
        sources: Vec<SourceNode>,
        pipes: Vec<Pipe>,
        fluid: FluidProperties,
    ) -> Result<Self> {
        fluid.check()?;

        let mut ids = std::collections::HashMap::new();
        for (k, node) in inner.iter().enumerate() {
            if ids.insert(node.id.clone(), NodeRef::Inner(k)).is_some() {
                return Err(Error::NetworkBuild(format!(
                    "duplicate node id '{}'",
                    node.id
                )));
            }
        }
        for (s, node) in sources.iter().enumerate() {
            if ids.insert(node.id.clone(), NodeRef::Source(s)).is_some() {
                return Err(Error::NetworkBuild(format!(
                    "duplicate node id '{}'",
                    node.id
                )));
            }
        }

        let mut pipe_ids = std::collections::HashSet::new();
        let mut endpoints = Vec::with_capacity(pipes.len());
        for pipe in &pipes {
            if !pipe_ids.insert(pipe.id.clone()) {
                return Err(Error::NetworkBuild(format!(
                    "duplicate pipe id '{}'",
                    pipe.id
                )));
            }
            let from = *ids.get(&pipe.from).ok_or_else(|| Error::UnknownId {
                kind: "node",
                id: pipe.from.clone(),
            })?;
            let to = *ids.get(&pipe.to).ok_or_else(|| Error::UnknownId {
                kind: "node",
                id: pipe.to.clone(),
            })?;
            endpoints.push((from, to));
        }

        Ok(Self {
            inner,
            sources,
            pipes,
            fluid,
            endpoints,
        })
    }

    pub fn n_inner(&self) -> usize {
        self.inner.len()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_pipes(&self) -> usize {
        self.pipes.len()
    }

    pub fn inner_nodes(&self) -> &[InnerNode] {
        &self.inner
    }

    pub fn source_nodes(&self) -> &[SourceNode] {
        &self.sources
    }

    pub fn pipes(&self) -> &[Pipe] {
        &self.pipes
    }

    pub fn fluid(&self) -> &FluidProperties {
        &self.fluid
    }

    /// Resolved endpoints `(from, to)` per pipe.
    pub fn endpoints(&self) -> &[(NodeRef, NodeRef)] {
        &self.endpoints
    }

    /// Elevations of the inner nodes as a vector, in node order.
    pub fn elevations(&self) -> DVector<f64> {
        DVector::from_iterator(self.inner.len(), self.inner.iter().map(|n| n.elevation))
    }

    pub fn inner_index(&self, id: &str) -> Option<usize> {
        self.inner.iter().position(|n| n.id == id)
    }

    pub fn source_index(&self, id: &str) -> Option<usize> {
        self.sources.iter().position(|n| n.id == id)
    }

    pub fn pipe_index(&self, id: &str) -> Option<usize> {
        self.pipes.iter().position(|p| p.id == id)
    }

    /// Distinct nodes adjacent to inner node `k`, in order of first appearance
    /// along the pipe list.
    pub fn neighbors_of_inner(&self, k: usize) -> Vec<NodeRef> {
        let me = NodeRef::Inner(k);
        let mut seen = Vec::new();
        for &(from, to) in &self.endpoints {
            let other = if from == me {
                to
            } else if to == me {
                from
            } else {
                continue;
            };
            if other != me && !seen.contains(&other) {
                seen.push(other);
            }
        }
        seen
    }

    /// Checks the modelling assumptions: connected graph, no self-loops, at
    /// least one source, positive geometry, zero minor losses.
    ///
    /// Returns an empty list exactly when the network is admissible.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        if self.sources.is_empty() {
            out.push(Violation::NoSource);
        }
        for (pipe, &(from, to)) in self.pipes.iter().zip(&self.endpoints) {
            if from == to {
                out.push(Violation::SelfLoop {
                    pipe: pipe.id.clone(),
                });
            }
            if pipe.length <= 0.0 || pipe.length.is_nan() {
                out.push(Violation::NonPositiveLength {
                    pipe: pipe.id.clone(),
                });
            }
            if pipe.diameter <= 0.0 || pipe.diameter.is_nan() {
                out.push(Violation::NonPositiveDiameter {
                    pipe: pipe.id.clone(),
                });
            }
            if let Some(eps) = pipe.roughness {
                if eps < 0.0 {
                    out.push(Violation::NegativeRoughness {
                        pipe: pipe.id.clone(),
                    });
                }
            }
            if pipe.minor_loss != 0.0 {
                out.push(Violation::MinorLoss {
                    pipe: pipe.id.clone(),
                });
            }
        }
        if !self.is_connected() {
            out.push(Violation::Disconnected);
        }
        out
    }

    /// Validation that fails as an error, for operations that require a
    /// well-formed network.
    pub fn require_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidNetwork(violations))
        }
    }

    fn is_connected(&self) -> bool {
        let n = self.inner.len() + self.sources.len();
        if n == 0 {
            return false;
        }
        let vid = |r: NodeRef| match r {
            NodeRef::Inner(k) => k,
            NodeRef::Source(s) => self.inner.len() + s,
        };
        let mut adjacency = vec![Vec::new(); n];
        for &(from, to) in &self.endpoints {
            adjacency[vid(from)].push(vid(to));
            adjacency[vid(to)].push(vid(from));
        }
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pipe(id: &str, from: &str, to: &str) -> Pipe {
        Pipe {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            length: 10.0,
            diameter: 0.04,
            roughness: Some(1e-3),
            minor_loss: 0.0,
        }
    }

    fn node(id: &str) -> InnerNode {
        InnerNode {
            id: id.into(),
            elevation: 0.0,
        }
    }

    #[test]
    fn self_loop_is_reported() {
        let net = Network::new(
            vec![node("a")],
            vec![SourceNode { id: "r".into() }],
            vec![pipe("p1", "r", "a"), pipe("p2", "a", "a")],
            FluidProperties::default(),
        )
        .unwrap();
        let violations = net.validate();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::SelfLoop { pipe } if pipe == "p2")));
    }

    #[test]
    fn disconnected_is_reported() {
        let net = Network::new(
            vec![node("a"), node("b"), node("c")],
            vec![SourceNode { id: "r".into() }],
            vec![pipe("p1", "r", "a"), pipe("p2", "b", "c")],
            FluidProperties::default(),
        )
        .unwrap();
        assert!(net.validate().contains(&Violation::Disconnected));
    }

    #[test]
    fn no_source_is_reported() {
        let net = Network::new(
            vec![node("a"), node("b")],
            vec![],
            vec![pipe("p1", "a", "b")],
            FluidProperties::default(),
        )
        .unwrap();
        assert!(net.validate().contains(&Violation::NoSource));
    }

    #[test]
    fn duplicate_and_unknown_ids_fail_construction() {
        let err = Network::new(
            vec![node("a"), node("a")],
            vec![],
            vec![],
            FluidProperties::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NetworkBuild(_)));

        let err = Network::new(
            vec![node("a")],
            vec![SourceNode { id: "r".into() }],
            vec![pipe("p1", "r", "zz")],
            FluidProperties::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownId { .. }));
    }

    #[test]
    fn geometry_violations() {
        let mut bad = pipe("p1", "r", "a");
        bad.length = 0.0;
        bad.diameter = -1.0;
        bad.roughness = Some(-2e-3);
        bad.minor_loss = 0.5;
        let net = Network::new(
            vec![node("a")],
            vec![SourceNode { id: "r".into() }],
            vec![bad],
            FluidProperties::default(),
        )
        .unwrap();
        let violations = net.validate();
        assert_eq!(violations.len(), 4);
    }

    #[test]
    fn two_sources_one_pipe_is_valid() {
        let net = Network::new(
            vec![],
            vec![
                SourceNode { id: "r1".into() },
                SourceNode { id: "r2".into() },
            ],
            vec![pipe("p1", "r1", "r2")],
            FluidProperties::default(),
        )
        .unwrap();
        assert!(net.validate().is_empty());
    }

    #[test]
    fn neighbor_listing_is_deduplicated_and_ordered() {
        let net = Network::new(
            vec![node("a"), node("b")],
            vec![SourceNode { id: "r".into() }],
            vec![
                pipe("p1", "r", "a"),
                pipe("p2", "a", "b"),
                pipe("p3", "b", "a"),
            ],
            FluidProperties::default(),
        )
        .unwrap();
        assert_eq!(
            net.neighbors_of_inner(0),
            vec![NodeRef::Source(0), NodeRef::Inner(1)]
        );
    }
}
