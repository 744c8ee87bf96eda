//! Integer structure matrices of the network graph.
//!
//! All matrices here are exact integers so that orthogonality and rank
//! checks can be performed without floating-point tolerance.
//!
//! Sign conventions: flow into an inner node counts `+1` in the incidence
//! matrix `A`; flow out of a source counts `+1` in the source incidence.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::network::{Network, NodeRef};

/// Incidence matrix `A`, cycle basis `S` and source incidence of a network.
#[derive(Debug, Clone)]
pub struct TopologyMatrices {
    /// `A`: n_inner x n_pipes over {-1, 0, 1}.
    pub incidence: DMatrix<i64>,
    /// `S`: (n_pipes - n_inner) x n_pipes over {-1, 0, 1}; rows span the
    /// cycle space including source-to-source pseudo-cycles.
    pub cycles: DMatrix<i64>,
    /// n_pipes x n_sources over {-1, 0, 1}; `+1` where the pipe leaves the source.
    pub source_incidence: DMatrix<i64>,
}

impl TopologyMatrices {
    pub fn build(net: &Network) -> Result<Self> {
        let (incidence, source_incidence) = build_incidence(net)?;
        let cycles = build_cycle_basis(net, &incidence)?;
        Ok(Self {
            incidence,
            cycles,
            source_incidence,
        })
    }
}

/// Builds the inner-node incidence matrix and the source incidence matrix.
pub fn build_incidence(net: &Network) -> Result<(DMatrix<i64>, DMatrix<i64>)> {
    net.require_valid()?;
    let mut a = DMatrix::zeros(net.n_inner(), net.n_pipes());
    let mut cs = DMatrix::zeros(net.n_pipes(), net.n_sources());
    for (j, &(from, to)) in net.endpoints().iter().enumerate() {
        match from {
            NodeRef::Inner(k) => a[(k, j)] = -1,
            NodeRef::Source(s) => cs[(j, s)] = 1,
        }
        match to {
            NodeRef::Inner(k) => a[(k, j)] = 1,
            NodeRef::Source(s) => cs[(j, s)] = -1,
        }
    }
    Ok((a, cs))
}

/// Builds a fundamental cycle basis with `n_pipes - n_inner` rows.
///
/// All source nodes are merged into one super-node, a spanning tree is grown
/// over the merged graph, and each non-tree pipe contributes one cycle: the
/// pipe itself plus the tree path closing it. Paths that close through the
/// super-node are the source-to-source pseudo-cycles.
pub fn build_cycle_basis(net: &Network, incidence: &DMatrix<i64>) -> Result<DMatrix<i64>> {
    net.require_valid()?;
    debug_assert_eq!(incidence.ncols(), net.n_pipes());

    let n_inner = net.n_inner();
    let n_pipes = net.n_pipes();
    // Vertex ids: inner nodes keep their index, the super-node is `n_inner`.
    let n_vertices = n_inner + 1;
    let super_node = n_inner;
    let vid = |r: NodeRef| match r {
        NodeRef::Inner(k) => k,
        NodeRef::Source(_) => super_node,
    };

    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_vertices]; // (vertex, pipe)
    let mut merged_self_loop = vec![false; n_pipes];
    for (j, &(from, to)) in net.endpoints().iter().enumerate() {
        let (u, v) = (vid(from), vid(to));
        if u == v {
            // Both endpoints are sources: a pseudo-cycle of its own.
            merged_self_loop[j] = true;
            continue;
        }
        adjacency[u].push((v, j));
        adjacency[v].push((u, j));
    }

    // BFS spanning tree rooted at the super-node.
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n_vertices]; // (parent vertex, pipe)
    let mut depth = vec![0usize; n_vertices];
    let mut in_tree = vec![false; n_pipes];
    let mut seen = vec![false; n_vertices];
    let mut queue = std::collections::VecDeque::from([super_node]);
    seen[super_node] = true;
    while let Some(u) = queue.pop_front() {
        for &(v, j) in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some((u, j));
                depth[v] = depth[u] + 1;
                in_tree[j] = true;
                queue.push_back(v);
            }
        }
    }

    // Sign of traversing pipe j from vertex u towards its other endpoint.
    let traverse_sign = |j: usize, u: usize| -> i64 {
        let (from, _) = net.endpoints()[j];
        if vid(from) == u {
            1
        } else {
            -1
        }
    };

    let n_cycles = n_pipes - n_inner;
    let mut s = DMatrix::zeros(n_cycles, n_pipes);
    let mut row = 0;
    for j in 0..n_pipes {
        if in_tree[j] {
            continue;
        }
        s[(row, j)] = 1;
        if !merged_self_loop[j] {
            let (from, to) = net.endpoints()[j];
            // Close the cycle along the tree from `to` back to `from`.
            let (mut u, mut v) = (vid(from), vid(to));
            // Tree-edge contribution when climbing from child c to its parent.
            while depth[v] > depth[u] {
                let (p, e) = parent[v].expect("non-root has a parent");
                s[(row, e)] += traverse_sign(e, v);
                v = p;
            }
            while depth[u] > depth[v] {
                let (p, e) = parent[u].expect("non-root has a parent");
                // Climbing on the `from` side runs against the cycle direction.
                s[(row, e)] -= traverse_sign(e, u);
                u = p;
            }
            while u != v {
                let (pv, ev) = parent[v].expect("non-root has a parent");
                let (pu, eu) = parent[u].expect("non-root has a parent");
                s[(row, ev)] += traverse_sign(ev, v);
                s[(row, eu)] -= traverse_sign(eu, u);
                v = pv;
                u = pu;
            }
        }
        row += 1;
    }
    debug_assert_eq!(row, n_cycles);
    Ok(s)
}

/// Break-even number of measurement sets, `ceil(n_pipes / n_sensors)`.
pub fn min_measurement_sets(n_pipes: usize, n_sensors: usize) -> Result<usize> {
    if n_sensors == 0 {
        return Err(Error::NoSensors);
    }
    Ok(n_pipes.div_ceil(n_sensors))
}

/// Which inner nodes carry pressure sensors.
///
/// The measured list keeps the order it was given; the unmeasured complement
/// keeps node order. The unmeasured order fixes the layout of the unknown
/// head vector in calibration.
#[derive(Debug, Clone)]
pub struct SensorConfig {
    measured: Vec<usize>,
    unmeasured: Vec<usize>,
}

impl SensorConfig {
    pub fn new(net: &Network, measured_ids: &[String]) -> Result<Self> {
        let mut measured = Vec::with_capacity(measured_ids.len());
        for id in measured_ids {
            let k = net.inner_index(id).ok_or_else(|| Error::UnknownId {
                kind: "inner node",
                id: id.clone(),
            })?;
            if measured.contains(&k) {
                return Err(Error::NetworkBuild(format!(
                    "sensor node '{id}' listed twice"
                )));
            }
            measured.push(k);
        }
        if measured.len() >= net.n_inner() && net.n_inner() > 0 {
            return Err(Error::NetworkBuild(
                "all inner nodes are sensed; at least one head must remain unknown".into(),
            ));
        }
        let unmeasured = (0..net.n_inner())
            .filter(|k| !measured.contains(k))
            .collect();
        Ok(Self {
            measured,
            unmeasured,
        })
    }

    /// Inner-node indices with sensors, in sensor order.
    pub fn measured(&self) -> &[usize] {
        &self.measured
    }

    /// Inner-node indices without sensors, in node order.
    pub fn unmeasured(&self) -> &[usize] {
        &self.unmeasured
    }

    pub fn n_measured(&self) -> usize {
        self.measured.len()
    }

    pub fn n_unmeasured(&self) -> usize {
        self.unmeasured.len()
    }

    /// Materialized selector `C_h` (n_measured x n_inner).
    pub fn selector(&self, n_inner: usize) -> DMatrix<i64> {
        let mut c = DMatrix::zeros(self.measured.len(), n_inner);
        for (row, &k) in self.measured.iter().enumerate() {
            c[(row, k)] = 1;
        }
        c
    }

    /// Materialized complement selector (n_unmeasured x n_inner).
    pub fn complement_selector(&self, n_inner: usize) -> DMatrix<i64> {
        let mut c = DMatrix::zeros(self.unmeasured.len(), n_inner);
        for (row, &k) in self.unmeasured.iter().enumerate() {
            c[(row, k)] = 1;
        }
        c
    }
}

/// Rank of an integer matrix by fraction-free Gaussian elimination.
pub fn integer_rank(m: &DMatrix<i64>) -> usize {
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<i128>> = (0..rows)
        .map(|i| (0..cols).map(|j| m[(i, j)] as i128).collect())
        .collect();
    let mut rank = 0;
    let mut prev_pivot: i128 = 1;
    for col in 0..cols {
        let Some(pivot_row) = (rank..rows).find(|&r| a[r][col] != 0) else {
            continue;
        };
        a.swap(rank, pivot_row);
        let pivot = a[rank][col];
        for r in rank + 1..rows {
            for c in col + 1..cols {
                a[r][c] = (a[r][c] * pivot - a[r][col] * a[rank][c]) / prev_pivot;
            }
            a[r][col] = 0;
        }
        prev_pivot = pivot;
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}
