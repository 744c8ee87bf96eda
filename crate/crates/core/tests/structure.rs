//! Randomized structural invariants of the integer matrices: for any
//! connected network, the cycle basis is exactly orthogonal to the
//! incidence matrix and both have full rank.

use hydrocal_core::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random connected network: a spanning tree over all nodes plus extra
/// edges, with one or two sources.
fn random_network(rng: &mut ChaCha8Rng) -> Network {
    let n_inner = rng.random_range(2..8usize);
    let n_sources = rng.random_range(1..3usize);
    let n_nodes = n_inner + n_sources;
    let extra_edges = rng.random_range(0..5usize);

    let name = |v: usize| {
        if v < n_inner {
            format!("n{v}")
        } else {
            format!("s{}", v - n_inner)
        }
    };
    let mut pipes = Vec::new();
    let mut add_pipe = |from: usize, to: usize, idx: usize| {
        pipes.push(Pipe {
            id: format!("p{idx}"),
            from: name(from),
            to: name(to),
            length: 10.0,
            diameter: 0.04,
            roughness: Some(1e-3),
            minor_loss: 0.0,
        });
    };
    // Random spanning tree: attach each node to an earlier one.
    let mut idx = 0;
    for v in 1..n_nodes {
        let parent = rng.random_range(0..v);
        add_pipe(parent, v, idx);
        idx += 1;
    }
    for _ in 0..extra_edges {
        let a = rng.random_range(0..n_nodes);
        let b = rng.random_range(0..n_nodes);
        if a != b {
            add_pipe(a, b, idx);
            idx += 1;
        }
    }

    Network::new(
        (0..n_inner)
            .map(|v| InnerNode {
                id: name(v),
                elevation: 0.0,
            })
            .collect(),
        (0..n_sources)
            .map(|s| SourceNode {
                id: format!("s{s}"),
            })
            .collect(),
        pipes,
        FluidProperties::default(),
    )
    .unwrap()
}

#[test]
fn cycle_basis_invariants_over_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..200 {
        let net = random_network(&mut rng);
        assert!(net.validate().is_empty(), "trial {trial}");
        let (a, cs) = build_incidence(&net).unwrap();
        let s = build_cycle_basis(&net, &a).unwrap();

        assert_eq!(s.nrows(), net.n_pipes() - net.n_inner(), "trial {trial}");
        let product = &s * a.transpose();
        assert!(product.iter().all(|&v| v == 0), "trial {trial}: S A^T != 0");
        assert!(s.iter().all(|&v| (-1..=1).contains(&v)), "trial {trial}");
        assert_eq!(integer_rank(&a), net.n_inner(), "trial {trial}");
        assert_eq!(integer_rank(&s), s.nrows(), "trial {trial}");

        // Pseudo-cycles must also telescope the source heads: rows acting
        // on source-incident pipes balance out through the source
        // incidence unless they connect distinct sources.
        for j in 0..net.n_pipes() {
            let abs_sum: i64 = (0..net.n_inner()).map(|k| a[(k, j)].abs()).sum();
            let source_entries: i64 = (0..net.n_sources()).map(|sx| cs[(j, sx)].abs()).sum();
            assert_eq!(abs_sum + source_entries, 2, "trial {trial} pipe {j}");
        }
    }
}
