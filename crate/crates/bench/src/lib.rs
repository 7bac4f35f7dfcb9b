//! Benchmark fixtures: a synthetic interaction graph and a training
//! configuration sized for quick repeated epochs.

use bigi::{BipartiteGraph, EdgeSplit, TrainConfig};
use rand::Rng;

/// `edges` distinct uniform edges over `num_u x num_v`.
pub fn random_graph(num_u: usize, num_v: usize, edges: usize, seed: u64) -> BipartiteGraph {
    assert!(edges <= num_u * num_v);
    let mut r = bigi::rng::stream(seed, "bench");
    let mut seen = std::collections::HashSet::with_capacity(edges);
    while seen.len() < edges {
        seen.insert((r.random_range(0..num_u as u32), r.random_range(0..num_v as u32)));
    }
    let mut list: Vec<_> = seen.into_iter().collect();
    list.sort_unstable();
    BipartiteGraph::from_edges(num_u, num_v, list).unwrap()
}

/// Everything trains; no held-out edges.
pub fn full_split(g: BipartiteGraph) -> EdgeSplit {
    EdgeSplit {
        train: g,
        test_edges: Vec::new(),
        seed: 0,
    }
}

pub fn bench_config(dim: usize) -> TrainConfig {
    TrainConfig {
        dim,
        depth: 2,
        epochs: 1,
        beta: 1e-3,
        checkpoint_every: 0,
        ..TrainConfig::default()
    }
}
