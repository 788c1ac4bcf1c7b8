//! Input generators shared by the benchmarks.

use nnm_core::{MapGraph, NodeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sparse random graph: a spanning chain plus `extra` random edges.
pub fn random_graph(nodes: usize, extra: usize, seed: u64) -> MapGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = MapGraph::new();
    for i in 0..nodes {
        g.add_node(&format!("topic {i}"), None).expect("unique names");
    }
    for i in 1..nodes as u64 {
        g.connect(NodeId(i), NodeId(i + 1)).expect("known ids");
    }
    for _ in 0..extra {
        let a = rng.random_range(1..=nodes as u64);
        let b = rng.random_range(1..=nodes as u64);
        if a != b {
            g.connect(NodeId(a), NodeId(b)).expect("known ids");
        }
    }
    g
}

const WORDS: [&str; 16] = [
    "enemy", "patrol", "fire", "hold", "report", "civilian", "base", "convoy", "orders", "engage", "threat", "vehicle",
    "checkpoint", "radio", "duty", "careful",
];

/// `count` short sentences drawn from a small military vocabulary.
pub fn sentences(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.random_range(4..16);
            (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        })
        .collect()
}
