//! Force-directed layout.
//!
//! Every pair of nodes repels with `repulsion_k * (deg_u + 1) * (deg_v + 1) / d`,
//! every edge pulls its endpoints together with strength `d`, and each
//! node is pulled toward the origin with constant strength
//! `gravity_k * (deg + 1)` (fading linearly inside the unit disc). Each
//! iteration moves a node by its net force divided by `2 * (deg + 1)`,
//! with the step length capped at `100 * step_decay^iteration`.
//! Repulsion is computed exactly over all pairs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{MapGraph, NodeId, Point};

pub const MIN_DISTANCE: f64 = 0.01;
pub const INITIAL_MAX_STEP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub repulsion_k: f64,
    pub gravity_k: f64,
    pub iterations: usize,
    pub step_decay: f64,
    pub seed: u64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            repulsion_k: 100.0,
            gravity_k: 1.0,
            iterations: 500,
            step_decay: 0.99,
            seed: 42,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("invalid layout parameter: {0}")]
    InvalidParams(&'static str),
    #[error("non-finite force between nodes {0} and {1}")]
    NonFiniteForce(NodeId, NodeId),
    #[error("non-finite position for node {0}")]
    NonFinitePosition(NodeId),
    #[error("expected {expected} positions, got {got}")]
    PositionCount { expected: usize, got: usize },
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), LayoutError> {
        if !(self.repulsion_k.is_finite() && self.repulsion_k > 0.0) {
            return Err(LayoutError::InvalidParams("repulsion_k must be positive"));
        }
        if !(self.gravity_k.is_finite() && self.gravity_k >= 0.0) {
            return Err(LayoutError::InvalidParams("gravity_k must be non-negative"));
        }
        if self.iterations == 0 {
            return Err(LayoutError::InvalidParams("iterations must be positive"));
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(LayoutError::InvalidParams("step_decay must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn max_step(&self, iteration: usize) -> f64 {
        INITIAL_MAX_STEP * self.step_decay.powi(iteration.min(i32::MAX as usize) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutResult {
    pub positions: BTreeMap<NodeId, Point>,
    /// Sum of node displacements per iteration.
    pub displacement_history: Vec<f64>,
}

/// Circle of radius `100 * sqrt(n)` in id order, plus a seeded jitter of
/// length at most 1.
pub fn init_positions(graph: &MapGraph, seed: u64) -> BTreeMap<NodeId, Point> {
    let ids: Vec<NodeId> = graph.nodes.iter().map(|n| n.id).collect();
    ids.iter().copied().zip(circle(ids.len(), seed)).collect()
}

fn circle(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 100.0 * (n as f64).sqrt();
    (0..n)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / n as f64;
            let jitter_angle = rng.random_range(0.0..std::f64::consts::TAU);
            let jitter_len: f64 = rng.random_range(0.0..=1.0);
            Point::new(
                radius * angle.cos() + jitter_len * jitter_angle.cos(),
                radius * angle.sin() + jitter_len * jitter_angle.sin(),
            )
        })
        .collect()
}

/// Graph topology as indices into `graph.nodes`.
struct Topology {
    ids: Vec<NodeId>,
    degree: Vec<f64>,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    fn new(graph: &MapGraph) -> Self {
        let ids: Vec<NodeId> = graph.nodes.iter().map(|n| n.id).collect();
        let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut degree = vec![0.0; ids.len()];
        let edges = graph
            .edges
            .iter()
            .filter_map(|e| Some((*index.get(&e.source)?, *index.get(&e.target)?)))
            .inspect(|&(a, b)| {
                degree[a] += 1.0;
                degree[b] += 1.0;
            })
            .collect();
        Self { ids, degree, edges }
    }
}

fn step(topo: &Topology, pos: &[Point], params: &LayoutParams, iteration: usize) -> Result<(Vec<Point>, f64), LayoutError> {
    let n = pos.len();
    let mut force = vec![Point::ORIGIN; n];

    for i in 0..n {
        for j in (i + 1)..n {
            let (dx, dy) = (pos[i].x - pos[j].x, pos[i].y - pos[j].y);
            let raw = dx.hypot(dy);
            let (ux, uy) = if raw > 0.0 { (dx / raw, dy / raw) } else { (1.0, 0.0) };
            let d = raw.max(MIN_DISTANCE);
            let f = params.repulsion_k * (topo.degree[i] + 1.0) * (topo.degree[j] + 1.0) / d;
            if !(f.is_finite() && ux.is_finite() && uy.is_finite()) {
                return Err(LayoutError::NonFiniteForce(topo.ids[i], topo.ids[j]));
            }
            force[i].x += ux * f;
            force[i].y += uy * f;
            force[j].x -= ux * f;
            force[j].y -= uy * f;
        }
    }

    for &(a, b) in &topo.edges {
        let (dx, dy) = (pos[a].x - pos[b].x, pos[a].y - pos[b].y);
        if !(dx.is_finite() && dy.is_finite()) {
            return Err(LayoutError::NonFiniteForce(topo.ids[a], topo.ids[b]));
        }
        force[a].x -= dx;
        force[a].y -= dy;
        force[b].x += dx;
        force[b].y += dy;
    }

    if params.gravity_k > 0.0 {
        for (i, p) in pos.iter().enumerate() {
            let r = p.x.hypot(p.y);
            if r > 0.0 {
                // linear inside the unit disc so nodes at the origin settle
                let g = params.gravity_k * (topo.degree[i] + 1.0) * r.min(1.0);
                force[i].x -= p.x / r * g;
                force[i].y -= p.y / r * g;
            }
        }
    }

    let cap = params.max_step(iteration);
    let mut total = 0.0;
    let mut next = Vec::with_capacity(n);
    for (i, (p, f)) in pos.iter().zip(&force).enumerate() {
        // heavier hubs; the factor 2 keeps linked pairs from overshooting
        let mass = 2.0 * (topo.degree[i] + 1.0);
        let f = Point::new(f.x / mass, f.y / mass);
        let len = f.x.hypot(f.y);
        let scale = if len > cap { cap / len } else { 1.0 };
        let q = Point::new(p.x + f.x * scale, p.y + f.y * scale);
        if !q.is_finite() {
            return Err(LayoutError::NonFinitePosition(topo.ids[i]));
        }
        total += len.min(cap);
        next.push(q);
    }
    Ok((next, total))
}

/// One iteration over explicit positions, given in `graph.nodes` order.
pub fn layout_step(graph: &MapGraph, positions: &[Point], params: &LayoutParams, iteration: usize) -> Result<Vec<Point>, LayoutError> {
    if positions.len() != graph.node_count() {
        return Err(LayoutError::PositionCount {
            expected: graph.node_count(),
            got: positions.len(),
        });
    }
    step(&Topology::new(graph), positions, params, iteration).map(|(p, _)| p)
}

/// Runs the layout from the given starting positions (in `graph.nodes`
/// order) without touching the graph.
pub fn layout_from(graph: &MapGraph, params: &LayoutParams, start: Vec<Point>) -> Result<LayoutResult, LayoutError> {
    params.validate()?;
    if start.len() != graph.node_count() {
        return Err(LayoutError::PositionCount {
            expected: graph.node_count(),
            got: start.len(),
        });
    }
    let topo = Topology::new(graph);
    let threshold = 1e-3 * topo.ids.len() as f64;
    let mut pos = start;
    let mut history = Vec::new();
    for iteration in 0..params.iterations {
        if pos.is_empty() {
            break;
        }
        let (next, moved) = step(&topo, &pos, params, iteration)?;
        pos = next;
        history.push(moved);
        if moved < threshold {
            break;
        }
    }
    Ok(LayoutResult {
        positions: topo.ids.iter().copied().zip(pos).collect(),
        displacement_history: history,
    })
}

/// Lays out the graph from its seeded initial circle and stores the final
/// positions (and the seed) on it.
pub fn run_layout(graph: &mut MapGraph, params: &LayoutParams) -> Result<LayoutResult, LayoutError> {
    params.validate()?;
    let start = circle(graph.node_count(), params.seed);
    let result = layout_from(graph, params, start)?;
    for node in &mut graph.nodes {
        node.position = result.positions[&node.id];
    }
    graph.layout_seed = Some(params.seed);
    Ok(result)
}
