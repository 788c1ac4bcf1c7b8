//! The map data model: named concept nodes, the text fragments assigned
//! to them, undirected edges and layout positions.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicSource {
    Generated,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicText {
    pub text: String,
    pub source: TopicSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapNode {
    pub id: NodeId,
    /// Display label: whitespace-collapsed, first-seen casing.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default)]
    pub topics: Vec<TopicText>,
    #[serde(default)]
    pub query_count: u64,
    #[serde(default)]
    pub position: Point,
}

impl MapNode {
    /// Identity key of this node's name.
    pub fn key(&self) -> String {
        name_key(&self.name)
    }
}

/// Undirected edge, stored with `source < target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MapEdge {
    pub source: NodeId,
    pub target: NodeId,
}

impl MapEdge {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Self { source: a, target: b }
        } else {
            Self { source: b, target: a }
        }
    }

    pub fn touches(&self, id: NodeId) -> bool {
        self.source == id || self.target == id
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node name is empty after normalization")]
    EmptyName,
    #[error("cannot connect node {0} to itself")]
    SelfLoop(NodeId),
    #[error("no node with id {0}")]
    MissingNode(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("duplicate node name {0:?}")]
    DuplicateName(String),
    #[error("node ids are not strictly increasing at {0}")]
    UnorderedIds(NodeId),
    #[error("edge ({0}, {1}) is not stored in canonical order")]
    NonCanonicalEdge(NodeId, NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGraph {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout_seed: Option<u64>,
    /// Sorted by ascending id.
    pub nodes: Vec<MapNode>,
    pub edges: BTreeSet<MapEdge>,
}

impl Default for MapGraph {
    fn default() -> Self {
        Self::new()
    }
}

/// Collapse whitespace runs and trim, keeping the original casing.
pub fn display_name(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Identity key: collapsed whitespace, lowercased.
pub fn name_key(raw: &str) -> String {
    display_name(raw).to_lowercase()
}

impl MapGraph {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            layout_seed: None,
            nodes: Vec::new(),
            edges: BTreeSet::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&MapNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut MapNode> {
        self.index_of(id).map(move |i| &mut self.nodes[i])
    }

    pub(crate) fn index_of(&self, id: NodeId) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    pub fn find_by_name(&self, name: &str) -> Option<NodeId> {
        let key = name_key(name);
        if key.is_empty() {
            return None;
        }
        self.nodes.iter().find(|n| n.key() == key).map(|n| n.id)
    }

    fn next_id(&self) -> NodeId {
        self.nodes.last().map_or(NodeId(1), |n| NodeId(n.id.0 + 1))
    }

    /// Returns the id of the node with this (normalized) name, creating it
    /// if needed. An existing node keeps its group unless it had none.
    pub fn add_node(&mut self, name: &str, group: Option<&str>) -> Result<NodeId, GraphError> {
        let display = display_name(name);
        if display.is_empty() {
            return Err(GraphError::EmptyName);
        }
        let group = group.map(display_name).filter(|g| !g.is_empty());
        if let Some(id) = self.find_by_name(&display) {
            if let Some(g) = group {
                let node = self.node_mut(id).expect("found above");
                node.group.get_or_insert(g);
            }
            return Ok(id);
        }
        let id = self.next_id();
        self.nodes.push(MapNode {
            id,
            name: display,
            group,
            topics: Vec::new(),
            query_count: 0,
            position: Point::ORIGIN,
        });
        Ok(id)
    }

    /// Adds the undirected edge `{a, b}`; repeated calls are no-ops.
    pub fn connect(&mut self, a: NodeId, b: NodeId) -> Result<(), GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        for id in [a, b] {
            if self.index_of(id).is_none() {
                return Err(GraphError::MissingNode(id));
            }
        }
        self.edges.insert(MapEdge::new(a, b));
        Ok(())
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains(&MapEdge::new(a, b))
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.edges.iter().filter(|e| e.touches(id)).count()
    }

    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter_map(|e| match (e.source == id, e.target == id) {
                (true, _) => Some(e.target),
                (_, true) => Some(e.source),
                _ => None,
            })
            .collect()
    }

    pub fn position(&self, id: NodeId) -> Option<Point> {
        self.node(id).map(|n| n.position)
    }

    /// Checks every structural invariant of the graph.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut names = HashSet::new();
        let mut prev: Option<NodeId> = None;
        for node in &self.nodes {
            if let Some(p) = prev {
                if node.id == p {
                    return Err(GraphError::DuplicateId(node.id));
                }
                if node.id < p {
                    return Err(GraphError::UnorderedIds(node.id));
                }
            }
            prev = Some(node.id);
            let key = node.key();
            if key.is_empty() {
                return Err(GraphError::EmptyName);
            }
            if !names.insert(key) {
                return Err(GraphError::DuplicateName(node.name.clone()));
            }
        }
        for edge in &self.edges {
            if edge.source == edge.target {
                return Err(GraphError::SelfLoop(edge.source));
            }
            if edge.source > edge.target {
                return Err(GraphError::NonCanonicalEdge(edge.source, edge.target));
            }
            for id in [edge.source, edge.target] {
                if self.index_of(id).is_none() {
                    return Err(GraphError::MissingNode(id));
                }
            }
        }
        Ok(())
    }

    /// All topic texts in node order, tagged with their node and index.
    pub fn topics(&self) -> impl Iterator<Item = (NodeId, usize, &TopicText)> {
        self.nodes
            .iter()
            .flat_map(|n| n.topics.iter().enumerate().map(move |(i, t)| (n.id, i, t)))
    }
}
