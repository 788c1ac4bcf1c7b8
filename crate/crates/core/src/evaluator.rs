//! Script playback over a map.
//!
//! Each script step places its role's agent on the node holding the topic
//! text closest to the step text. Every step yields a [`TrajectoryRecord`]
//! with the distance between the two agents' target nodes and, for
//! non-commander steps, the plain text similarity to the latest commander
//! order. Agents glide toward their targets at constant speed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{MapGraph, NodeId, Point};
use crate::script::{Role, Script, ScriptStep};
use crate::similarity::{cosine, embed_checked, similarity, Embedder, SimilarityError, SimilarityScore};

/// Layout units per second.
pub const DEFAULT_SPEED: f64 = 100.0;
/// Frame time for headless playback, in seconds.
pub const HEADLESS_DT: f64 = 1.0 / 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("the map has no topic texts to match against")]
    NoTopics,
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("need at least two steps with both a node distance and a text similarity, got {0}")]
    TooFewPairs(usize),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Moves `from` toward `to` by `speed * dt`, stopping exactly on `to`
/// instead of overshooting.
pub fn animate(from: Point, to: Point, speed: f64, dt: f64) -> Point {
    if !(speed > 0.0 && dt > 0.0) {
        return from;
    }
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    let remaining = dx.hypot(dy);
    let travel = speed * dt;
    if travel >= remaining {
        return to;
    }
    Point::new(from.x + dx / remaining * travel, from.y + dy / remaining * travel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub role: Role,
    pub position: Point,
    pub target_node: Option<NodeId>,
    pub speed: f64,
    pub color: String,
}

impl Agent {
    pub fn new(role: Role, position: Point) -> Self {
        let color = match role {
            Role::Commander => "#d62728",
            Role::Subordinate => "#1f77b4",
            Role::Other(_) => "#7f7f7f",
        }
        .to_owned();
        Self {
            role,
            position,
            target_node: None,
            speed: DEFAULT_SPEED,
            color,
        }
    }

    pub fn animate(&mut self, target: Point, dt: f64) {
        self.position = animate(self.position, target, self.speed, dt);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step_id: u64,
    pub role: Role,
    pub match_similarity: SimilarityScore,
    pub node_id: NodeId,
    pub node: String,
    pub node_dist: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_similarity: Option<SimilarityScore>,
}

/// Node whose topic text best matches `text`; ties go to the lowest id.
pub fn closest_node(map: &MapGraph, text: &str, e: &dyn Embedder) -> Result<(NodeId, SimilarityScore), EvalError> {
    let query = embed_checked(text, e)?;
    let mut best: Option<(NodeId, SimilarityScore)> = None;
    for (node, _, topic) in map.topics() {
        let v = embed_checked(&topic.text, e)?;
        let score = SimilarityScore::from_cosine(cosine(&query, &v));
        match best {
            Some((id, s)) if s > score || (s == score && id <= node) => {}
            _ => best = Some((node, score)),
        }
    }
    best.ok_or(EvalError::NoTopics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepOutcome {
    Advanced(TrajectoryRecord),
    Reversed,
    Reset,
    AtEnd,
    AtStart,
}

impl StepOutcome {
    pub fn moved(&self) -> bool {
        matches!(self, StepOutcome::Advanced(_) | StepOutcome::Reversed | StepOutcome::Reset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSession {
    pub map: MapGraph,
    pub script: Script,
    pub cursor: usize,
    pub agents: BTreeMap<Role, Agent>,
    pub records: Vec<TrajectoryRecord>,
    /// Agent states before each advance, for exact reversal.
    #[serde(default)]
    history: Vec<BTreeMap<Role, Agent>>,
}

impl EvaluationSession {
    pub fn new(map: MapGraph, script: Script) -> Self {
        Self {
            map,
            script,
            cursor: 0,
            agents: BTreeMap::new(),
            records: Vec::new(),
            history: Vec::new(),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.cursor >= self.script.len()
    }

    fn node_position(&self, id: NodeId) -> Point {
        self.map.position(id).unwrap_or(Point::ORIGIN)
    }

    /// Where the `role` agent is headed at the current cursor: its target
    /// if placed, else the node its first upcoming step would pick.
    fn expected_target(&self, role: &Role, e: &dyn Embedder) -> Result<Option<NodeId>, EvalError> {
        if let Some(target) = self.agents.get(role).and_then(|a| a.target_node) {
            return Ok(Some(target));
        }
        match self.script.steps[self.cursor..].iter().find(|s| &s.role == role) {
            Some(step) => closest_node(&self.map, &step.text, e).map(|(id, _)| Some(id)),
            None => Ok(None),
        }
    }

    /// Latest commander order at or before the cursor, else the first one
    /// after it.
    fn reference_order(&self) -> Option<&ScriptStep> {
        let upto = (self.cursor + 1).min(self.script.len());
        self.script.steps[..upto]
            .iter()
            .rev()
            .find(|s| s.role == Role::Commander)
            .or_else(|| self.script.steps[upto..].iter().find(|s| s.role == Role::Commander))
    }

    /// Picks the node for the step under the cursor and points that role's
    /// agent at it. A newly seen role appears directly on its node.
    pub fn place_agent(&mut self, e: &dyn Embedder) -> Result<(NodeId, SimilarityScore), EvalError> {
        let step = &self.script.steps[self.cursor];
        let (node, score) = closest_node(&self.map, &step.text, e)?;
        let role = step.role.clone();
        let at = self.node_position(node);
        self.agents
            .entry(role.clone())
            .or_insert_with(|| Agent::new(role, at))
            .target_node = Some(node);
        Ok((node, score))
    }

    pub fn advance(&mut self, e: &dyn Embedder) -> Result<StepOutcome, EvalError> {
        if self.is_finished() {
            return Ok(StepOutcome::AtEnd);
        }
        let step = self.script.steps[self.cursor].clone();
        let counterpart = self.expected_target(&step.role.counterpart(), e)?;
        let text_similarity = match step.role {
            Role::Commander => None,
            _ => match self.reference_order() {
                Some(order) => Some(similarity(&order.text, &step.text, e)?),
                None => None,
            },
        };

        let snapshot = self.agents.clone();
        let (node_id, match_similarity) = self.place_agent(e)?;
        let node_dist = match counterpart {
            Some(other) if other != node_id => self.node_position(node_id).distance(self.node_position(other)),
            _ => 0.0,
        };
        let record = TrajectoryRecord {
            step_id: step.id,
            role: step.role,
            match_similarity,
            node_id,
            node: self.map.node(node_id).map(|n| n.name.clone()).unwrap_or_default(),
            node_dist,
            text_similarity,
        };
        self.history.push(snapshot);
        self.records.push(record.clone());
        self.cursor += 1;
        Ok(StepOutcome::Advanced(record))
    }

    pub fn reverse(&mut self) -> StepOutcome {
        if self.cursor == 0 {
            return StepOutcome::AtStart;
        }
        self.cursor -= 1;
        self.records.pop();
        self.agents = self.history.pop().unwrap_or_default();
        StepOutcome::Reversed
    }

    pub fn reset(&mut self) -> StepOutcome {
        self.cursor = 0;
        self.agents.clear();
        self.records.clear();
        self.history.clear();
        StepOutcome::Reset
    }

    /// Advances every agent toward its target node by one frame.
    pub fn tick(&mut self, dt: f64) {
        let targets: Vec<(Role, Point)> = self
            .agents
            .iter()
            .filter_map(|(r, a)| Some((r.clone(), self.node_position(a.target_node?))))
            .collect();
        for (role, target) in targets {
            if let Some(agent) = self.agents.get_mut(&role) {
                agent.animate(target, dt);
            }
        }
    }

    pub fn settled(&self) -> bool {
        self.agents
            .values()
            .all(|a| a.target_node.is_none_or(|t| a.position == self.node_position(t)))
    }

    /// Runs the whole remaining script.
    pub fn run_to_end(&mut self, e: &dyn Embedder) -> Result<&[TrajectoryRecord], EvalError> {
        while let StepOutcome::Advanced(_) = self.advance(e)? {}
        Ok(&self.records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Correlation {
    Defined(f64),
    /// One of the series is constant.
    Undefined,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Defined(r) => Some(r),
            Correlation::Undefined => None,
        }
    }
}

/// Pearson correlation over centred sums, with the residual mean of the
/// centred values subtracted to absorb rounding in the means.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewPairs(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut cx, mut cy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        cx += dx;
        cy += dy;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxx -= cx * cx / n;
    syy -= cy * cy / n;
    sxy -= cx * cy / n;
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(Correlation::Undefined);
    }
    Ok(Correlation::Defined((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    /// Node distance vs. text similarity, over steps that have both.
    pub pearson: Correlation,
    pub pairs: usize,
    pub table: Vec<TrajectoryRecord>,
}

pub fn trajectory_stats(records: &[TrajectoryRecord]) -> Result<TrajectoryStats, EvalError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| Some((r.node_dist, r.text_similarity?.value())))
        .unzip();
    if xs.len() < 2 {
        return Err(EvalError::TooFewPairs(xs.len()));
    }
    Ok(TrajectoryStats {
        pearson: pearson(&xs, &ys)?,
        pairs: xs.len(),
        table: records.to_vec(),
    })
}

/// One animation frame of a headless playback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackSample {
    pub step_id: u64,
    pub time: f64,
    /// Distance between the two agents' current (animated) positions.
    pub agent_dist: f64,
    /// Latest text similarity reported so far.
    pub text_similarity: f64,
}

/// Plays the script from the start, animating agents at `dt` until they
/// settle after each step, and samples every frame where both agents are
/// on the map and a text similarity exists.
pub fn simulate_playback(
    map: &MapGraph,
    script: &Script,
    e: &dyn Embedder,
    dt: f64,
) -> Result<Vec<PlaybackSample>, EvalError> {
    const MAX_FRAMES_PER_STEP: usize = 100_000;
    let mut session = EvaluationSession::new(map.clone(), script.clone());
    let mut samples = Vec::new();
    let mut time = 0.0;
    let mut latest_text = None;
    while let StepOutcome::Advanced(record) = session.advance(e)? {
        latest_text = record.text_similarity.map(|s| s.value()).or(latest_text);
        for _ in 0..MAX_FRAMES_PER_STEP {
            session.tick(dt);
            time += dt;
            let positions = (
                session.agents.get(&Role::Commander).map(|a| a.position),
                session.agents.get(&Role::Subordinate).map(|a| a.position),
            );
            if let ((Some(c), Some(s)), Some(text)) = (positions, latest_text) {
                samples.push(PlaybackSample {
                    step_id: record.step_id,
                    time,
                    agent_dist: c.distance(s),
                    text_similarity: text,
                });
            }
            if session.settled() {
                break;
            }
        }
    }
    Ok(samples)
}

/// Writes records as `script_id,role,similarity,node,node_dist,text_similarity`
/// with similarities to 4 decimals, distances to 2, and `NA` for a missing
/// text similarity.
pub fn export_trajectory_csv(records: &[TrajectoryRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["script_id", "role", "similarity", "node", "node_dist", "text_similarity"])
        .expect("in-memory write");
    for r in records {
        w.write_record([
            r.step_id.to_string(),
            r.role.to_string(),
            format!("{:.4}", r.match_similarity.value()),
            r.node.clone(),
            format!("{:.2}", r.node_dist),
            r.text_similarity
                .map_or_else(|| "NA".to_owned(), |s| format!("{:.4}", s.value())),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 fields")
}
