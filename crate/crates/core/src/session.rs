//! Curation sessions: a map under construction plus an optional script
//! evaluation. The HTTP service is a thin shell around these operations.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationBackend};
use crate::builder::{parse_fragments, PromptTemplate, RetryPolicy};
use crate::evaluator::{export_trajectory_csv, Agent, EvalError, EvaluationSession, StepOutcome, TrajectoryRecord};
use crate::gml::export_gml;
use crate::graph::{GraphError, MapGraph, NodeId, TopicSource, TopicText};
use crate::layout::{run_layout, LayoutError, LayoutParams};
use crate::script::Script;
use crate::similarity::{find_closest, Embedder, SimilarityError, SimilarityScore};

pub const SESSION_SCHEMA_VERSION: u32 = 1;

/// A generated fragment waiting to be placed on a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingFragment {
    pub id: u64,
    pub text: String,
    pub prompt: String,
    /// Node the prompt was issued from; assignment links to it.
    pub seed_node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDocument {
    pub schema_version: u32,
    pub session_id: String,
    pub graph: MapGraph,
    pub pending_responses: Vec<PendingFragment>,
    pub next_fragment_id: u64,
    pub script: Option<Script>,
    pub evaluation: Option<EvaluationSession>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepDirection {
    Advance,
    Reverse,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarTopic {
    pub node_id: NodeId,
    pub node: String,
    pub topic_index: usize,
    pub text: String,
    pub score: SimilarityScore,
}

/// Animation state served to viewers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub cursor: usize,
    pub steps: usize,
    pub agents: Vec<Agent>,
    pub records: Vec<TrajectoryRecord>,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("no pending fragment with id {0}")]
    UnknownFragment(u64),
    #[error("no script loaded")]
    NoScript,
    #[error("generation failed after {attempts} attempts: {source}")]
    Backend {
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid session document: {0}")]
    Json(#[from] serde_json::Error),
}

impl SessionDocument {
    pub fn new(session_id: impl Into<String>, now: DateTime<Utc>) -> Self {
        Self {
            schema_version: SESSION_SCHEMA_VERSION,
            session_id: session_id.into(),
            graph: MapGraph::new(),
            pending_responses: Vec::new(),
            next_fragment_id: 1,
            script: None,
            evaluation: None,
            updated_at: now,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(doc: &str) -> Result<Self, SessionError> {
        let doc: SessionDocument = serde_json::from_str(doc)?;
        doc.graph.validate()?;
        Ok(doc)
    }

    /// Keeps the evaluation's copy of the map in step with the graph.
    fn sync_evaluation(&mut self) {
        if let Some(eval) = &mut self.evaluation {
            eval.map = self.graph.clone();
        }
    }

    /// Prompts the backend with `seed` and queues the response lines as
    /// pending fragments. The prompt is charged to the `seed_group` node
    /// when given, else to a node named after the seed. Fragments already
    /// pending are not queued twice. Returns the pending list.
    #[allow(clippy::too_many_arguments)]
    pub fn submit_prompt(
        &mut self,
        template: &PromptTemplate,
        seed: &str,
        seed_group: Option<&str>,
        backend: &dyn GenerationBackend,
        retry: &RetryPolicy,
        now: DateTime<Utc>,
    ) -> Result<&[PendingFragment], SessionError> {
        let seed_name = seed_group.filter(|g| !g.trim().is_empty()).unwrap_or(seed);
        if seed_name.trim().is_empty() {
            return Err(GraphError::EmptyName.into());
        }
        let prompt = template.render(seed);
        let raw = retry
            .run(|| backend.generate(&prompt))
            .map_err(|(source, attempts)| SessionError::Backend { attempts, source })?;

        let seed_node = self.graph.add_node(seed_name, None)?;
        self.graph.node_mut(seed_node).expect("just added").query_count += 1;
        for text in parse_fragments(&raw) {
            if self.pending_responses.iter().any(|f| f.text == text) {
                continue;
            }
            self.pending_responses.push(PendingFragment {
                id: self.next_fragment_id,
                text,
                prompt: prompt.clone(),
                seed_node,
            });
            self.next_fragment_id += 1;
        }
        self.sync_evaluation();
        self.updated_at = now;
        Ok(&self.pending_responses)
    }

    /// Moves a pending fragment onto `node_name` as a topic and links that
    /// node to the fragment's seed node.
    pub fn assign_fragment(&mut self, fragment_id: u64, node_name: &str, now: DateTime<Utc>) -> Result<NodeId, SessionError> {
        let at = self
            .pending_responses
            .iter()
            .position(|f| f.id == fragment_id)
            .ok_or(SessionError::UnknownFragment(fragment_id))?;
        let node = self.graph.add_node(node_name, None)?;
        let fragment = self.pending_responses.remove(at);
        if fragment.seed_node != node {
            self.graph.connect(fragment.seed_node, node)?;
        }
        let n = self.graph.node_mut(node).expect("just added");
        n.query_count += 1;
        n.topics.push(TopicText {
            text: fragment.text,
            source: TopicSource::Generated,
            prompt: Some(fragment.prompt),
            created_at: now,
        });
        self.sync_evaluation();
        self.updated_at = now;
        Ok(node)
    }

    pub fn run_layout(&mut self, params: &LayoutParams, now: DateTime<Utc>) -> Result<(), SessionError> {
        run_layout(&mut self.graph, params)?;
        self.sync_evaluation();
        self.updated_at = now;
        Ok(())
    }

    /// Topic texts ranked by similarity to `text`.
    pub fn similar(&self, text: &str, k: usize, e: &dyn Embedder) -> Result<Vec<SimilarTopic>, SessionError> {
        let candidates: Vec<((NodeId, usize), &str)> = self
            .graph
            .topics()
            .map(|(id, idx, t)| ((id, idx), t.text.as_str()))
            .collect();
        let ranked = find_closest(text, &candidates, e, k)?;
        Ok(ranked
            .into_iter()
            .map(|((node_id, topic_index), score)| {
                let node = self.graph.node(node_id).expect("topic of existing node");
                SimilarTopic {
                    node_id,
                    node: node.name.clone(),
                    topic_index,
                    text: node.topics[topic_index].text.clone(),
                    score,
                }
            })
            .collect())
    }

    /// Replaces the script and starts a fresh evaluation of it.
    pub fn load_script(&mut self, script: Script, now: DateTime<Utc>) {
        self.evaluation = Some(EvaluationSession::new(self.graph.clone(), script.clone()));
        self.script = Some(script);
        self.updated_at = now;
    }

    pub fn step_script(&mut self, direction: StepDirection, e: &dyn Embedder, now: DateTime<Utc>) -> Result<StepOutcome, SessionError> {
        let eval = self.evaluation.as_mut().ok_or(SessionError::NoScript)?;
        let outcome = match direction {
            StepDirection::Advance => eval.advance(e)?,
            StepDirection::Reverse => eval.reverse(),
            StepDirection::Reset => eval.reset(),
        };
        if outcome.moved() {
            self.updated_at = now;
        }
        Ok(outcome)
    }

    /// Animates agents by `dt` seconds and reports where they are.
    pub fn frame(&mut self, dt: f64) -> Frame {
        match &mut self.evaluation {
            Some(eval) => {
                eval.tick(dt);
                Frame {
                    cursor: eval.cursor,
                    steps: eval.script.len(),
                    agents: eval.agents.values().cloned().collect(),
                    records: eval.records.clone(),
                }
            }
            None => Frame {
                cursor: 0,
                steps: 0,
                agents: Vec::new(),
                records: Vec::new(),
            },
        }
    }

    pub fn trajectory_csv(&self) -> String {
        export_trajectory_csv(self.evaluation.as_ref().map_or(&[], |e| &e.records))
    }

    pub fn export_gml(&self) -> String {
        export_gml(&self.graph)
    }
}
