//! Neural narrative maps.
//!
//! A map is grown by repeatedly prompting a text-generation backend with
//! the previous answers ([`builder`]), laid out with a force-directed
//! model ([`layout`]), and then used to evaluate timed scripts: each
//! script step places a role's agent on the node whose topic text is the
//! closest match ([`evaluator`]), and the distance between agents is
//! compared against plain text similarity ([`similarity`]).

pub mod backend;
pub mod builder;
pub mod clock;
pub mod evaluator;
pub mod gml;
pub mod graph;
pub mod layout;
pub mod script;
pub mod session;
pub mod similarity;
pub mod validator;

mod http;
pub use http::ApiConfig;

pub use backend::{BackendError, FixtureBackend, GenerationBackend, RecordingBackend, RemoteBackend};
pub use builder::{
    build_map, parse_fragments, parse_response, render_prompt, BuildConfig, BuildError, BuildOutput, BuildReport, MapperState,
    PromptTemplate, RetryPolicy, TemplateError,
};
pub use clock::{Clock, FixedClock, SystemClock};
pub use layout::{run_layout, LayoutError, LayoutParams, LayoutResult};
pub use session::{Frame, PendingFragment, SessionDocument, SessionError, SimilarTopic, StepDirection};
pub use similarity::{find_closest, similarity, Embedder, FallbackEmbedder, SimilarityError, SimilarityScore};
pub use evaluator::{
    animate, closest_node, export_trajectory_csv, pearson, simulate_playback, trajectory_stats, Agent, Correlation, EvalError,
    EvaluationSession, PlaybackSample, StepOutcome, TrajectoryRecord, TrajectoryStats,
};
pub use script::{Role, Script, ScriptError, ScriptStep};
pub use gml::{export_gml, import_gml, GmlError};
pub use graph::{GraphError, MapEdge, MapGraph, MapNode, NodeId, Point, TopicSource, TopicText};
pub use validator::{AcceptAll, Allowlist, PageExistenceValidator, ResponseValidator, ValidatorError};
