//! Iterative map building.
//!
//! Starting from a queue of seeds, each round renders the prompt template
//! with the front seed, asks the generation backend for a continuation,
//! splits it into items and grows the graph: a valid item that names an
//! existing node is connected to the current node, otherwise it becomes a
//! new node (connected to the current one) and is queued as a future seed.
//! Seeds are consumed breadth-first and never queried twice.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationBackend};
use crate::clock::Clock;
use crate::graph::{name_key, GraphError, MapGraph, NodeId, TopicSource, TopicText};
use crate::validator::ResponseValidator;

pub const PLACEHOLDER: &str = "{}";
pub const MAX_ITEMS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("prompt template has no {{}} placeholder")]
    NoPlaceholder,
    #[error("prompt template has {0} {{}} placeholders, expected one")]
    TooManyPlaceholders(usize),
}

/// A prompt with exactly one `{}` slot for the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, TemplateError> {
        let template = template.into();
        match template.matches(PLACEHOLDER).count() {
            0 => Err(TemplateError::NoPlaceholder),
            1 => Ok(Self(template)),
            n => Err(TemplateError::TooManyPlaceholders(n)),
        }
    }

    pub fn render(&self, seed: &str) -> String {
        self.0.replacen(PLACEHOLDER, seed, 1)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for PromptTemplate {
    type Error = TemplateError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<PromptTemplate> for String {
    fn from(t: PromptTemplate) -> Self {
        t.0
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Renders `template` with `seed`, validating the template first.
pub fn render_prompt(template: &str, seed: &str) -> Result<String, TemplateError> {
    PromptTemplate::new(template).map(|t| t.render(seed))
}

const QUOTES: &[char] = &['"', '\'', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}', '`'];

fn strip_bullet(s: &str) -> &str {
    for bullet in ["-", "*", "\u{2022}"] {
        if let Some(rest) = s.strip_prefix(bullet) {
            return rest;
        }
    }
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(after) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            if after.is_empty() || after.starts_with(char::is_whitespace) {
                return after;
            }
        }
    }
    s
}

fn strip_quotes(s: &str) -> &str {
    let inner = s.trim_start_matches(QUOTES).trim_end_matches(QUOTES);
    if inner.len() < s.len() {
        inner
    } else {
        s
    }
}

fn clean(mut s: &str, drop_periods: bool) -> &str {
    loop {
        let before = s;
        s = s.trim();
        s = strip_bullet(s).trim();
        s = strip_quotes(s).trim();
        if drop_periods {
            s = s.trim_end_matches('.').trim_end();
        }
        if s == before {
            return s;
        }
    }
}

/// Splits a raw generation into short list items: commas and line breaks
/// separate items; bullets, list numbers, quotes and trailing periods are
/// stripped; duplicates (by normalized name) and empties are dropped; at
/// most [`MAX_ITEMS`] are kept.
pub fn parse_response(raw: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    raw.split([',', '\n', '\r'])
        .map(|s| clean(s, true))
        .filter(|s| !s.is_empty())
        .filter(|s| seen.insert(name_key(s)))
        .take(MAX_ITEMS)
        .map(str::to_owned)
        .collect()
}

/// Splits a raw generation into sentence fragments, one per line, for
/// manual curation. Commas and final punctuation are kept.
pub fn parse_fragments(raw: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    raw.lines()
        .map(|s| clean(s, false))
        .filter(|s| !s.is_empty())
        .filter(|s| seen.insert(s.to_string()))
        .take(MAX_ITEMS)
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            initial_backoff: Duration::ZERO,
        }
    }

    /// Calls `f` until it succeeds or attempts run out, doubling the pause
    /// after each failure. Returns the last error and the attempt count.
    pub fn run<T, E: fmt::Display>(&self, mut f: impl FnMut() -> Result<T, E>) -> Result<T, (E, u32)> {
        let attempts = self.attempts.max(1);
        let mut delay = self.initial_backoff;
        let mut attempt = 1;
        loop {
            match f() {
                Ok(v) => return Ok(v),
                Err(e) if attempt >= attempts => return Err((e, attempt)),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "generation failed, retrying in {delay:?}");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

/// Counters collected while building.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub queries: usize,
    pub generation_attempts: usize,
    pub items_parsed: usize,
    /// Items the validator turned down.
    pub rejected: Vec<String>,
    /// Items skipped because the validator itself failed.
    pub validator_errors: Vec<String>,
    /// Seeds in the order they were consumed.
    pub consumed: Vec<String>,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("max_queries must be at least 1")]
    NoQueries,
    #[error("at least one initial seed is required")]
    NoSeeds,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("generation failed after {attempts} attempts on seed {seed:?}: {source}")]
    Backend {
        seed: String,
        attempts: u32,
        #[source]
        source: BackendError,
        /// Everything built before the failure.
        partial: Box<MapGraph>,
        report: Box<BuildReport>,
    },
}

/// Working state of the build loop.
#[derive(Debug, Clone, PartialEq)]
pub struct MapperState {
    pub seed_queue: VecDeque<String>,
    /// Normalized keys of consumed seeds.
    pub queried: BTreeSet<String>,
    pub graph: MapGraph,
    pub query_count: usize,
    pub max_queries: usize,
    pub template: PromptTemplate,
    pub current: Option<NodeId>,
}

impl MapperState {
    pub fn new<S: AsRef<str>>(
        template: PromptTemplate,
        initial_seeds: impl IntoIterator<Item = S>,
        max_queries: usize,
    ) -> Result<Self, BuildError> {
        if max_queries == 0 {
            return Err(BuildError::NoQueries);
        }
        let mut graph = MapGraph::new();
        let mut seed_queue = VecDeque::new();
        let mut keys = HashSet::new();
        for seed in initial_seeds {
            let seed = seed.as_ref();
            let id = match graph.add_node(seed, None) {
                Ok(id) => id,
                Err(GraphError::EmptyName) => continue,
                Err(e) => return Err(e.into()),
            };
            if keys.insert(name_key(seed)) {
                seed_queue.push_back(graph.node(id).expect("just added").name.clone());
            }
        }
        if seed_queue.is_empty() {
            return Err(BuildError::NoSeeds);
        }
        Ok(Self {
            seed_queue,
            queried: BTreeSet::new(),
            graph,
            query_count: 0,
            max_queries,
            template,
            current: None,
        })
    }

    pub fn is_done(&self) -> bool {
        self.query_count >= self.max_queries || self.seed_queue.is_empty()
    }

    fn is_known_seed(&self, key: &str) -> bool {
        self.queried.contains(key) || self.seed_queue.iter().any(|s| name_key(s) == key)
    }

    /// Runs one round of the loop. Returns `Ok(false)` once finished.
    pub fn step(
        &mut self,
        backend: &dyn GenerationBackend,
        validator: &dyn ResponseValidator,
        retry: &RetryPolicy,
        clock: &dyn Clock,
        report: &mut BuildReport,
    ) -> Result<bool, BuildError> {
        if self.is_done() {
            return Ok(false);
        }
        let seed = self.seed_queue.pop_front().expect("queue checked non-empty");
        let seed_key = name_key(&seed);
        let current = self.graph.add_node(&seed, None)?;
        self.current = Some(current);
        self.queried.insert(seed_key.clone());
        report.consumed.push(seed.clone());

        let prompt = self.template.render(&seed);
        let mut attempts = 0;
        let raw = retry
            .run(|| {
                attempts += 1;
                backend.generate(&prompt)
            })
            .map_err(|(source, attempts)| {
                report.generation_attempts += attempts as usize;
                BuildError::Backend {
                    seed: seed.clone(),
                    attempts,
                    source,
                    partial: Box::new(self.graph.clone()),
                    report: Box::new(report.clone()),
                }
            })?;
        report.generation_attempts += attempts;

        let node = self.graph.node_mut(current).expect("current node exists");
        node.query_count += 1;
        if !raw.trim().is_empty() {
            node.topics.push(TopicText {
                text: raw.trim().to_owned(),
                source: TopicSource::Generated,
                prompt: Some(prompt.clone()),
                created_at: clock.now(),
            });
        }

        let items = parse_response(&raw);
        report.items_parsed += items.len();
        for item in items {
            match validator.is_valid(&item) {
                Ok(true) => {}
                Ok(false) => {
                    report.rejected.push(item);
                    continue;
                }
                Err(e) => {
                    tracing::warn!(item = %item, error = %e, "validator failed, skipping item");
                    report.validator_errors.push(item);
                    continue;
                }
            }
            let key = name_key(&item);
            if key == seed_key {
                continue;
            }
            if let Some(existing) = self.graph.find_by_name(&item) {
                self.graph.connect(existing, current)?;
                self.graph.node_mut(existing).expect("found").query_count += 1;
            } else if !self.is_known_seed(&key) {
                let id = self.graph.add_node(&item, None)?;
                self.graph.node_mut(id).expect("just added").query_count += 1;
                self.graph.connect(id, current)?;
                self.seed_queue.push_back(item);
            }
        }
        self.query_count += 1;
        report.queries = self.query_count;
        Ok(true)
    }
}

pub struct BuildConfig<'a> {
    pub template: PromptTemplate,
    pub initial_seeds: Vec<String>,
    pub max_queries: usize,
    pub backend: &'a dyn GenerationBackend,
    pub validator: &'a dyn ResponseValidator,
    pub retry: RetryPolicy,
    pub clock: &'a dyn Clock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutput {
    pub graph: MapGraph,
    pub report: BuildReport,
}

/// Grows a map from the configured seeds. Node positions are left at the
/// origin; run a layout afterwards.
pub fn build_map(config: &BuildConfig<'_>) -> Result<BuildOutput, BuildError> {
    let mut state = MapperState::new(config.template.clone(), &config.initial_seeds, config.max_queries)?;
    let mut report = BuildReport::default();
    while state.step(config.backend, config.validator, &config.retry, config.clock, &mut report)? {}
    tracing::info!(
        nodes = state.graph.node_count(),
        edges = state.graph.edge_count(),
        queries = state.query_count,
        rejected = report.rejected.len(),
        "map built"
    );
    Ok(BuildOutput {
        graph: state.graph,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::FixtureBackend;
    use crate::clock::FixedClock;
    use crate::validator::{AcceptAll, Allowlist};
    use std::sync::atomic::{AtomicU32, Ordering};

    const COUNTRY_TEMPLATE: &str = "A short list of countries that are nearest to \"{}\", separated by commas:";

    #[test]
    fn parses_comma_list() {
        let items = parse_response("France, Switzerland, Austria, Slovenia, San Marino, Vatican City");
        assert_eq!(items.len(), 6);
        assert_eq!(&items[4..], ["San Marino", "Vatican City"]);
    }

    #[test]
    fn parses_numbered_list_with_duplicates() {
        assert_eq!(parse_response("1. Stoicism\n2. Stoicism\n3. Hedonism."), vec!["Stoicism", "Hedonism"]);
        assert!(parse_response("").is_empty());
        assert!(parse_response(" , ,\n\n").is_empty());
    }

    #[test]
    fn strips_bullets_and_quotes() {
        assert_eq!(
            parse_response("- \"Cynicism\".\n* 'Atheism'\n\u{2022} Pyrrhonism...\n4) Skepticism"),
            vec!["Cynicism", "Atheism", "Pyrrhonism", "Skepticism"]
        );
        // a bare number is an item; a lone list marker is empty
        assert_eq!(parse_response("1984, 2."), vec!["1984"]);
    }

    #[test]
    fn caps_item_count() {
        let raw: Vec<String> = (0..50).map(|i| format!("item{i}")).collect();
        assert_eq!(parse_response(&raw.join(",")).len(), MAX_ITEMS);
    }

    #[test]
    fn fragments_keep_sentences() {
        let raw = "\"If in doubt, empty your magazine.\"\n\
                   \"The purpose of a battle is to defeat the enemy. There is no other purpose.\"\n\
                   \"If in doubt, empty your magazine.\"\n";
        assert_eq!(
            parse_fragments(raw),
            vec![
                "If in doubt, empty your magazine.",
                "The purpose of a battle is to defeat the enemy. There is no other purpose."
            ]
        );
    }

    #[test]
    fn renders_prompt() {
        assert_eq!(
            render_prompt(COUNTRY_TEMPLATE, "Mexico").unwrap(),
            "A short list of countries that are nearest to \"Mexico\", separated by commas:"
        );
        assert_eq!(render_prompt("{}", "x").unwrap(), "x");
        assert_eq!(render_prompt("no slot", "x"), Err(TemplateError::NoPlaceholder));
        assert_eq!(render_prompt("{} and {}", "x"), Err(TemplateError::TooManyPlaceholders(2)));
    }

    #[test]
    fn seed_with_braces_is_inserted_verbatim() {
        let t = PromptTemplate::new("near {}:").unwrap();
        assert_eq!(t.render("{}"), "near {}:");
    }

    fn config<'a>(
        seeds: &[&str],
        max_queries: usize,
        backend: &'a dyn GenerationBackend,
        validator: &'a dyn ResponseValidator,
    ) -> BuildConfig<'a> {
        static CLOCK: FixedClock = FixedClock(chrono::DateTime::UNIX_EPOCH);
        BuildConfig {
            template: PromptTemplate::new(COUNTRY_TEMPLATE).unwrap(),
            initial_seeds: seeds.iter().map(|s| s.to_string()).collect(),
            max_queries,
            backend,
            validator,
            retry: RetryPolicy::immediate(3),
            clock: &CLOCK,
        }
    }

    #[test]
    fn single_query_star() {
        let backend = FixtureBackend::new([("Italy", "France, Switzerland, Austria, Slovenia, San Marino, Vatican City")]);
        let out = build_map(&config(&["Italy"], 1, &backend, &AcceptAll)).unwrap();
        let g = out.graph;
        assert_eq!(g.node_count(), 7);
        assert_eq!(g.edge_count(), 6);
        let italy = g.find_by_name("italy").unwrap();
        assert!(g.edges.iter().all(|e| e.touches(italy)));
        let node = g.node(italy).unwrap();
        assert_eq!(node.query_count, 1);
        assert_eq!(node.topics.len(), 1);
        assert_eq!(node.topics[0].prompt.as_deref(), Some(&*PromptTemplate::new(COUNTRY_TEMPLATE).unwrap().render("Italy")));
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn zero_queries_rejected() {
        let backend = FixtureBackend::default();
        assert!(matches!(build_map(&config(&["Italy"], 0, &backend, &AcceptAll)), Err(BuildError::NoQueries)));
        assert!(matches!(build_map(&config(&[], 3, &backend, &AcceptAll)), Err(BuildError::NoSeeds)));
        assert!(matches!(build_map(&config(&["  "], 3, &backend, &AcceptAll)), Err(BuildError::NoSeeds)));
    }

    #[test]
    fn invalid_items_are_reported_not_added() {
        let backend = FixtureBackend::new([("Italy", "France, Atlantis, Austria")]);
        let validator = Allowlist::new(["Italy", "France", "Austria"]);
        let out = build_map(&config(&["Italy"], 5, &backend, &validator)).unwrap();
        assert_eq!(out.report.rejected, vec!["Atlantis"]);
        assert!(out.graph.find_by_name("Atlantis").is_none());
        assert_eq!(out.graph.node_count(), 3);
    }

    #[test]
    fn queue_drains_before_max_queries() {
        let backend = FixtureBackend::new([("Aland", "Bora"), ("Bora", "Aland")]);
        let out = build_map(&config(&["Aland"], 10, &backend, &AcceptAll)).unwrap();
        assert_eq!(out.report.queries, 2);
        assert_eq!(backend.calls(), 2);
        assert_eq!(out.graph.edge_count(), 1);
        // each node is consumed once and named once
        assert!(out.graph.nodes.iter().all(|n| n.query_count == 2));
    }

    #[test]
    fn self_mentions_do_not_loop() {
        let backend = FixtureBackend::new([("Aland", "aland, Bora")]);
        let out = build_map(&config(&["Aland"], 1, &backend, &AcceptAll)).unwrap();
        assert_eq!(out.graph.edge_count(), 1);
    }

    #[test]
    fn later_initial_seed_gets_connected() {
        let backend = FixtureBackend::new([("Aland", "Crete"), ("Crete", "")]);
        let out = build_map(&config(&["Aland", "Crete"], 2, &backend, &AcceptAll)).unwrap();
        let g = &out.graph;
        assert_eq!(g.node_count(), 2);
        assert!(g.has_edge(g.find_by_name("Aland").unwrap(), g.find_by_name("Crete").unwrap()));
        assert_eq!(out.report.consumed, vec!["Aland", "Crete"]);
    }

    struct Flaky {
        failures: AtomicU32,
    }

    impl GenerationBackend for Flaky {
        fn generate(&self, _prompt: &str) -> Result<String, BackendError> {
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Err(BackendError::Transport("connection reset".into()));
            }
            Ok("B, C".into())
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let backend = Flaky { failures: AtomicU32::new(2) };
        let out = build_map(&config(&["A"], 1, &backend, &AcceptAll)).unwrap();
        assert_eq!(out.report.generation_attempts, 3);
        assert_eq!(out.graph.node_count(), 3);
    }

    #[test]
    fn persistent_failure_returns_partial_graph() {
        let backend = Flaky { failures: AtomicU32::new(100) };
        match build_map(&config(&["A", "Z"], 2, &backend, &AcceptAll)) {
            Err(BuildError::Backend { attempts, partial, seed, .. }) => {
                assert_eq!(attempts, 3);
                assert_eq!(seed, "A");
                assert_eq!(partial.node_count(), 2);
            }
            other => panic!("expected backend error, got {other:?}"),
        }
    }

    #[test]
    fn backoff_doubles() {
        let policy = RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(5),
        };
        let start = std::time::Instant::now();
        let res: Result<(), _> = policy.run(|| Err::<(), _>("nope"));
        assert_eq!(res, Err(("nope", 3)));
        assert!(start.elapsed() >= Duration::from_millis(15));
    }
}
