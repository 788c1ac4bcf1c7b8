//! Text-generation backends.
//!
//! The fixture file format is one `seed<TAB>response` pair per line
//! (UTF-8). Inside either field `\n`, `\t` and `\\` stand for a newline,
//! a tab and a backslash. Blank lines and lines starting with `#` are
//! skipped.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::http::{agent, ApiConfig};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("backend request failed: {0}")]
    Transport(String),
    #[error("unexpected backend response: {0}")]
    Protocol(String),
    #[error("fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait GenerationBackend: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, BackendError>;
}

impl<T: GenerationBackend + ?Sized> GenerationBackend for Arc<T> {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).generate(prompt)
    }
}

impl<T: GenerationBackend + ?Sized> GenerationBackend for &T {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).generate(prompt)
    }
}

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

fn escape(field: &str) -> String {
    field.replace('\\', "\\\\").replace('\n', "\\n").replace('\t', "\\t")
}

/// Canned responses keyed by seed.
///
/// A prompt is answered by the entry whose key equals the prompt, else by
/// the longest key that occurs inside it. Unknown prompts get an empty
/// response.
#[derive(Debug, Default)]
pub struct FixtureBackend {
    entries: BTreeMap<String, String>,
    calls: AtomicUsize,
}

impl FixtureBackend {
    pub fn new<K: Into<String>, V: Into<String>>(entries: impl IntoIterator<Item = (K, V)>) -> Self {
        Self {
            entries: entries.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn parse(doc: &str) -> Result<Self, BackendError> {
        let mut entries = BTreeMap::new();
        for (i, line) in doc.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((seed, response)) = line.split_once('\t') else {
                return Err(BackendError::Fixture {
                    line: i + 1,
                    message: "expected seed<TAB>response".into(),
                });
            };
            entries.insert(unescape(seed), unescape(response));
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_fixture(&self) -> String {
        render_fixture(self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    /// Number of `generate` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn lookup(&self, prompt: &str) -> Option<&str> {
        if let Some(v) = self.entries.get(prompt) {
            return Some(v);
        }
        self.entries
            .iter()
            .filter(|(k, _)| !k.is_empty() && prompt.contains(k.as_str()))
            // first longest key in sorted order
            .fold(None::<(&String, &String)>, |best, kv| match best {
                Some(b) if b.0.len() >= kv.0.len() => Some(b),
                _ => Some(kv),
            })
            .map(|(_, v)| v.as_str())
    }
}

fn render_fixture<'a>(pairs: impl Iterator<Item = (&'a str, &'a str)>) -> String {
    pairs.map(|(k, v)| format!("{}\t{}\n", escape(k), escape(v))).collect()
}

impl GenerationBackend for FixtureBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.lookup(prompt).unwrap_or_default().to_owned())
    }
}

/// Wraps a backend and keeps every prompt/response pair so a session can
/// be replayed later through [`FixtureBackend`].
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<(String, String)>>,
}

impl<B: GenerationBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn recorded(&self) -> Vec<(String, String)> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Recorded pairs in fixture format, keyed by the full prompt.
    pub fn to_fixture(&self) -> String {
        let log = self.recorded();
        render_fixture(log.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BackendError> {
        std::fs::write(path, self.to_fixture())?;
        Ok(())
    }
}

impl<B: GenerationBackend> GenerationBackend for RecordingBackend<B> {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let text = self.inner.generate(prompt)?;
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push((prompt.to_owned(), text.clone()));
        Ok(text)
    }
}

/// Client for an OpenAI-compatible `/completions` endpoint.
pub struct RemoteBackend {
    config: ApiConfig,
    agent: ureq::Agent,
    pub max_tokens: u32,
    pub temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    text: String,
}

impl RemoteBackend {
    pub fn new(config: ApiConfig) -> Self {
        let agent = agent(config.timeout);
        Self {
            config,
            agent,
            max_tokens: 256,
            temperature: 0.7,
        }
    }

    pub fn from_env() -> Option<Self> {
        ApiConfig::from_env().map(Self::new)
    }
}

impl GenerationBackend for RemoteBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        });
        let mut req = self.agent.post(self.config.endpoint("completions"));
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::Status { status, body });
        }
        let parsed: CompletionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| BackendError::Protocol("no choices in completion".into()))
    }
}
