//! Response validators: decide whether a parsed response item may become
//! a map node.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use thiserror::Error;

use crate::graph::name_key;
use crate::http::agent;

pub const WIKIPEDIA_SUMMARY_URL: &str = "https://en.wikipedia.org/api/rest_v1/page/summary/{}";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidatorError {
    #[error("cannot validate an empty title")]
    EmptyTitle,
    #[error("page lookup for {title:?} failed: {reason}")]
    Lookup { title: String, reason: String },
}

pub trait ResponseValidator: Send + Sync {
    fn is_valid(&self, item: &str) -> Result<bool, ValidatorError>;
}

impl<T: ResponseValidator + ?Sized> ResponseValidator for Arc<T> {
    fn is_valid(&self, item: &str) -> Result<bool, ValidatorError> {
        (**self).is_valid(item)
    }
}

impl<T: ResponseValidator + ?Sized> ResponseValidator for &T {
    fn is_valid(&self, item: &str) -> Result<bool, ValidatorError> {
        (**self).is_valid(item)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl ResponseValidator for AcceptAll {
    fn is_valid(&self, _item: &str) -> Result<bool, ValidatorError> {
        Ok(true)
    }
}

/// Accepts items whose normalized name is on the list.
#[derive(Debug, Clone, Default)]
pub struct Allowlist {
    keys: HashSet<String>,
}

impl Allowlist {
    pub fn new<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> Self {
        Self {
            keys: items.into_iter().map(|s| name_key(s.as_ref())).filter(|k| !k.is_empty()).collect(),
        }
    }

    /// One entry per non-blank line.
    pub fn parse(doc: &str) -> Self {
        Self::new(doc.lines())
    }
}

impl ResponseValidator for Allowlist {
    fn is_valid(&self, item: &str) -> Result<bool, ValidatorError> {
        Ok(self.keys.contains(&name_key(item)))
    }
}

/// Checks that an encyclopedia page exists for the item, via an HTTP GET
/// of `url_pattern` with `{}` replaced by the percent-encoded title.
/// 2xx means the page exists and 404 means it does not; anything else is
/// a lookup error. Answers are cached per title.
pub struct PageExistenceValidator {
    url_pattern: String,
    agent: ureq::Agent,
    cache: RwLock<HashMap<String, bool>>,
}

impl PageExistenceValidator {
    pub fn new(url_pattern: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url_pattern: url_pattern.into(),
            agent: agent(timeout),
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn wikipedia() -> Self {
        Self::new(WIKIPEDIA_SUMMARY_URL, Duration::from_secs(10))
    }

    pub fn url_for(&self, title: &str) -> String {
        let encoded = utf8_percent_encode(title, NON_ALPHANUMERIC).to_string();
        self.url_pattern.replacen("{}", &encoded, 1)
    }

    pub fn cached(&self, title: &str) -> Option<bool> {
        self.cache.read().unwrap_or_else(|e| e.into_inner()).get(title).copied()
    }

    pub fn prime(&self, title: &str, exists: bool) {
        self.cache
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(title.to_owned(), exists);
    }

    fn fetch(&self, title: &str) -> Result<bool, ValidatorError> {
        let lookup_err = |reason: String| ValidatorError::Lookup {
            title: title.to_owned(),
            reason,
        };
        let resp = self
            .agent
            .get(self.url_for(title))
            .header("Accept", "application/json")
            .call()
            .map_err(|e| lookup_err(e.to_string()))?;
        match resp.status().as_u16() {
            200..=299 => Ok(true),
            404 => Ok(false),
            other => Err(lookup_err(format!("HTTP {other}"))),
        }
    }

    pub fn is_valid_page(&self, title: &str) -> Result<bool, ValidatorError> {
        let title = title.trim();
        if title.is_empty() {
            return Err(ValidatorError::EmptyTitle);
        }
        if let Some(hit) = self.cached(title) {
            return Ok(hit);
        }
        let exists = self.fetch(title)?;
        self.prime(title, exists);
        Ok(exists)
    }
}

impl ResponseValidator for PageExistenceValidator {
    fn is_valid(&self, item: &str) -> Result<bool, ValidatorError> {
        self.is_valid_page(item)
    }
}
