//! Session documents as JSON files, one per session, replaced atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use nnm_core::{SessionDocument, SessionError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid session id {0:?}")]
    InvalidId(String),
    #[error("no session {0:?}")]
    NotFound(String),
    #[error("session {id:?} is unreadable: {source}")]
    Corrupt {
        id: String,
        #[source]
        source: SessionError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

/// Ids are 1 to 64 ASCII letters, digits, `-` or `_`, so they are safe
/// as file names.
pub fn valid_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::InvalidId(id.to_owned()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    pub fn exists(&self, id: &str) -> Result<bool, StoreError> {
        Ok(self.path(id)?.is_file())
    }

    pub fn load(&self, id: &str) -> Result<SessionDocument, StoreError> {
        let path = self.path(id)?;
        let text = match std::fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(StoreError::NotFound(id.to_owned())),
            Err(e) => return Err(e.into()),
        };
        SessionDocument::from_json(&text).map_err(|source| StoreError::Corrupt {
            id: id.to_owned(),
            source,
        })
    }

    pub fn save(&self, doc: &SessionDocument) -> Result<(), StoreError> {
        let path = self.path(&doc.session_id)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(doc.to_json().as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}
