//! Timed, role-tagged scripts.
//!
//! ```json
//! {"steps":[{"id":1,"role":"COMMANDER","time":"0500","node_hint":"careful","text":"..."}]}
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Role {
    Commander,
    Subordinate,
    Other(String),
}

impl Role {
    pub fn as_str(&self) -> &str {
        match self {
            Role::Commander => "COMMANDER",
            Role::Subordinate => "SUBORDINATE",
            Role::Other(s) => s,
        }
    }

    /// The role whose agent this role's distance is measured against.
    pub fn counterpart(&self) -> Role {
        match self {
            Role::Commander => Role::Subordinate,
            _ => Role::Commander,
        }
    }
}

impl From<String> for Role {
    fn from(s: String) -> Self {
        let trimmed = s.trim();
        match trimmed.to_ascii_uppercase().as_str() {
            "COMMANDER" => Role::Commander,
            "SUBORDINATE" => Role::Subordinate,
            _ => Role::Other(trimmed.to_owned()),
        }
    }
}

impl From<&str> for Role {
    fn from(s: &str) -> Self {
        Role::from(s.to_owned())
    }
}

impl From<Role> for String {
    fn from(r: Role) -> Self {
        r.as_str().to_owned()
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub id: u64,
    pub role: Role,
    #[serde(default)]
    pub time: String,
    /// Expected node, for reference only; placement never reads it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_hint: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("invalid script JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("step ids must be positive")]
    ZeroId,
    #[error("step id {id} does not follow {prev}")]
    NotIncreasing { prev: u64, id: u64 },
    #[error("step {0} has empty text")]
    EmptyText(u64),
}

impl Script {
    pub fn new(steps: Vec<ScriptStep>) -> Result<Self, ScriptError> {
        let script = Self { steps };
        script.validate()?;
        Ok(script)
    }

    pub fn from_json(doc: &str) -> Result<Self, ScriptError> {
        let script: Script = serde_json::from_str(doc)?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        let mut prev = 0;
        for step in &self.steps {
            if step.id == 0 {
                return Err(ScriptError::ZeroId);
            }
            if step.id <= prev {
                return Err(ScriptError::NotIncreasing { prev, id: step.id });
            }
            if step.text.trim().is_empty() {
                return Err(ScriptError::EmptyText(step.id));
            }
            prev = step.id;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}
