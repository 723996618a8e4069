//! Static code analysis over extracted source facts.
//!
//! Source files are parsed into Tier-1 relations (a [`facts::FactsArchive`]),
//! queries written in a small Gödel-style language are compiled to Datalog
//! ([`godel`]), planned ([`planner`]) and evaluated semi-naively
//! ([`datalog`]). Snapshots can be rebuilt incrementally ([`incremental`])
//! and tasks are scheduled, cached and measured by the [`orchestrator`].

pub mod cli;
pub mod datalog;
pub mod extract;
pub mod facts;
pub mod godel;
pub mod incremental;
pub mod orchestrator;
pub mod planner;
pub mod query;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Engine version; part of every result-cache key.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A subject language with a fact extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
    Xml,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::Python, Language::Xml];

    pub fn name(self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::Xml => "xml",
        }
    }

    /// Whether a repository-relative path belongs to this language.
    pub fn matches_path(self, path: &str) -> bool {
        match self {
            Language::Python => path.ends_with(".py"),
            Language::Xml => path.ends_with(".xml"),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown subject language `{0}` (expected python or xml)")]
pub struct UnknownLanguage(pub String);

impl FromStr for Language {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "python" => Ok(Language::Python),
            "xml" => Ok(Language::Xml),
            other => Err(UnknownLanguage(other.to_string())),
        }
    }
}
