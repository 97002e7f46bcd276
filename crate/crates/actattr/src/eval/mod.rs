//! Benchmark harness: paired scene/query suites for the four attribute
//! tasks, four answering methods of increasing embodiment, and report
//! rendering. Suites regenerate bit-identically from (family, n, seed), so
//! a results table is reproducible from its seed and config hash alone.

pub mod gen;
pub mod methods;
pub mod report;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lang::{Query, QueryFamily};
use crate::scene::{SceneError, SceneFile};

pub use gen::{gen_distance_suite, gen_location_suite, gen_size_suite, gen_suite, gen_weight_suite};
pub use methods::{run_method, EpisodeOutcome, Method, MethodResult};
pub use report::{
    collect, render_csv, render_json, render_markdown, validate_against_schema, ResultRow,
    RunOutput, RESULT_SCHEMA,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(
        "unknown method {0:?}; expected ovd_only, vqa_only, attribute_api, or perception_action"
    )]
    UnknownMethod(String),
    #[error("knowledge base too small: {0}")]
    KbTooSmall(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("suite JSON: {0}")]
    Format(String),
}

/// One benchmark trial: a scene paired with the query asked about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub scene: SceneFile,
    pub query: Query,
}

/// A generated benchmark: episodes plus the seed that rebuilds them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub family: QueryFamily,
    pub seed: u64,
    pub episodes: Vec<Episode>,
}

impl Suite {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Format(e.to_string()))
    }

    /// Stable digest of the full suite content; equal hashes mean equal
    /// benchmarks episode for episode.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("suite serializes"));
        format!("{:x}", hasher.finalize())
    }
}
