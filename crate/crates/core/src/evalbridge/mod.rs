//! Accuracy evaluators behind one request/response contract.
//!
//! Three kinds ship: a deterministic [`SurrogateEvaluator`], a CSV lookup
//! [`TableEvaluator`], and an [`ExternalEvaluator`] that talks NDJSON to a
//! subprocess. Requests carry a digest of the canonical JSON of their
//! configuration so results can be cached and tabulated.

mod external;
mod surrogate;
mod table;

use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::netzoo::NetworkArch;
use crate::searchspace::CompressionConfig;

pub use external::{ExternalEvaluator, HANDSHAKE_PROTOCOL, HANDSHAKE_VERSION};
pub use surrogate::{CompressionStats, SurrogateCoefficients, SurrogateEvaluator};
pub use table::{MissingPolicy, TableEvaluator};

/// Default wait for one external response.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub model_name: String,
    pub config_digest: String,
    pub config: CompressionConfig,
    pub beta: u32,
}

impl EvalRequest {
    pub fn new(config: &CompressionConfig, beta: u32) -> Self {
        Self {
            model_name: config.model.clone(),
            config_digest: digest(config),
            config: config.clone(),
            beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub status: EvalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl EvalResponse {
    pub fn ok(accuracy: f64) -> Self {
        Self {
            accuracy: Some(accuracy),
            status: EvalStatus::Ok,
            message: None,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            accuracy: None,
            status: EvalStatus::Error,
            message: Some(message.into()),
        }
    }

    /// Checks that accuracy is present exactly when status is ok, and in
    /// `[0, 1]`.
    pub fn validate(&self) -> std::result::Result<(), String> {
        match (self.status, self.accuracy) {
            (EvalStatus::Ok, Some(a)) if (0.0..=1.0).contains(&a) => Ok(()),
            (EvalStatus::Ok, Some(a)) => Err(format!("accuracy {a} outside [0, 1]")),
            (EvalStatus::Ok, None) => Err("status ok without accuracy".into()),
            (EvalStatus::Error, Some(_)) => Err("status error with accuracy".into()),
            (EvalStatus::Error, None) => Ok(()),
        }
    }

    /// The accuracy, or the evaluator's error as [`Error::Evaluator`].
    pub fn into_accuracy(self) -> Result<f64> {
        match self.accuracy {
            Some(a) if self.status == EvalStatus::Ok => Ok(a),
            _ => Err(Error::Evaluator(
                self.message.unwrap_or_else(|| "evaluator reported an error".into()),
            )),
        }
    }
}

pub trait Evaluator: Send + Sync {
    /// `Err` for transport or protocol failures; evaluator-side failures
    /// come back as a response with status error.
    fn evaluate(&self, request: &EvalRequest) -> Result<EvalResponse>;

    /// Whether requests may be issued from several threads at once.
    fn supports_concurrency(&self) -> bool {
        true
    }
}

/// Serializes with sorted object keys and no whitespace.
pub fn canonical_json(value: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key, so re-parsing through
    // `Value` sorts every object.
    serde_json::to_string(value).expect("JSON values always serialize")
}

pub fn digest_json(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

/// SHA-256 of the canonical JSON of `config`.
pub fn digest(config: &CompressionConfig) -> String {
    digest_json(&serde_json::to_value(config).expect("configs serialize"))
}

/// Which evaluator to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[derive(Default)]
pub enum EvaluatorSpec {
    #[default]
    Surrogate,
    Table {
        path: std::path::PathBuf,
        #[serde(default)]
        missing: MissingPolicy,
    },
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout_s")]
        timeout_s: u64,
    },
}

fn default_timeout_s() -> u64 {
    DEFAULT_TIMEOUT.as_secs()
}

impl FromStr for EvaluatorSpec {
    type Err = Error;

    /// `surrogate`, `table:<csv>`, `table-fallback:<csv>` or
    /// `external:<program> [args...]`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "surrogate" if rest.is_empty() => Ok(EvaluatorSpec::Surrogate),
            "table" | "table-fallback" if !rest.is_empty() => Ok(EvaluatorSpec::Table {
                path: rest.into(),
                missing: if kind == "table" {
                    MissingPolicy::Error
                } else {
                    MissingPolicy::Surrogate
                },
            }),
            "external" if !rest.trim().is_empty() => Ok(EvaluatorSpec::External {
                command: rest.split_whitespace().map(String::from).collect(),
                timeout_s: default_timeout_s(),
            }),
            _ => Err(Error::Config(format!("unrecognized evaluator `{s}`"))),
        }
    }
}

/// Builds the evaluator; `models` backs the surrogate and table fallback.
pub fn build_evaluator(spec: &EvaluatorSpec, models: &[NetworkArch]) -> Result<Box<dyn Evaluator>> {
    Ok(match spec {
        EvaluatorSpec::Surrogate => Box::new(SurrogateEvaluator::new(models.to_vec())),
        EvaluatorSpec::Table { path, missing } => {
            let fallback = match missing {
                MissingPolicy::Error => None,
                MissingPolicy::Surrogate => Some(SurrogateEvaluator::new(models.to_vec())),
            };
            Box::new(TableEvaluator::load(path, fallback)?)
        }
        EvaluatorSpec::External { command, timeout_s } => {
            Box::new(ExternalEvaluator::spawn(command, Duration::from_secs(*timeout_s))?)
        }
    })
}
