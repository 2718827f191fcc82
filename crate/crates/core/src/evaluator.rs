//! Pluggable solution scoring.
//!
//! A [`Challenge`] names an evaluator kind and carries kind-specific
//! parameters. Evaluators are registered once at startup; the registry is
//! read-only afterwards.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{Score, SolutionPayload};

pub const GAUSSIAN_PROXIMITY: &str = "gaussian-proximity";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no evaluator registered for challenge kind {0:?}")]
    UnknownChallengeKind(String),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("expected {expected} parameters, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("invalid challenge parameters: {0}")]
    InvalidParams(String),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::UnknownChallengeKind(_) => "UnknownChallengeKind",
            EvalError::MalformedPayload(_) => "MalformedPayload",
            EvalError::DimensionMismatch { .. } => "DimensionMismatch",
            EvalError::NonFiniteInput(_) => "NonFiniteInput",
            EvalError::InvalidParams(_) => "InvalidParams",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("an evaluator for kind {0:?} is already registered")]
pub struct DuplicateKind(pub String);

/// A configured scoring problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Challenge {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub params: Value,
}

impl Challenge {
    pub fn gaussian(id: impl Into<String>, target: &[f64]) -> Self {
        Self {
            id: id.into(),
            kind: GAUSSIAN_PROXIMITY.to_owned(),
            params: serde_json::json!({ "dimension": target.len(), "target": target }),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// A scoring function for one challenge kind. Implementations must be pure.
pub trait Evaluator: Send + Sync {
    /// Rejects parameter documents the evaluator cannot score against.
    fn check_params(&self, params: &Value) -> Result<(), EvalError>;

    fn score(&self, params: &Value, payload: &SolutionPayload) -> Result<Score, EvalError>;
}

impl<F> Evaluator for F
where
    F: Fn(&Value, &SolutionPayload) -> Result<Score, EvalError> + Send + Sync,
{
    fn check_params(&self, _params: &Value) -> Result<(), EvalError> {
        Ok(())
    }

    fn score(&self, params: &Value, payload: &SolutionPayload) -> Result<Score, EvalError> {
        self(params, payload)
    }
}

#[derive(Clone, Default)]
pub struct EvaluatorRegistry {
    evaluators: BTreeMap<String, Arc<dyn Evaluator>>,
}

impl fmt::Debug for EvaluatorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvaluatorRegistry")
            .field("kinds", &self.evaluators.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl EvaluatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry with the built-in reference evaluators.
    pub fn with_builtins() -> Self {
        let mut registry = Self::new();
        registry
            .register(GAUSSIAN_PROXIMITY, GaussianProximity)
            .expect("empty registry");
        registry
    }

    pub fn register(
        &mut self,
        kind: impl Into<String>,
        evaluator: impl Evaluator + 'static,
    ) -> Result<&mut Self, DuplicateKind> {
        let kind = kind.into();
        if self.evaluators.contains_key(&kind) {
            return Err(DuplicateKind(kind));
        }
        self.evaluators.insert(kind, Arc::new(evaluator));
        Ok(self)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.evaluators.keys().map(String::as_str)
    }

    fn lookup(&self, kind: &str) -> Result<&Arc<dyn Evaluator>, EvalError> {
        self.evaluators
            .get(kind)
            .ok_or_else(|| EvalError::UnknownChallengeKind(kind.to_owned()))
    }

    /// Checks that the challenge kind is registered and its parameters are usable.
    pub fn check_challenge(&self, challenge: &Challenge) -> Result<(), EvalError> {
        self.lookup(&challenge.kind)?.check_params(&challenge.params)
    }

    pub fn evaluate(&self, challenge: &Challenge, payload: &SolutionPayload) -> Result<Score, EvalError> {
        self.lookup(&challenge.kind)?.score(&challenge.params, payload)
    }
}

/// Reference challenge: `exp(-|x - x*|^2)` for a target vector `x*`.
///
/// Parameters: `{"dimension": D, "target": [D numbers]}`.
/// Payload: `{"params": [D numbers]}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianProximity;

/// Validated parameters of the reference challenge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianProximityParams {
    pub dimension: usize,
    pub target: Vec<f64>,
}

impl GaussianProximityParams {
    pub fn parse(params: &Value) -> Result<Self, EvalError> {
        let parsed: GaussianProximityParams = serde_json::from_value(params.clone())
            .map_err(|e| EvalError::InvalidParams(e.to_string()))?;
        if parsed.dimension == 0 {
            return Err(EvalError::InvalidParams("dimension must be at least 1".into()));
        }
        if parsed.target.len() != parsed.dimension {
            return Err(EvalError::InvalidParams(format!(
                "target has {} entries, dimension is {}",
                parsed.target.len(),
                parsed.dimension
            )));
        }
        if parsed.target.iter().any(|t| !t.is_finite()) {
            return Err(EvalError::NonFiniteInput("target".into()));
        }
        Ok(parsed)
    }
}

/// Extracts the `params` vector of a gaussian-proximity payload.
pub fn payload_params(payload: &SolutionPayload) -> Result<Vec<f64>, EvalError> {
    let params = payload
        .document()
        .get("params")
        .ok_or_else(|| EvalError::MalformedPayload("missing \"params\"".into()))?;
    let items = params
        .as_array()
        .ok_or_else(|| EvalError::MalformedPayload("\"params\" must be an array".into()))?;
    items
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = v
                .as_f64()
                .ok_or_else(|| EvalError::MalformedPayload(format!("params[{i}] is not a number")))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(EvalError::NonFiniteInput(format!("params[{i}]")))
            }
        })
        .collect()
}

impl Evaluator for GaussianProximity {
    fn check_params(&self, params: &Value) -> Result<(), EvalError> {
        GaussianProximityParams::parse(params).map(|_| ())
    }

    fn score(&self, params: &Value, payload: &SolutionPayload) -> Result<Score, EvalError> {
        let params = GaussianProximityParams::parse(params)?;
        let x = payload_params(payload)?;
        if x.len() != params.dimension {
            return Err(EvalError::DimensionMismatch { expected: params.dimension, actual: x.len() });
        }
        let sq_dist: f64 = x.iter().zip(&params.target).map(|(a, b)| (a - b) * (a - b)).sum();
        let mut value = (-sq_dist).exp();
        // exp rounds to 1.0 for tiny distances; only the exact target may score 1.
        if value >= 1.0 && sq_dist > 0.0 {
            value = 1.0 - f64::EPSILON / 2.0;
        }
        Ok(Score::new(value).expect("exp(-d) of a non-negative d lies in [0, 1]"))
    }
}
