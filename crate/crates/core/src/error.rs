//! Errors shared by the modeling, sampling, fitting, and statistics modules.
//!
//! The query harness has its own error type ([`crate::harness::HarnessError`])
//! because transport failures carry retry semantics that the numeric code
//! never needs.

use crate::tasks::TaskId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A model parameter lies outside its declared box.
    #[error("parameter {name} = {value} outside [{low}, {high}]")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        low: f64,
        high: f64,
    },

    /// Parameter tying demands equality that the supplied values violate.
    #[error("tying {tying} requires {constraint}")]
    TyingViolation {
        tying: &'static str,
        constraint: &'static str,
    },

    /// A conditional query's evidence has probability zero under the joint.
    ///
    /// Surfaced as an error rather than a silent 0.5 so that fitting code
    /// requesting impossible evidence is caught as a configuration bug.
    #[error("evidence {evidence} has zero probability mass{}", task.map(|t| format!(" (task {t})")).unwrap_or_default())]
    ZeroEvidenceMass {
        evidence: String,
        task: Option<TaskId>,
    },

    /// The query variable also appears in the evidence set.
    #[error("query variable {variable} appears in the evidence set")]
    QueryInEvidence { variable: &'static str },

    /// The sampler was started from a state with zero probability.
    #[error("joint probability of the current state is zero; the Metropolis ratio is undefined")]
    DegenerateJoint,

    /// A task passed to the catalog API is not one of the eleven canonical tasks.
    #[error("task is not in the canonical catalog: {0}")]
    UnknownTask(String),

    /// Correlation is undefined for a constant input vector.
    #[error("{name} vector is constant; correlation is undefined")]
    ConstantVector { name: &'static str },

    /// Paired inputs have different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// An operation over records received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// The fitting objective evaluated to a non-finite value.
    #[error("objective is non-finite at {params:?}")]
    NonFiniteObjective { params: Vec<f64> },

    /// Invalid fitting or sampler configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A prompt template references a slot that cannot be resolved.
    #[error("unresolved template slot {slot:?} in {section}")]
    TemplateSlotUnresolved { slot: String, section: &'static str },

    /// Malformed vocabulary or data file.
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
}

impl Error {
    /// Attach the offending task to a `ZeroEvidenceMass` error.
    pub(crate) fn with_task(self, id: TaskId) -> Self {
        match self {
            Error::ZeroEvidenceMass { evidence, .. } => Error::ZeroEvidenceMass {
                evidence,
                task: Some(id),
            },
            other => other,
        }
    }
}
