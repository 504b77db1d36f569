//! Workbench for causal inference over the three-variable collider graph
//! `C1 -> E <- C2` with binary variables.
//!
//! The crate covers the full pipeline used to compare reasoning agents
//! against a causal Bayes net benchmark:
//!
//! - [`model`] — exact joint and conditional probabilities for the collider,
//!   with logistic or noisy-OR generating functions;
//! - [`tasks`] — the canonical battery of eleven inference tasks I–XI;
//! - [`sampler`] — the mutation sampler, a prototype-seeded Metropolis walk
//!   over the eight-state space that reproduces human-like judgment biases
//!   at short chain lengths;
//! - [`fit`] — least-squares model fitting (grid seeding plus bounded
//!   Nelder–Mead) and AIC-based model selection;
//! - [`stats`] — judgment aggregation, Spearman rank correlation, and
//!   bootstrap confidence intervals;
//! - [`prompt`] — natural-language prompt rendering from domain vocabularies
//!   with counterbalanced adjective polarity;
//! - [`harness`] — transport-agnostic LLM querying with a persistent
//!   transcript store for deterministic offline replay.

pub mod error;
pub mod fit;
pub mod harness;
pub mod model;
pub mod prompt;
pub mod sampler;
pub mod stats;
pub mod tasks;

pub use error::Error;
pub use fit::{FitResult, FitSpec, ModelFamily};
pub use model::{
    ColliderParameters, EvidenceQuery, GeneratingFunction, JointTable, ParameterTying,
    StateAssignment, Variable,
};
pub use sampler::{ChainRecord, SamplerConfig};
pub use stats::{AgentType, AggregateRow, Domain, JudgmentRecord};
pub use tasks::{TaskGroup, TaskId, TaskSpec};
