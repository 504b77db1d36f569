//! Exact inference for the binary collider graph `C1 -> E <- C2`.
//!
//! The joint distribution factors along the graph as
//! `p(C1, C2, E) = p(E | C1, C2) p(C1) p(C2)`, where `p(E=1 | C1, C2)` is
//! produced by one of two generating functions:
//!
//! - logistic: `1 / (1 + exp(-(s1*w1 + s2*w2 + wE)))` with each cause coded
//!   `+1` when present and `-1` when absent;
//! - noisy-OR: `1 - (1-wE) * (1-w1)^c1 * (1-w2)^c2` with `0/1` exponent
//!   coding and all parameters read as probabilities.
//!
//! With only eight states everything is computed by direct enumeration in
//! double precision; no log-space bookkeeping is needed.

use crate::error::Error;
use crate::tasks::TaskSpec;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Lower bound for causal strength and bias parameters under the logistic
/// generating function.
pub const STRENGTH_MIN: f64 = -3.0;
/// Upper bound for causal strength and bias parameters under the logistic
/// generating function.
pub const STRENGTH_MAX: f64 = 3.0;

/// How `p(E=1 | C1, C2)` is produced from the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratingFunction {
    Logistic,
    NoisyOr,
}

impl fmt::Display for GeneratingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratingFunction::Logistic => write!(f, "logistic"),
            GeneratingFunction::NoisyOr => write!(f, "noisyor"),
        }
    }
}

/// Which parameters are constrained to be equal across the two causes.
///
/// The 3-parameter variant ties both the priors and the strengths; the
/// 4-parameter variants free one of the two; the 5-parameter variant frees
/// both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterTying {
    /// `w_C` and `w_CE` shared: 3 free parameters.
    SharedPriorSharedStrength,
    /// Shared prior, separate strengths per cause: 4 free parameters.
    SharedPriorFreeStrength,
    /// Separate priors per cause, shared strength: 4 free parameters.
    FreePriorSharedStrength,
    /// Everything free: 5 parameters.
    FreePriorFreeStrength,
}

impl ParameterTying {
    pub fn shares_prior(self) -> bool {
        matches!(
            self,
            ParameterTying::SharedPriorSharedStrength | ParameterTying::SharedPriorFreeStrength
        )
    }

    pub fn shares_strength(self) -> bool {
        matches!(
            self,
            ParameterTying::SharedPriorSharedStrength | ParameterTying::FreePriorSharedStrength
        )
    }

    /// Number of free CBN parameters under this tying.
    pub fn n_params(self) -> usize {
        let mut n = 5;
        if self.shares_prior() {
            n -= 1;
        }
        if self.shares_strength() {
            n -= 1;
        }
        n
    }

    fn name(self) -> &'static str {
        match self {
            ParameterTying::SharedPriorSharedStrength => "shared_prior_shared_strength",
            ParameterTying::SharedPriorFreeStrength => "shared_prior_free_strength",
            ParameterTying::FreePriorSharedStrength => "free_prior_shared_strength",
            ParameterTying::FreePriorFreeStrength => "free_prior_free_strength",
        }
    }
}

impl fmt::Display for ParameterTying {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Free parameters of the collider CBN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColliderParameters {
    /// `p(C1 = 1)`.
    pub prior_c1: f64,
    /// `p(C2 = 1)`; equal to `prior_c1` under shared-prior tying.
    pub prior_c2: f64,
    /// Strength of `C1 -> E` (`w_{C1,E}`).
    pub strength_c1: f64,
    /// Strength of `C2 -> E` (`w_{C2,E}`); equal to `strength_c1` under
    /// shared-strength tying.
    pub strength_c2: f64,
    /// Exogenous influence on `E` (`w_E`).
    pub bias_e: f64,
    pub generating_function: GeneratingFunction,
    pub tying: ParameterTying,
}

fn check_range(name: &'static str, value: f64, low: f64, high: f64) -> Result<(), Error> {
    if value.is_finite() && (low..=high).contains(&value) {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name,
            value,
            low,
            high,
        })
    }
}

impl ColliderParameters {
    /// Build a fully-specified parameter set, validating ranges and tying
    /// constraints.
    pub fn new(
        prior_c1: f64,
        prior_c2: f64,
        strength_c1: f64,
        strength_c2: f64,
        bias_e: f64,
        generating_function: GeneratingFunction,
        tying: ParameterTying,
    ) -> Result<Self, Error> {
        let params = Self {
            prior_c1,
            prior_c2,
            strength_c1,
            strength_c2,
            bias_e,
            generating_function,
            tying,
        };
        params.validate()?;
        Ok(params)
    }

    /// Shared-prior, shared-strength (3-parameter) constructor.
    pub fn shared(
        prior: f64,
        strength: f64,
        bias_e: f64,
        generating_function: GeneratingFunction,
    ) -> Result<Self, Error> {
        Self::new(
            prior,
            prior,
            strength,
            strength,
            bias_e,
            generating_function,
            ParameterTying::SharedPriorSharedStrength,
        )
    }

    pub fn validate(&self) -> Result<(), Error> {
        check_range("prior_c1", self.prior_c1, 0.0, 1.0)?;
        check_range("prior_c2", self.prior_c2, 0.0, 1.0)?;
        let (lo, hi) = match self.generating_function {
            GeneratingFunction::Logistic => (STRENGTH_MIN, STRENGTH_MAX),
            // Under noisy-OR the strength and bias fields are probabilities.
            GeneratingFunction::NoisyOr => (0.0, 1.0),
        };
        check_range("strength_c1", self.strength_c1, lo, hi)?;
        check_range("strength_c2", self.strength_c2, lo, hi)?;
        check_range("bias_e", self.bias_e, lo, hi)?;
        if self.tying.shares_prior() && self.prior_c1 != self.prior_c2 {
            return Err(Error::TyingViolation {
                tying: self.tying.name(),
                constraint: "prior_c1 == prior_c2",
            });
        }
        if self.tying.shares_strength() && self.strength_c1 != self.strength_c2 {
            return Err(Error::TyingViolation {
                tying: self.tying.name(),
                constraint: "strength_c1 == strength_c2",
            });
        }
        Ok(())
    }

    /// `p(E=1 | c1, c2)` under the logistic generating function, with causes
    /// coded `+1` when present and `-1` when absent.
    ///
    /// Total over valid inputs: the result is strictly inside `(0, 1)` for
    /// finite parameters.
    pub fn logistic_effect_prob(&self, c1: bool, c2: bool) -> f64 {
        let s1 = if c1 { 1.0 } else { -1.0 };
        let s2 = if c2 { 1.0 } else { -1.0 };
        let logit = s1 * self.strength_c1 + s2 * self.strength_c2 + self.bias_e;
        1.0 / (1.0 + (-logit).exp())
    }

    /// `p(E=1 | c1, c2)` under the noisy-OR generating function, with `0/1`
    /// exponent coding and strength/bias fields read as probabilities.
    pub fn noisy_or_effect_prob(&self, c1: bool, c2: bool) -> Result<f64, Error> {
        check_range("strength_c1", self.strength_c1, 0.0, 1.0)?;
        check_range("strength_c2", self.strength_c2, 0.0, 1.0)?;
        check_range("bias_e", self.bias_e, 0.0, 1.0)?;
        let mut miss = 1.0 - self.bias_e;
        if c1 {
            miss *= 1.0 - self.strength_c1;
        }
        if c2 {
            miss *= 1.0 - self.strength_c2;
        }
        Ok(1.0 - miss)
    }

    /// `p(E=1 | c1, c2)` dispatched on the generating function.
    pub fn effect_prob(&self, c1: bool, c2: bool) -> Result<f64, Error> {
        match self.generating_function {
            GeneratingFunction::Logistic => Ok(self.logistic_effect_prob(c1, c2)),
            GeneratingFunction::NoisyOr => self.noisy_or_effect_prob(c1, c2),
        }
    }

    /// Derive the full joint table `p(C1, C2, E)`.
    pub fn build_joint(&self) -> Result<JointTable, Error> {
        let mut probs = [0.0; 8];
        for (c1, c2) in [(false, false), (false, true), (true, false), (true, true)] {
            let pe = self.effect_prob(c1, c2)?;
            let pc = (if c1 { self.prior_c1 } else { 1.0 - self.prior_c1 })
                * (if c2 { self.prior_c2 } else { 1.0 - self.prior_c2 });
            probs[StateAssignment::new(c1, c2, true).index()] = pc * pe;
            probs[StateAssignment::new(c1, c2, false).index()] = pc * (1.0 - pe);
        }
        Ok(JointTable { probs })
    }

    /// Exact conditional probabilities for each task in the catalog order.
    ///
    /// Values are probabilities in `[0, 1]`; callers scale by 100 to compare
    /// against judgments.
    pub fn predict_task_battery(&self, catalog: &[TaskSpec]) -> Result<Vec<f64>, Error> {
        let joint = self.build_joint()?;
        catalog
            .iter()
            .map(|task| {
                joint
                    .conditional_prob(&task.query)
                    .map_err(|e| e.with_task(task.id))
            })
            .collect()
    }
}

/// One of the three collider variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    C1,
    C2,
    E,
}

impl Variable {
    pub fn name(self) -> &'static str {
        match self {
            Variable::C1 => "C1",
            Variable::C2 => "C2",
            Variable::E => "E",
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// A complete assignment to `(C1, C2, E)`; `true` = present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateAssignment {
    pub c1: bool,
    pub c2: bool,
    pub e: bool,
}

impl StateAssignment {
    pub const fn new(c1: bool, c2: bool, e: bool) -> Self {
        Self { c1, c2, e }
    }

    /// All eight states in the fixed lexicographic order over `(c1, c2, e)`:
    /// `(0,0,0), (0,0,1), (0,1,0), ..., (1,1,1)`.
    pub fn all() -> [StateAssignment; 8] {
        let mut states = [StateAssignment::new(false, false, false); 8];
        for (i, state) in states.iter_mut().enumerate() {
            *state = StateAssignment::new(i & 4 != 0, i & 2 != 0, i & 1 != 0);
        }
        states
    }

    /// Position of this state in the lexicographic order.
    pub fn index(self) -> usize {
        (self.c1 as usize) << 2 | (self.c2 as usize) << 1 | self.e as usize
    }

    pub fn value(self, var: Variable) -> bool {
        match var {
            Variable::C1 => self.c1,
            Variable::C2 => self.c2,
            Variable::E => self.e,
        }
    }

    /// Flip a single variable.
    pub fn flipped(self, var: Variable) -> Self {
        let mut next = self;
        match var {
            Variable::C1 => next.c1 = !next.c1,
            Variable::C2 => next.c2 = !next.c2,
            Variable::E => next.e = !next.e,
        }
        next
    }
}

impl fmt::Display for StateAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            self.c1 as u8, self.c2 as u8, self.e as u8
        )
    }
}

/// Joint probability table over the eight collider states.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    probs: [f64; 8],
}

impl JointTable {
    /// Build from raw state probabilities (indexed lexicographically).
    /// Entries must be non-negative and sum to 1 within 1e-12.
    pub fn from_probs(probs: [f64; 8]) -> Result<Self, Error> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Malformed {
                what: "joint table",
                detail: "entries must be finite and non-negative".into(),
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Malformed {
                what: "joint table",
                detail: format!("entries sum to {total}, expected 1"),
            });
        }
        Ok(Self { probs })
    }

    pub fn prob(&self, state: StateAssignment) -> f64 {
        self.probs[state.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateAssignment, f64)> + '_ {
        StateAssignment::all().into_iter().map(|s| (s, self.prob(s)))
    }

    /// Conditional probability of the query given the evidence, by
    /// enumeration over the eight states.
    pub fn conditional_prob(&self, query: &EvidenceQuery) -> Result<f64, Error> {
        let mut evidence_mass = 0.0;
        let mut joint_mass = 0.0;
        for (state, p) in self.iter() {
            if query.evidence.matches(state) {
                evidence_mass += p;
                if state.value(query.query_var) == query.query_value {
                    joint_mass += p;
                }
            }
        }
        if evidence_mass <= 0.0 {
            return Err(Error::ZeroEvidenceMass {
                evidence: query.evidence.to_string(),
                task: None,
            });
        }
        Ok(joint_mass / evidence_mass)
    }
}

/// Partial assignment over the collider variables; `None` = unobserved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub c1: Option<bool>,
    pub c2: Option<bool>,
    pub e: Option<bool>,
}

impl Evidence {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Variable, value: bool) -> Self {
        match var {
            Variable::C1 => self.c1 = Some(value),
            Variable::C2 => self.c2 = Some(value),
            Variable::E => self.e = Some(value),
        }
        self
    }

    pub fn get(&self, var: Variable) -> Option<bool> {
        match var {
            Variable::C1 => self.c1,
            Variable::C2 => self.c2,
            Variable::E => self.e,
        }
    }

    /// Variables observed by this evidence, in `(C1, C2, E)` order.
    pub fn observed(&self) -> Vec<(Variable, bool)> {
        [Variable::C1, Variable::C2, Variable::E]
            .into_iter()
            .filter_map(|v| self.get(v).map(|val| (v, val)))
            .collect()
    }

    pub fn matches(&self, state: StateAssignment) -> bool {
        self.observed()
            .iter()
            .all(|(var, value)| state.value(*var) == *value)
    }
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .observed()
            .iter()
            .map(|(var, value)| format!("{}={}", var, *value as u8))
            .collect();
        if parts.is_empty() {
            write!(f, "{{}}")
        } else {
            write!(f, "{}", parts.join(", "))
        }
    }
}

/// A conditional query `p(query_var = query_value | evidence)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceQuery {
    pub query_var: Variable,
    pub query_value: bool,
    pub evidence: Evidence,
}

impl EvidenceQuery {
    /// The query variable must not appear in the evidence set.
    pub fn new(query_var: Variable, query_value: bool, evidence: Evidence) -> Result<Self, Error> {
        if evidence.get(query_var).is_some() {
            return Err(Error::QueryInEvidence {
                variable: query_var.name(),
            });
        }
        Ok(Self {
            query_var,
            query_value,
            evidence,
        })
    }
}

impl fmt::Display for EvidenceQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let obs = self.evidence.observed();
        if obs.is_empty() {
            write!(f, "p({}={})", self.query_var, self.query_value as u8)
        } else {
            write!(
                f,
                "p({}={} | {})",
                self.query_var, self.query_value as u8, self.evidence
            )
        }
    }
}
