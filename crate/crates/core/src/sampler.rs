//! The mutation sampler: a rational process model that estimates conditional
//! probabilities from a short Metropolis random walk over the collider's
//! eight-state space.
//!
//! Each chain starts at one of the two prototype states (all variables
//! present or all absent), proposes a uniformly chosen single-variable flip
//! at every step, and accepts with the Metropolis ratio
//! `min(1, pi(proposal) / pi(current))`. A rejected proposal records the
//! current state again. Inferences are read off the visited states: the
//! estimate of `p(query | evidence)` is the fraction of evidence-matching
//! samples that also match the query.
//!
//! With unbounded chain length the estimates converge to the exact
//! conditionals; at short chain lengths the prototype start states bias the
//! estimates in characteristically human ways (Markov violations, weakened
//! explaining away).

use crate::error::Error;
use crate::model::{ColliderParameters, JointTable, StateAssignment, Variable};
use crate::tasks::TaskSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const ALL_PRESENT: StateAssignment = StateAssignment::new(true, true, true);
const ALL_ABSENT: StateAssignment = StateAssignment::new(false, false, false);

/// Settings for a batch of mutation-sampler chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Chain length lambda: the number of recorded MCMC samples, including
    /// the start state. Non-integer values are handled by linearly
    /// interpolating predictions between the adjacent integer lengths.
    pub chain_length: f64,
    /// Monte Carlo replicates averaged to estimate the expected prediction.
    pub chain_count: usize,
    /// RNG seed; chain `i` uses an independent stream derived from it.
    pub seed: u64,
    /// Start-state distribution over (all-present, all-absent).
    pub prototype_weights: (f64, f64),
    /// Estimate returned when a chain contains no evidence-matching state.
    pub empty_evidence_fallback: f64,
}

impl SamplerConfig {
    pub fn new(chain_length: f64, chain_count: usize, seed: u64) -> Self {
        Self {
            chain_length,
            chain_count,
            seed,
            prototype_weights: (0.5, 0.5),
            empty_evidence_fallback: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !self.chain_length.is_finite() || self.chain_length < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "chain_length must be >= 1, got {}",
                self.chain_length
            )));
        }
        if self.chain_count == 0 {
            return Err(Error::InvalidConfig("chain_count must be >= 1".into()));
        }
        let (wp, wa) = self.prototype_weights;
        if !(0.0..=1.0).contains(&wp) || !(0.0..=1.0).contains(&wa) || (wp + wa - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidConfig(format!(
                "prototype_weights must be probabilities summing to 1, got ({wp}, {wa})"
            )));
        }
        if !(0.0..=1.0).contains(&self.empty_evidence_fallback) {
            return Err(Error::InvalidConfig(format!(
                "empty_evidence_fallback must lie in [0,1], got {}",
                self.empty_evidence_fallback
            )));
        }
        Ok(())
    }

    /// The deterministic RNG for chain `chain_index`. Streams are derived
    /// from the seed, so chains are independent and batches can run in
    /// parallel without affecting the output.
    pub fn chain_rng(&self, chain_index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(chain_index as u64);
        rng
    }
}

/// The recorded states of one chain, start state first. Consecutive states
/// differ in at most one variable; rejections repeat the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub states: Vec<StateAssignment>,
}

/// One Metropolis step: flip one of the three variables uniformly at random
/// and accept with probability `min(1, pi(proposal) / pi(current))`.
pub fn transition_step<R: Rng + ?Sized>(
    joint: &JointTable,
    current: StateAssignment,
    rng: &mut R,
) -> Result<StateAssignment, Error> {
    let pi_current = joint.prob(current);
    if pi_current <= 0.0 {
        return Err(Error::DegenerateJoint);
    }
    let var = [Variable::C1, Variable::C2, Variable::E][rng.random_range(0..3)];
    let proposal = current.flipped(var);
    let ratio = joint.prob(proposal) / pi_current;
    // random::<f64>() is uniform on [0,1), so ratio >= 1 always accepts.
    if rng.random::<f64>() < ratio {
        Ok(proposal)
    } else {
        Ok(current)
    }
}

/// Run one chain: draw the prototype start state, then record transitions
/// until `ceil(chain_length)` states (including the start) are collected.
pub fn run_chain<R: Rng + ?Sized>(
    joint: &JointTable,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<ChainRecord, Error> {
    config.validate()?;
    let len = config.chain_length.ceil() as usize;
    let start = if rng.random::<f64>() < config.prototype_weights.0 {
        ALL_PRESENT
    } else {
        ALL_ABSENT
    };
    let mut states = Vec::with_capacity(len);
    states.push(start);
    let mut current = start;
    while states.len() < len {
        current = transition_step(joint, current, rng)?;
        states.push(current);
    }
    Ok(ChainRecord { states })
}

/// Estimate `p(query | evidence)` from the chain's visited states; returns
/// `fallback` when no state matches the evidence.
pub fn chain_estimate(
    chain: &ChainRecord,
    query: &crate::model::EvidenceQuery,
    fallback: f64,
) -> f64 {
    let mut evidence = 0usize;
    let mut both = 0usize;
    for &state in &chain.states {
        if query.evidence.matches(state) {
            evidence += 1;
            if state.value(query.query_var) == query.query_value {
                both += 1;
            }
        }
    }
    if evidence == 0 {
        fallback
    } else {
        both as f64 / evidence as f64
    }
}

/// Per-state masks for one task, so chain histograms can be scored cheaply.
struct TaskMasks {
    evidence: [bool; 8],
    both: [bool; 8],
}

impl TaskMasks {
    fn new(task: &TaskSpec) -> Self {
        let mut evidence = [false; 8];
        let mut both = [false; 8];
        for state in StateAssignment::all() {
            let i = state.index();
            evidence[i] = task.query.evidence.matches(state);
            both[i] = evidence[i] && state.value(task.query.query_var) == task.query.query_value;
        }
        Self { evidence, both }
    }

    fn estimate(&self, hist: &[u64; 8], fallback: f64) -> f64 {
        let mut ev = 0u64;
        let mut both = 0u64;
        for i in 0..8 {
            if self.evidence[i] {
                ev += hist[i];
                if self.both[i] {
                    both += hist[i];
                }
            }
        }
        if ev == 0 {
            fallback
        } else {
            both as f64 / ev as f64
        }
    }
}

/// Expected mutation-sampler predictions for every task in the catalog,
/// averaged over `chain_count` chains.
///
/// Each chain is scored against every task; chain `i` uses RNG stream `i`
/// derived from the seed, and chains are reduced in index order, so results
/// are bit-identical across runs and thread schedules. For non-integer
/// chain length the estimates at `floor(lambda)` (the chain prefix) and
/// `ceil(lambda)` are interpolated linearly.
pub fn expected_predictions(
    params: &ColliderParameters,
    config: &SamplerConfig,
    catalog: &[TaskSpec],
) -> Result<Vec<f64>, Error> {
    config.validate()?;
    let joint = params.build_joint()?;
    if joint.iter().any(|(_, p)| p <= 0.0) {
        return Err(Error::DegenerateJoint);
    }
    let lambda = config.chain_length;
    let floor_len = lambda.floor() as usize;
    let frac = lambda - lambda.floor();
    let masks: Vec<TaskMasks> = catalog.iter().map(TaskMasks::new).collect();
    let fallback = config.empty_evidence_fallback;

    let per_chain: Result<Vec<Vec<f64>>, Error> = (0..config.chain_count)
        .into_par_iter()
        .map(|chain_index| {
            let mut rng = config.chain_rng(chain_index);
            let chain = run_chain(&joint, config, &mut rng)?;
            let mut hist_floor = [0u64; 8];
            let mut hist_full = [0u64; 8];
            for (i, state) in chain.states.iter().enumerate() {
                if i < floor_len {
                    hist_floor[state.index()] += 1;
                }
                hist_full[state.index()] += 1;
            }
            let mut estimates = Vec::with_capacity(2 * masks.len());
            for mask in &masks {
                estimates.push(mask.estimate(&hist_floor, fallback));
                estimates.push(mask.estimate(&hist_full, fallback));
            }
            Ok(estimates)
        })
        .collect();
    let per_chain = per_chain?;

    let n = config.chain_count as f64;
    let mut predictions = Vec::with_capacity(catalog.len());
    for t in 0..catalog.len() {
        let mut sum_floor = 0.0;
        let mut sum_full = 0.0;
        for estimates in &per_chain {
            sum_floor += estimates[2 * t];
            sum_full += estimates[2 * t + 1];
        }
        predictions.push((1.0 - frac) * (sum_floor / n) + frac * (sum_full / n));
    }
    Ok(predictions)
}

/// The 8x8 single-flip Metropolis kernel over the lexicographic state
/// order: `K[i][j]` is the probability of moving from state `i` to state
/// `j` in one `transition_step`.
pub fn transition_matrix(joint: &JointTable) -> Result<[[f64; 8]; 8], Error> {
    let mut kernel = [[0.0; 8]; 8];
    for state in StateAssignment::all() {
        let i = state.index();
        let pi = joint.prob(state);
        if pi <= 0.0 {
            return Err(Error::DegenerateJoint);
        }
        let mut stay = 1.0;
        for var in [Variable::C1, Variable::C2, Variable::E] {
            let j = state.flipped(var).index();
            let accept = (joint.prob(state.flipped(var)) / pi).min(1.0);
            kernel[i][j] = accept / 3.0;
            stay -= accept / 3.0;
        }
        kernel[i][i] = stay;
    }
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EvidenceQuery, Evidence, GeneratingFunction};
    use crate::tasks::{self, TaskId};
    use approx::assert_abs_diff_eq;

    fn sigma(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn example_a() -> ColliderParameters {
        ColliderParameters::shared(0.5, 1.0, 0.0, GeneratingFunction::Logistic).unwrap()
    }

    fn state(c1: u8, c2: u8, e: u8) -> StateAssignment {
        StateAssignment::new(c1 == 1, c2 == 1, e == 1)
    }

    #[test]
    fn acceptance_ratio_for_flipping_c1_from_all_present() {
        let joint = example_a().build_joint().unwrap();
        let kernel = transition_matrix(&joint).unwrap();
        // pi(0,1,1) / pi(1,1,1) = sigma(0) / sigma(2), hand-derived.
        let expected = 0.5 / sigma(2.0);
        assert!(expected < 1.0);
        assert_abs_diff_eq!(expected, 0.567667, epsilon = 1e-6);
        assert_abs_diff_eq!(
            kernel[state(1, 1, 1).index()][state(0, 1, 1).index()],
            expected / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn uphill_proposals_always_accepted() {
        let joint = example_a().build_joint().unwrap();
        let kernel = transition_matrix(&joint).unwrap();
        // (0,1,1) -> (1,1,1) increases probability, so the move fires at the
        // full proposal rate of 1/3.
        assert_abs_diff_eq!(
            kernel[state(0, 1, 1).index()][state(1, 1, 1).index()],
            1.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn uniform_joint_accepts_everything() {
        let joint = JointTable::from_probs([0.125; 8]).unwrap();
        let kernel = transition_matrix(&joint).unwrap();
        for (i, row) in kernel.iter().enumerate() {
            assert_abs_diff_eq!(row[i], 0.0, epsilon = 1e-15);
            let moves: f64 = row.iter().sum();
            assert_abs_diff_eq!(moves, 1.0, epsilon = 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut current = ALL_PRESENT;
        for _ in 0..100 {
            let next = transition_step(&joint, current, &mut rng).unwrap();
            assert_ne!(next, current);
            current = next;
        }
    }

    #[test]
    fn empirical_step_frequencies_match_kernel() {
        let joint = example_a().build_joint().unwrap();
        let kernel = transition_matrix(&joint).unwrap();
        let from = state(1, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0u32; 8];
        let trials = 200_000;
        for _ in 0..trials {
            counts[transition_step(&joint, from, &mut rng).unwrap().index()] += 1;
        }
        for j in 0..8 {
            let freq = counts[j] as f64 / trials as f64;
            assert_abs_diff_eq!(freq, kernel[from.index()][j], epsilon = 5e-3);
        }
    }

    #[test]
    fn kernel_leaves_joint_invariant() {
        let joint = example_a().build_joint().unwrap();
        let kernel = transition_matrix(&joint).unwrap();
        let pi: Vec<f64> = joint.iter().map(|(_, p)| p).collect();
        for j in 0..8 {
            let flowed: f64 = (0..8).map(|i| pi[i] * kernel[i][j]).sum();
            assert_abs_diff_eq!(flowed, pi[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn chain_of_length_one_is_a_prototype() {
        let joint = example_a().build_joint().unwrap();
        let config = SamplerConfig::new(1.0, 1, 0);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chain = run_chain(&joint, &config, &mut rng).unwrap();
            assert_eq!(chain.states.len(), 1);
            assert!(chain.states[0] == ALL_PRESENT || chain.states[0] == ALL_ABSENT);
        }
    }

    #[test]
    fn chain_moves_one_variable_at_a_time() {
        let joint = example_a().build_joint().unwrap();
        let config = SamplerConfig::new(3.0, 1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chain = run_chain(&joint, &config, &mut rng).unwrap();
        assert_eq!(chain.states.len(), 3);
        for pair in chain.states.windows(2) {
            let differing = [Variable::C1, Variable::C2, Variable::E]
                .into_iter()
                .filter(|v| pair[0].value(*v) != pair[1].value(*v))
                .count();
            assert!(differing <= 1);
        }
    }

    #[test]
    fn fixed_seed_reproduces_the_chain() {
        let joint = example_a().build_joint().unwrap();
        let config = SamplerConfig::new(64.0, 1, 42);
        let a = run_chain(&joint, &config, &mut config.chain_rng(0)).unwrap();
        let b = run_chain(&joint, &config, &mut config.chain_rng(0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chain_estimate_examples() {
        let vii = EvidenceQuery::new(
            Variable::C1,
            true,
            Evidence::empty().with(Variable::E, true),
        )
        .unwrap();

        let single = ChainRecord { states: vec![state(1, 1, 1)] };
        assert_eq!(chain_estimate(&single, &vii, 0.5), 1.0);

        let absent = ChainRecord { states: vec![state(0, 0, 0)] };
        assert_eq!(chain_estimate(&absent, &vii, 0.5), 0.5);

        let mixed = ChainRecord {
            states: vec![state(1, 1, 1), state(0, 1, 1), state(0, 1, 1)],
        };
        assert_abs_diff_eq!(chain_estimate(&mixed, &vii, 0.5), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn lambda_one_prediction_mixes_prototype_and_fallback() {
        // At lambda = 1 the chain is a bare prototype: the all-present start
        // answers task VII with 1.0, the all-absent start falls back to 0.5,
        // so the expectation is 0.75.
        let config = SamplerConfig::new(1.0, 40_000, 9);
        let predictions =
            expected_predictions(&example_a(), &config, tasks::catalog()).unwrap();
        assert_abs_diff_eq!(predictions[TaskId::VII.index()], 0.75, epsilon = 0.01);
    }

    #[test]
    fn non_integer_lambda_interpolates_adjacent_lengths() {
        let params = example_a();
        let catalog = tasks::catalog();
        let at = |lambda: f64| {
            let config = SamplerConfig::new(lambda, 2000, 5);
            expected_predictions(&params, &config, catalog).unwrap()
        };
        let low = at(3.0);
        let high = at(4.0);
        let mid = at(3.25);
        for t in 0..catalog.len() {
            assert_abs_diff_eq!(mid[t], 0.75 * low[t] + 0.25 * high[t], epsilon = 1e-12);
        }
    }

    #[test]
    fn predictions_are_deterministic() {
        let config = SamplerConfig::new(5.0, 3000, 1234);
        let a = expected_predictions(&example_a(), &config, tasks::catalog()).unwrap();
        let b = expected_predictions(&example_a(), &config, tasks::catalog()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_joint_is_rejected() {
        let p = crate::model::ColliderParameters::new(
            1.0,
            0.5,
            1.0,
            1.0,
            0.0,
            GeneratingFunction::Logistic,
            crate::model::ParameterTying::FreePriorSharedStrength,
        )
        .unwrap();
        let config = SamplerConfig::new(5.0, 10, 0);
        assert!(matches!(
            expected_predictions(&p, &config, tasks::catalog()),
            Err(Error::DegenerateJoint)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::new(0.5, 10, 0).validate().is_err());
        assert!(SamplerConfig::new(2.0, 0, 0).validate().is_err());
        let mut bad = SamplerConfig::new(2.0, 1, 0);
        bad.prototype_weights = (0.7, 0.7);
        assert!(bad.validate().is_err());
        let mut bad = SamplerConfig::new(2.0, 1, 0);
        bad.empty_evidence_fallback = 1.5;
        assert!(bad.validate().is_err());
    }
}
