//! Least-squares model fitting: grid seeding followed by bounded
//! Nelder-Mead refinement, with fit metrics (Pearson R, AIC, mean absolute
//! loss) for model comparison.
//!
//! Both model families share one objective: the sum of squared differences
//! between observed judgments and 100 times the model's predicted
//! probabilities. The CBN family predicts by exact inference; the mutation
//! sampler predicts by seeded Monte Carlo, so repeated evaluations at the
//! same point return identical values and the objective stays deterministic.
//! Refinement is derivative-free because the sampler objective is only
//! piecewise smooth in the chain-length parameter.

use crate::error::Error;
use crate::model::{ColliderParameters, GeneratingFunction, ParameterTying};
use crate::sampler::{expected_predictions, SamplerConfig};
use crate::stats::pearson;
use crate::tasks::TaskSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Keeps priors away from the exact 0/1 corners during fitting, where
/// conditioning on the vanishing cause turns into 0/0. The true box is
/// [0, 1]; the inset is well below every reported tolerance.
const PRIOR_INSET: f64 = 1e-6;

/// Which kind of model is being fit to the judgments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Cbn,
    MutationSampler,
}

/// Per-parameter grids evaluated during seeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub priors: Vec<f64>,
    pub strengths: Vec<f64>,
    pub bias: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl GridSpec {
    /// The default grids: priors {0.1, 0.3, 0.5, 0.7, 0.9}; strengths and
    /// bias {-2, -1, 0, 1, 2} under the logistic generating function and
    /// {0.1, 0.3, 0.5, 0.7, 0.9} under noisy-OR (where they are
    /// probabilities); chain lengths {1..12, 16, 24, 32, 48, 64}.
    pub fn default_for(generating: GeneratingFunction) -> Self {
        let probs = vec![0.1, 0.3, 0.5, 0.7, 0.9];
        let strengths = match generating {
            GeneratingFunction::Logistic => vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            GeneratingFunction::NoisyOr => probs.clone(),
        };
        let mut lambda: Vec<f64> = (1..=12).map(f64::from).collect();
        lambda.extend([16.0, 24.0, 32.0, 48.0, 64.0]);
        Self {
            priors: probs,
            strengths: strengths.clone(),
            bias: strengths,
            lambda,
        }
    }

    /// Evenly spaced cell midpoints: `lo + (hi-lo)(2i+1)/(2m)`.
    pub fn midpoints(lo: f64, hi: f64, m: usize) -> Vec<f64> {
        (0..m)
            .map(|i| lo + (hi - lo) * (2 * i + 1) as f64 / (2 * m) as f64)
            .collect()
    }

    fn validate(&self, family: ModelFamily) -> Result<(), Error> {
        let mut used: Vec<(&str, &[f64])> = vec![
            ("priors", &self.priors),
            ("strengths", &self.strengths),
            ("bias", &self.bias),
        ];
        if family == ModelFamily::MutationSampler {
            used.push(("lambda", &self.lambda));
        }
        for (name, grid) in used {
            if grid.len() < 2 {
                return Err(Error::InvalidConfig(format!(
                    "{name} grid needs at least 2 points, got {}",
                    grid.len()
                )));
            }
        }
        Ok(())
    }
}

/// Everything `fit_model` needs besides the judgments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub model_family: ModelFamily,
    pub tying: ParameterTying,
    pub generating_function: GeneratingFunction,
    /// Chain-length box, used only for the mutation sampler.
    pub lambda_bounds: (f64, f64),
    pub grid: GridSpec,
    /// How many of the best grid points seed a refinement.
    pub top_seeds: usize,
    /// Simplex-spread threshold at which refinement stops.
    pub refine_tolerance: f64,
    pub max_refine_iterations: usize,
    pub seed: u64,
    /// Monte Carlo chains per sampler-objective evaluation.
    pub sampler_chain_count: usize,
    pub prototype_weights: (f64, f64),
    pub empty_evidence_fallback: f64,
}

impl FitSpec {
    pub fn new(
        model_family: ModelFamily,
        tying: ParameterTying,
        generating_function: GeneratingFunction,
        seed: u64,
    ) -> Self {
        Self {
            model_family,
            tying,
            generating_function,
            lambda_bounds: (1.0, 100.0),
            grid: GridSpec::default_for(generating_function),
            top_seeds: 5,
            refine_tolerance: 1e-10,
            max_refine_iterations: 1000,
            seed,
            sampler_chain_count: 1000,
            prototype_weights: (0.5, 0.5),
            empty_evidence_fallback: 0.5,
        }
    }

    pub fn cbn(tying: ParameterTying, seed: u64) -> Self {
        Self::new(ModelFamily::Cbn, tying, GeneratingFunction::Logistic, seed)
    }

    pub fn sampler(seed: u64) -> Self {
        Self::new(
            ModelFamily::MutationSampler,
            ParameterTying::SharedPriorSharedStrength,
            GeneratingFunction::Logistic,
            seed,
        )
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.grid.validate(self.model_family)?;
        if self.top_seeds == 0 {
            return Err(Error::InvalidConfig("top_seeds must be >= 1".into()));
        }
        if !(self.refine_tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "refine_tolerance must be > 0, got {}",
                self.refine_tolerance
            )));
        }
        if self.model_family == ModelFamily::MutationSampler {
            let (lo, hi) = self.lambda_bounds;
            if !(1.0 <= lo && lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "lambda bounds must satisfy 1 <= lo < hi, got ({lo}, {hi})"
                )));
            }
            if self.sampler_chain_count == 0 {
                return Err(Error::InvalidConfig("sampler_chain_count must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Free-parameter names in vector order: priors, strengths, bias, then
    /// chain length for the sampler family.
    pub fn param_names(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        if self.tying.shares_prior() {
            names.push("w_C");
        } else {
            names.extend(["w_C1", "w_C2"]);
        }
        if self.tying.shares_strength() {
            names.push("w_CE");
        } else {
            names.extend(["w_C1E", "w_C2E"]);
        }
        names.push("w_E");
        if self.model_family == ModelFamily::MutationSampler {
            names.push("lambda");
        }
        names
    }

    pub fn dims(&self) -> usize {
        self.tying.n_params() + (self.model_family == ModelFamily::MutationSampler) as usize
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let prior = (PRIOR_INSET, 1.0 - PRIOR_INSET);
        let weight = match self.generating_function {
            GeneratingFunction::Logistic => (crate::model::STRENGTH_MIN, crate::model::STRENGTH_MAX),
            // Noisy-OR probabilities of exactly 1 make the effect
            // deterministic and effect-absent evidence impossible.
            GeneratingFunction::NoisyOr => (PRIOR_INSET, 1.0 - PRIOR_INSET),
        };
        let mut bounds = Vec::with_capacity(self.dims());
        bounds.resize(if self.tying.shares_prior() { 1 } else { 2 }, prior);
        for _ in 0..if self.tying.shares_strength() { 1 } else { 2 } {
            bounds.push(weight);
        }
        bounds.push(weight);
        if self.model_family == ModelFamily::MutationSampler {
            bounds.push(self.lambda_bounds);
        }
        bounds
    }

    /// Decode a parameter vector into model parameters plus chain length.
    pub fn decode(&self, x: &[f64]) -> Result<ModelPoint, Error> {
        if x.len() != self.dims() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: self.dims(),
            });
        }
        let mut it = x.iter().copied();
        let (prior_c1, prior_c2) = if self.tying.shares_prior() {
            let p = it.next().unwrap();
            (p, p)
        } else {
            (it.next().unwrap(), it.next().unwrap())
        };
        let (strength_c1, strength_c2) = if self.tying.shares_strength() {
            let s = it.next().unwrap();
            (s, s)
        } else {
            (it.next().unwrap(), it.next().unwrap())
        };
        let bias_e = it.next().unwrap();
        let lambda = it.next();
        let parameters = ColliderParameters::new(
            prior_c1,
            prior_c2,
            strength_c1,
            strength_c2,
            bias_e,
            self.generating_function,
            self.tying,
        )?;
        Ok(ModelPoint { parameters, lambda })
    }

    /// All grid points in deterministic order (the Cartesian product of the
    /// per-parameter grids, tying-aware).
    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        let mut axes: Vec<&[f64]> = Vec::new();
        for _ in 0..if self.tying.shares_prior() { 1 } else { 2 } {
            axes.push(&self.grid.priors);
        }
        for _ in 0..if self.tying.shares_strength() { 1 } else { 2 } {
            axes.push(&self.grid.strengths);
        }
        axes.push(&self.grid.bias);
        if self.model_family == ModelFamily::MutationSampler {
            axes.push(&self.grid.lambda);
        }
        let mut points = vec![Vec::new()];
        for axis in axes {
            let mut next = Vec::with_capacity(points.len() * axis.len());
            for p in &points {
                for &v in axis {
                    let mut q = p.clone();
                    q.push(v);
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }

    fn sampler_config(&self, lambda: f64) -> SamplerConfig {
        SamplerConfig {
            chain_length: lambda,
            chain_count: self.sampler_chain_count,
            seed: self.seed,
            prototype_weights: self.prototype_weights,
            empty_evidence_fallback: self.empty_evidence_fallback,
        }
    }
}

/// A point in fitting space: CBN parameters plus the sampler chain length
/// when applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub parameters: ColliderParameters,
    pub lambda: Option<f64>,
}

/// Fitted parameters and fit metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: ColliderParameters,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    /// Number of free parameters (NP).
    pub n_params: usize,
    /// Squared error on the 0-100 scale.
    pub sse: f64,
    /// Pearson correlation between observed and predicted judgments; absent
    /// when either vector is constant.
    pub r_fit: Option<f64>,
    pub aic: f64,
    /// Mean absolute prediction error on the 0-100 scale.
    pub mae_loss: f64,
    pub n_observations: usize,
    pub converged: bool,
}

/// Model predictions (probabilities) for each judgment's task, dispatched on
/// the model family.
pub fn model_predictions(
    point: &ModelPoint,
    spec: &FitSpec,
    judgments: &[(TaskSpec, f64)],
) -> Result<Vec<f64>, Error> {
    let tasks: Vec<TaskSpec> = judgments.iter().map(|(t, _)| t.clone()).collect();
    match spec.model_family {
        ModelFamily::Cbn => point.parameters.predict_task_battery(&tasks),
        ModelFamily::MutationSampler => {
            let lambda = point.lambda.ok_or_else(|| {
                Error::InvalidConfig("sampler fits need a chain length".into())
            })?;
            expected_predictions(&point.parameters, &spec.sampler_config(lambda), &tasks)
        }
    }
}

/// Sum of squared differences between judgments and 100x model predictions.
pub fn sse_objective(
    point: &ModelPoint,
    spec: &FitSpec,
    judgments: &[(TaskSpec, f64)],
) -> Result<f64, Error> {
    if judgments.is_empty() {
        return Err(Error::EmptyInput("fitting needs at least one judgment"));
    }
    let predictions = model_predictions(point, spec, judgments)?;
    let sse = judgments
        .iter()
        .zip(&predictions)
        .map(|((_, judgment), p)| (judgment - 100.0 * p).powi(2))
        .sum();
    if !f64::is_finite(sse) {
        return Err(Error::NonFiniteObjective {
            params: vec![],
        });
    }
    Ok(sse)
}

fn objective_at(x: &[f64], spec: &FitSpec, judgments: &[(TaskSpec, f64)]) -> Result<f64, Error> {
    let value = sse_objective(&spec.decode(x)?, spec, judgments)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective { params: x.to_vec() });
    }
    Ok(value)
}

/// Evaluate the objective at every grid point and return the best
/// `spec.top_seeds` of them, ascending by objective.
pub fn grid_seed(
    spec: &FitSpec,
    judgments: &[(TaskSpec, f64)],
) -> Result<Vec<(Vec<f64>, f64)>, Error> {
    spec.validate()?;
    let points = spec.grid_points();
    let mut scored: Vec<(Vec<f64>, f64)> = points
        .into_par_iter()
        .map(|x| {
            let value = objective_at(&x, spec, judgments)?;
            Ok((x, value))
        })
        .collect::<Result<_, Error>>()?;
    // Stable sort keeps grid order among ties, so seeding is deterministic.
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite objectives"));
    scored.truncate(spec.top_seeds);
    Ok(scored)
}

struct NelderMeadOutcome {
    x: Vec<f64>,
    value: f64,
    converged: bool,
    /// Best objective value after each iteration; non-increasing.
    #[cfg_attr(not(test), allow(dead_code))]
    trace: Vec<f64>,
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink
/// 0.5) with every candidate vertex projected onto the box bounds before
/// evaluation. Stops when the simplex's objective spread drops below the
/// tolerance.
fn nelder_mead<F>(
    seed: &[f64],
    bounds: &[(f64, f64)],
    tolerance: f64,
    max_iterations: usize,
    mut f: F,
) -> Result<NelderMeadOutcome, Error>
where
    F: FnMut(&[f64]) -> Result<f64, Error>,
{
    let dims = seed.len();
    let project = |x: &mut Vec<f64>| {
        for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dims + 1);
    let mut start = seed.to_vec();
    project(&mut start);
    simplex.push(start.clone());
    for d in 0..dims {
        let (lo, hi) = bounds[d];
        let step = 0.05 * (hi - lo);
        let mut vertex = start.clone();
        // Step away from the nearer bound so the simplex is never flattened
        // against the box.
        vertex[d] += if vertex[d] + step <= hi { step } else { -step };
        project(&mut vertex);
        simplex.push(vertex);
    }
    let mut values: Vec<f64> = simplex
        .iter()
        .map(|x| f(x))
        .collect::<Result<_, Error>>()?;

    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iterations {
        let mut order: Vec<usize> = (0..=dims).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite objectives"));
        let best = order[0];
        let worst = order[dims];
        let second_worst = order[dims - 1];

        trace.push(values[best]);
        if values[worst] - values[best] <= tolerance {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dims];
        for &i in &order[..dims] {
            for d in 0..dims {
                centroid[d] += simplex[i][d];
            }
        }
        for c in centroid.iter_mut() {
            *c /= dims as f64;
        }

        let blend = |toward: &[f64], coeff: f64| {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(toward)
                .map(|(c, w)| c + coeff * (c - w))
                .collect();
            project(&mut x);
            x
        };

        let reflected = blend(&simplex[worst], 1.0);
        let f_reflected = f(&reflected)?;
        if f_reflected < values[best] {
            let expanded = blend(&simplex[worst], 2.0);
            let f_expanded = f(&expanded)?;
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let contracted = blend(&simplex[worst], -0.5);
            let f_contracted = f(&contracted)?;
            if f_contracted < values[worst] {
                simplex[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                // Shrink everything toward the best vertex.
                let anchor = simplex[best].clone();
                for i in 0..=dims {
                    if i == best {
                        continue;
                    }
                    for d in 0..dims {
                        simplex[i][d] = anchor[d] + 0.5 * (simplex[i][d] - anchor[d]);
                    }
                    values[i] = f(&simplex[i])?;
                }
            }
        }
    }

    let best = (0..values.len())
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite objectives"))
        .unwrap();
    trace.push(values[best]);
    Ok(NelderMeadOutcome {
        x: simplex[best].clone(),
        value: values[best],
        converged,
        trace,
    })
}

/// Refine a seed with bounded Nelder-Mead and assemble the full fit result.
pub fn refine(
    seed: &[f64],
    spec: &FitSpec,
    judgments: &[(TaskSpec, f64)],
) -> Result<FitResult, Error> {
    spec.validate()?;
    let outcome = nelder_mead(
        seed,
        &spec.bounds(),
        spec.refine_tolerance,
        spec.max_refine_iterations,
        |x| objective_at(x, spec, judgments),
    )?;
    let point = spec.decode(&outcome.x)?;
    let predictions = model_predictions(&point, spec, judgments)?;
    let observed: Vec<f64> = judgments.iter().map(|(_, j)| *j).collect();
    let scaled: Vec<f64> = predictions.iter().map(|p| 100.0 * p).collect();
    let n = observed.len();
    let n_params = spec.dims();
    Ok(FitResult {
        parameters: point.parameters,
        lambda: point.lambda,
        n_params,
        sse: outcome.value,
        r_fit: pearson(&observed, &scaled).ok(),
        aic: aic(outcome.value, n, n_params),
        mae_loss: mae_loss(&observed, &predictions)?,
        n_observations: n,
        converged: outcome.converged,
    })
}

/// Grid-seed the objective, refine the best seeds, and return the best
/// refined fit. Deterministic given the spec (including its seed).
pub fn fit_model(spec: &FitSpec, judgments: &[(TaskSpec, f64)]) -> Result<FitResult, Error> {
    if judgments.is_empty() {
        return Err(Error::EmptyInput("fitting needs at least one judgment"));
    }
    let seeds = grid_seed(spec, judgments)?;
    let results: Vec<FitResult> = seeds
        .into_par_iter()
        .map(|(x, _)| refine(&x, spec, judgments))
        .collect::<Result<_, Error>>()?;
    Ok(results
        .into_iter()
        .min_by(|a, b| a.sse.partial_cmp(&b.sse).expect("finite sse"))
        .expect("at least one seed"))
}

/// Least-squares AIC with additive constants dropped:
/// `n ln(SSE/n) + 2k`, with the SSE floored at 1e-9 so a perfect fit stays
/// finite. An internal comparison quantity only.
pub fn aic(sse: f64, n: usize, k: usize) -> f64 {
    let floored = sse.max(1e-9);
    n as f64 * (floored / n as f64).ln() + 2.0 * k as f64
}

/// Mean absolute difference between judgments and 100x predictions.
pub fn mae_loss(judgments: &[f64], predictions: &[f64]) -> Result<f64, Error> {
    if judgments.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            left: judgments.len(),
            right: predictions.len(),
        });
    }
    if judgments.is_empty() {
        return Err(Error::EmptyInput("mean absolute error needs data"));
    }
    Ok(judgments
        .iter()
        .zip(predictions)
        .map(|(j, p)| (j - 100.0 * p).abs())
        .sum::<f64>()
        / judgments.len() as f64)
}
