//! Judgment-data aggregation, rank correlation, and bootstrap intervals.

use crate::error::Error;
use crate::tasks::{self, TaskGroup, TaskId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Who produced a judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentType {
    Human,
    Llm,
}

/// Cover-story domain the collider was embedded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Economy,
    Sociology,
    Weather,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Economy, Domain::Sociology, Domain::Weather];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Economy => "economy",
            Domain::Sociology => "sociology",
            Domain::Weather => "weather",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Malformed {
                what: "domain",
                detail: format!("unknown domain {s:?}"),
            })
    }
}

/// One 0-100 likelihood judgment with full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub agent_id: String,
    pub agent_type: AgentType,
    /// Model identifier; empty for humans.
    pub model_name: String,
    pub domain: Domain,
    /// Counterbalancing condition, 1-4.
    pub counterbalance: u8,
    pub task_id: TaskId,
    /// Likelihood judgment on the 0-100 scale.
    pub response: f64,
    /// Sampling temperature for LLM judgments; absent for humans.
    pub temperature: Option<f64>,
}

impl JudgmentRecord {
    pub fn validate(&self) -> Result<(), Error> {
        if !self.response.is_finite() || !(0.0..=100.0).contains(&self.response) {
            return Err(Error::Malformed {
                what: "judgment record",
                detail: format!("response {} outside [0, 100]", self.response),
            });
        }
        if !(1..=4).contains(&self.counterbalance) {
            return Err(Error::Malformed {
                what: "judgment record",
                detail: format!("counterbalance {} outside 1-4", self.counterbalance),
            });
        }
        if self.agent_type == AgentType::Llm && self.model_name.is_empty() {
            return Err(Error::Malformed {
                what: "judgment record",
                detail: "llm records need a model_name".into(),
            });
        }
        if let Some(t) = self.temperature {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Malformed {
                    what: "judgment record",
                    detail: format!("temperature {t} must be >= 0"),
                });
            }
        }
        Ok(())
    }

    /// Label grouping judgments by who produced them: the model name for
    /// LLMs, `"human"` for human subjects.
    pub fn agent_label(&self) -> String {
        match self.agent_type {
            AgentType::Human => "human".to_string(),
            AgentType::Llm => self.model_name.clone(),
        }
    }
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, Error> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput("correlation requires at least two pairs"));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mean_x) * (b - mean_y);
        var_x += (a - mean_x).powi(2);
        var_y += (b - mean_y).powi(2);
    }
    if var_x == 0.0 {
        return Err(Error::ConstantVector { name: "x" });
    }
    if var_y == 0.0 {
        return Err(Error::ConstantVector { name: "y" });
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// Ranks with ties assigned the mean of the ranks they span (1-based).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j share the average of ranks i+1..=j+1.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average-ranked values.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, Error> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput("correlation requires at least two pairs"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Percentile bootstrap confidence interval for the mean.
///
/// Resamples `values` with replacement `replicates` times and returns the
/// `(1-level)/2` and `1-(1-level)/2` percentiles of the replicate means.
/// Deterministic given the seed.
pub fn bootstrap_ci(
    values: &[f64],
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), Error> {
    if values.is_empty() {
        return Err(Error::EmptyInput("bootstrap needs at least one value"));
    }
    if replicates < 100 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap replicates must be >= 100, got {replicates}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += values[rng.random_range(0..n)];
        }
        means.push(sum / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let alpha = (1.0 - level) / 2.0;
    Ok((percentile(&means, alpha), percentile(&means, 1.0 - alpha)))
}

/// Linear-interpolation percentile of a sorted slice; `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// One mean-plus-interval cell of an aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub agent: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub domain: Option<Domain>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counterbalance: Option<u8>,
    pub task_id: TaskId,
    pub group: TaskGroup,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Which provenance fields, beyond agent and task, split aggregation cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupBy {
    pub domain: bool,
    pub counterbalance: bool,
}

/// Mean response and bootstrap CI per cell, keyed by agent and task id plus
/// any extra [`GroupBy`] fields. Rows come back sorted by agent, then the
/// extra keys, then task order I..XI.
pub fn aggregate(
    records: &[JudgmentRecord],
    group_by: GroupBy,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<AggregateRow>, Error> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no judgment records to aggregate"));
    }
    let mut cells: BTreeMap<(String, Option<Domain>, Option<u8>, TaskId), Vec<f64>> =
        BTreeMap::new();
    for record in records {
        record.validate()?;
        let key = (
            record.agent_label(),
            group_by.domain.then_some(record.domain),
            group_by.counterbalance.then_some(record.counterbalance),
            record.task_id,
        );
        cells.entry(key).or_default().push(record.response);
    }
    let mut rows = Vec::with_capacity(cells.len());
    for ((agent, domain, counterbalance, task_id), values) in cells {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let (ci_low, ci_high) = bootstrap_ci(&values, replicates, level, seed)?;
        rows.push(AggregateRow {
            agent,
            domain,
            counterbalance,
            task_id,
            group: tasks::by_id(task_id).group,
            mean,
            ci_low,
            ci_high,
            n: values.len(),
        });
    }
    Ok(rows)
}

/// One row of the human-versus-model correlation table: Spearman
/// correlations per domain plus the pooled column.
///
/// Per-domain correlations pair the two agents' mean judgments over the
/// (counterbalance, task) cells present on both sides; the pooled column
/// pairs (domain, counterbalance, task) cells. `None` marks correlations
/// that are undefined (fewer than two shared cells, or a constant vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub model: String,
    pub economy: Option<f64>,
    pub sociology: Option<f64>,
    pub weather: Option<f64>,
    pub pooled: Option<f64>,
}

pub fn correlate_by_domain(
    judgments: &[JudgmentRecord],
    baseline: &[JudgmentRecord],
) -> Result<Vec<CorrelationRow>, Error> {
    if judgments.is_empty() || baseline.is_empty() {
        return Err(Error::EmptyInput("correlation needs both judgment sets"));
    }
    for r in judgments.iter().chain(baseline) {
        r.validate()?;
    }

    type CellKey = (Option<Domain>, Domain, u8, TaskId);
    fn cell_means(
        records: &[JudgmentRecord],
        domain: Option<Domain>,
        label: Option<&str>,
    ) -> BTreeMap<CellKey, f64> {
        let mut sums: BTreeMap<CellKey, (f64, usize)> = BTreeMap::new();
        for r in records {
            if domain.is_some() && Some(r.domain) != domain {
                continue;
            }
            if let Some(label) = label {
                if r.agent_label() != label {
                    continue;
                }
            }
            let key = (domain, r.domain, r.counterbalance, r.task_id);
            let entry = sums.entry(key).or_insert((0.0, 0));
            entry.0 += r.response;
            entry.1 += 1;
        }
        sums.into_iter()
            .map(|(k, (sum, n))| (k, sum / n as f64))
            .collect()
    }

    let correlate = |domain: Option<Domain>, label: &str| -> Option<f64> {
        let ours = cell_means(judgments, domain, Some(label));
        let theirs = cell_means(baseline, domain, None);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (key, mean) in &ours {
            if let Some(other) = theirs.get(key) {
                x.push(*mean);
                y.push(*other);
            }
        }
        spearman(&x, &y).ok()
    };

    let mut labels: Vec<String> = judgments.iter().map(|r| r.agent_label()).collect();
    labels.sort();
    labels.dedup();

    Ok(labels
        .into_iter()
        .map(|label| CorrelationRow {
            economy: correlate(Some(Domain::Economy), &label),
            sociology: correlate(Some(Domain::Sociology), &label),
            weather: correlate(Some(Domain::Weather), &label),
            pooled: correlate(None, &label),
            model: label,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spearman_matches_hand_ranked_example() {
        assert_abs_diff_eq!(
            spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn spearman_limits() {
        let x = [1.0, 4.0, 9.0, 16.0];
        let up: Vec<f64> = x.to_vec();
        let down: Vec<f64> = x.iter().rev().copied().collect();
        assert_abs_diff_eq!(spearman(&x, &up).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spearman(&x, &down).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn spearman_is_invariant_under_monotone_transforms() {
        let x = [3.0, 1.0, 4.0, 1.5, 9.0];
        let y = [2.0, 7.0, 1.0, 8.0, 2.5];
        let base = spearman(&x, &y).unwrap();
        let squashed: Vec<f64> = x.iter().map(|v| (v * 0.3).exp()).collect();
        assert_abs_diff_eq!(spearman(&squashed, &y).unwrap(), base, epsilon = 1e-12);
        assert_abs_diff_eq!(spearman(&y, &x).unwrap(), base, epsilon = 1e-12);
    }

    #[test]
    fn spearman_error_cases() {
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::ConstantVector { name: "x" })
        ));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn average_ranks_handle_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 20.0, 30.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn bootstrap_constant_data_has_zero_width() {
        let (lo, hi) = bootstrap_ci(&[42.0; 7], 500, 0.95, 1).unwrap();
        assert_eq!((lo, hi), (42.0, 42.0));
    }

    #[test]
    fn bootstrap_spans_extremes_and_contains_mean() {
        let (lo, hi) = bootstrap_ci(&[0.0, 100.0], 10_000, 0.95, 7).unwrap();
        assert!(lo < 50.0 && 50.0 < hi);
        assert!(lo >= 0.0 && hi <= 100.0);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 100.0);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let values = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let a = bootstrap_ci(&values, 2000, 0.95, 99).unwrap();
        let b = bootstrap_ci(&values, 2000, 0.95, 99).unwrap();
        assert_eq!(a, b);
    }

    fn record(agent: &str, task: TaskId, response: f64) -> JudgmentRecord {
        JudgmentRecord {
            agent_id: agent.to_string(),
            agent_type: AgentType::Llm,
            model_name: agent.to_string(),
            domain: Domain::Sociology,
            counterbalance: 1,
            task_id: task,
            response,
            temperature: Some(0.0),
        }
    }

    #[test]
    fn aggregate_single_record_is_degenerate() {
        let rows = aggregate(
            &[record("m", TaskId::VII, 66.0)],
            GroupBy::default(),
            200,
            0.95,
            0,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean, 66.0);
        assert_eq!((rows[0].ci_low, rows[0].ci_high), (66.0, 66.0));
        assert_eq!(rows[0].n, 1);
    }

    #[test]
    fn aggregate_rows_cover_agents_by_task_in_order() {
        let mut records = Vec::new();
        for task in TaskId::ALL {
            records.push(record("a", task, 50.0));
            records.push(record("b", task, 60.0));
        }
        let rows = aggregate(&records, GroupBy::default(), 200, 0.95, 0).unwrap();
        assert_eq!(rows.len(), 22);
        assert!(rows[..11].iter().all(|r| r.agent == "a"));
        for (i, row) in rows[..11].iter().enumerate() {
            assert_eq!(row.task_id, TaskId::ALL[i]);
        }
    }

    #[test]
    fn aggregate_means_ignore_input_order() {
        let mut records = vec![
            record("a", TaskId::I, 10.0),
            record("a", TaskId::I, 30.0),
            record("a", TaskId::I, 50.0),
        ];
        let forward = aggregate(&records, GroupBy::default(), 200, 0.95, 0).unwrap();
        records.reverse();
        let backward = aggregate(&records, GroupBy::default(), 200, 0.95, 0).unwrap();
        assert_eq!(forward[0].mean, backward[0].mean);
    }

    #[test]
    fn aggregate_rejects_bad_records() {
        let mut bad = record("a", TaskId::I, 150.0);
        bad.response = 150.0;
        assert!(aggregate(&[bad], GroupBy::default(), 200, 0.95, 0).is_err());
        assert!(matches!(
            aggregate(&[], GroupBy::default(), 200, 0.95, 0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn correlation_rows_pair_shared_cells() {
        let mut llm = Vec::new();
        let mut humans = Vec::new();
        for (i, task) in TaskId::ALL.into_iter().enumerate() {
            for domain in Domain::ALL {
                let mut r = record("model-x", task, 10.0 + 7.0 * i as f64);
                r.domain = domain;
                llm.push(r);
                let mut h = record("", task, 12.0 + 6.5 * i as f64);
                h.agent_type = AgentType::Human;
                h.model_name = String::new();
                h.agent_id = "s1".into();
                h.domain = domain;
                h.temperature = None;
                humans.push(h);
            }
        }
        let rows = correlate_by_domain(&llm, &humans).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].model, "model-x");
        // Both sides increase in task index, so every correlation is 1.
        for r in [rows[0].economy, rows[0].sociology, rows[0].weather, rows[0].pooled] {
            assert_abs_diff_eq!(r.unwrap(), 1.0, epsilon = 1e-12);
        }
    }
}
