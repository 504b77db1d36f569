//! Implementations behind the CLI subcommands.

use crate::io::{
    bundles_to_jsonl, csv_cell, ingest_judgments, input_error, judgments_to_csv, read_bundles,
    runtime_error, CliResult, OutputDir,
};
use anyhow::anyhow;
use collider_core::fit::{fit_model, FitResult, FitSpec, ModelFamily};
use collider_core::harness::{
    request_hash, run_experiment, HttpTransport, ParseMode, QueryRequest, ReplayTransport,
    RunOptions, ScriptedTransport, Transport, TranscriptStore,
};
use collider_core::model::{ColliderParameters, GeneratingFunction, ParameterTying};
use collider_core::prompt::{prompt_matrix, DomainVocabulary, PromptBundle};
use collider_core::stats::{
    aggregate, correlate_by_domain, AgentType, Domain, GroupBy, JudgmentRecord,
};
use collider_core::tasks::{self, TaskGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub fn tasks_list() -> String {
    let mut out = String::new();
    for task in tasks::catalog() {
        out.push_str(&format!(
            "{:<5} {:<26} {}\n",
            task.id.to_string(),
            task.group.to_string(),
            task.query
        ));
    }
    out
}

pub fn prompts_generate(
    vocab_dir: &Path,
    domains: &[Domain],
    out_dir: &Path,
) -> CliResult<()> {
    let mut vocabs = Vec::new();
    for domain in domains {
        let path = vocab_dir.join(format!("{domain}.json"));
        vocabs.push(DomainVocabulary::from_json_file(&path).map_err(input_error)?);
    }
    let bundles = prompt_matrix(&vocabs, tasks::catalog()).map_err(runtime_error)?;
    let mut out = OutputDir::create(out_dir)?;
    out.write("prompts.jsonl", &bundles_to_jsonl(&bundles)?)?;
    out.commit(
        "prompts generate",
        serde_json::json!({
            "vocab_dir": vocab_dir.display().to_string(),
            "domains": domains.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
            "bundles": bundles.len(),
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Live,
    Replay,
    Mock,
}

impl TransportKind {
    fn as_str(self) -> &'static str {
        match self {
            TransportKind::Live => "live",
            TransportKind::Replay => "replay",
            TransportKind::Mock => "mock",
        }
    }
}

pub struct QueryRunArgs {
    pub bundles: PathBuf,
    pub transport: TransportKind,
    pub store: Option<PathBuf>,
    pub provider: String,
    pub model: String,
    pub temperature: f64,
    pub lenient: bool,
    pub concurrency: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// The mock transport's reference generator: exact CBN predictions at fixed
/// demo parameters plus a small deterministic per-condition jitter, rounded
/// to whole numbers like real single-token replies.
fn mock_script(bundles: &[PromptBundle], model: &str, temperature: f64, seed: u64) -> ScriptedTransport {
    let demo = ColliderParameters::shared(0.5, 1.3, 0.9, GeneratingFunction::Logistic)
        .expect("demo parameters are valid");
    let predictions = demo
        .predict_task_battery(tasks::catalog())
        .expect("demo battery computes");
    let mut responses = std::collections::HashMap::new();
    for bundle in bundles {
        let cell = seed
            .wrapping_mul(31)
            .wrapping_add(bundle.domain as u64)
            .wrapping_mul(31)
            .wrapping_add(bundle.counterbalance as u64)
            .wrapping_mul(31)
            .wrapping_add(bundle.task_id.index() as u64);
        let jitter = ChaCha8Rng::seed_from_u64(cell).random_range(-3..=3) as f64;
        let value = (100.0 * predictions[bundle.task_id.index()] + jitter)
            .round()
            .clamp(0.0, 100.0);
        responses.insert(
            request_hash(model, temperature, &bundle.full_text),
            format!("{value:.0}"),
        );
    }
    ScriptedTransport::by_hash(responses)
}

pub fn query_run(args: &QueryRunArgs) -> CliResult<()> {
    let bundles = read_bundles(&args.bundles)?;

    let store = match (&args.store, args.transport) {
        (Some(dir), TransportKind::Replay) => {
            Some(TranscriptStore::open_existing(dir).map_err(input_error)?)
        }
        (Some(dir), _) => Some(TranscriptStore::open(dir).map_err(runtime_error)?),
        (None, TransportKind::Replay) => {
            return Err(input_error(anyhow!("replay transport needs --store")))
        }
        (None, _) => None,
    };

    let transport: Box<dyn Transport> = match args.transport {
        TransportKind::Live => Box::new(HttpTransport::new().map_err(runtime_error)?),
        TransportKind::Replay => Box::new(ReplayTransport::new(
            store.clone().expect("checked above"),
        )),
        TransportKind::Mock => Box::new(mock_script(
            &bundles,
            &args.model,
            args.temperature,
            args.seed,
        )),
    };

    let mut template = QueryRequest::new(&args.provider, &args.model, args.temperature, "");
    template.parse_mode = if args.lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };

    let options = RunOptions {
        concurrency: args.concurrency,
        min_interval: None,
    };
    let outcome = run_experiment(&bundles, &template, transport.as_ref(), store.as_ref(), &options)
        .map_err(runtime_error)?;

    let mut out = OutputDir::create(&args.out)?;
    out.write("judgments.csv", &judgments_to_csv(&outcome.records))?;
    let report = serde_json::json!({
        "bundles": bundles.len(),
        "records": outcome.records.len(),
        "failures": outcome.failures,
    });
    out.write(
        "run_report.json",
        &format!("{}\n", serde_json::to_string_pretty(&report).map_err(runtime_error)?),
    )?;
    out.commit(
        "query run",
        serde_json::json!({
            "bundles": args.bundles.display().to_string(),
            "transport": args.transport.as_str(),
            "store": args.store.as_ref().map(|p| p.display().to_string()),
            "provider": args.provider,
            "model": args.model,
            "temperature": args.temperature,
            "lenient": args.lenient,
            "concurrency": args.concurrency,
            "seed": args.seed,
        }),
    )?;
    if outcome.records.is_empty() {
        return Err(runtime_error(anyhow!(
            "no bundle produced a judgment ({} failures); see run_report.json",
            outcome.failures.len()
        )));
    }
    Ok(())
}

/// One fitted condition: a human subject, or a model x domain x
/// counterbalance cell.
#[derive(Debug, Clone, Serialize)]
struct FitRow {
    agent: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    subject: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    domain: Option<Domain>,
    #[serde(skip_serializing_if = "Option::is_none")]
    counterbalance: Option<u8>,
    n_judgments: usize,
    result: FitResult,
}

pub struct FitArgs {
    pub judgments: PathBuf,
    pub tying: ParameterTying,
    pub generating: GeneratingFunction,
    pub seed: u64,
    pub chains: usize,
    pub out: PathBuf,
}

/// The paper's fitting granularity: humans per subject, models per
/// (domain, counterbalance) condition.
fn fit_groups(
    records: &[JudgmentRecord],
) -> Vec<(String, Option<String>, Option<Domain>, Option<u8>, Vec<&JudgmentRecord>)> {
    let mut humans: BTreeMap<String, Vec<&JudgmentRecord>> = BTreeMap::new();
    let mut conditions: BTreeMap<(String, Domain, u8), Vec<&JudgmentRecord>> = BTreeMap::new();
    for record in records {
        match record.agent_type {
            AgentType::Human => humans.entry(record.agent_id.clone()).or_default().push(record),
            AgentType::Llm => conditions
                .entry((record.model_name.clone(), record.domain, record.counterbalance))
                .or_default()
                .push(record),
        }
    }
    let mut groups = Vec::new();
    for (subject, rows) in humans {
        groups.push(("human".to_string(), Some(subject), None, None, rows));
    }
    for ((model, domain, cb), rows) in conditions {
        groups.push((model, None, Some(domain), Some(cb), rows));
    }
    groups
}

fn summarize(rows: &[FitRow], family: ModelFamily) -> String {
    let mut by_agent: BTreeMap<String, Vec<&FitRow>> = BTreeMap::new();
    for row in rows {
        by_agent.entry(row.agent.clone()).or_default().push(row);
    }
    let mean = |values: Vec<f64>| {
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    let mut out = String::from("Agent,n_fits,NP,w_C,w_CE,w_C1E,w_C2E,w_E,lambda,R,AIC,Loss\n");
    for (agent, fits) in by_agent {
        let results: Vec<&FitResult> = fits.iter().map(|f| &f.result).collect();
        let tying = results[0].parameters.tying;
        let shared_strength = tying.shares_strength();
        let w_c = mean(results
            .iter()
            .map(|r| (r.parameters.prior_c1 + r.parameters.prior_c2) / 2.0)
            .collect());
        let strength = |pick: fn(&ColliderParameters) -> f64| {
            mean(results.iter().map(|r| pick(&r.parameters)).collect())
        };
        let lambda = mean(results.iter().filter_map(|r| r.lambda).collect());
        let r_fit = mean(results.iter().filter_map(|r| r.r_fit).collect());
        out.push_str(&format!(
            "{agent},{},{},{},{},{},{},{},{},{},{},{}\n",
            fits.len(),
            results[0].n_params,
            csv_cell(w_c, 6),
            csv_cell(shared_strength.then(|| strength(|p| p.strength_c1)).flatten(), 6),
            csv_cell((!shared_strength).then(|| strength(|p| p.strength_c1)).flatten(), 6),
            csv_cell((!shared_strength).then(|| strength(|p| p.strength_c2)).flatten(), 6),
            csv_cell(strength(|p| p.bias_e), 6),
            csv_cell((family == ModelFamily::MutationSampler).then_some(lambda).flatten(), 6),
            csv_cell(r_fit, 6),
            csv_cell(mean(results.iter().map(|r| r.aic).collect()), 6),
            csv_cell(mean(results.iter().map(|r| r.mae_loss).collect()), 6),
        ));
    }
    out
}

pub fn fit(family: ModelFamily, args: &FitArgs) -> CliResult<()> {
    let records = ingest_judgments(&args.judgments)?;
    let mut spec = FitSpec::new(family, args.tying, args.generating, args.seed);
    spec.sampler_chain_count = args.chains;
    spec.validate().map_err(input_error)?;

    let mut rows = Vec::new();
    for (agent, subject, domain, counterbalance, group) in fit_groups(&records) {
        let judgments: Vec<_> = group
            .iter()
            .map(|r| (tasks::by_id(r.task_id).clone(), r.response))
            .collect();
        let result = fit_model(&spec, &judgments).map_err(runtime_error)?;
        rows.push(FitRow {
            agent,
            subject,
            domain,
            counterbalance,
            n_judgments: judgments.len(),
            result,
        });
    }

    let mut jsonl = String::new();
    for row in &rows {
        jsonl.push_str(&serde_json::to_string(row).map_err(runtime_error)?);
        jsonl.push('\n');
    }
    let family_name = match family {
        ModelFamily::Cbn => "cbn",
        ModelFamily::MutationSampler => "sampler",
    };
    let mut out = OutputDir::create(&args.out)?;
    out.write("fits.jsonl", &jsonl)?;
    out.write("summary.csv", &summarize(&rows, family))?;
    out.commit(
        &format!("fit {family_name}"),
        serde_json::json!({
            "judgments": args.judgments.display().to_string(),
            "tying": args.tying,
            "generating": args.generating,
            "seed": args.seed,
            "chains": args.chains,
            "fits": rows.len(),
        }),
    )
}

pub fn analyze_correlate(judgments: &Path, baseline: &Path, out_dir: &Path) -> CliResult<()> {
    let records = ingest_judgments(judgments)?;
    let baseline_records = ingest_judgments(baseline)?;
    let table = correlate_by_domain(&records, &baseline_records).map_err(runtime_error)?;
    let mut csv = String::from("Model,Economy,Sociology,Weather,Pooled\n");
    for row in &table {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.model,
            csv_cell(row.economy, 3),
            csv_cell(row.sociology, 3),
            csv_cell(row.weather, 3),
            csv_cell(row.pooled, 3),
        ));
    }
    let mut out = OutputDir::create(out_dir)?;
    out.write("correlations.csv", &csv)?;
    out.commit(
        "analyze correlate",
        serde_json::json!({
            "judgments": judgments.display().to_string(),
            "baseline": baseline.display().to_string(),
            "models": table.len(),
        }),
    )
}

pub fn report_figure_data(
    judgments: &Path,
    bootstrap: usize,
    seed: u64,
    out_dir: &Path,
) -> CliResult<()> {
    let records = ingest_judgments(judgments)?;
    let rows = aggregate(&records, GroupBy::default(), bootstrap, 0.95, seed)
        .map_err(runtime_error)?;
    let mut out = OutputDir::create(out_dir)?;
    for group in TaskGroup::ALL {
        let mut csv = String::from("agent,task_id,mean,ci_low,ci_high,n\n");
        for row in rows.iter().filter(|r| r.group == group) {
            csv.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4},{}\n",
                row.agent, row.task_id, row.mean, row.ci_low, row.ci_high, row.n
            ));
        }
        out.write(&format!("{group}.csv"), &csv)?;
    }
    out.commit(
        "report figure-data",
        serde_json::json!({
            "judgments": judgments.display().to_string(),
            "bootstrap": bootstrap,
            "seed": seed,
            "level": 0.95,
        }),
    )
}
