//! File formats and output handling for the pipeline commands.
//!
//! Judgments travel as UTF-8 CSV with the fixed header
//! `agent_id,agent_type,model_name,domain,counterbalance,task_id,response,temperature`;
//! prompt bundles and fit results travel as one-JSON-record-per-line text.
//! Every command writes its artifacts through [`OutputDir`], which removes
//! partial outputs if the command fails midway.

use anyhow::{anyhow, Context};
use collider_core::prompt::PromptBundle;
use collider_core::stats::{AgentType, Domain, JudgmentRecord};
use collider_core::tasks::TaskId;
use std::fmt;
use std::path::{Path, PathBuf};

/// Input errors exit with status 1, runtime errors with status 2.
#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(e) => write!(f, "{e:#}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn input_error<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Input(e.into())
}

pub fn runtime_error<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

pub const JUDGMENT_HEADER: [&str; 8] = [
    "agent_id",
    "agent_type",
    "model_name",
    "domain",
    "counterbalance",
    "task_id",
    "response",
    "temperature",
];

/// Read and validate a judgments CSV; malformed rows are reported with
/// their line numbers.
pub fn ingest_judgments(path: &Path) -> CliResult<Vec<JudgmentRecord>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| input_error(anyhow!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| input_error(anyhow!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != JUDGMENT_HEADER {
        return Err(input_error(anyhow!(
            "{}: expected header {}, found {}",
            path.display(),
            JUDGMENT_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| input_error(anyhow!("{}: {e}", path.display())))?;
        let line = row
            .position()
            .map(|p| p.line().to_string())
            .unwrap_or_else(|| "?".into());
        let at = |msg: String| input_error(anyhow!("{} line {line}: {msg}", path.display()));

        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let agent_type = match field(1) {
            "human" => AgentType::Human,
            "llm" => AgentType::Llm,
            other => return Err(at(format!("agent_type must be human or llm, got {other:?}"))),
        };
        let domain: Domain = field(3)
            .parse()
            .map_err(|e| at(format!("{e}")))?;
        let counterbalance: u8 = field(4)
            .parse()
            .map_err(|_| at(format!("counterbalance {:?} is not an integer", field(4))))?;
        let task_id: TaskId = field(5)
            .parse()
            .map_err(|_| at(format!("task_id {:?} is not one of I..XI", field(5))))?;
        let response: f64 = field(6)
            .parse()
            .map_err(|_| at(format!("response {:?} is not a number", field(6))))?;
        let temperature = match field(7) {
            "" => None,
            t => Some(
                t.parse::<f64>()
                    .map_err(|_| at(format!("temperature {:?} is not a number", t)))?,
            ),
        };
        let record = JudgmentRecord {
            agent_id: field(0).to_string(),
            agent_type,
            model_name: field(2).to_string(),
            domain,
            counterbalance,
            task_id,
            response,
            temperature,
        };
        record.validate().map_err(|e| at(e.to_string()))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(input_error(anyhow!(
            "{}: no judgment rows found",
            path.display()
        )));
    }
    Ok(records)
}

/// Serialize judgments in the documented CSV format.
pub fn judgments_to_csv(records: &[JudgmentRecord]) -> String {
    let mut out = String::new();
    out.push_str(&JUDGMENT_HEADER.join(","));
    out.push('\n');
    for r in records {
        let agent_type = match r.agent_type {
            AgentType::Human => "human",
            AgentType::Llm => "llm",
        };
        let temperature = r.temperature.map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.agent_id,
            agent_type,
            r.model_name,
            r.domain,
            r.counterbalance,
            r.task_id,
            r.response,
            temperature
        ));
    }
    out
}

/// Read prompt bundles from one-record-per-line JSON.
pub fn read_bundles(path: &Path) -> CliResult<Vec<PromptBundle>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_error(anyhow!("{}: {e}", path.display())))?;
    let mut bundles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bundle: PromptBundle = serde_json::from_str(line)
            .map_err(|e| input_error(anyhow!("{} line {}: {e}", path.display(), i + 1)))?;
        bundles.push(bundle);
    }
    if bundles.is_empty() {
        return Err(input_error(anyhow!(
            "{}: no prompt bundles found",
            path.display()
        )));
    }
    Ok(bundles)
}

pub fn bundles_to_jsonl(bundles: &[PromptBundle]) -> CliResult<String> {
    let mut out = String::new();
    for bundle in bundles {
        let line = serde_json::to_string(bundle).map_err(runtime_error)?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Output directory that deletes whatever it wrote unless committed.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))
            .map_err(runtime_error)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents.as_bytes())
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime_error)?;
        self.written.push(path);
        Ok(())
    }

    pub fn file_names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    /// Write the closing manifest (command, config echo, output listing)
    /// and keep everything on disk.
    pub fn commit(mut self, command: &str, config: serde_json::Value) -> CliResult<()> {
        let manifest = serde_json::json!({
            "command": command,
            "config": config,
            "outputs": self.file_names(),
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(runtime_error)?;
        self.write("manifest.json", &format!("{text}\n"))?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}

/// Fixed-precision float cell; empty for absent values.
pub fn csv_cell(value: Option<f64>, precision: usize) -> String {
    value
        .map(|v| format!("{v:.precision$}"))
        .unwrap_or_default()
}
