//! Provider-agnostic LLM querying with persistent transcripts.
//!
//! Three transports share one interface: a live HTTP client speaking the
//! chat-completions wire format, a replay transport that serves previously
//! stored transcripts and never touches the network, and a scripted mock
//! for tests and fixture generation. Live and scripted responses are
//! appended to a persistent store keyed by a content hash of
//! (model, temperature, prompt), so any run can later be replayed
//! deterministically and the analysis pipeline works fully offline.
//!
//! The store is an append-only directory with one JSON file per entry.
//! Writes go through a temporary file and an atomic no-clobber rename:
//! concurrent writers cannot corrupt an entry, and the first write wins.

use crate::prompt::PromptBundle;
use crate::stats::{AgentType, JudgmentRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("request timed out")]
    Timeout,

    #[error("rate limited by provider")]
    RateLimited,

    #[error("no stored transcript for request hash {hash}")]
    CacheMiss { hash: String },

    #[error("transport failure: {0}")]
    TransportFailure(String),

    #[error("response is not a bare number: {0:?}")]
    NotNumeric(String),

    #[error("response value {0} outside [0, 100]")]
    OutOfRange(f64),

    #[error("transcript store: {0}")]
    Store(String),

    #[error("stored entry {path} is corrupt: {detail}")]
    CorruptEntry { path: String, detail: String },
}

/// How raw response text is turned into a judgment value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Accept only a bare number (optionally ending in a period). The
    /// prompt demands "only a numeric response", so anything else is
    /// model noncompliance worth surfacing.
    #[default]
    Strict,
    /// Extract the first number from prose-wrapped responses.
    Lenient,
}

impl ParseMode {
    pub fn parse(self, raw: &str) -> Result<f64, HarnessError> {
        match self {
            ParseMode::Strict => parse_numeric(raw),
            ParseMode::Lenient => parse_numeric_lenient(raw),
        }
    }
}

/// Parse a bare numeric judgment: surrounding whitespace and one trailing
/// period are tolerated, anything else is rejected.
pub fn parse_numeric(raw: &str) -> Result<f64, HarnessError> {
    let trimmed = raw.trim();
    let token = trimmed.strip_suffix('.').filter(|t| !t.is_empty()).unwrap_or(trimmed);
    // Only one trailing period is tolerated; f64 parsing would otherwise
    // quietly accept "42.." via "42.".
    let numeric_shape = !token.is_empty()
        && !token.ends_with('.')
        && token
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '+' | '-' | 'e' | 'E'))
        && token.chars().any(|c| c.is_ascii_digit());
    if !numeric_shape {
        return Err(HarnessError::NotNumeric(raw.to_string()));
    }
    let value: f64 = token
        .parse()
        .map_err(|_| HarnessError::NotNumeric(raw.to_string()))?;
    if !value.is_finite() {
        return Err(HarnessError::NotNumeric(raw.to_string()));
    }
    if !(0.0..=100.0).contains(&value) {
        return Err(HarnessError::OutOfRange(value));
    }
    Ok(value)
}

/// Extract the first number from the response, prose allowed.
pub fn parse_numeric_lenient(raw: &str) -> Result<f64, HarnessError> {
    static NUMBER: std::sync::LazyLock<regex::Regex> = std::sync::LazyLock::new(|| {
        regex::Regex::new(r"[-+]?\d+(?:\.\d+)?").expect("static pattern compiles")
    });
    let m = NUMBER
        .find(raw)
        .ok_or_else(|| HarnessError::NotNumeric(raw.to_string()))?;
    let value: f64 = m
        .as_str()
        .parse()
        .map_err(|_| HarnessError::NotNumeric(raw.to_string()))?;
    if !(0.0..=100.0).contains(&value) {
        return Err(HarnessError::OutOfRange(value));
    }
    Ok(value)
}

/// One query to a chat-completion endpoint.
#[derive(Debug, Clone)]
pub struct QueryRequest {
    /// Provider id; selects the `{PROVIDER}_BASE_URL` / `{PROVIDER}_API_KEY`
    /// environment variables for the live transport.
    pub provider: String,
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
    pub max_retries: u32,
    pub timeout: Duration,
    /// Initial backoff after a retryable failure; doubles per attempt.
    pub retry_backoff: Duration,
    pub parse_mode: ParseMode,
}

impl QueryRequest {
    pub fn new(provider: &str, model: &str, temperature: f64, prompt: &str) -> Self {
        Self {
            provider: provider.to_string(),
            model: model.to_string(),
            temperature,
            prompt: prompt.to_string(),
            max_retries: 3,
            timeout: Duration::from_secs(60),
            retry_backoff: Duration::from_millis(250),
            parse_mode: ParseMode::Strict,
        }
    }

    /// Content hash identifying this request in the store: SHA-256 over
    /// `model \n temperature \n prompt`.
    pub fn request_hash(&self) -> String {
        request_hash(&self.model, self.temperature, &self.prompt)
    }
}

pub fn request_hash(model: &str, temperature: f64, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model.as_bytes());
    hasher.update(b"\n");
    hasher.update(temperature.to_string().as_bytes());
    hasher.update(b"\n");
    hasher.update(prompt.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One stored exchange with a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub provider: String,
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
    pub raw_response: String,
    /// The judgment value, when the response parsed; always in [0, 100].
    pub parsed_value: Option<f64>,
    /// Seconds since the Unix epoch at the time of the exchange.
    pub timestamp: u64,
    pub error: Option<String>,
}

impl TranscriptEntry {
    /// Recompute the request hash from the stored fields.
    pub fn recomputed_hash(&self) -> String {
        request_hash(&self.model, self.temperature, &self.prompt)
    }
}

/// Append-only directory of transcript entries, one JSON file per request
/// hash.
#[derive(Debug, Clone)]
pub struct TranscriptStore {
    dir: PathBuf,
}

impl TranscriptStore {
    /// Open (creating if needed) a store directory for writing.
    pub fn open(dir: &Path) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| HarnessError::Store(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    /// Open an existing store for replay; missing directories are an error.
    pub fn open_existing(dir: &Path) -> Result<Self, HarnessError> {
        if !dir.is_dir() {
            return Err(HarnessError::Store(format!(
                "{} is not a directory",
                dir.display()
            )));
        }
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    pub fn get(&self, hash: &str) -> Result<Option<TranscriptEntry>, HarnessError> {
        let path = self.path_for(hash);
        let text = match std::fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(HarnessError::Store(format!("{}: {e}", path.display()))),
        };
        let entry: TranscriptEntry =
            serde_json::from_str(&text).map_err(|e| HarnessError::CorruptEntry {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
        if entry.request_hash != entry.recomputed_hash() {
            return Err(HarnessError::CorruptEntry {
                path: path.display().to_string(),
                detail: "request hash does not match entry contents".into(),
            });
        }
        Ok(Some(entry))
    }

    /// Write an entry unless its hash is already present; the store never
    /// overwrites. Returns whether the entry was newly written.
    pub fn put(&self, entry: &TranscriptEntry) -> Result<bool, HarnessError> {
        let path = self.path_for(&entry.request_hash);
        if path.exists() {
            return Ok(false);
        }
        let json = serde_json::to_string_pretty(entry)
            .map_err(|e| HarnessError::Store(e.to_string()))?;
        let tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .map_err(|e| HarnessError::Store(e.to_string()))?;
        std::fs::write(tmp.path(), json.as_bytes())
            .map_err(|e| HarnessError::Store(e.to_string()))?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(true),
            Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => Ok(false),
            Err(e) => Err(HarnessError::Store(format!("{}: {}", path.display(), e.error))),
        }
    }

    /// All entries, sorted by request hash.
    pub fn entries(&self) -> Result<Vec<TranscriptEntry>, HarnessError> {
        let mut hashes = Vec::new();
        let iter = std::fs::read_dir(&self.dir)
            .map_err(|e| HarnessError::Store(format!("{}: {e}", self.dir.display())))?;
        for item in iter {
            let item = item.map_err(|e| HarnessError::Store(e.to_string()))?;
            let name = item.file_name().to_string_lossy().into_owned();
            if let Some(hash) = name.strip_suffix(".json") {
                hashes.push(hash.to_string());
            }
        }
        hashes.sort();
        let mut entries = Vec::with_capacity(hashes.len());
        for hash in hashes {
            if let Some(entry) = self.get(&hash)? {
                entries.push(entry);
            }
        }
        Ok(entries)
    }

    /// Check that every stored entry's key matches its recomputed content
    /// hash; returns the number of entries checked.
    pub fn verify(&self) -> Result<usize, HarnessError> {
        Ok(self.entries()?.len())
    }
}

/// How queries reach a model.
pub trait Transport: Send + Sync {
    fn name(&self) -> &'static str;

    /// Raw response text for the request.
    fn send(&self, request: &QueryRequest) -> Result<String, HarnessError>;

    /// Replay-style transports return the full stored entry instead of
    /// re-deriving one; `None` means the transport produces fresh text.
    fn stored_entry(
        &self,
        request: &QueryRequest,
    ) -> Option<Result<TranscriptEntry, HarnessError>> {
        let _ = request;
        None
    }

    /// Whether fresh responses should be appended to the persistent store.
    fn persists(&self) -> bool {
        true
    }
}

/// Live chat-completions transport. The endpoint and credentials come from
/// `{PROVIDER}_BASE_URL` and `{PROVIDER}_API_KEY` (provider id uppercased,
/// dashes replaced by underscores).
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, HarnessError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| HarnessError::TransportFailure(e.to_string()))?;
        Ok(Self { client })
    }

    fn env_name(provider: &str, suffix: &str) -> String {
        format!(
            "{}_{suffix}",
            provider.to_uppercase().replace(['-', '.'], "_")
        )
    }
}

impl Transport for HttpTransport {
    fn name(&self) -> &'static str {
        "live"
    }

    fn send(&self, request: &QueryRequest) -> Result<String, HarnessError> {
        let base_var = Self::env_name(&request.provider, "BASE_URL");
        let key_var = Self::env_name(&request.provider, "API_KEY");
        let base = std::env::var(&base_var).map_err(|_| {
            HarnessError::TransportFailure(format!("environment variable {base_var} is not set"))
        })?;
        let api_key = std::env::var(&key_var).map_err(|_| {
            HarnessError::TransportFailure(format!("environment variable {key_var} is not set"))
        })?;
        let url = format!("{}/chat/completions", base.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let response = self
            .client
            .post(&url)
            .bearer_auth(api_key)
            .json(&body)
            .timeout(request.timeout)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    HarnessError::Timeout
                } else {
                    HarnessError::TransportFailure(e.to_string())
                }
            })?;
        let status = response.status();
        if status.as_u16() == 429 {
            return Err(HarnessError::RateLimited);
        }
        let text = response
            .text()
            .map_err(|e| HarnessError::TransportFailure(e.to_string()))?;
        if !status.is_success() {
            return Err(HarnessError::TransportFailure(format!(
                "{url} returned {status}: {text}"
            )));
        }
        let parsed: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| HarnessError::TransportFailure(format!("malformed response: {e}")))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                HarnessError::TransportFailure("response has no message content".into())
            })
    }
}

/// Read-only transport that serves stored transcripts and fails on a cache
/// miss instead of calling the network.
pub struct ReplayTransport {
    store: TranscriptStore,
}

impl ReplayTransport {
    pub fn new(store: TranscriptStore) -> Self {
        Self { store }
    }
}

impl Transport for ReplayTransport {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn send(&self, request: &QueryRequest) -> Result<String, HarnessError> {
        let hash = request.request_hash();
        match self.store.get(&hash)? {
            Some(entry) => Ok(entry.raw_response),
            None => Err(HarnessError::CacheMiss { hash }),
        }
    }

    fn stored_entry(
        &self,
        request: &QueryRequest,
    ) -> Option<Result<TranscriptEntry, HarnessError>> {
        let hash = request.request_hash();
        Some(match self.store.get(&hash) {
            Ok(Some(entry)) => Ok(entry),
            Ok(None) => Err(HarnessError::CacheMiss { hash }),
            Err(e) => Err(e),
        })
    }

    fn persists(&self) -> bool {
        false
    }
}

type ScriptFn = dyn Fn(&QueryRequest) -> Result<String, HarnessError> + Send + Sync;

/// Deterministic mock transport driven by a script.
pub struct ScriptedTransport {
    script: Box<ScriptFn>,
}

impl ScriptedTransport {
    pub fn new<F>(script: F) -> Self
    where
        F: Fn(&QueryRequest) -> Result<String, HarnessError> + Send + Sync + 'static,
    {
        Self { script: Box::new(script) }
    }

    /// Answer every request with the same text.
    pub fn constant(text: &str) -> Self {
        let text = text.to_string();
        Self::new(move |_| Ok(text.clone()))
    }

    /// Answer by request hash; unknown hashes fail the transport.
    pub fn by_hash(responses: HashMap<String, String>) -> Self {
        Self::new(move |request| {
            responses
                .get(&request.request_hash())
                .cloned()
                .ok_or_else(|| {
                    HarnessError::TransportFailure("no scripted response for request".into())
                })
        })
    }
}

impl Transport for ScriptedTransport {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn send(&self, request: &QueryRequest) -> Result<String, HarnessError> {
        (self.script)(request)
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_secs()
}

/// Execute one query. Retryable failures (timeout, rate limit) back off
/// exponentially up to `max_retries`; fresh responses are appended to the
/// store when the transport persists; parse failures are recorded in the
/// entry rather than dropped.
pub fn execute_query(
    request: &QueryRequest,
    transport: &dyn Transport,
    store: Option<&TranscriptStore>,
) -> Result<TranscriptEntry, HarnessError> {
    if let Some(stored) = transport.stored_entry(request) {
        return stored;
    }
    let mut attempt = 0u32;
    let raw = loop {
        match transport.send(request) {
            Ok(raw) => break raw,
            Err(e @ (HarnessError::Timeout | HarnessError::RateLimited))
                if attempt < request.max_retries =>
            {
                let backoff = request.retry_backoff * 2u32.saturating_pow(attempt);
                attempt += 1;
                let _ = e;
                std::thread::sleep(backoff);
            }
            Err(e) => return Err(e),
        }
    };
    let (parsed_value, error) = match request.parse_mode.parse(&raw) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let entry = TranscriptEntry {
        request_hash: request.request_hash(),
        provider: request.provider.clone(),
        model: request.model.clone(),
        temperature: request.temperature,
        prompt: request.prompt.clone(),
        raw_response: raw,
        parsed_value,
        timestamp: now_unix(),
        error,
    };
    if transport.persists() {
        if let Some(store) = store {
            store.put(&entry)?;
        }
    }
    Ok(entry)
}

/// Batch execution options.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Bounded concurrent in-flight requests.
    pub concurrency: usize,
    /// Minimum spacing between requests (rate limiting), if any.
    pub min_interval: Option<Duration>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            concurrency: 4,
            min_interval: None,
        }
    }
}

/// One bundle that produced no judgment, and why.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFailure {
    pub index: usize,
    pub domain: crate::stats::Domain,
    pub counterbalance: u8,
    pub task_id: crate::tasks::TaskId,
    pub error: String,
}

/// The outcome of a batch run. Every input bundle lands in exactly one of
/// `records` or `failures`, both in input order.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<JudgmentRecord>,
    pub failures: Vec<RunFailure>,
}

/// Query every bundle once, converting transcripts into judgment records
/// with full provenance. Output order matches input order regardless of
/// the concurrency level.
pub fn run_experiment(
    bundles: &[PromptBundle],
    template: &QueryRequest,
    transport: &dyn Transport,
    store: Option<&TranscriptStore>,
    options: &RunOptions,
) -> Result<RunOutcome, HarnessError> {
    let results: Mutex<Vec<Option<Result<TranscriptEntry, HarnessError>>>> =
        Mutex::new((0..bundles.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let throttle: Mutex<Option<Instant>> = Mutex::new(None);
    let workers = options.concurrency.clamp(1, bundles.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= bundles.len() {
                    break;
                }
                if let Some(interval) = options.min_interval {
                    let wait = {
                        let mut last = throttle.lock().expect("throttle lock");
                        let now = Instant::now();
                        let ready = match *last {
                            Some(prev) => prev + interval,
                            None => now,
                        };
                        *last = Some(ready.max(now));
                        ready.saturating_duration_since(now)
                    };
                    if !wait.is_zero() {
                        std::thread::sleep(wait);
                    }
                }
                let mut request = template.clone();
                request.prompt = bundles[index].full_text.clone();
                let outcome = execute_query(&request, transport, store);
                results.lock().expect("results lock")[index] = Some(outcome);
            });
        }
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (index, (bundle, slot)) in bundles
        .iter()
        .zip(results.into_inner().expect("results lock"))
        .enumerate()
    {
        let outcome = slot.expect("every bundle was processed");
        match outcome {
            Ok(entry) => match (entry.parsed_value, entry.error) {
                (Some(value), _) => records.push(JudgmentRecord {
                    agent_id: template.model.clone(),
                    agent_type: AgentType::Llm,
                    model_name: template.model.clone(),
                    domain: bundle.domain,
                    counterbalance: bundle.counterbalance,
                    task_id: bundle.task_id,
                    response: value,
                    temperature: Some(template.temperature),
                }),
                (None, error) => failures.push(RunFailure {
                    index,
                    domain: bundle.domain,
                    counterbalance: bundle.counterbalance,
                    task_id: bundle.task_id,
                    error: error.unwrap_or_else(|| "response did not parse".into()),
                }),
            },
            Err(HarnessError::Store(detail)) => {
                // Store corruption poisons the whole run.
                return Err(HarnessError::Store(detail));
            }
            Err(e) => failures.push(RunFailure {
                index,
                domain: bundle.domain,
                counterbalance: bundle.counterbalance,
                task_id: bundle.task_id,
                error: e.to_string(),
            }),
        }
    }
    Ok(RunOutcome { records, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    #[test]
    fn strict_parse_accepts_bare_numbers() {
        assert_eq!(parse_numeric("85").unwrap(), 85.0);
        assert_eq!(parse_numeric(" 42.5\n").unwrap(), 42.5);
        assert_eq!(parse_numeric("70.").unwrap(), 70.0);
        assert_eq!(parse_numeric("0").unwrap(), 0.0);
        assert_eq!(parse_numeric("100").unwrap(), 100.0);
    }

    #[test]
    fn strict_parse_rejects_prose_and_junk() {
        assert!(matches!(parse_numeric("It is likely 70"), Err(HarnessError::NotNumeric(_))));
        assert!(matches!(parse_numeric(""), Err(HarnessError::NotNumeric(_))));
        assert!(matches!(parse_numeric("."), Err(HarnessError::NotNumeric(_))));
        assert!(matches!(parse_numeric("42.."), Err(HarnessError::NotNumeric(_))));
        assert!(matches!(parse_numeric("NaN"), Err(HarnessError::NotNumeric(_))));
        assert!(matches!(parse_numeric("inf"), Err(HarnessError::NotNumeric(_))));
        assert!(matches!(parse_numeric("101"), Err(HarnessError::OutOfRange(_))));
        assert!(matches!(parse_numeric("-5"), Err(HarnessError::OutOfRange(_))));
    }

    #[test]
    fn lenient_parse_extracts_first_number() {
        assert_eq!(parse_numeric_lenient("It is likely 70").unwrap(), 70.0);
        assert_eq!(parse_numeric_lenient("Probability: 42.5 (roughly)").unwrap(), 42.5);
        assert!(matches!(
            parse_numeric_lenient("no digits here"),
            Err(HarnessError::NotNumeric(_))
        ));
    }

    fn request(prompt: &str) -> QueryRequest {
        let mut r = QueryRequest::new("testprov", "test-model", 0.0, prompt);
        r.retry_backoff = Duration::ZERO;
        r
    }

    fn entry_for(request: &QueryRequest, raw: &str) -> TranscriptEntry {
        TranscriptEntry {
            request_hash: request.request_hash(),
            provider: request.provider.clone(),
            model: request.model.clone(),
            temperature: request.temperature,
            prompt: request.prompt.clone(),
            raw_response: raw.to_string(),
            parsed_value: parse_numeric(raw).ok(),
            timestamp: 0,
            error: None,
        }
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = request("What is 2 + 2?");
        assert_eq!(a.request_hash(), a.request_hash());
        assert_ne!(a.request_hash(), request("another prompt").request_hash());
        let mut warm = a.clone();
        warm.temperature = 1.0;
        assert_ne!(a.request_hash(), warm.request_hash());
        assert_eq!(a.request_hash().len(), 64);
    }

    #[test]
    fn store_round_trip_and_integrity() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        let req = request("stored prompt");
        let entry = entry_for(&req, "61");
        assert!(store.put(&entry).unwrap());
        // Append-only: the first write wins.
        let mut second = entry.clone();
        second.raw_response = "99".into();
        assert!(!store.put(&second).unwrap());
        let read = store.get(&req.request_hash()).unwrap().unwrap();
        assert_eq!(read.raw_response, "61");
        assert_eq!(store.verify().unwrap(), 1);
    }

    #[test]
    fn store_detects_tampered_entries() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        let req = request("tamper target");
        let mut entry = entry_for(&req, "10");
        entry.prompt = "a different prompt".into();
        store.put(&entry).unwrap();
        assert!(matches!(
            store.get(&req.request_hash()),
            Err(HarnessError::CorruptEntry { .. })
        ));
    }

    #[test]
    fn replay_transport_hits_and_misses() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        let req = request("cached prompt");
        store.put(&entry_for(&req, "33")).unwrap();

        let replay = ReplayTransport::new(TranscriptStore::open_existing(dir.path()).unwrap());
        let hit = execute_query(&req, &replay, None).unwrap();
        assert_eq!(hit.raw_response, "33");
        assert_eq!(hit.parsed_value, Some(33.0));
        assert_eq!(hit.timestamp, 0, "replay returns the stored entry verbatim");

        let miss = execute_query(&request("uncached prompt"), &replay, None);
        assert!(matches!(miss, Err(HarnessError::CacheMiss { .. })));
    }

    #[test]
    fn scripted_transport_parses_and_stores() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        let mock = ScriptedTransport::constant("85");
        let req = request("what is the likelihood?");
        let entry = execute_query(&req, &mock, Some(&store)).unwrap();
        assert_eq!(entry.parsed_value, Some(85.0));
        assert!(store.get(&req.request_hash()).unwrap().is_some());
    }

    #[test]
    fn retries_back_off_until_success() {
        let calls = AtomicU32::new(0);
        let flaky = ScriptedTransport::new(move |_| {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(HarnessError::RateLimited)
            } else {
                Ok("55".into())
            }
        });
        let mut req = request("retry me");
        req.max_retries = 3;
        let entry = execute_query(&req, &flaky, None).unwrap();
        assert_eq!(entry.parsed_value, Some(55.0));

        let always = ScriptedTransport::new(|_| Err(HarnessError::Timeout));
        let mut req = request("never succeeds");
        req.max_retries = 2;
        assert!(matches!(
            execute_query(&req, &always, None),
            Err(HarnessError::Timeout)
        ));
    }

    #[test]
    fn run_experiment_accounts_for_every_bundle() {
        use crate::prompt::{prompt_matrix, CounterbalanceCode, DomainVocabulary};
        use crate::tasks;

        let vocab: DomainVocabulary = serde_json::from_str(include_str!(
            "../../../fixtures/vocab/sociology.json"
        ))
        .unwrap();
        let bundles = prompt_matrix(std::slice::from_ref(&vocab), tasks::catalog()).unwrap();
        assert_eq!(bundles.len(), 44);
        let _ = CounterbalanceCode::ALL;

        // Fail exactly one prompt, succeed on the rest.
        let poison = bundles[7].full_text.clone();
        let mock = ScriptedTransport::new(move |req| {
            if req.prompt == poison {
                Ok("unsure, maybe 60".into())
            } else {
                Ok("72".into())
            }
        });
        let outcome = run_experiment(
            &bundles,
            &request("unused"),
            &mock,
            None,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.records.len(), 43);
        assert_eq!(outcome.failures.len(), 1);
        assert_eq!(outcome.failures[0].index, 7);
        assert_eq!(outcome.records.len() + outcome.failures.len(), bundles.len());
        // Provenance carried through.
        assert_eq!(outcome.records[0].task_id, bundles[0].task_id);
        assert_eq!(outcome.records[0].counterbalance, 1);
    }
}
