//! Data-collection client for local generation endpoints speaking the
//! Ollama-style `/api/generate` JSON protocol: deterministic per-request
//! seeds, fixed prompt templates, constrained JSON output, and parsing of
//! responses into correctness bits.

use crate::error::{Error, Result};
use crate::moments::CorrectnessMatrix;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use std::time::Duration;

/// Binary yes/no prediction task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Qnli,
    Qqp,
}

/// Task-specific text fields of one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskFields {
    Qnli { question: String, sentence: String },
    Qqp { question1: String, question2: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskExample {
    pub example_id: String,
    #[serde(flatten)]
    pub fields: TaskFields,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub task: Task,
    pub examples: Vec<TaskExample>,
}

fn default_top_p() -> f64 {
    0.95
}
fn default_num_predict() -> u32 {
    16
}
fn default_timeout() -> u64 {
    120
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff() -> u64 {
    250
}

/// One collection condition: endpoint, decoding policy, dataset, seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectSpec {
    pub endpoint_url: String,
    pub model_tag: String,
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    /// Generation token cap, sent as `num_predict`.
    #[serde(default = "default_num_predict")]
    pub max_tokens: u32,
    /// Calls per example.
    pub repeats: usize,
    pub condition_name: String,
    pub seed_base: u64,
    pub dataset: DatasetSpec,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    /// Maximum in-flight requests.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// First retry delay; doubles per attempt.
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
}

impl CollectSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Domain("repeats must be at least 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Domain(format!(
                "temperature {} must be nonnegative",
                self.temperature
            )));
        }
        if self.seed_base == 0 {
            return Err(Error::Domain("seed_base must be positive".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Domain(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.dataset.examples.is_empty() {
            return Err(Error::Domain("dataset has no examples".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Domain("concurrency must be at least 1".into()));
        }
        Ok(())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x100_0000_01b3;

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Stable per-request seed: FNV-1a-64 over the UTF-8 key
/// `{seed_base}\x1f{condition}\x1f{example_id}\x1f{repeat}`, reduced modulo
/// 2^31 - 1 so it fits any API expecting a signed 32-bit seed.
pub fn request_seed(
    seed_base: u64,
    condition_name: &str,
    example_id: &str,
    repeat_index: usize,
) -> u32 {
    let key = format!("{seed_base}\x1f{condition_name}\x1f{example_id}\x1f{repeat_index}");
    (fnv1a64(key.as_bytes()) % ((1u64 << 31) - 1)) as u32
}

/// Fixed instruction prefix of every prompt.
pub const INSTRUCTION_PREFIX: &str = "Answer the task with Yes or No. \
Return only valid JSON with key 'answer'\nand value 'Yes' or 'No'.";

const QUESTION_CAP: usize = 1200;
const SENTENCE_CAP: usize = 3500;

fn truncate_chars(s: &str, cap: usize) -> &str {
    match s.char_indices().nth(cap) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

/// Render the full prompt: instruction prefix, two blank lines, the task
/// body, and a trailing newline. Long fields are truncated to fixed
/// character caps (questions 1200, QNLI sentence 3500) before templating.
pub fn build_prompt(task: Task, fields: &TaskFields) -> Result<String> {
    let body = match (task, fields) {
        (Task::Qnli, TaskFields::Qnli { question, sentence }) => format!(
            "Question:\n{}\n\nSentence:\n{}\n\nDoes the sentence entail an answer to the question?",
            truncate_chars(question, QUESTION_CAP),
            truncate_chars(sentence, SENTENCE_CAP),
        ),
        (Task::Qqp, TaskFields::Qqp { question1, question2 }) => format!(
            "Question 1:\n{}\n\nQuestion 2:\n{}\n\nDo these two questions ask the same thing?",
            truncate_chars(question1, QUESTION_CAP),
            truncate_chars(question2, QUESTION_CAP),
        ),
        _ => {
            return Err(Error::Domain(
                "task and example fields disagree".into(),
            ))
        }
    };
    Ok(format!("{INSTRUCTION_PREFIX}\n\n\n{body}\n"))
}

/// JSON schema attached to every request, constraining the output to
/// {"answer": "Yes"|"No"}.
pub fn answer_schema() -> serde_json::Value {
    serde_json::json!({
        "type": "object",
        "properties": {
            "answer": {"type": "string", "enum": ["Yes", "No"]}
        },
        "required": ["answer"],
        "additionalProperties": false
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedAnswer {
    Yes,
    No,
    Invalid,
}

/// Parse a raw model response: strict JSON with key "answer" in
/// {"Yes","No"} first, then a case-insensitive token search for yes/no
/// (first match wins), else invalid.
pub fn parse_answer(raw: &str) -> ParsedAnswer {
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(raw) {
        if let Some(ans) = v.get("answer").and_then(|a| a.as_str()) {
            match ans {
                "Yes" => return ParsedAnswer::Yes,
                "No" => return ParsedAnswer::No,
                _ => {}
            }
        }
    }
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").expect("fixed pattern"));
    match re.captures(raw) {
        Some(c) => {
            if c[1].eq_ignore_ascii_case("yes") {
                ParsedAnswer::Yes
            } else {
                ParsedAnswer::No
            }
        }
        None => ParsedAnswer::Invalid,
    }
}

/// One request's audit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub example_id: String,
    pub repeat_index: usize,
    pub seed: u32,
    /// Raw response body text; None when the request failed outright.
    pub raw_response: Option<String>,
    pub outcome: RequestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum RequestOutcome {
    Yes,
    No,
    Invalid,
    Failed(String),
}

/// One entry of the failure manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub example_id: String,
    pub repeat_index: usize,
    pub seed: u32,
    pub error: String,
}

/// Everything a collection run produces. Examples enter the matrix only
/// when every repeat parsed to a definite answer; the rest are listed in
/// `excluded_examples` with per-request detail in `failures`.
#[derive(Debug, Clone)]
pub struct CollectOutcome {
    /// None when no example completed all repeats.
    pub matrix: Option<CorrectnessMatrix>,
    pub transcript: Vec<TranscriptRecord>,
    pub failures: Vec<FailureRecord>,
    pub invalid_count: usize,
    pub excluded_examples: Vec<String>,
}

/// Issue one generation request per (example, repeat) with its deterministic
/// seed, parse answers, and score them against `labels` (true = Yes).
/// Requests run concurrently up to `spec.concurrency`, but assembly is keyed
/// by (example, repeat), so completion order never changes the output.
pub fn collect(spec: &CollectSpec, labels: &[bool]) -> Result<CollectOutcome> {
    spec.validate()?;
    let examples = &spec.dataset.examples;
    if labels.len() != examples.len() {
        return Err(Error::Domain(format!(
            "{} labels for {} examples: labels must align with the dataset",
            labels.len(),
            examples.len()
        )));
    }
    let prompts: Vec<String> = examples
        .iter()
        .map(|ex| build_prompt(spec.dataset.task, &ex.fields))
        .collect::<Result<_>>()?;

    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(spec.timeout_seconds.max(1)))
        .build();
    let requests: Vec<(usize, usize)> = (0..examples.len())
        .flat_map(|i| (0..spec.repeats).map(move |j| (i, j)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.concurrency)
        .build()
        .map_err(|e| Error::Domain(format!("request pool: {e}")))?;
    let mut results: Vec<(usize, usize, u32, std::result::Result<String, String>)> =
        pool.install(|| {
            requests
                .par_iter()
                .map(|&(i, j)| {
                    let seed =
                        request_seed(spec.seed_base, &spec.condition_name, &examples[i].example_id, j);
                    let body = generate_body(spec, &prompts[i], seed);
                    (i, j, seed, issue_with_retries(&agent, &spec.endpoint_url, &body, spec))
                })
                .collect()
        });
    // Keyed assembly: sort by (example, repeat) so transcripts and bits are
    // independent of completion order.
    results.sort_by_key(|&(i, j, _, _)| (i, j));

    let mut transcript = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut invalid_count = 0usize;
    let mut answers: Vec<Vec<Option<ParsedAnswer>>> =
        vec![vec![None; spec.repeats]; examples.len()];
    for (i, j, seed, outcome) in results {
        let example_id = examples[i].example_id.clone();
        match outcome {
            Ok(raw) => {
                let parsed = parse_answer(&raw);
                if parsed == ParsedAnswer::Invalid {
                    invalid_count += 1;
                    failures.push(FailureRecord {
                        example_id: example_id.clone(),
                        repeat_index: j,
                        seed,
                        error: "response parsed to neither yes nor no".into(),
                    });
                }
                answers[i][j] = Some(parsed);
                transcript.push(TranscriptRecord {
                    example_id,
                    repeat_index: j,
                    seed,
                    raw_response: Some(raw),
                    outcome: match parsed {
                        ParsedAnswer::Yes => RequestOutcome::Yes,
                        ParsedAnswer::No => RequestOutcome::No,
                        ParsedAnswer::Invalid => RequestOutcome::Invalid,
                    },
                });
            }
            Err(msg) => {
                failures.push(FailureRecord {
                    example_id: example_id.clone(),
                    repeat_index: j,
                    seed,
                    error: msg.clone(),
                });
                transcript.push(TranscriptRecord {
                    example_id,
                    repeat_index: j,
                    seed,
                    raw_response: None,
                    outcome: RequestOutcome::Failed(msg),
                });
            }
        }
    }

    let mut ids = Vec::new();
    let mut bits = Vec::new();
    let mut excluded = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let complete = answers[i]
            .iter()
            .all(|a| matches!(a, Some(ParsedAnswer::Yes) | Some(ParsedAnswer::No)));
        if complete {
            ids.push(ex.example_id.clone());
            bits.push(
                answers[i]
                    .iter()
                    .map(|a| u8::from((*a == Some(ParsedAnswer::Yes)) == labels[i]))
                    .collect(),
            );
        } else {
            excluded.push(ex.example_id.clone());
        }
    }
    let matrix = if ids.is_empty() {
        None
    } else {
        Some(CorrectnessMatrix::new(spec.condition_name.clone(), ids, bits)?)
    };
    Ok(CollectOutcome {
        matrix,
        transcript,
        failures,
        invalid_count,
        excluded_examples: excluded,
    })
}

fn generate_body(spec: &CollectSpec, prompt: &str, seed: u32) -> serde_json::Value {
    serde_json::json!({
        "model": spec.model_tag,
        "prompt": prompt,
        "format": answer_schema(),
        "options": {
            "temperature": spec.temperature,
            "top_p": spec.top_p,
            "num_predict": spec.max_tokens,
            "seed": seed,
        },
        "stream": false,
        "keep_alive": "30m",
    })
}

fn issue_with_retries(
    agent: &ureq::Agent,
    url: &str,
    body: &serde_json::Value,
    spec: &CollectSpec,
) -> std::result::Result<String, String> {
    let mut last = String::new();
    for attempt in 0..3u32 {
        if attempt > 0 && spec.retry_backoff_ms > 0 {
            std::thread::sleep(Duration::from_millis(spec.retry_backoff_ms << (attempt - 1)));
        }
        match issue_once(agent, url, body) {
            Ok(text) => return Ok(text),
            Err(msg) => last = msg,
        }
    }
    Err(format!("after 3 attempts: {last}"))
}

fn issue_once(
    agent: &ureq::Agent,
    url: &str,
    body: &serde_json::Value,
) -> std::result::Result<String, String> {
    let resp = match agent.post(url).send_json(body.clone()) {
        Ok(r) => r,
        Err(ureq::Error::Status(code, r)) => {
            let detail = r.into_string().unwrap_or_default();
            return Err(format!("HTTP {code}: {}", detail.chars().take(200).collect::<String>()));
        }
        Err(e) => return Err(format!("transport: {e}")),
    };
    let text = resp.into_string().map_err(|e| format!("body read: {e}"))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("malformed endpoint JSON: {e}"))?;
    match v.get("response").and_then(|r| r.as_str()) {
        Some(r) => Ok(r.to_string()),
        None => Err("endpoint JSON lacks a 'response' field".into()),
    }
}
