//! Language-model scorers.
//!
//! Decoding only needs one number per candidate word given the prefix, so the
//! scorer interface is a single call. Two implementations ship here:
//! [`ReferenceLm`], a lookup table built from gold annotations that replays
//! known answers, and [`RemoteLm`], a JSON-over-HTTP client for a model server.

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::decoding::ControlTokens;
use crate::error::{Error, Result};
use crate::prompting::{
    build_answered_prompt, build_second_round_prompt, LabelMapping, Prompt, Sentence,
    SlotAnnotation,
};

/// Scores candidate next words after a token prefix. Higher is better.
pub trait LmScorer: Send + Sync {
    /// Returns exactly one finite score per candidate, in candidate order.
    fn score_next(&self, prefix: &[String], candidates: &[String]) -> Result<Vec<f64>>;

    /// Whether callers may invoke `score_next` from several threads at once.
    fn concurrent_calls_allowed(&self) -> bool {
        true
    }
}

impl<T: LmScorer + ?Sized> LmScorer for &T {
    fn score_next(&self, prefix: &[String], candidates: &[String]) -> Result<Vec<f64>> {
        (**self).score_next(prefix, candidates)
    }

    fn concurrent_calls_allowed(&self) -> bool {
        (**self).concurrent_calls_allowed()
    }
}

impl<T: LmScorer + ?Sized> LmScorer for Box<T> {
    fn score_next(&self, prefix: &[String], candidates: &[String]) -> Result<Vec<f64>> {
        (**self).score_next(prefix, candidates)
    }

    fn concurrent_calls_allowed(&self) -> bool {
        (**self).concurrent_calls_allowed()
    }
}

/// Adapts a closure into a scorer.
pub struct FnScorer<F> {
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&[String], &[String]) -> Vec<f64> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> LmScorer for FnScorer<F>
where
    F: Fn(&[String], &[String]) -> Vec<f64> + Send + Sync,
{
    fn score_next(&self, prefix: &[String], candidates: &[String]) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        Ok((self.f)(prefix, candidates))
    }
}

fn context_key(prefix: &[String]) -> String {
    prefix.join(" ")
}

/// Exact-match lookup table from full token prefixes to next-word scores.
///
/// Words missing from an entry, and prefixes missing from the table, score
/// `fallback_score`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLm {
    table: HashMap<String, HashMap<String, f64>>,
    fallback_score: f64,
}

impl Default for ReferenceLm {
    fn default() -> Self {
        Self::new(Self::DEFAULT_FALLBACK)
    }
}

impl ReferenceLm {
    pub const DEFAULT_FALLBACK: f64 = 0.0;
    pub const GOLD_SCORE: f64 = 1.0;

    pub fn new(fallback_score: f64) -> Self {
        assert!(fallback_score.is_finite(), "fallback score must be finite");
        Self {
            table: HashMap::new(),
            fallback_score,
        }
    }

    pub fn fallback_score(&self) -> f64 {
        self.fallback_score
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Sets the scores for one prefix, replacing any previous entry.
    pub fn insert(&mut self, prefix: &[String], scores: HashMap<String, f64>) {
        self.table.insert(context_key(prefix), scores);
    }

    /// Records that `next` follows `prefix`; errors if a different word was
    /// already recorded there.
    fn insert_gold(&mut self, prefix: &[String], next: &str) -> Result<()> {
        let key = context_key(prefix);
        if let Some(existing) = self.table.get(&key) {
            if let Some(first) = existing.keys().find(|w| *w != next) {
                return Err(Error::ConflictingGold {
                    context: key,
                    first: first.clone(),
                    second: next.to_string(),
                });
            }
            return Ok(());
        }
        self.table
            .insert(key, HashMap::from([(next.to_string(), Self::GOLD_SCORE)]));
        Ok(())
    }

    fn insert_answered(&mut self, prompt: &Prompt) -> Result<()> {
        let tokens = prompt.tokens();
        for k in prompt.answer_start()..tokens.len() {
            self.insert_gold(&tokens[..k], &tokens[k])?;
        }
        Ok(())
    }
}

impl LmScorer for ReferenceLm {
    fn score_next(&self, prefix: &[String], candidates: &[String]) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let entry = self.table.get(&context_key(prefix));
        Ok(candidates
            .iter()
            .map(|c| {
                entry
                    .and_then(|scores| scores.get(c))
                    .copied()
                    .unwrap_or(self.fallback_score)
            })
            .collect())
    }
}

/// Builds a table that replays the gold answers of `examples`.
///
/// Besides the first-round prompts, every none-valued label also gets an
/// entry for the second-round prompt conditioned on the sentence's gold
/// nonempty labels, so iterative tagging reproduces gold as well.
pub fn reference_from_gold(
    examples: &[(Sentence, SlotAnnotation)],
    mapping: &LabelMapping,
    control: &ControlTokens,
) -> Result<ReferenceLm> {
    let mut lm = ReferenceLm::default();
    for (sentence, annotation) in examples {
        let grouped = annotation.grouped(mapping)?;
        for (word, values) in &grouped {
            lm.insert_answered(&build_answered_prompt(sentence, word, values, control))?;
        }

        let known: Vec<(String, Vec<Vec<String>>)> = grouped
            .iter()
            .filter(|(_, values)| !values.is_empty())
            .cloned()
            .collect();
        for (word, _) in grouped.iter().filter(|(_, values)| values.is_empty()) {
            let prompt = build_second_round_prompt(sentence, &known, word, control)?
                .with_answer(&[], control);
            lm.insert_answered(&prompt)?;
        }
    }
    Ok(lm)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub prefix: Vec<String>,
    pub candidates: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().unwrap();
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap();
        }
        *active += 1;
        InFlightGuard { owner: self }
    }
}

struct InFlightGuard<'a> {
    owner: &'a InFlight,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.owner.active.lock().unwrap() -= 1;
        self.owner.freed.notify_one();
    }
}

/// Client for a scorer served over HTTP.
///
/// Posts `{"prefix": [...], "candidates": [...]}` to `<endpoint>/score` and
/// expects `{"scores": [...]}` back, one score per candidate. Transport errors
/// and 5xx responses are retried with exponential backoff.
pub struct RemoteLm {
    url: String,
    endpoint: String,
    timeout: Duration,
    retry_limit: u32,
    backoff: Duration,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl RemoteLm {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
    pub const DEFAULT_RETRY_LIMIT: u32 = 3;
    pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

    pub fn new(endpoint: impl Into<String>) -> Self {
        Self::with_options(
            endpoint,
            Self::DEFAULT_TIMEOUT,
            Self::DEFAULT_RETRY_LIMIT,
            Self::DEFAULT_MAX_IN_FLIGHT,
        )
    }

    pub fn with_options(
        endpoint: impl Into<String>,
        timeout: Duration,
        retry_limit: u32,
        max_in_flight: usize,
    ) -> Self {
        let endpoint = endpoint.into();
        let url = format!("{}/score", endpoint.trim_end_matches('/'));
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url,
            endpoint,
            timeout,
            retry_limit,
            backoff: Duration::from_millis(50),
            agent,
            in_flight: InFlight::new(max_in_flight),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn retry_limit(&self) -> u32 {
        self.retry_limit
    }

    fn attempt(&self, request: &ScoreRequest) -> std::result::Result<Vec<f64>, Attempt> {
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(request)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        if status != 200 {
            let message = format!("{} returned status {status}", self.url);
            return Err(if status >= 500 {
                Attempt::Retry(message)
            } else {
                Attempt::Fatal(message)
            });
        }
        let body: ScoreResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(format!("malformed response: {e}")))?;
        Ok(body.scores)
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl LmScorer for RemoteLm {
    fn score_next(&self, prefix: &[String], candidates: &[String]) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let request = ScoreRequest {
            prefix: prefix.to_vec(),
            candidates: candidates.to_vec(),
        };

        let _slot = self.in_flight.acquire();
        let mut last_error = String::new();
        for attempt in 0..=self.retry_limit {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.attempt(&request) {
                Ok(scores) => {
                    if scores.len() != candidates.len() {
                        return Err(Error::ScorerFailure(format!(
                            "expected {} scores, got {}",
                            candidates.len(),
                            scores.len()
                        )));
                    }
                    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
                        return Err(Error::ScorerFailure(format!("non-finite score {bad}")));
                    }
                    return Ok(scores);
                }
                Err(Attempt::Fatal(message)) => return Err(Error::ScorerFailure(message)),
                Err(Attempt::Retry(message)) => {
                    log::debug!("scorer attempt {attempt} failed: {message}");
                    last_error = message;
                }
            }
        }
        Err(Error::ScorerFailure(format!(
            "giving up after {} attempts: {last_error}",
            self.retry_limit + 1
        )))
    }
}
