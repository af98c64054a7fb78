//! Vocabulary-constrained greedy decoding.
//!
//! At every step the scorer ranks a fixed candidate list (the words of the
//! source sentence followed by the control tokens) and the highest-scoring
//! candidate is appended. Generation stops after the end token or when the
//! step cap is reached.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LmScorer;
use crate::prompting::{Prompt, Sentence};

/// Reserved output words: "no entity", "next value" and "end of answer".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlTokens {
    pub none_token: String,
    pub sep_token: String,
    pub end_token: String,
}

impl Default for ControlTokens {
    fn default() -> Self {
        Self {
            none_token: "none".to_string(),
            sep_token: ";".to_string(),
            end_token: ".".to_string(),
        }
    }
}

impl ControlTokens {
    pub fn new(
        none_token: impl Into<String>,
        sep_token: impl Into<String>,
        end_token: impl Into<String>,
    ) -> Result<Self> {
        let control = Self {
            none_token: none_token.into(),
            sep_token: sep_token.into(),
            end_token: end_token.into(),
        };
        control.validate()?;
        Ok(control)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [&self.none_token, &self.sep_token, &self.end_token];
        for token in all {
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::InvalidControlTokens(format!(
                    "`{token}` must be a nonempty word without whitespace"
                )));
            }
        }
        if all[0] == all[1] || all[0] == all[2] || all[1] == all[2] {
            return Err(Error::InvalidControlTokens(
                "control tokens must be pairwise distinct".to_string(),
            ));
        }
        Ok(())
    }

    pub fn is_control(&self, token: &str) -> bool {
        token == self.none_token || token == self.sep_token || token == self.end_token
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub max_generated_tokens: usize,
}

impl DecodeConfig {
    pub const DEFAULT_MAX_GENERATED_TOKENS: usize = 40;

    pub fn new(max_generated_tokens: usize) -> Result<Self> {
        if max_generated_tokens == 0 {
            return Err(Error::InvalidArgument(
                "max_generated_tokens must be at least 1".to_string(),
            ));
        }
        Ok(Self {
            max_generated_tokens,
        })
    }
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_generated_tokens: Self::DEFAULT_MAX_GENERATED_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub generated_tokens: Vec<String>,
    pub terminated_by_end: bool,
    pub steps_used: usize,
}

impl GenerationResult {
    /// Wraps an already rendered answer region, e.g. the tail of an answered prompt.
    pub fn from_tokens(tokens: Vec<String>, control: &ControlTokens) -> Self {
        let terminated_by_end = tokens.last().is_some_and(|t| *t == control.end_token);
        Self {
            steps_used: tokens.len(),
            generated_tokens: tokens,
            terminated_by_end,
        }
    }
}

/// Candidate words for one decode call, in canonical tie-break order.
///
/// Sentence words come first in order of first appearance, then the none,
/// separator and end tokens. Duplicates keep their first position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllowedTokens {
    candidates: Vec<String>,
    end_token: String,
}

impl AllowedTokens {
    pub fn new(candidates: Vec<String>, end_token: impl Into<String>) -> Self {
        let mut seen = std::collections::HashSet::new();
        let candidates = candidates
            .into_iter()
            .filter(|c| seen.insert(c.clone()))
            .collect();
        Self {
            candidates,
            end_token: end_token.into(),
        }
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn end_token(&self) -> &str {
        &self.end_token
    }

    pub fn contains(&self, token: &str) -> bool {
        self.candidates.iter().any(|c| c == token)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Sentence words plus the three control tokens.
pub fn allowed_tokens(sentence: &Sentence, control: &ControlTokens) -> AllowedTokens {
    let candidates = sentence
        .tokens()
        .iter()
        .cloned()
        .chain([
            control.none_token.clone(),
            control.sep_token.clone(),
            control.end_token.clone(),
        ])
        .collect();
    AllowedTokens::new(candidates, control.end_token.clone())
}

/// Greedy argmax decoding restricted to `allowed`.
///
/// Equal scores resolve to the candidate that comes first in `allowed`.
pub fn decode_constrained<S: LmScorer + ?Sized>(
    scorer: &S,
    prompt: &Prompt,
    allowed: &AllowedTokens,
    config: &DecodeConfig,
) -> Result<GenerationResult> {
    if allowed.is_empty() {
        return Err(Error::EmptyAllowedSet);
    }
    if prompt.is_answered() {
        return Err(Error::InvalidArgument(
            "decode_constrained expects an unanswered prompt".to_string(),
        ));
    }

    let candidates = allowed.candidates();
    let mut prefix = prompt.tokens().to_vec();
    let mut generated = Vec::new();
    let mut terminated_by_end = false;

    while generated.len() < config.max_generated_tokens {
        let scores = scorer.score_next(&prefix, candidates)?;
        if scores.len() != candidates.len() {
            return Err(Error::ScorerFailure(format!(
                "expected {} scores, got {}",
                candidates.len(),
                scores.len()
            )));
        }
        let best = argmax_first(&scores)?;
        let token = candidates[best].clone();
        prefix.push(token.clone());
        generated.push(token);
        if candidates[best] == allowed.end_token() {
            terminated_by_end = true;
            break;
        }
    }

    Ok(GenerationResult {
        steps_used: generated.len(),
        generated_tokens: generated,
        terminated_by_end,
    })
}

fn argmax_first(scores: &[f64]) -> Result<usize> {
    let mut best = 0;
    for (i, &score) in scores.iter().enumerate() {
        if !score.is_finite() {
            return Err(Error::ScorerFailure(format!(
                "non-finite score {score} at candidate {i}"
            )));
        }
        if score > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Splits a generated answer into slot values.
///
/// One trailing end token is stripped, the rest is split on the separator,
/// and empty or none-only segments are dropped.
pub fn parse_generation(result: &GenerationResult, control: &ControlTokens) -> Vec<Vec<String>> {
    parse_answer_tokens(&result.generated_tokens, control)
}

pub fn parse_answer_tokens(tokens: &[String], control: &ControlTokens) -> Vec<Vec<String>> {
    let body = match tokens.split_last() {
        Some((last, rest)) if *last == control.end_token => rest,
        _ => tokens,
    };
    body.split(|t| *t == control.sep_token)
        .filter(|segment| !segment.is_empty())
        .filter(|segment| !(segment.len() == 1 && segment[0] == control.none_token))
        .map(<[String]>::to_vec)
        .collect()
}

/// Renders values as an answer region: `v1 ; v2 .` or `none .`.
pub fn render_answer(values: &[Vec<String>], control: &ControlTokens) -> Vec<String> {
    let mut out = Vec::new();
    if values.is_empty() {
        out.push(control.none_token.clone());
    } else {
        for (i, value) in values.iter().enumerate() {
            if i > 0 {
                out.push(control.sep_token.clone());
            }
            out.extend(value.iter().cloned());
        }
    }
    out.push(control.end_token.clone());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::FnScorer;
    use crate::prompting::build_inverse_prompts;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn fig2() -> Sentence {
        Sentence::parse("book a flight from beijing to new york tomorrow morning").unwrap()
    }

    #[test]
    fn control_tokens_must_be_distinct() {
        assert!(ControlTokens::new("none", ";", ";").is_err());
        assert!(ControlTokens::new("", ";", ".").is_err());
        assert!(ControlTokens::new("none", ";", ".").is_ok());
    }

    #[test]
    fn allowed_set_for_worked_sentence() {
        let allowed = allowed_tokens(&fig2(), &ControlTokens::default());
        assert_eq!(allowed.len(), 13);
        assert_eq!(&allowed.candidates()[10..], &toks("none ; ."));
    }

    #[test]
    fn allowed_set_collapses_collisions() {
        let s = Sentence::parse("none of these nine words are really that long ok").unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(allowed_tokens(&s, &ControlTokens::default()).len(), 12);
        let one = Sentence::parse("hello").unwrap();
        assert_eq!(allowed_tokens(&one, &ControlTokens::default()).len(), 4);
    }

    #[test]
    fn decodes_until_end_token() {
        let control = ControlTokens::default();
        let sentence = fig2();
        let prompt = build_inverse_prompts(&sentence, &["departure".to_string()]).remove(0);
        let answer = toks("beijing .");
        let start = prompt.len();
        let scorer = FnScorer::new(move |prefix: &[String], cands: &[String]| {
            let want = &answer[prefix.len() - start];
            cands.iter().map(|c| if c == want { 1.0 } else { 0.0 }).collect()
        });
        let result = decode_constrained(
            &scorer,
            &prompt,
            &allowed_tokens(&sentence, &control),
            &DecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(result.generated_tokens, toks("beijing ."));
        assert!(result.terminated_by_end);
        assert_eq!(result.steps_used, 2);
    }

    #[test]
    fn step_cap_is_enforced() {
        let control = ControlTokens::default();
        let sentence = fig2();
        let prompt = build_inverse_prompts(&sentence, &["price".to_string()]).remove(0);
        let scorer = FnScorer::new(|_: &[String], cands: &[String]| {
            cands.iter().map(|c| if c == "." { -1.0 } else { 0.0 }).collect()
        });
        let result = decode_constrained(
            &scorer,
            &prompt,
            &allowed_tokens(&sentence, &control),
            &DecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(result.steps_used, 40);
        assert!(!result.terminated_by_end);
    }

    #[test]
    fn uniform_scores_follow_canonical_order() {
        // Canonical order for "fly to rome": fly, to, rome, none, ;, .
        // Uniform scores always pick "fly", so the cap is hit with fly*3.
        let control = ControlTokens::default();
        let sentence = Sentence::parse("fly to rome").unwrap();
        let prompt = build_inverse_prompts(&sentence, &["city".to_string()]).remove(0);
        let scorer = FnScorer::new(|_: &[String], cands: &[String]| vec![0.5; cands.len()]);
        let result = decode_constrained(
            &scorer,
            &prompt,
            &allowed_tokens(&sentence, &control),
            &DecodeConfig::new(3).unwrap(),
        )
        .unwrap();
        assert_eq!(result.generated_tokens, toks("fly fly fly"));

        // A tie between "rome" and "." resolves to "rome", then "." wins alone.
        let scorer = FnScorer::new(|prefix: &[String], cands: &[String]| {
            let last_is_rome = prefix.last().is_some_and(|t| t == "rome");
            cands
                .iter()
                .map(|c| match c.as_str() {
                    "rome" if !last_is_rome => 2.0,
                    "." => 2.0,
                    _ => 0.0,
                })
                .collect()
        });
        let result = decode_constrained(
            &scorer,
            &prompt,
            &allowed_tokens(&sentence, &control),
            &DecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(result.generated_tokens, toks("rome ."));
    }

    #[test]
    fn rejects_bad_scorer_output() {
        let control = ControlTokens::default();
        let sentence = fig2();
        let prompt = build_inverse_prompts(&sentence, &["price".to_string()]).remove(0);
        let allowed = allowed_tokens(&sentence, &control);
        let short = FnScorer::new(|_: &[String], _: &[String]| vec![1.0]);
        assert!(matches!(
            decode_constrained(&short, &prompt, &allowed, &DecodeConfig::default()),
            Err(Error::ScorerFailure(_))
        ));
        let nan = FnScorer::new(|_: &[String], c: &[String]| vec![f64::NAN; c.len()]);
        assert!(matches!(
            decode_constrained(&nan, &prompt, &allowed, &DecodeConfig::default()),
            Err(Error::ScorerFailure(_))
        ));
        let empty = AllowedTokens::new(vec![], ".");
        assert!(matches!(
            decode_constrained(&short, &prompt, &empty, &DecodeConfig::default()),
            Err(Error::EmptyAllowedSet)
        ));
    }

    #[test]
    fn parses_generations() {
        let control = ControlTokens::default();
        let parse = |s: &str| parse_answer_tokens(&toks(s), &control);
        assert_eq!(
            parse("new york ; boston ."),
            vec![toks("new york"), toks("boston")]
        );
        assert!(parse("none .").is_empty());
        assert!(parse("").is_empty());
        // none segments mixed with values are dropped
        assert_eq!(parse("beijing ; none ."), vec![toks("beijing")]);
        // unterminated output is salvaged
        assert_eq!(parse("tomorrow morning"), vec![toks("tomorrow morning")]);
        assert_eq!(parse("; ; rome ;"), vec![toks("rome")]);
    }

    #[test]
    fn render_then_parse_is_identity() {
        let control = ControlTokens::default();
        for values in [vec![], vec![toks("a")], vec![toks("a b"), toks("c")]] {
            let rendered = render_answer(&values, &control);
            assert_eq!(rendered.last().unwrap(), ".");
            assert_eq!(parse_answer_tokens(&rendered, &control), values);
        }
    }
}
