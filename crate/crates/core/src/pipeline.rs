//! Two-round tagging of a single sentence.
//!
//! Round one decodes one inverse prompt per label. With iterative prediction
//! enabled, labels that came back empty are asked again in a second round
//! whose prompt lists every slot found so far. Labels found in round one are
//! never asked again.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoding::{
    allowed_tokens, decode_constrained, parse_generation, AllowedTokens, ControlTokens,
    DecodeConfig, GenerationResult,
};
use crate::error::{Error, Result};
use crate::lm::LmScorer;
use crate::prompting::{
    build_inverse_prompt, build_second_round_prompt, LabelMapping, Prompt, Round, Sentence,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    First,
    Second,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotEntry {
    pub raw_label: String,
    pub label_word: String,
    pub values: Vec<Vec<String>>,
    pub resolved: Resolution,
    /// Raw generated tokens, one list per decode call for this label.
    pub generations: Vec<Vec<String>>,
}

/// Per-label predictions in mapping order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotPrediction {
    pub entries: Vec<SlotEntry>,
}

impl SlotPrediction {
    pub fn entry(&self, raw_label: &str) -> Option<&SlotEntry> {
        self.entries.iter().find(|e| e.raw_label == raw_label)
    }

    pub fn nonempty_labels(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| !e.values.is_empty())
            .map(|e| e.raw_label.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagConfig {
    pub decode: DecodeConfig,
    pub iterative: bool,
    /// Number of revision rounds after the first one when `iterative` is set.
    pub revision_rounds: usize,
    /// Abort on the first scorer failure instead of marking the label unresolved.
    pub strict: bool,
}

impl Default for TagConfig {
    fn default() -> Self {
        Self {
            decode: DecodeConfig::default(),
            iterative: true,
            revision_rounds: 1,
            strict: false,
        }
    }
}

/// One decode call made while tagging.
#[derive(Debug, Clone)]
pub struct DecodeCall {
    pub label_index: usize,
    pub round: Round,
    pub prompt: Prompt,
    pub result: Option<GenerationResult>,
}

#[derive(Debug, Clone)]
pub struct TagOutcome {
    pub prediction: SlotPrediction,
    pub calls: Vec<DecodeCall>,
    pub failures: usize,
}

fn decode_all<S: LmScorer + ?Sized>(
    scorer: &S,
    prompts: &[Prompt],
    allowed: &AllowedTokens,
    config: &DecodeConfig,
) -> Vec<Result<GenerationResult>> {
    if scorer.concurrent_calls_allowed() {
        prompts
            .par_iter()
            .map(|p| decode_constrained(scorer, p, allowed, config))
            .collect()
    } else {
        prompts
            .iter()
            .map(|p| decode_constrained(scorer, p, allowed, config))
            .collect()
    }
}

pub fn tag_sentence<S: LmScorer + ?Sized>(
    scorer: &S,
    sentence: &Sentence,
    mapping: &LabelMapping,
    control: &ControlTokens,
    config: &TagConfig,
) -> Result<TagOutcome> {
    if mapping.is_empty() {
        return Err(Error::EmptyInput);
    }
    let allowed = allowed_tokens(sentence, control);
    let mut entries: Vec<SlotEntry> = mapping
        .entries()
        .iter()
        .map(|(raw, word)| SlotEntry {
            raw_label: raw.clone(),
            label_word: word.clone(),
            values: Vec::new(),
            resolved: Resolution::Unresolved,
            generations: Vec::new(),
        })
        .collect();
    let mut calls = Vec::new();
    let mut failures = 0;

    let first: Vec<Prompt> = entries
        .iter()
        .map(|e| build_inverse_prompt(sentence, &e.label_word))
        .collect();
    let results = decode_all(scorer, &first, &allowed, &config.decode);
    for (i, (prompt, result)) in first.into_iter().zip(results).enumerate() {
        let result = match result {
            Ok(r) => Some(r),
            Err(e) if config.strict => return Err(e),
            Err(e) => {
                log::warn!("label `{}`: {e}", entries[i].raw_label);
                failures += 1;
                None
            }
        };
        if let Some(r) = &result {
            let entry = &mut entries[i];
            entry.values = parse_generation(r, control);
            entry.generations.push(r.generated_tokens.clone());
            if !entry.values.is_empty() || !config.iterative {
                entry.resolved = Resolution::First;
            }
        }
        calls.push(DecodeCall {
            label_index: i,
            round: Round::First,
            prompt,
            result,
        });
    }

    let rounds = if config.iterative { config.revision_rounds } else { 0 };
    for _ in 0..rounds {
        let known: Vec<(String, Vec<Vec<String>>)> = entries
            .iter()
            .filter(|e| !e.values.is_empty())
            .map(|e| (e.label_word.clone(), e.values.clone()))
            .collect();
        let pending: Vec<usize> = (0..entries.len())
            .filter(|&i| entries[i].values.is_empty())
            .collect();
        if pending.is_empty() {
            break;
        }
        let prompts = pending
            .iter()
            .map(|&i| build_second_round_prompt(sentence, &known, &entries[i].label_word, control))
            .collect::<Result<Vec<_>>>()?;
        let results = decode_all(scorer, &prompts, &allowed, &config.decode);
        for ((&i, prompt), result) in pending.iter().zip(prompts).zip(results) {
            let result = match result {
                Ok(r) => Some(r),
                Err(e) if config.strict => return Err(e),
                Err(e) => {
                    log::warn!("label `{}`: {e}", entries[i].raw_label);
                    failures += 1;
                    None
                }
            };
            if let Some(r) = &result {
                let entry = &mut entries[i];
                entry.generations.push(r.generated_tokens.clone());
                let values = parse_generation(r, control);
                if !values.is_empty() {
                    entry.values = values;
                    entry.resolved = Resolution::Second;
                }
            }
            calls.push(DecodeCall {
                label_index: i,
                round: Round::Second,
                prompt,
                result,
            });
        }
    }

    Ok(TagOutcome {
        prediction: SlotPrediction { entries },
        calls,
        failures,
    })
}

/// `(first_round, second_round_max)` decode calls for one sentence.
pub fn count_decode_calls(mapping: &LabelMapping, iterative: bool) -> (usize, usize) {
    let m = mapping.len();
    (m, if iterative { m } else { 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{FnScorer, ReferenceLm};
    use std::collections::HashMap;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn fig2() -> Sentence {
        Sentence::parse("book a flight from beijing to new york tomorrow morning").unwrap()
    }

    fn mapping() -> LabelMapping {
        LabelMapping::new([
            ("from.Loc", "departure"),
            ("to.Loc", "arrival"),
            ("Time", "time"),
            ("Price", "price"),
        ])
        .unwrap()
    }

    /// Round one finds departure and time only; the revision prompt for
    /// arrival yields "new york".
    fn fig3_scorer() -> ReferenceLm {
        let c = ControlTokens::default();
        let s = fig2();
        let mut lm = ReferenceLm::default();
        let mut answer = |prompt: Prompt, answer: &str| {
            let mut prefix = prompt.tokens().to_vec();
            for t in toks(answer) {
                lm.insert(&prefix, HashMap::from([(t.clone(), 1.0)]));
                prefix.push(t);
            }
        };
        answer(build_inverse_prompt(&s, "departure"), "beijing .");
        answer(build_inverse_prompt(&s, "arrival"), "none .");
        answer(build_inverse_prompt(&s, "time"), "tomorrow morning .");
        answer(build_inverse_prompt(&s, "price"), "none .");
        let known = vec![
            ("departure".to_string(), vec![toks("beijing")]),
            ("time".to_string(), vec![toks("tomorrow morning")]),
        ];
        answer(
            build_second_round_prompt(&s, &known, "arrival", &c).unwrap(),
            "new york .",
        );
        answer(
            build_second_round_prompt(&s, &known, "price", &c).unwrap(),
            "none .",
        );
        lm
    }

    #[test]
    fn revision_round_queries_only_missing_labels() {
        let c = ControlTokens::default();
        let outcome =
            tag_sentence(&fig3_scorer(), &fig2(), &mapping(), &c, &TagConfig::default()).unwrap();
        let second: Vec<_> = outcome
            .calls
            .iter()
            .filter(|call| call.round == Round::Second)
            .collect();
        assert_eq!(second.len(), 2);
        assert_eq!(
            second[0].prompt.render(),
            "\"book a flight from beijing to new york tomorrow morning\" departure refers to beijing . time refers to tomorrow morning . arrival refers to"
        );
        assert_eq!(second[1].prompt.target_label_word(), "price");

        let p = &outcome.prediction;
        assert_eq!(p.entry("to.Loc").unwrap().values, vec![toks("new york")]);
        assert_eq!(p.entry("to.Loc").unwrap().resolved, Resolution::Second);
        assert_eq!(p.entry("from.Loc").unwrap().resolved, Resolution::First);
        assert_eq!(p.entry("Price").unwrap().resolved, Resolution::Unresolved);
        assert!(p.entry("Price").unwrap().values.is_empty());
    }

    #[test]
    fn non_iterative_makes_m_calls() {
        let c = ControlTokens::default();
        let config = TagConfig {
            iterative: false,
            ..TagConfig::default()
        };
        let outcome = tag_sentence(&fig3_scorer(), &fig2(), &mapping(), &c, &config).unwrap();
        assert_eq!(outcome.calls.len(), 4);
        assert!(outcome.prediction.entry("to.Loc").unwrap().values.is_empty());
        assert_eq!(
            outcome.prediction.entry("to.Loc").unwrap().resolved,
            Resolution::First
        );
    }

    #[test]
    fn nothing_to_revise() {
        let c = ControlTokens::default();
        let scorer = FnScorer::new(|prefix: &[String], cands: &[String]| {
            let want = if prefix.last().is_some_and(|t| t == "to") { "beijing" } else { "." };
            cands.iter().map(|c| if c == want { 1.0 } else { 0.0 }).collect()
        });
        let outcome = tag_sentence(&scorer, &fig2(), &mapping(), &c, &TagConfig::default()).unwrap();
        assert_eq!(outcome.calls.len(), 4);
        assert!(outcome
            .prediction
            .entries
            .iter()
            .all(|e| e.resolved == Resolution::First));
    }

    #[test]
    fn failures_mark_labels_unresolved_unless_strict() {
        let c = ControlTokens::default();
        let scorer = FnScorer::new(|_: &[String], _: &[String]| vec![]);
        let outcome = tag_sentence(&scorer, &fig2(), &mapping(), &c, &TagConfig::default()).unwrap();
        assert_eq!(outcome.failures, 8);
        assert!(outcome
            .prediction
            .entries
            .iter()
            .all(|e| e.resolved == Resolution::Unresolved && e.values.is_empty()));

        let strict = TagConfig {
            strict: true,
            ..TagConfig::default()
        };
        assert!(matches!(
            tag_sentence(&scorer, &fig2(), &mapping(), &c, &strict),
            Err(Error::ScorerFailure(_))
        ));
    }

    #[test]
    fn call_counts() {
        let four = mapping();
        assert_eq!(count_decode_calls(&four, true), (4, 4));
        let empty = LabelMapping::new(Vec::<(String, String)>::new()).unwrap();
        assert_eq!(count_decode_calls(&empty, true), (0, 0));
        let seven = LabelMapping::new((0..7).map(|i| (format!("L{i}"), format!("w{i}")))).unwrap();
        assert_eq!(count_decode_calls(&seven, false), (7, 0));
    }
}
