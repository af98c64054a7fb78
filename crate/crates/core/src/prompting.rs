//! Prompt construction.
//!
//! Every prompt starts with the quoted sentence followed by a label clause:
//!
//! ```text
//! "book a flight from beijing to new york tomorrow morning" departure refers to
//! ```
//!
//! Answered prompts append the gold answer region (`beijing .`), second-round
//! prompts insert already answered clauses before the target clause.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::decoding::{render_answer, ControlTokens};
use crate::error::{Error, Result};

pub const OPEN_QUOTE: &str = "\"";
pub const CLOSE_QUOTE: &str = "\"";
pub const REFERS: &str = "refers";
pub const TO: &str = "to";

/// A whitespace-tokenized utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidSentence("sentence has no tokens".to_string()));
        }
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::InvalidSentence(format!(
                "token `{bad}` is empty or contains whitespace"
            )));
        }
        Ok(Self { tokens })
    }

    /// Splits `text` on whitespace.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.split_whitespace().map(str::to_string).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn raw_text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn to_lowercase(&self) -> Self {
        Self {
            tokens: self.tokens.iter().map(|t| t.to_lowercase()).collect(),
        }
    }
}

impl TryFrom<Vec<String>> for Sentence {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::new(tokens)
    }
}

impl From<Sentence> for Vec<String> {
    fn from(sentence: Sentence) -> Self {
        sentence.tokens
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw_text())
    }
}

/// One-to-one map from raw dataset labels to the words used in prompts.
///
/// Entry order is significant: prompts, training examples and reverse
/// labeling all follow it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    entries: Vec<(String, String)>,
}

impl LabelMapping {
    pub fn new<I, A, B>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let entries: Vec<(String, String)> = entries
            .into_iter()
            .map(|(a, b)| (a.into(), b.into()))
            .collect();
        let mut raws = HashSet::new();
        let mut words = HashSet::new();
        for (raw, word) in &entries {
            if raw.is_empty() {
                return Err(Error::InvalidMapping("empty raw label".to_string()));
            }
            if word.split_whitespace().next().is_none() {
                return Err(Error::InvalidMapping(format!(
                    "label `{raw}` maps to an empty word"
                )));
            }
            if !raws.insert(raw.as_str()) {
                return Err(Error::InvalidMapping(format!("duplicate raw label `{raw}`")));
            }
            if !words.insert(word.as_str()) {
                return Err(Error::InvalidMapping(format!("duplicate label word `{word}`")));
            }
        }
        Ok(Self { entries })
    }

    /// Parses a JSON object `{raw_label: label_word}` keeping key order.
    pub fn from_json_str(json: &str) -> Result<Self> {
        let ordered: OrderedPairs = serde_json::from_str(json)
            .map_err(|e| Error::InvalidMapping(e.to_string()))?;
        Self::new(ordered.0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let body: Vec<String> = self
            .entries
            .iter()
            .map(|(raw, word)| {
                format!(
                    "{}: {}",
                    serde_json::Value::from(raw.as_str()),
                    serde_json::Value::from(word.as_str())
                )
            })
            .collect();
        format!("{{{}}}", body.join(", "))
    }

    /// Label words must not collide with the control tokens.
    pub fn check_control(&self, control: &ControlTokens) -> Result<()> {
        for (raw, word) in &self.entries {
            if word.split_whitespace().any(|t| control.is_control(t)) {
                return Err(Error::InvalidMapping(format!(
                    "label word `{word}` for `{raw}` contains a control token"
                )));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn raw_labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(raw, _)| raw.as_str())
    }

    pub fn label_words(&self) -> Vec<String> {
        self.entries.iter().map(|(_, word)| word.clone()).collect()
    }

    pub fn word_for(&self, raw_label: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(raw, _)| raw == raw_label)
            .map(|(_, word)| word.as_str())
    }

    pub fn raw_for(&self, label_word: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, word)| word == label_word)
            .map(|(raw, _)| raw.as_str())
    }

    pub fn contains(&self, raw_label: &str) -> bool {
        self.word_for(raw_label).is_some()
    }
}

struct OrderedPairs(Vec<(String, String)>);

impl<'de> Deserialize<'de> for OrderedPairs {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct PairsVisitor;

        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = OrderedPairs;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object of raw label to label word")
            }

            fn visit_map<M: MapAccess<'de>>(self, mut map: M) -> std::result::Result<Self::Value, M::Error> {
                let mut pairs = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    pairs.push((k, v));
                }
                Ok(OrderedPairs(pairs))
            }
        }

        deserializer.deserialize_map(PairsVisitor)
    }
}

/// Converts raw labels to their label words, preserving input order.
pub fn map_labels(labels: &[String], mapping: &LabelMapping) -> Result<Vec<String>> {
    labels
        .iter()
        .map(|label| {
            mapping
                .word_for(label)
                .map(str::to_string)
                .ok_or_else(|| Error::UnknownLabel(label.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Round {
    First,
    Second,
}

impl Round {
    pub fn number(self) -> u8 {
        match self {
            Round::First => 1,
            Round::Second => 2,
        }
    }
}

/// A rendered prompt. `tokens[..answer_start]` is the prompted input; anything
/// after it is the answer region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    tokens: Vec<String>,
    answer_start: usize,
    round: Round,
    target_label_word: String,
    close_quote_at: usize,
}

impl Prompt {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn answer_start(&self) -> usize {
        self.answer_start
    }

    pub fn round(&self) -> Round {
        self.round
    }

    pub fn target_label_word(&self) -> &str {
        &self.target_label_word
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_answered(&self) -> bool {
        self.answer_start < self.tokens.len()
    }

    pub fn input(&self) -> &[String] {
        &self.tokens[..self.answer_start]
    }

    pub fn answer(&self) -> &[String] {
        &self.tokens[self.answer_start..]
    }

    /// Loss mask for an external trainer: true exactly on the answer region.
    pub fn loss_mask(&self) -> Vec<bool> {
        (0..self.tokens.len()).map(|i| i >= self.answer_start).collect()
    }

    /// Appends an answer region (`v1 ; v2 .` or `none .`).
    pub fn with_answer(mut self, values: &[Vec<String>], control: &ControlTokens) -> Self {
        self.tokens.truncate(self.answer_start);
        self.tokens.extend(render_answer(values, control));
        self
    }

    /// Human-readable text with the quotes attached to the sentence.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, token) in self.tokens.iter().enumerate() {
            let glue = i == 0 || i == 1 || i == self.close_quote_at;
            if !glue {
                out.push(' ');
            }
            out.push_str(token);
        }
        out
    }
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn quoted_sentence(sentence: &Sentence) -> Vec<String> {
    let mut tokens = Vec::with_capacity(sentence.len() + 2);
    tokens.push(OPEN_QUOTE.to_string());
    tokens.extend(sentence.tokens().iter().cloned());
    tokens.push(CLOSE_QUOTE.to_string());
    tokens
}

fn push_clause_head(tokens: &mut Vec<String>, label_word: &str) {
    tokens.extend(label_word.split_whitespace().map(str::to_string));
    tokens.push(REFERS.to_string());
    tokens.push(TO.to_string());
}

pub fn build_inverse_prompt(sentence: &Sentence, label_word: &str) -> Prompt {
    let mut tokens = quoted_sentence(sentence);
    push_clause_head(&mut tokens, label_word);
    Prompt {
        answer_start: tokens.len(),
        tokens,
        round: Round::First,
        target_label_word: label_word.to_string(),
        close_quote_at: sentence.len() + 1,
    }
}

/// One first-round prompt per label word, in the given order.
pub fn build_inverse_prompts(sentence: &Sentence, label_words: &[String]) -> Vec<Prompt> {
    label_words
        .iter()
        .map(|word| build_inverse_prompt(sentence, word))
        .collect()
}

pub fn build_answered_prompt(
    sentence: &Sentence,
    label_word: &str,
    values: &[Vec<String>],
    control: &ControlTokens,
) -> Prompt {
    build_inverse_prompt(sentence, label_word).with_answer(values, control)
}

/// Quoted sentence, one answered clause per `known` pair, then the open
/// target clause.
pub fn build_second_round_prompt(
    sentence: &Sentence,
    known: &[(String, Vec<Vec<String>>)],
    target_label_word: &str,
    control: &ControlTokens,
) -> Result<Prompt> {
    if known.iter().any(|(word, _)| word == target_label_word) {
        return Err(Error::DuplicateTarget(target_label_word.to_string()));
    }
    let mut tokens = quoted_sentence(sentence);
    for (word, values) in known {
        push_clause_head(&mut tokens, word);
        tokens.extend(render_answer(values, control));
    }
    push_clause_head(&mut tokens, target_label_word);
    Ok(Prompt {
        answer_start: tokens.len(),
        tokens,
        round: Round::Second,
        target_label_word: target_label_word.to_string(),
        close_quote_at: sentence.len() + 1,
    })
}

/// Gold or predicted (raw label, value) pairs of one sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotAnnotation {
    pub pairs: Vec<(String, Vec<String>)>,
}

impl SlotAnnotation {
    pub fn new(pairs: Vec<(String, Vec<String>)>) -> Self {
        Self { pairs }
    }

    /// Values of `raw_label` in annotation order.
    pub fn values_for(&self, raw_label: &str) -> Vec<Vec<String>> {
        self.pairs
            .iter()
            .filter(|(label, _)| label == raw_label)
            .map(|(_, value)| value.clone())
            .collect()
    }

    /// `(label_word, values)` for every mapping entry, in mapping order.
    pub fn grouped(&self, mapping: &LabelMapping) -> Result<Vec<(String, Vec<Vec<String>>)>> {
        if let Some((label, _)) = self.pairs.iter().find(|(l, _)| !mapping.contains(l)) {
            return Err(Error::UnknownLabel(label.clone()));
        }
        Ok(mapping
            .entries()
            .iter()
            .map(|(raw, word)| (word.clone(), self.values_for(raw)))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalPromptMode {
    /// `"x" span is a`: the model fills in the label word.
    Spans,
    /// `"x" span is a label entity`: one prompt per span and label.
    PerLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalPrompts {
    pub count: usize,
    pub prompts: Option<Vec<Vec<String>>>,
}

/// Number of n-gram spans of an `n`-token sentence.
pub fn span_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// The span-enumeration baseline, kept for prompt counting.
pub fn build_normal_prompts(
    sentence: &Sentence,
    label_words: &[String],
    mode: NormalPromptMode,
    enumerate: bool,
) -> NormalPrompts {
    let n = sentence.len();
    let count = match mode {
        NormalPromptMode::Spans => span_count(n),
        NormalPromptMode::PerLabel => span_count(n) * label_words.len(),
    };
    if !enumerate {
        return NormalPrompts {
            count,
            prompts: None,
        };
    }

    let base = quoted_sentence(sentence);
    let mut prompts = Vec::with_capacity(count);
    for start in 0..n {
        for end in start..n {
            let mut head = base.clone();
            head.extend(sentence.tokens()[start..=end].iter().cloned());
            head.push("is".to_string());
            head.push("a".to_string());
            match mode {
                NormalPromptMode::Spans => prompts.push(head),
                NormalPromptMode::PerLabel => {
                    for word in label_words {
                        let mut p = head.clone();
                        p.extend(word.split_whitespace().map(str::to_string));
                        p.push("entity".to_string());
                        prompts.push(p);
                    }
                }
            }
        }
    }
    NormalPrompts {
        count,
        prompts: Some(prompts),
    }
}

/// A masked sequence for an external trainer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub tokens: Vec<String>,
    pub loss_mask: Vec<bool>,
    pub answer_start: usize,
    pub round: Round,
    pub target_label_word: String,
}

impl From<Prompt> for TrainingExample {
    fn from(prompt: Prompt) -> Self {
        Self {
            loss_mask: prompt.loss_mask(),
            answer_start: prompt.answer_start,
            round: prompt.round,
            target_label_word: prompt.target_label_word,
            tokens: prompt.tokens,
        }
    }
}

pub const DEFAULT_WITHHOLD_PROB: f64 = 0.5;

/// Answered first-round prompts for every mapping label, followed by
/// second-round prompts for occurred labels withheld at random.
///
/// Each occurred label is withheld independently with `withhold_prob`. Every
/// withheld label gets its own second-round example whose context lists all
/// labels that were not withheld, none-valued ones included.
pub fn emit_training_examples(
    sentence: &Sentence,
    annotation: &SlotAnnotation,
    mapping: &LabelMapping,
    control: &ControlTokens,
    rng_seed: u64,
    withhold_prob: f64,
) -> Result<Vec<TrainingExample>> {
    if !(0.0..=1.0).contains(&withhold_prob) {
        return Err(Error::InvalidArgument(format!(
            "withhold_prob {withhold_prob} is outside [0, 1]"
        )));
    }
    let grouped = annotation.grouped(mapping)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let withheld: Vec<bool> = grouped
        .iter()
        .map(|(_, values)| !values.is_empty() && rng.random_bool(withhold_prob))
        .collect();
    training_examples_with_withheld(sentence, &grouped, &withheld, control)
}

/// Training examples for an explicit choice of withheld labels.
///
/// `grouped` holds `(label_word, values)` in mapping order and `withheld`
/// flags the entries that become second-round targets.
pub fn training_examples_with_withheld(
    sentence: &Sentence,
    grouped: &[(String, Vec<Vec<String>>)],
    withheld: &[bool],
    control: &ControlTokens,
) -> Result<Vec<TrainingExample>> {
    if grouped.len() != withheld.len() {
        return Err(Error::LengthMismatch {
            expected: grouped.len(),
            found: withheld.len(),
        });
    }
    let mut out: Vec<TrainingExample> = grouped
        .iter()
        .map(|(word, values)| build_answered_prompt(sentence, word, values, control).into())
        .collect();

    let context: Vec<(String, Vec<Vec<String>>)> = grouped
        .iter()
        .zip(withheld)
        .filter(|(_, &w)| !w)
        .map(|(pair, _)| pair.clone())
        .collect();

    for ((word, values), _) in grouped.iter().zip(withheld).filter(|(_, &w)| w) {
        let prompt = build_second_round_prompt(sentence, &context, word, control)?
            .with_answer(values, control);
        out.push(prompt.into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::parse_answer_tokens;

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

    fn gold() -> SlotAnnotation {
        SlotAnnotation::new(vec![
            ("from.Loc".into(), toks("beijing")),
            ("to.Loc".into(), toks("new york")),
            ("Time".into(), toks("tomorrow morning")),
        ])
    }

    #[test]
    fn sentence_validation() {
        assert!(Sentence::new(vec![]).is_err());
        assert!(Sentence::new(vec!["a b".into()]).is_err());
        assert_eq!(fig2().len(), 10);
        assert_eq!(
            fig2().raw_text(),
            "book a flight from beijing to new york tomorrow morning"
        );
    }

    #[test]
    fn maps_labels_in_order() {
        let labels: Vec<String> = ["from.Loc", "to.Loc", "Time", "Price"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            map_labels(&labels, &mapping()).unwrap(),
            toks("departure arrival time price")
        );
        assert!(map_labels(&[], &mapping()).unwrap().is_empty());
        let partial = LabelMapping::new([("from.Loc", "departure")]).unwrap();
        assert!(matches!(
            map_labels(&["Time".to_string()], &partial),
            Err(Error::UnknownLabel(l)) if l == "Time"
        ));
    }

    #[test]
    fn mapping_must_be_bijective() {
        assert!(LabelMapping::new([("a", "x"), ("a", "y")]).is_err());
        assert!(LabelMapping::new([("a", "x"), ("b", "x")]).is_err());
        assert!(LabelMapping::new([("a", " ")]).is_err());
        let m = LabelMapping::new([("a", "none")]).unwrap();
        assert!(m.check_control(&ControlTokens::default()).is_err());
    }

    #[test]
    fn mapping_json_keeps_key_order() {
        let m = LabelMapping::from_json_str(
            r#"{"to.Loc": "arrival", "from.Loc": "departure", "Time": "time"}"#,
        )
        .unwrap();
        assert_eq!(m.label_words(), toks("arrival departure time"));
        assert!(LabelMapping::from_json_str(r#"{"a": "x", "a": "y"}"#).is_err());
        assert!(LabelMapping::from_json_str("[1]").is_err());
        assert_eq!(LabelMapping::from_json_str(&m.to_json_string()).unwrap(), m);
    }

    #[test]
    fn inverse_prompts() {
        let prompts = build_inverse_prompts(&fig2(), &mapping().label_words());
        assert_eq!(prompts.len(), 4);
        assert_eq!(
            prompts[0].render(),
            "\"book a flight from beijing to new york tomorrow morning\" departure refers to"
        );
        assert_eq!(prompts[0].answer_start(), prompts[0].len());
        assert!(!prompts[0].is_answered());
        assert!(build_inverse_prompts(&fig2(), &[]).is_empty());
    }

    #[test]
    fn answered_prompts() {
        let c = ControlTokens::default();
        let p = build_answered_prompt(&fig2(), "departure", &[toks("beijing")], &c);
        assert_eq!(
            p.render(),
            "\"book a flight from beijing to new york tomorrow morning\" departure refers to beijing ."
        );
        assert_eq!(p.tokens()[p.answer_start()], "beijing");
        let p = build_answered_prompt(&fig2(), "price", &[], &c);
        assert!(p.render().ends_with("price refers to none ."));
        let p = build_answered_prompt(&fig2(), "time", &[toks("tomorrow morning")], &c);
        assert!(p.render().ends_with("time refers to tomorrow morning ."));
        assert_eq!(parse_answer_tokens(p.answer(), &c), vec![toks("tomorrow morning")]);
    }

    #[test]
    fn second_round_prompts() {
        let c = ControlTokens::default();
        let known = vec![
            ("departure".to_string(), vec![toks("beijing")]),
            ("time".to_string(), vec![toks("tomorrow morning")]),
        ];
        let p = build_second_round_prompt(&fig2(), &known, "arrival", &c).unwrap();
        assert_eq!(
            p.render(),
            "\"book a flight from beijing to new york tomorrow morning\" departure refers to beijing . time refers to tomorrow morning . arrival refers to"
        );
        assert_eq!(p.round(), Round::Second);

        let empty = build_second_round_prompt(&fig2(), &[], "price", &c).unwrap();
        assert_eq!(empty.tokens(), build_inverse_prompt(&fig2(), "price").tokens());

        assert!(matches!(
            build_second_round_prompt(&fig2(), &known[..1], "departure", &c),
            Err(Error::DuplicateTarget(_))
        ));
    }

    #[test]
    fn normal_prompt_counts() {
        let s = fig2();
        let spans = build_normal_prompts(&s, &[], NormalPromptMode::Spans, true);
        assert_eq!(spans.count, 55);
        assert_eq!(spans.prompts.unwrap().len(), 55);

        let per_label =
            build_normal_prompts(&s, &mapping().label_words(), NormalPromptMode::PerLabel, true);
        assert_eq!(per_label.count, 220);
        let prompts = per_label.prompts.unwrap();
        let distinct: HashSet<_> = prompts.iter().collect();
        assert_eq!(distinct.len(), 220);
        assert!(prompts
            .iter()
            .any(|p| p.join(" ").ends_with("tomorrow morning is a time entity")));

        let one = Sentence::parse("hi").unwrap();
        assert_eq!(
            build_normal_prompts(&one, &toks("x"), NormalPromptMode::Spans, false).count,
            1
        );
    }

    #[test]
    fn training_examples_without_withholding() {
        let c = ControlTokens::default();
        let out = emit_training_examples(&fig2(), &gold(), &mapping(), &c, 7, 0.0).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|e| e.round == Round::First));
        for e in &out {
            assert_eq!(e.loss_mask.len(), e.tokens.len());
            for (i, m) in e.loss_mask.iter().enumerate() {
                assert_eq!(*m, i >= e.answer_start);
            }
            assert_eq!(e.tokens.last().unwrap(), ".");
        }
    }

    #[test]
    fn training_examples_with_full_withholding() {
        let c = ControlTokens::default();
        let out = emit_training_examples(&fig2(), &gold(), &mapping(), &c, 7, 1.0).unwrap();
        // three occurred labels, each withheld with its own example
        assert_eq!(out.len(), 7);
        let second: Vec<_> = out.iter().filter(|e| e.round == Round::Second).collect();
        assert_eq!(second.len(), 3);
        // only price (none) remains in the context
        assert_eq!(
            second[1].tokens.join(" "),
            "\" book a flight from beijing to new york tomorrow morning \" price refers to none . arrival refers to new york ."
        );
    }

    #[test]
    fn withheld_arrival_example() {
        let c = ControlTokens::default();
        let grouped = gold().grouped(&mapping()).unwrap();
        let out =
            training_examples_with_withheld(&fig2(), &grouped, &[false, true, false, false], &c)
                .unwrap();
        assert_eq!(out.len(), 5);
        let e = &out[4];
        assert_eq!(
            e.tokens.join(" "),
            "\" book a flight from beijing to new york tomorrow morning \" departure refers to beijing . time refers to tomorrow morning . price refers to none . arrival refers to new york ."
        );
        let masked: Vec<&str> = e
            .tokens
            .iter()
            .zip(&e.loss_mask)
            .filter(|(_, &m)| m)
            .map(|(t, _)| t.as_str())
            .collect();
        assert_eq!(masked, vec!["new", "york", "."]);
    }

    #[test]
    fn training_examples_are_deterministic() {
        let c = ControlTokens::default();
        let a = emit_training_examples(&fig2(), &gold(), &mapping(), &c, 42, 0.5).unwrap();
        let b = emit_training_examples(&fig2(), &gold(), &mapping(), &c, 42, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(emit_training_examples(&fig2(), &gold(), &mapping(), &c, 1, 1.5).is_err());
        let unknown = SlotAnnotation::new(vec![("Food".into(), toks("pizza"))]);
        assert!(matches!(
            emit_training_examples(&fig2(), &unknown, &mapping(), &c, 1, 0.5),
            Err(Error::UnknownLabel(_))
        ));
    }
}
