//! Replay of frozen fixture cases.
//!
//! A fixture directory holds one JSON file per case:
//!
//! ```json
//! {"name": "...", "kind": "inverse_prompts", "provenance": "PAPER",
//!  "oracle": "...", "input": {...}, "expected": {...}}
//! ```
//!
//! `oracle` is required for `DERIVED` cases and names how the expected
//! output was produced. Replaying a case runs its input through the public
//! API and compares the canonical JSON serialization of the result with
//! `expected`, byte for byte.

use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::data::{extract_gold_pairs, parse_conll};
use crate::decoding::ControlTokens;
use crate::error::{Error, Result};
use crate::evaluation::{chunk_f1, EfficiencyReport};
use crate::labeling::{apply_reverse_labeling, bio_to_annotation, BioSequence, OccurrencePolicy};
use crate::lm::reference_from_gold;
use crate::pipeline::{tag_sentence, Resolution, SlotEntry, SlotPrediction, TagConfig};
use crate::prompting::{
    build_answered_prompt, build_inverse_prompts, build_second_round_prompt,
    emit_training_examples, LabelMapping, Sentence,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Provenance {
    #[serde(rename = "PAPER")]
    Paper,
    #[serde(rename = "TRIVIAL")]
    Trivial,
    #[serde(rename = "DERIVED")]
    Derived,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FixtureCase {
    pub name: String,
    pub kind: String,
    pub provenance: Provenance,
    #[serde(default)]
    pub oracle: Option<String>,
    pub input: Value,
    pub expected: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureSummary {
    pub passed: Vec<String>,
    pub failed: Vec<(String, String)>,
}

#[derive(Deserialize)]
struct SentenceMapping {
    sentence: String,
    mapping: Vec<(String, String)>,
}

#[derive(Deserialize)]
struct AnsweredInput {
    sentence: String,
    mapping: Vec<(String, String)>,
    tags: Vec<String>,
}

#[derive(Deserialize)]
struct SecondRoundInput {
    sentence: String,
    known: Vec<(String, Vec<Vec<String>>)>,
    targets: Vec<String>,
}

#[derive(Deserialize)]
struct TrainingInput {
    sentence: String,
    mapping: Vec<(String, String)>,
    tags: Vec<String>,
    seed: u64,
    withhold_prob: f64,
}

#[derive(Deserialize)]
struct ReverseInput {
    sentence: String,
    prediction: Vec<(String, Vec<Vec<String>>)>,
    #[serde(default)]
    policy: OccurrencePolicy,
}

#[derive(Deserialize)]
struct ChunkCase {
    gold: Vec<Vec<String>>,
    pred: Vec<Vec<String>>,
}

#[derive(Deserialize)]
struct ChunkInput {
    cases: Vec<ChunkCase>,
}

#[derive(Deserialize)]
struct EndToEndInput {
    mapping: Vec<(String, String)>,
    conll: String,
    iterative: bool,
}

#[derive(Deserialize)]
struct EfficiencyInput {
    n: usize,
    m: usize,
    iterative: bool,
}

fn input<T: for<'de> Deserialize<'de>>(case: &FixtureCase) -> Result<T> {
    serde_json::from_value(case.input.clone())
        .map_err(|e| Error::FixtureMismatch(format!("{}: bad input: {e}", case.name)))
}

fn parse_sequences(seqs: &[Vec<String>]) -> Result<Vec<BioSequence>> {
    seqs.iter().map(|s| BioSequence::parse(s)).collect()
}

/// Runs a case through the public API and returns its output.
pub fn replay(case: &FixtureCase) -> Result<Value> {
    let control = ControlTokens::default();
    let value = match case.kind.as_str() {
        "inverse_prompts" => {
            let i: SentenceMapping = input(case)?;
            let sentence = Sentence::parse(&i.sentence)?;
            let mapping = LabelMapping::new(i.mapping)?;
            let prompts: Vec<String> = build_inverse_prompts(&sentence, &mapping.label_words())
                .iter()
                .map(|p| p.render())
                .collect();
            json!({ "prompts": prompts })
        }
        "answered_prompts" => {
            let i: AnsweredInput = input(case)?;
            let sentence = Sentence::parse(&i.sentence)?;
            let mapping = LabelMapping::new(i.mapping)?;
            let bio = BioSequence::parse(&i.tags)?;
            let prompts: Vec<String> = extract_gold_pairs(&sentence, &bio, &mapping)?
                .iter()
                .map(|(word, values)| {
                    build_answered_prompt(&sentence, word, values, &control).render()
                })
                .collect();
            json!({ "prompts": prompts })
        }
        "second_round_prompts" => {
            let i: SecondRoundInput = input(case)?;
            let sentence = Sentence::parse(&i.sentence)?;
            let prompts = i
                .targets
                .iter()
                .map(|t| build_second_round_prompt(&sentence, &i.known, t, &control).map(|p| p.render()))
                .collect::<Result<Vec<_>>>()?;
            json!({ "prompts": prompts })
        }
        "training_examples" => {
            let i: TrainingInput = input(case)?;
            let sentence = Sentence::parse(&i.sentence)?;
            let mapping = LabelMapping::new(i.mapping)?;
            let annotation = bio_to_annotation(&sentence, &BioSequence::parse(&i.tags)?)?;
            let examples = emit_training_examples(
                &sentence,
                &annotation,
                &mapping,
                &control,
                i.seed,
                i.withhold_prob,
            )?;
            let records: Vec<Value> = examples
                .iter()
                .map(|e| {
                    json!({
                        "round": e.round.number(),
                        "input": e.tokens[..e.answer_start].join(" "),
                        "answer": e.tokens[e.answer_start..].join(" "),
                    })
                })
                .collect();
            json!({ "examples": records })
        }
        "reverse_labeling" => {
            let i: ReverseInput = input(case)?;
            let sentence = Sentence::parse(&i.sentence)?;
            let prediction = SlotPrediction {
                entries: i
                    .prediction
                    .into_iter()
                    .map(|(label, values)| SlotEntry {
                        label_word: label.clone(),
                        raw_label: label,
                        values,
                        resolved: Resolution::First,
                        generations: Vec::new(),
                    })
                    .collect(),
            };
            let tags = apply_reverse_labeling(&sentence, &prediction, i.policy);
            json!({ "tags": tags.to_strings() })
        }
        "chunk_f1" => {
            let i: ChunkInput = input(case)?;
            let reports = i
                .cases
                .iter()
                .map(|c| {
                    let r = chunk_f1(&parse_sequences(&c.gold)?, &parse_sequences(&c.pred)?)?;
                    Ok(json!({
                        "precision": format!("{:.4}", r.precision),
                        "recall": format!("{:.4}", r.recall),
                        "f1": format!("{:.4}", r.f1),
                        "gold_chunks": r.gold_chunks,
                        "pred_chunks": r.pred_chunks,
                        "correct_chunks": r.correct_chunks,
                    }))
                })
                .collect::<Result<Vec<_>>>()?;
            json!({ "reports": reports })
        }
        "end_to_end" => {
            let i: EndToEndInput = input(case)?;
            let mapping = LabelMapping::new(i.mapping)?;
            let dataset = parse_conll(&i.conll, &case.name, false)?;
            let examples = dataset
                .examples
                .iter()
                .map(|ex| Ok((ex.sentence.clone(), bio_to_annotation(&ex.sentence, &ex.tags)?)))
                .collect::<Result<Vec<_>>>()?;
            let lm = reference_from_gold(&examples, &mapping, &control)?;
            let config = TagConfig {
                iterative: i.iterative,
                ..TagConfig::default()
            };
            let mut predicted = Vec::new();
            for ex in &dataset.examples {
                let outcome = tag_sentence(&lm, &ex.sentence, &mapping, &control, &config)?;
                predicted.push(apply_reverse_labeling(
                    &ex.sentence,
                    &outcome.prediction,
                    OccurrencePolicy::All,
                ));
            }
            let gold: Vec<BioSequence> = dataset.examples.iter().map(|e| e.tags.clone()).collect();
            let f1 = chunk_f1(&gold, &predicted)?.f1;
            json!({
                "tags": predicted.iter().map(BioSequence::to_strings).collect::<Vec<_>>(),
                "f1": format!("{f1:.4}"),
            })
        }
        "efficiency" => {
            let i: EfficiencyInput = input(case)?;
            serde_json::to_value(EfficiencyReport::from_counts(i.n, i.m, i.iterative))
                .expect("report serializes")
        }
        other => {
            return Err(Error::FixtureMismatch(format!(
                "{}: unknown kind `{other}`",
                case.name
            )))
        }
    };
    Ok(value)
}

/// Checks a single case, returning a description of the first difference.
pub fn check(case: &FixtureCase) -> std::result::Result<(), String> {
    if case.provenance == Provenance::Derived && case.oracle.as_deref().is_none_or(str::is_empty) {
        return Err("DERIVED fixture without an oracle note".to_string());
    }
    let actual = replay(case).map_err(|e| e.to_string())?;
    let actual = serde_json::to_string(&actual).expect("value serializes");
    let expected = serde_json::to_string(&case.expected).expect("value serializes");
    if actual == expected {
        Ok(())
    } else {
        Err(format!("expected {expected}\n  actual {actual}"))
    }
}

pub fn load_case(path: &Path) -> Result<FixtureCase> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::JsonParse {
        path: path.display().to_string(),
        json_path: String::new(),
        message: e.to_string(),
    })
}

/// Replays every `*.json` case in `dir`, in file-name order.
///
/// Returns `FixtureMismatch` naming every failing case if any fails.
pub fn verify_fixtures(dir: impl AsRef<Path>) -> Result<FixtureSummary> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::FixtureMismatch(format!(
            "no fixtures found in {}",
            dir.display()
        )));
    }

    let mut summary = FixtureSummary::default();
    for path in paths {
        let case = load_case(&path)?;
        match check(&case) {
            Ok(()) => summary.passed.push(case.name),
            Err(reason) => {
                log::error!("fixture {} failed: {reason}", case.name);
                summary.failed.push((case.name, reason));
            }
        }
    }
    if summary.failed.is_empty() {
        Ok(summary)
    } else {
        let names: Vec<_> = summary.failed.iter().map(|(n, _)| n.as_str()).collect();
        Err(Error::FixtureMismatch(names.join(", ")))
    }
}
