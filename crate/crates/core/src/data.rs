//! Corpus loading and K-shot support sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{bio_to_annotation, chunks_from_bio, BioSequence};
use crate::prompting::{LabelMapping, Sentence};

/// A sentence with its gold tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub sentence: Sentence,
    pub tags: BioSequence,
}

impl Example {
    pub fn new(sentence: Sentence, tags: BioSequence) -> Result<Self> {
        if sentence.len() != tags.len() {
            return Err(Error::LengthMismatch {
                expected: sentence.len(),
                found: tags.len(),
            });
        }
        Ok(Self { sentence, tags })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub label_inventory: BTreeSet<String>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Self {
        let label_inventory = examples
            .iter()
            .flat_map(|ex| ex.tags.tags.iter().filter_map(|t| t.label().map(str::to_string)))
            .collect();
        Self {
            examples,
            label_inventory,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self::new(indices.iter().map(|&i| self.examples[i].clone()).collect())
    }
}

/// Parses CoNLL text: one `token<TAB>tag` (or `token tag`) per line, blank
/// lines between sentences.
pub fn parse_conll(text: &str, source: &str, lowercase: bool) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };

    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<crate::labeling::BioTag>| {
        if !tokens.is_empty() {
            let sentence = Sentence::new(std::mem::take(tokens)).expect("validated tokens");
            examples.push(Example {
                sentence,
                tags: BioSequence::new(std::mem::take(tags)),
            });
        }
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags);
            continue;
        }
        let (token, tag) = line
            .split_once('\t')
            .or_else(|| line.split_once(' '))
            .ok_or_else(|| err(line_no, format!("expected `token<TAB>tag`, got `{line}`")))?;
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(err(line_no, format!("malformed token `{token}`")));
        }
        let tag = tag
            .parse()
            .map_err(|_| err(line_no, format!("malformed tag `{tag}`")))?;
        tokens.push(if lowercase {
            token.to_lowercase()
        } else {
            token.to_string()
        });
        tags.push(tag);
    }
    flush(&mut tokens, &mut tags);
    Ok(Dataset::new(examples))
}

pub fn load_conll(path: impl AsRef<Path>, lowercase: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, &path.display().to_string(), lowercase)
}

/// Tab-delimited CoNLL, each sentence followed by a blank line.
pub fn write_conll<'a>(examples: impl IntoIterator<Item = &'a Example>) -> String {
    let mut out = String::new();
    for ex in examples {
        for (token, tag) in ex.sentence.tokens().iter().zip(&ex.tags.tags) {
            out.push_str(token);
            out.push('\t');
            out.push_str(&tag.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// One few-shot episode: a support set to learn from and a query set to tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub domain_name: String,
    pub support: Vec<Example>,
    pub query: Vec<Example>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeFile {
    domain: String,
    episodes: Vec<RawEpisode>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawEpisode {
    support: Vec<RawExample>,
    query: Vec<RawExample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawExample {
    tokens: Vec<String>,
    tags: Vec<String>,
}

impl RawExample {
    fn validate(self, path: &str, source: &str) -> Result<Example> {
        let fail = |json_path: String, message: String| Error::JsonParse {
            path: source.to_string(),
            json_path,
            message,
        };
        let sentence =
            Sentence::new(self.tokens).map_err(|e| fail(format!("{path}.tokens"), e.to_string()))?;
        let mut tags = Vec::with_capacity(self.tags.len());
        for (i, tag) in self.tags.iter().enumerate() {
            tags.push(
                tag.parse()
                    .map_err(|e: Error| fail(format!("{path}.tags[{i}]"), e.to_string()))?,
            );
        }
        Example::new(sentence, BioSequence::new(tags))
            .map_err(|e| fail(format!("{path}.tags"), e.to_string()))
    }
}

/// Parses an episode file:
/// `{"domain": .., "episodes": [{"support": [{"tokens": [..], "tags": [..]}], "query": [..]}]}`.
pub fn parse_episodes(json: &str, source: &str) -> Result<Vec<Episode>> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let file: EpisodeFile = serde_path_to_error::deserialize(de).map_err(|e| Error::JsonParse {
        path: source.to_string(),
        json_path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;

    let mut episodes = Vec::with_capacity(file.episodes.len());
    for (i, raw) in file.episodes.into_iter().enumerate() {
        let convert = |set: Vec<RawExample>, name: &str| -> Result<Vec<Example>> {
            if set.is_empty() {
                return Err(Error::JsonParse {
                    path: source.to_string(),
                    json_path: format!("episodes[{i}].{name}"),
                    message: format!("{name} set is empty"),
                });
            }
            set.into_iter()
                .enumerate()
                .map(|(j, ex)| ex.validate(&format!("episodes[{i}].{name}[{j}]"), source))
                .collect()
        };
        let support = convert(raw.support, "support")?;
        let query = convert(raw.query, "query")?;
        episodes.push(Episode {
            domain_name: file.domain.clone(),
            support,
            query,
        });
    }
    Ok(episodes)
}

pub fn load_episodes(path: impl AsRef<Path>) -> Result<Vec<Episode>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_episodes(&text, &path.display().to_string())
}

/// Indices into the sampled dataset, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    pub indices: Vec<usize>,
}

fn chunk_counts(example: &Example) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for chunk in chunks_from_bio(&example.tags) {
        *counts.entry(chunk.label).or_insert(0) += 1;
    }
    counts
}

/// True when every label of the dataset's inventory has at least `k` chunk
/// occurrences among the selected examples.
pub fn covers(dataset: &Dataset, indices: &[usize], k: usize) -> bool {
    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    for &i in indices {
        for chunk in chunks_from_bio(&dataset.examples[i].tags) {
            *totals.entry(chunk.label).or_insert(0) += 1;
        }
    }
    dataset
        .label_inventory
        .iter()
        .all(|label| totals.get(label).copied().unwrap_or(0) >= k)
}

/// Draws `num_sets` K-shot support sets with greedy minimum-inclusion
/// selection.
///
/// Examples are visited in a seeded random order. While some label has fewer
/// than `k` chunk occurrences, the most deficient label is picked and the
/// example containing it that adds the fewest instances beyond `k` is
/// added. Set `s` uses stream `s` of the seeded generator.
pub fn sample_k_shot(
    dataset: &Dataset,
    k: usize,
    seed: u64,
    num_sets: usize,
) -> Result<Vec<SupportSet>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".to_string()));
    }
    let counts: Vec<BTreeMap<String, usize>> = dataset.examples.iter().map(chunk_counts).collect();
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &counts {
        for (label, n) in c {
            *totals.entry(label.as_str()).or_insert(0) += n;
        }
    }
    if let Some((label, _)) = totals.iter().find(|(_, &n)| n < k) {
        return Err(Error::SupportInfeasible(label.to_string()));
    }

    (0..num_sets)
        .map(|set| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(set as u64);
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            order.shuffle(&mut rng);
            Ok(greedy_fill(&counts, &totals, &order, k))
        })
        .collect()
}

fn greedy_fill(
    counts: &[BTreeMap<String, usize>],
    totals: &BTreeMap<&str, usize>,
    order: &[usize],
    k: usize,
) -> SupportSet {
    let mut have: BTreeMap<&str, usize> = totals.keys().map(|&l| (l, 0)).collect();
    let mut used = vec![false; counts.len()];
    let mut selected = Vec::new();

    loop {
        // ties go to the first label in sorted order
        let mut target: Option<(&str, usize)> = None;
        for (&label, &n) in &have {
            let deficit = k.saturating_sub(n);
            if deficit > 0 && target.is_none_or(|(_, d)| deficit > d) {
                target = Some((label, deficit));
            }
        }
        let Some((target, _)) = target else { break };

        let surplus = |i: usize| -> usize {
            counts[i]
                .iter()
                .map(|(label, &add)| {
                    let before = have[label.as_str()];
                    (before + add).saturating_sub(k) - before.saturating_sub(k)
                })
                .sum()
        };
        let pick = order
            .iter()
            .copied()
            .filter(|&i| !used[i] && counts[i].contains_key(target))
            .min_by_key(|&i| surplus(i))
            .expect("feasibility checked against corpus totals");

        used[pick] = true;
        selected.push(pick);
        for (label, n) in &counts[pick] {
            *have.get_mut(label.as_str()).expect("label in totals") += n;
        }
    }
    selected.sort_unstable();
    SupportSet { indices: selected }
}

/// Gold `(label_word, values)` for every mapping label, in mapping order.
pub fn extract_gold_pairs(
    sentence: &Sentence,
    bio: &BioSequence,
    mapping: &LabelMapping,
) -> Result<Vec<(String, Vec<Vec<String>>)>> {
    bio_to_annotation(sentence, bio)?.grouped(mapping)
}
