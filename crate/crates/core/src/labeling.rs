//! BIO tags, chunk extraction and reverse labeling of generated values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::SlotPrediction;
use crate::prompting::{Sentence, SlotAnnotation};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BioTag {
    Outside,
    Begin(String),
    Inside(String),
}

impl BioTag {
    pub fn label(&self) -> Option<&str> {
        match self {
            BioTag::Outside => None,
            BioTag::Begin(l) | BioTag::Inside(l) => Some(l),
        }
    }
}

impl FromStr for BioTag {
    type Err = Error;

    /// `O`, `B-<label>` or `I-<label>`; the label is everything after the
    /// first hyphen.
    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(BioTag::Outside);
        }
        match s.split_once('-') {
            Some(("B", label)) if !label.is_empty() => Ok(BioTag::Begin(label.to_string())),
            Some(("I", label)) if !label.is_empty() => Ok(BioTag::Inside(label.to_string())),
            _ => Err(Error::InvalidTag(s.to_string())),
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::Outside => f.write_str("O"),
            BioTag::Begin(l) => write!(f, "B-{l}"),
            BioTag::Inside(l) => write!(f, "I-{l}"),
        }
    }
}

impl Serialize for BioTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BioTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-token tags. Orphan `I-` tags are allowed; [`chunks_from_bio`] repairs
/// them the way conlleval does.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BioSequence {
    pub tags: Vec<BioTag>,
}

impl BioSequence {
    pub fn new(tags: Vec<BioTag>) -> Self {
        Self { tags }
    }

    pub fn outside(len: usize) -> Self {
        Self {
            tags: vec![BioTag::Outside; len],
        }
    }

    pub fn parse<S: AsRef<str>>(tags: &[S]) -> Result<Self> {
        tags.iter()
            .map(|t| t.as_ref().parse())
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.tags.iter().map(ToString::to_string).collect()
    }

    pub fn chunks(&self) -> Vec<Chunk> {
        chunks_from_bio(self)
    }
}

/// A labeled span; `end` is inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chunk {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// Segments a tag sequence into chunks with conlleval semantics.
///
/// A chunk starts at `B-x`, or at `I-x` when the previous tag is `O`, has a
/// different label, or there is no previous tag. It extends over the
/// following `I-x` tags.
pub fn chunks_from_bio(bio: &BioSequence) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    let mut open: Option<(&str, usize)> = None;
    for (i, tag) in bio.tags.iter().enumerate() {
        let continues = matches!((tag, open), (BioTag::Inside(l), Some((cur, _))) if l == cur);
        if continues {
            continue;
        }
        if let Some((label, start)) = open.take() {
            chunks.push(Chunk {
                label: label.to_string(),
                start,
                end: i - 1,
            });
        }
        if let Some(label) = tag.label() {
            open = Some((label, i));
        }
    }
    if let Some((label, start)) = open {
        chunks.push(Chunk {
            label: label.to_string(),
            start,
            end: bio.len() - 1,
        });
    }
    chunks
}

/// Chunk values copied from the sentence, in sentence order.
pub fn bio_to_annotation(sentence: &Sentence, bio: &BioSequence) -> Result<SlotAnnotation> {
    if sentence.len() != bio.len() {
        return Err(Error::LengthMismatch {
            expected: sentence.len(),
            found: bio.len(),
        });
    }
    Ok(SlotAnnotation::new(
        chunks_from_bio(bio)
            .into_iter()
            .map(|c| (c.label, sentence.tokens()[c.start..=c.end].to_vec()))
            .collect(),
    ))
}

/// Which occurrences of a generated value get labeled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccurrencePolicy {
    /// Every occurrence that does not overlap an already labeled token.
    #[default]
    All,
    /// Only the leftmost such occurrence.
    FirstOnly,
}

/// Maps generated values back onto the sentence as BIO tags.
///
/// Values are matched as whole contiguous token sequences; partial matches
/// label nothing. Labels are visited in prediction order and values in
/// generation order. Once a token is labeled it is never relabeled, so any
/// later occurrence touching it is skipped.
pub fn apply_reverse_labeling(
    sentence: &Sentence,
    prediction: &SlotPrediction,
    policy: OccurrencePolicy,
) -> BioSequence {
    let tokens = sentence.tokens();
    let mut tags = vec![BioTag::Outside; tokens.len()];
    let mut taken = vec![false; tokens.len()];

    for entry in &prediction.entries {
        for value in &entry.values {
            let len = value.len();
            if len == 0 || len > tokens.len() {
                continue;
            }
            for start in 0..=tokens.len() - len {
                let span = start..start + len;
                if tokens[span.clone()] != value[..] || taken[span.clone()].iter().any(|&t| t) {
                    continue;
                }
                for i in span {
                    taken[i] = true;
                    tags[i] = if i == start {
                        BioTag::Begin(entry.raw_label.clone())
                    } else {
                        BioTag::Inside(entry.raw_label.clone())
                    };
                }
                if policy == OccurrencePolicy::FirstOnly {
                    break;
                }
            }
        }
    }
    BioSequence::new(tags)
}
