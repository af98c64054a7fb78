//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use invtag::data::{write_conll, Example};
use invtag::{BioSequence, BioTag, LabelMapping, Sentence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LABELS: [(&str, &str); 5] = [
    ("from.Loc", "departure"),
    ("to.Loc", "arrival"),
    ("Time", "time"),
    ("Price", "price"),
    ("Airline", "airline"),
];

pub fn mapping() -> LabelMapping {
    LabelMapping::new(LABELS).unwrap()
}

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn worked_sentence() -> Sentence {
    Sentence::parse("book a flight from beijing to new york tomorrow morning").unwrap()
}

pub fn worked_mapping() -> LabelMapping {
    LabelMapping::new([
        ("from.Loc", "departure"),
        ("to.Loc", "arrival"),
        ("Time", "time"),
        ("Price", "price"),
    ])
    .unwrap()
}

pub fn worked_gold() -> BioSequence {
    BioSequence::parse(&toks("O O O O B-from.Loc O B-to.Loc I-to.Loc B-Time I-Time")).unwrap()
}

/// Sentences whose tokens are all distinct, so every chunk value occurs
/// exactly once and chunks never overlap. A label may own several chunks.
pub fn synthetic_corpus(seed: u64, sentences: usize) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(sentences);
    for s in 0..sentences {
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        let mut next_word = 0;
        let mut fresh = |rng: &mut ChaCha8Rng| {
            next_word += 1;
            let stem = ["fly", "go", "see", "tix", "bus", "day", "cab"][rng.random_range(0..7)];
            format!("{stem}{s}x{next_word}")
        };
        let segments = rng.random_range(1..=6);
        for _ in 0..segments {
            if rng.random_bool(0.5) {
                for _ in 0..rng.random_range(1..=3) {
                    tokens.push(fresh(&mut rng));
                    tags.push(BioTag::Outside);
                }
            } else {
                let label = LABELS[rng.random_range(0..LABELS.len())].0.to_string();
                for i in 0..rng.random_range(1..=3) {
                    tokens.push(fresh(&mut rng));
                    tags.push(if i == 0 {
                        BioTag::Begin(label.clone())
                    } else {
                        BioTag::Inside(label.clone())
                    });
                }
            }
        }
        out.push(Example {
            sentence: Sentence::new(tokens).unwrap(),
            tags: BioSequence::new(tags),
        });
    }
    out
}

pub fn corpus_conll(examples: &[Example]) -> String {
    write_conll(examples)
}
