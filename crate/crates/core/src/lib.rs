//! Few-shot slot tagging with inverse prompts.
//!
//! Instead of asking a language model which label a span carries, every slot
//! type is turned into a prompt of the form
//!
//! ```text
//! "book a flight from beijing to new york tomorrow morning" arrival refers to
//! ```
//!
//! and the model generates the slot value, restricted to words of the source
//! sentence plus three control tokens (`none`, `;`, `.`). Labels left empty in
//! the first round can be revisited in a second round that conditions on the
//! slots already found. Generated values are mapped back to BIO tags and scored
//! with conlleval-compatible chunk F1.
//!
//! The crate is organised by stage:
//!
//! * [`prompting`]: label mappings, inverse/answered/second-round prompts and
//!   training-example emission for an external trainer.
//! * [`decoding`]: vocabulary-constrained greedy decoding and answer parsing.
//! * [`lm`]: the scorer abstraction, a gold-table reference scorer and an HTTP
//!   client for remote scorers.
//! * [`pipeline`]: two-round tagging of a sentence.
//! * [`labeling`]: reverse labeling and BIO chunk extraction.
//! * [`evaluation`]: chunk F1, episode scoring and prompt-count comparison.
//! * [`data`]: CoNLL and episode loading, K-shot sampling.
//! * [`fixtures`]: replay of the frozen fixture cases.
//! * [`cli`]: the `invtag` command-line tool.

pub mod cli;
pub mod data;
pub mod decoding;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod labeling;
pub mod lm;
pub mod pipeline;
pub mod prompting;

pub use decoding::{AllowedTokens, ControlTokens, DecodeConfig, GenerationResult};
pub use error::{Error, Result};
pub use labeling::{BioSequence, BioTag, Chunk};
pub use lm::{LmScorer, ReferenceLm, RemoteLm};
pub use prompting::{LabelMapping, Prompt, Round, Sentence, SlotAnnotation};
