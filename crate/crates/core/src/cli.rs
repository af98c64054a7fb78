//! The `invtag` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 scorer failure in
//! strict mode.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_conll, parse_conll, sample_k_shot, write_conll, Dataset};
use crate::decoding::{ControlTokens, DecodeConfig};
use crate::error::{Error, Result};
use crate::evaluation::{chunk_f1, EfficiencyReport, EvalReport};
use crate::labeling::{apply_reverse_labeling, bio_to_annotation, BioSequence, OccurrencePolicy};
use crate::lm::{reference_from_gold, LmScorer, RemoteLm};
use crate::pipeline::{tag_sentence, Resolution, TagConfig};
use crate::prompting::{emit_training_examples, LabelMapping, DEFAULT_WITHHOLD_PROB};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SCORER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "invtag", version, about = "Few-shot slot tagging with inverse prompts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample K-shot support sets from a CoNLL corpus.
    Sample(SampleArgs),
    /// Emit masked training sequences as JSON lines.
    EmitTrain(EmitTrainArgs),
    /// Tag a CoNLL file and write predictions as JSON lines.
    Tag(TagArgs),
    /// Chunk F1 of predictions against gold tags.
    Eval(EvalArgs),
    /// Compare prompt counts of span enumeration and inverse prompting.
    Bench(BenchArgs),
    /// Replay the frozen fixture cases in a directory.
    VerifyFixtures(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "num-sets", default_value_t = 10)]
    pub num_sets: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lowercase: bool,
}

#[derive(Debug, Args)]
pub struct EmitTrainArgs {
    #[arg(long)]
    pub support: PathBuf,
    #[arg(long)]
    pub mapping: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "withhold-prob", default_value_t = DEFAULT_WITHHOLD_PROB)]
    pub withhold_prob: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lowercase: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    /// Lookup table built from gold tags.
    Reference,
    /// HTTP scorer at `--endpoint`.
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Occurrences {
    All,
    FirstOnly,
}

impl From<Occurrences> for OccurrencePolicy {
    fn from(o: Occurrences) -> Self {
        match o {
            Occurrences::All => OccurrencePolicy::All,
            Occurrences::FirstOnly => OccurrencePolicy::FirstOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct TagArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub mapping: PathBuf,
    /// Gold file for the reference scorer; defaults to `--input`.
    #[arg(long)]
    pub support: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScorerKind::Reference)]
    pub scorer: ScorerKind,
    #[arg(long, env = "INVTAG_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub iterative: bool,
    #[arg(long = "max-gen", default_value_t = DecodeConfig::DEFAULT_MAX_GENERATED_TOKENS)]
    pub max_gen: usize,
    #[arg(long)]
    pub strict: bool,
    /// Retries per remote scorer call.
    #[arg(long, default_value_t = RemoteLm::DEFAULT_RETRY_LIMIT)]
    pub retries: u32,
    #[arg(long, value_enum, default_value_t = Occurrences::All)]
    pub occurrences: Occurrences,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub lowercase: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Gold tags, CoNLL or JSON lines.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predicted tags, CoNLL or JSON lines as written by `tag`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Also write the report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub mapping: PathBuf,
    #[arg(long)]
    pub iterative: bool,
    /// Also write one JSON line per row here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub input: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::ScorerFailure(_) | Error::EmptyCandidates => EXIT_SCORER,
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Sample(args) => {
            let files = cmd_sample(args)?;
            println!("wrote {} support sets to {}", files.len(), args.out.display());
        }
        Command::EmitTrain(args) => {
            let n = cmd_emit_train(args)?;
            println!("wrote {n} training sequences to {}", args.out.display());
        }
        Command::Tag(args) => {
            let summary = cmd_tag(args)?;
            if summary.failures > 0 {
                eprintln!(
                    "warning: {} scorer failures; affected labels left unresolved",
                    summary.failures
                );
            }
        }
        Command::Eval(args) => {
            let report = cmd_eval(args)?;
            if args.json {
                println!("{}", report.to_json());
            } else {
                println!("{report}");
            }
        }
        Command::Bench(args) => {
            let rows = cmd_bench(args)?;
            print!("{}", bench_table(&rows));
        }
        Command::VerifyFixtures(args) => {
            let summary = crate::fixtures::verify_fixtures(&args.input)?;
            for name in &summary.passed {
                println!("ok   {name}");
            }
            println!("{} fixtures passed", summary.passed.len());
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `set_00.conll`, `set_01.conll`, ... into `args.out`.
pub fn cmd_sample(args: &SampleArgs) -> Result<Vec<PathBuf>> {
    let dataset = load_conll(&args.input, args.lowercase)?;
    let sets = sample_k_shot(&dataset, args.k, args.seed, args.num_sets)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut files = Vec::with_capacity(sets.len());
    for (i, set) in sets.iter().enumerate() {
        let path = args.out.join(format!("set_{i:02}.conll"));
        write_file(&path, &write_conll(&dataset.subset(&set.indices).examples))?;
        files.push(path);
    }
    Ok(files)
}

/// One line of `emit-train` output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub tokens: Vec<String>,
    pub loss_mask: Vec<bool>,
    pub round: u8,
}

fn example_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn cmd_emit_train(args: &EmitTrainArgs) -> Result<usize> {
    let dataset = load_conll(&args.support, args.lowercase)?;
    let mapping = LabelMapping::load(&args.mapping)?;
    let control = ControlTokens::default();
    mapping.check_control(&control)?;

    let mut out = String::new();
    let mut count = 0;
    for (i, ex) in dataset.examples.iter().enumerate() {
        let annotation = bio_to_annotation(&ex.sentence, &ex.tags)?;
        let emitted = emit_training_examples(
            &ex.sentence,
            &annotation,
            &mapping,
            &control,
            example_seed(args.seed, i),
            args.withhold_prob,
        )?;
        for e in emitted {
            let record = TrainingRecord {
                tokens: e.tokens,
                loss_mask: e.loss_mask,
                round: e.round.number(),
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
            count += 1;
        }
    }
    write_file(&args.out, &out)?;
    Ok(count)
}

/// Per-label output of `tag`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub label: String,
    pub label_word: String,
    pub values: Vec<Vec<String>>,
    pub round: Resolution,
    pub generations: Vec<Vec<String>>,
}

/// One line of `tag` output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    pub labels: Vec<LabelRecord>,
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagSummary {
    pub sentences: usize,
    pub failures: usize,
}

fn build_scorer(
    args: &TagArgs,
    input: &Dataset,
    mapping: &LabelMapping,
    control: &ControlTokens,
) -> Result<Box<dyn LmScorer>> {
    match args.scorer {
        ScorerKind::Reference => {
            let gold = match &args.support {
                Some(path) => load_conll(path, args.lowercase)?,
                None => input.clone(),
            };
            let examples = gold
                .examples
                .iter()
                .map(|ex| Ok((ex.sentence.clone(), bio_to_annotation(&ex.sentence, &ex.tags)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Box::new(reference_from_gold(&examples, mapping, control)?))
        }
        ScorerKind::Remote => {
            let endpoint = args.endpoint.clone().ok_or_else(|| {
                Error::InvalidArgument(
                    "--scorer remote needs --endpoint or INVTAG_ENDPOINT".to_string(),
                )
            })?;
            Ok(Box::new(RemoteLm::with_options(
                endpoint,
                RemoteLm::DEFAULT_TIMEOUT,
                args.retries,
                RemoteLm::DEFAULT_MAX_IN_FLIGHT,
            )))
        }
    }
}

pub fn cmd_tag(args: &TagArgs) -> Result<TagSummary> {
    let input = load_conll(&args.input, args.lowercase)?;
    let mapping = LabelMapping::load(&args.mapping)?;
    let control = ControlTokens::default();
    mapping.check_control(&control)?;
    let config = TagConfig {
        decode: DecodeConfig::new(args.max_gen)?,
        iterative: args.iterative,
        revision_rounds: 1,
        strict: args.strict,
    };
    let scorer = build_scorer(args, &input, &mapping, &control)?;
    let policy = OccurrencePolicy::from(args.occurrences);

    let tag_one = |ex: &crate::data::Example| -> Result<PredictionRecord> {
        let outcome = tag_sentence(scorer.as_ref(), &ex.sentence, &mapping, &control, &config)?;
        let tags = apply_reverse_labeling(&ex.sentence, &outcome.prediction, policy);
        Ok(PredictionRecord {
            tokens: ex.sentence.tokens().to_vec(),
            tags: tags.to_strings(),
            labels: outcome
                .prediction
                .entries
                .into_iter()
                .map(|e| LabelRecord {
                    label: e.raw_label,
                    label_word: e.label_word,
                    values: e.values,
                    round: e.resolved,
                    generations: e.generations,
                })
                .collect(),
            failures: outcome.failures,
        })
    };
    let results: Vec<Result<PredictionRecord>> = if scorer.concurrent_calls_allowed() {
        input.examples.par_iter().map(tag_one).collect()
    } else {
        input.examples.iter().map(tag_one).collect()
    };

    let mut out = String::new();
    let mut failures = 0;
    for result in results {
        let record = result?;
        failures += record.failures;
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    match &args.out {
        Some(path) => write_file(path, &out)?,
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    Ok(TagSummary {
        sentences: input.len(),
        failures,
    })
}

#[derive(Deserialize)]
struct TagsOnly {
    tags: Vec<String>,
}

/// Reads tag sequences from CoNLL or from JSON lines with a `tags` field.
pub fn load_tag_sequences(path: &Path) -> Result<Vec<BioSequence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    if text.trim_start().starts_with('{') {
        text.lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(i, line)| {
                let parse_err = |message: String| Error::Parse {
                    path: source.clone(),
                    line: i + 1,
                    message,
                };
                let record: TagsOnly =
                    serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
                BioSequence::parse(&record.tags).map_err(|e| parse_err(e.to_string()))
            })
            .collect()
    } else {
        Ok(parse_conll(&text, &source, false)?
            .examples
            .into_iter()
            .map(|ex| ex.tags)
            .collect())
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let gold = load_tag_sequences(&args.gold)?;
    let pred = load_tag_sequences(&args.pred)?;
    let report = chunk_f1(&gold, &pred)?;
    if let Some(path) = &args.out {
        write_file(path, &format!("{}\n", report.to_json()))?;
    }
    Ok(report)
}

/// Prompt counts for every distinct sentence length in a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRow {
    pub sentences: usize,
    #[serde(flatten)]
    pub report: EfficiencyReport,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Vec<BenchRow>> {
    let dataset = load_conll(&args.input, false)?;
    let mapping = LabelMapping::load(&args.mapping)?;
    let mut by_len = std::collections::BTreeMap::new();
    for ex in &dataset.examples {
        *by_len.entry(ex.sentence.len()).or_insert(0usize) += 1;
    }
    let rows: Vec<BenchRow> = by_len
        .into_iter()
        .map(|(n, sentences)| BenchRow {
            sentences,
            report: EfficiencyReport::from_counts(n, mapping.len(), args.iterative),
        })
        .collect();
    if let Some(path) = &args.out {
        let mut out = String::new();
        for row in &rows {
            out.push_str(&serde_json::to_string(row).expect("row serializes"));
            out.push('\n');
        }
        write_file(path, &out)?;
    }
    Ok(rows)
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5} {:>5} {:>9} {:>12} {:>14} {:>14} {:>12}",
        "n", "m", "sentences", "span_prompts", "normal_prompts", "inverse_prompts", "inverse_max"
    );
    for row in rows {
        let r = &row.report;
        let _ = writeln!(
            out,
            "{:>5} {:>5} {:>9} {:>12} {:>14} {:>14} {:>12}",
            r.n,
            r.m,
            row.sentences,
            r.normal_span_count,
            r.normal_prompt_count,
            r.inverse_prompt_count,
            r.inverse_prompt_max
        );
    }
    let _ = writeln!(
        out,
        "span enumeration is {}, inverse prompting is {}",
        crate::evaluation::NORMAL_COMPLEXITY,
        crate::evaluation::INVERSE_COMPLEXITY
    );
    out
}
