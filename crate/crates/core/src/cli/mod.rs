//! The `embcat` command line: every subcommand prints one JSON (or aligned
//! text) report with its run manifest on standard output.
//!
//! Exit codes: 0 success, 1 data error, 2 usage error.

mod report;

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::analysis::{self, NeighborIndex, SimilarityOptions};
use crate::combine::{self, CombineOptions, CombinePolicy, ModelVocab, PolicyKind, SourceUsage, Thresholds};
use crate::corpus::{self, Column, ConllOptions, Dataset, Split, VocabCounts};
use crate::embedding::{
    self, EmbeddingFormat, EmbeddingTable, LoadedTable, LookupPolicy, Normalization, RandomBackfill, ReadOptions,
};
use crate::tags::{self, Mode, Scheme};

pub use report::{render_text, sha256_file, InputFile, RunManifest, TOOL_VERSION};

#[derive(Parser, Debug)]
#[command(
    name = "embcat",
    version,
    about = "Analyze, combine, and export pre-trained word embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum Command {
    /// Vocabulary size, dimension and format of an embedding file
    Info(InfoArgs),
    /// Rewrite an embedding file in another format
    Convert(ConvertArgs),
    /// Rewrite the label column of a CoNLL file in another tag scheme
    ConvertTags(ConvertTagsArgs),
    /// Share of a dataset's unique types attested in each embedding
    Coverage(CoverageArgs),
    /// Mean Jaccard overlap of k-nearest-neighbor sets between two embeddings
    Similarity(SimilarityArgs),
    /// Overlap and attestation of candidate embeddings against a reference
    PairReport(PairReportArgs),
    /// Build a concatenated table over a dataset vocabulary
    Combine(CombineArgs),
    /// Rank embedding pairs by overlap and attestation
    Recommend(RecommendArgs),
    /// Entity-level F1 and token accuracy of predicted tags
    Score(ScoreArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Info(_) => "info",
            Command::Convert(_) => "convert",
            Command::ConvertTags(_) => "convert-tags",
            Command::Coverage(_) => "coverage",
            Command::Similarity(_) => "similarity",
            Command::PairReport(_) => "pair-report",
            Command::Combine(_) => "combine",
            Command::Recommend(_) => "recommend",
            Command::Score(_) => "score",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Info(a) => &a.common,
            Command::Convert(a) => &a.common,
            Command::ConvertTags(a) => &a.common,
            Command::Coverage(a) => &a.common,
            Command::Similarity(a) => &a.common,
            Command::PairReport(a) => &a.common,
            Command::Combine(a) => &a.common,
            Command::Recommend(a) => &a.common,
            Command::Score(a) => &a.common,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OutputFormat {
    Json,
    Text,
}

#[derive(Args, Debug, Serialize)]
struct Common {
    /// Seed for random backfill vectors
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Token lookup chain: `exact`, `lowercase-chain`, or e.g. `exact,lowercase`
    #[arg(long, default_value = "lowercase-chain")]
    normalize: LookupPolicy,
    /// Count dataset types on raw surface forms instead of the lookup
    /// chain's normalized form
    #[arg(long)]
    raw: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Omit the wall-clock duration so reports are byte-stable
    #[arg(long)]
    stable: bool,
    /// Worker threads (default: available cores)
    #[arg(long, env = "EMBCAT_THREADS")]
    threads: Option<usize>,
    /// Progress messages on standard error
    #[arg(short, long)]
    #[serde(skip)]
    verbose: bool,
}

impl Common {
    fn count_normalization(&self) -> Normalization {
        if self.raw {
            Normalization::Exact
        } else {
            self.normalize.key_normalization()
        }
    }
}

/// `PATH` or `NAME=PATH`.
#[derive(Clone, Debug)]
struct EmbSpec {
    name: Option<String>,
    path: PathBuf,
}

impl FromStr for EmbSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, path) = split_prefixed(s);
        if path.is_empty() {
            return Err("empty embedding path".into());
        }
        Ok(EmbSpec {
            name: name.map(str::to_owned),
            path: path.into(),
        })
    }
}

impl fmt::Display for EmbSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(n) => write!(f, "{n}={}", self.path.display()),
            None => write!(f, "{}", self.path.display()),
        }
    }
}

impl Serialize for EmbSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// `PATH` or `SPLIT=PATH`.
#[derive(Clone, Debug)]
struct DataSpec {
    split: Split,
    path: PathBuf,
}

impl FromStr for DataSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (split, path) = split_prefixed(s);
        let split = match split {
            Some(sp) => sp.parse()?,
            None => Split::Train,
        };
        Ok(DataSpec {
            split,
            path: path.into(),
        })
    }
}

impl fmt::Display for DataSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.split, self.path.display())
    }
}

impl Serialize for DataSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn split_prefixed(s: &str) -> (Option<&str>, &str) {
    match s.split_once('=') {
        Some((prefix, rest)) if !prefix.is_empty() && !prefix.contains(['/', '\\']) => (Some(prefix), rest),
        _ => (None, s),
    }
}

#[derive(Args, Debug, Serialize)]
struct EmbOptions {
    /// Input embedding format: auto, glove, glove-header or w2v
    #[arg(long, default_value = "auto")]
    emb_format: String,
    /// Fail on header/record-count disagreements and duplicate tokens
    #[arg(long)]
    strict_read: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DataFormat {
    Conll,
    Text,
}

#[derive(Args, Debug, Serialize)]
struct DataOptions {
    #[arg(long, value_enum, default_value_t = DataFormat::Conll)]
    data_format: DataFormat,
    /// CoNLL token column
    #[arg(long, default_value = "0")]
    token_col: Column,
    /// CoNLL label column (index or `last`)
    #[arg(long, default_value = "last")]
    label_col: Column,
    /// Keep `-DOCSTART-` lines as sentences
    #[arg(long)]
    keep_docstart: bool,
    /// Field delimiter of labeled-text files
    #[arg(long, default_value = "\t")]
    delimiter: String,
    /// Label field index of labeled-text files
    #[arg(long, default_value_t = 0)]
    label_field: usize,
}

#[derive(Args, Debug, Serialize)]
struct InfoArgs {
    #[arg(long)]
    emb: EmbSpec,
    #[command(flatten)]
    emb_options: EmbOptions,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct ConvertArgs {
    #[arg(long)]
    emb: EmbSpec,
    #[arg(long)]
    out: PathBuf,
    /// Output format: glove, glove-header or w2v
    #[arg(long)]
    to: EmbeddingFormat,
    #[command(flatten)]
    emb_options: EmbOptions,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct ConvertTagsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "iob1")]
    from: Scheme,
    #[arg(long, default_value = "iobes")]
    to: Scheme,
    /// CoNLL label column (index or `last`)
    #[arg(long, default_value = "last")]
    label_col: Column,
    /// Reject ill-formed tag sequences instead of repairing them
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct CoverageArgs {
    #[arg(long, required = true)]
    emb: Vec<EmbSpec>,
    /// Dataset as `PATH` or `SPLIT=PATH`; repeatable
    #[arg(long, required = true)]
    data: Vec<DataSpec>,
    #[command(flatten)]
    emb_options: EmbOptions,
    #[command(flatten)]
    data_options: DataOptions,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct SimilarityArgs {
    #[arg(long)]
    emb_a: EmbSpec,
    #[arg(long)]
    emb_b: EmbSpec,
    #[arg(long)]
    data: DataSpec,
    #[arg(long, default_value_t = 200)]
    top_n: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Draw neighbors only from tokens present in both embeddings
    #[arg(long)]
    shared_vocab: bool,
    #[command(flatten)]
    emb_options: EmbOptions,
    #[command(flatten)]
    data_options: DataOptions,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct PairReportArgs {
    /// Reference embedding overlap is measured against
    #[arg(long)]
    emb_a: EmbSpec,
    /// Candidate embedding; repeat for several rows
    #[arg(long, required = true)]
    emb_b: Vec<EmbSpec>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long, default_value_t = 200)]
    top_n: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    shared_vocab: bool,
    #[command(flatten)]
    emb_options: EmbOptions,
    #[command(flatten)]
    data_options: DataOptions,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct CombineArgs {
    /// Source embeddings in concatenation order
    #[arg(long, required = true)]
    emb: Vec<EmbSpec>,
    /// Dataset as `PATH` or `SPLIT=PATH`; repeatable
    #[arg(long, required = true)]
    data: Vec<DataSpec>,
    /// concat, random-second, complement-second or matched-second
    #[arg(long, default_value = "concat")]
    policy: PolicyKind,
    /// Index of the table an ablation policy transforms
    #[arg(long, default_value_t = 1)]
    target: usize,
    #[arg(long)]
    out: PathBuf,
    /// Output format: glove, glove-header or w2v
    #[arg(long, default_value = "glove")]
    out_format: EmbeddingFormat,
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    /// Splits contributing to the model vocabulary (default: all given)
    #[arg(long, value_delimiter = ',')]
    splits: Vec<Split>,
    /// Prepend <PAD> and <UNK> rows
    #[arg(long)]
    special_tokens: bool,
    /// Name of the combined table
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = RandomBackfill::DEFAULT_LOW, allow_hyphen_values = true)]
    backfill_low: f32,
    #[arg(long, default_value_t = RandomBackfill::DEFAULT_HIGH, allow_hyphen_values = true)]
    backfill_high: f32,
    #[command(flatten)]
    emb_options: EmbOptions,
    #[command(flatten)]
    data_options: DataOptions,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct RecommendArgs {
    #[arg(long, required = true)]
    emb: Vec<EmbSpec>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// A pair must have overlap below this percentage
    #[arg(long, default_value_t = 30.0)]
    tau_sim: f64,
    /// Both tables must attest at least this percentage of train types
    #[arg(long, default_value_t = 70.0)]
    tau_cov: f64,
    #[arg(long, default_value_t = 200)]
    top_n: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    shared_vocab: bool,
    #[command(flatten)]
    emb_options: EmbOptions,
    #[command(flatten)]
    data_options: DataOptions,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Tag scheme of both files; converted to IOBES before scoring
    #[arg(long, default_value = "iobes")]
    scheme: Scheme,
    /// CoNLL label column (index or `last`)
    #[arg(long, default_value = "last")]
    label_col: Column,
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    common: Common,
}

/// Entry point for the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Parse `args`, execute, and write the report to `out`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return e.exit_code();
        }
    };
    let common = cli.command.common();
    let _ = env_logger::Builder::new()
        .filter_level(if common.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .try_init();

    match execute(&cli.command) {
        Ok(rendered) => match out.write_all(rendered.as_bytes()) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                1
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {}", error_chain(&e));
            1
        }
    }
}

/// Context chain joined by `: `, skipping causes a parent message already
/// spells out.
fn error_chain(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

struct Outcome {
    result: Value,
    inputs: Vec<InputFile>,
    /// Replaces the generic text rendering.
    text: Option<String>,
}

fn execute(command: &Command) -> Result<String> {
    let common = command.common();
    let started = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building thread pool")?;
    let outcome = pool.install(|| match command {
        Command::Info(a) => info_cmd(a),
        Command::Convert(a) => convert_cmd(a),
        Command::ConvertTags(a) => convert_tags_cmd(a),
        Command::Coverage(a) => coverage_cmd(a),
        Command::Similarity(a) => similarity_cmd(a),
        Command::PairReport(a) => pair_report_cmd(a),
        Command::Combine(a) => combine_cmd(a),
        Command::Recommend(a) => recommend_cmd(a),
        Command::Score(a) => score_cmd(a),
    })?;
    let manifest = RunManifest {
        subcommand: command.name().to_owned(),
        tool_version: TOOL_VERSION,
        seed: common.seed,
        options: serde_json::to_value(command)?,
        inputs: outcome.inputs,
        duration_ms: (!common.stable).then(|| started.elapsed().as_millis() as u64),
    };
    Ok(match common.format {
        OutputFormat::Json => {
            let envelope = report::Envelope {
                manifest: &manifest,
                result: &outcome.result,
            };
            serde_json::to_string_pretty(&envelope)? + "\n"
        }
        OutputFormat::Text => {
            let body = outcome.text.unwrap_or_else(|| render_text(&outcome.result));
            let mut m = serde_json::to_value(&manifest)?;
            if let Value::Object(map) = &mut m {
                map.remove("options");
            }
            format!("{body}\n# manifest\n{}", render_text(&m))
        }
    })
}

fn load_embedding(spec: &EmbSpec, options: &EmbOptions) -> Result<(LoadedTable, InputFile)> {
    let path = &spec.path;
    let format = match options.emb_format.as_str() {
        "auto" => embedding::detect_format(path)?,
        other => other.parse::<EmbeddingFormat>().map_err(|e| anyhow!(e))?,
    };
    info!("reading {} as {:?}", path.display(), format);
    let read_options = ReadOptions {
        name: spec.name.clone(),
        duplicates: if options.strict_read {
            embedding::DuplicatePolicy::Error
        } else {
            embedding::DuplicatePolicy::KeepFirst
        },
        strict: options.strict_read,
    };
    let loaded = embedding::read_embeddings(path, format, &read_options)
        .with_context(|| format!("reading embeddings {}", path.display()))?;
    info!(
        "{}: {} rows x {}",
        loaded.table.name(),
        loaded.table.len(),
        loaded.table.dim()
    );
    let input = InputFile::hash(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok((loaded, input))
}

fn load_embeddings(specs: &[EmbSpec], options: &EmbOptions) -> Result<(Vec<EmbeddingTable>, Vec<InputFile>)> {
    let mut tables = Vec::new();
    let mut inputs = Vec::new();
    for spec in specs {
        let (loaded, input) = load_embedding(spec, options)?;
        tables.push(loaded.table);
        inputs.push(input);
    }
    Ok((tables, inputs))
}

fn load_dataset(path: &Path, split: Split, options: &DataOptions) -> Result<(Dataset, InputFile)> {
    let dataset = match options.data_format {
        DataFormat::Conll => {
            let conll = ConllOptions {
                token_column: options.token_col,
                label_column: options.label_col,
                keep_docstart: options.keep_docstart,
            };
            corpus::read_conll(path, split, &conll).map(Dataset::from)
        }
        DataFormat::Text => corpus::read_labeled_text(path, split, &unescape(&options.delimiter), options.label_field)
            .map(Dataset::from),
    }
    .with_context(|| format!("reading dataset {}", path.display()))?;
    let input = InputFile::hash(path)?;
    Ok((dataset, input))
}

fn unescape(s: &str) -> String {
    s.replace("\\t", "\t")
}

fn info_cmd(a: &InfoArgs) -> Result<Outcome> {
    let (loaded, input) = load_embedding(&a.emb, &a.emb_options)?;
    Ok(Outcome {
        result: json!({
            "name": loaded.table.name(),
            "vocab": loaded.table.len(),
            "dim": loaded.table.dim(),
            "format": loaded.format,
            "records": loaded.stats.records,
            "duplicates": loaded.stats.duplicates,
            "header_mismatch": loaded.stats.header_mismatch,
        }),
        inputs: vec![input],
        text: None,
    })
}

fn convert_cmd(a: &ConvertArgs) -> Result<Outcome> {
    let (loaded, input) = load_embedding(&a.emb, &a.emb_options)?;
    embedding::write_embeddings(&loaded.table, &a.out, a.to)?;
    let (bytes, sha256) = sha256_file(&a.out)?;
    Ok(Outcome {
        result: json!({
            "vocab": loaded.table.len(),
            "dim": loaded.table.dim(),
            "from": loaded.format,
            "to": a.to,
            "output": {"path": a.out.display().to_string(), "bytes": bytes, "sha256": sha256},
        }),
        inputs: vec![input],
        text: None,
    })
}

fn convert_tags_cmd(a: &ConvertTagsArgs) -> Result<Outcome> {
    let mode = if a.strict { Mode::Strict } else { Mode::Lenient };
    let convert = |labels: &[String]| -> Result<Vec<String>> {
        Ok(match (a.from, a.to) {
            (from, to) if from == to => labels.to_vec(),
            (Scheme::Iob1, Scheme::Bio) => tags::iob1_to_bio(labels)?,
            (from, Scheme::Iobes) => tags::to_iobes(labels, from, mode)?,
            (from, to) => bail!("unsupported conversion {from:?} -> {to:?}"),
        })
    };
    let reader = BufReader::new(File::open(&a.data).with_context(|| format!("opening {}", a.data.display()))?);
    let mut writer = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    let mut block: Vec<(usize, Vec<String>)> = Vec::new();
    let (mut sentences, mut tokens, mut changed) = (0usize, 0usize, 0usize);
    let mut flush = |block: &mut Vec<(usize, Vec<String>)>, writer: &mut BufWriter<File>| -> Result<()> {
        if block.is_empty() {
            return Ok(());
        }
        let mut label_idx = Vec::with_capacity(block.len());
        for (line, fields) in block.iter() {
            let idx = match a.label_col {
                Column::At(i) if i < fields.len() => i,
                Column::Last => fields.len() - 1,
                Column::At(i) => bail!("line {line}: no column {i}"),
            };
            label_idx.push(idx);
        }
        let labels: Vec<String> = block.iter().zip(&label_idx).map(|((_, f), &i)| f[i].clone()).collect();
        let converted = convert(&labels).with_context(|| format!("sentence starting at line {}", block[0].0))?;
        for (((_, fields), &i), new) in block.iter_mut().zip(&label_idx).zip(converted) {
            if fields[i] != new {
                changed += 1;
            }
            fields[i] = new;
            writeln!(writer, "{}", fields.join(" "))?;
        }
        sentences += 1;
        tokens += block.len();
        block.clear();
        Ok(())
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if fields.is_empty() {
            flush(&mut block, &mut writer)?;
            writeln!(writer)?;
        } else if fields[0].starts_with("-DOCSTART-") {
            flush(&mut block, &mut writer)?;
            writeln!(writer, "{line}")?;
        } else {
            block.push((i + 1, fields));
        }
    }
    flush(&mut block, &mut writer)?;
    writer.flush()?;
    drop(writer);
    let input = InputFile::hash(&a.data)?;
    let (bytes, sha256) = sha256_file(&a.out)?;
    Ok(Outcome {
        result: json!({
            "sentences": sentences,
            "tokens": tokens,
            "changed_tags": changed,
            "from": a.from,
            "to": a.to,
            "output": {"path": a.out.display().to_string(), "bytes": bytes, "sha256": sha256},
        }),
        inputs: vec![input],
        text: None,
    })
}

fn coverage_cmd(a: &CoverageArgs) -> Result<Outcome> {
    let (tables, mut inputs) = load_embeddings(&a.emb, &a.emb_options)?;
    let norm = a.common.count_normalization();
    let mut reports = Vec::new();
    for spec in &a.data {
        let (dataset, input) = load_dataset(&spec.path, spec.split, &a.data_options)?;
        inputs.push(input);
        let counts = VocabCounts::from_dataset(&dataset, norm);
        for table in &tables {
            reports.push(analysis::coverage(&counts, table, &a.common.normalize, spec.split)?);
        }
    }
    let rows: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "table": r.table, "split": r.split, "unique_types": r.unique_types,
                "attested_types": r.attested_types, "attested_pct": r.attested_pct,
                "token_coverage_pct": r.token_coverage_pct,
            })
        })
        .collect();
    Ok(Outcome {
        result: json!({ "count_normalization": norm, "reports": reports }),
        inputs,
        text: Some(report::table(&rows)),
    })
}

fn similarity_cmd(a: &SimilarityArgs) -> Result<Outcome> {
    let (ta, ia) = load_embedding(&a.emb_a, &a.emb_options)?;
    let (tb, ib) = load_embedding(&a.emb_b, &a.emb_options)?;
    let (dataset, id) = load_dataset(&a.data.path, a.data.split, &a.data_options)?;
    let counts = VocabCounts::from_dataset(&dataset, a.common.count_normalization());
    let queries = counts.top_n_types(a.top_n);
    let options = SimilarityOptions {
        k: a.k,
        policy: a.common.normalize.clone(),
        shared_vocab: a.shared_vocab,
    };
    let report = analysis::embedding_similarity(&ta.table, &tb.table, &queries, &options)?;
    Ok(Outcome {
        result: serde_json::to_value(&report)?,
        inputs: vec![ia, ib, id],
        text: None,
    })
}

fn load_train_dev(
    train: &Path,
    dev: &Path,
    options: &DataOptions,
    norm: Normalization,
) -> Result<(VocabCounts, VocabCounts, Vec<InputFile>)> {
    let (train_data, it) = load_dataset(train, Split::Train, options)?;
    let (dev_data, id) = load_dataset(dev, Split::Dev, options)?;
    Ok((
        VocabCounts::from_dataset(&train_data, norm),
        VocabCounts::from_dataset(&dev_data, norm),
        vec![it, id],
    ))
}

fn pair_report_cmd(a: &PairReportArgs) -> Result<Outcome> {
    let (reference, ir) = load_embedding(&a.emb_a, &a.emb_options)?;
    let (candidates, ic) = load_embeddings(&a.emb_b, &a.emb_options)?;
    let (train, dev, idata) = load_train_dev(&a.train, &a.dev, &a.data_options, a.common.count_normalization())?;
    let options = SimilarityOptions {
        k: a.k,
        policy: a.common.normalize.clone(),
        shared_vocab: a.shared_vocab,
    };
    let ref_index = NeighborIndex::new(&reference.table);
    let mut reports = Vec::new();
    for candidate in &candidates {
        let r = if a.shared_vocab {
            analysis::pair_report(&reference.table, candidate, &train, &dev, a.top_n, &options)?
        } else {
            analysis::pair_report_with_indexes(
                &ref_index,
                &NeighborIndex::new(candidate),
                &train,
                &dev,
                a.top_n,
                &options,
            )?
        };
        reports.push(r);
    }
    let rows: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "embedding": r.candidate,
                "overlap_train": round1(r.overlap_train),
                "overlap_dev": round1(r.overlap_dev),
                "attested_train": round1(r.attested_train),
                "attested_dev": round1(r.attested_dev),
            })
        })
        .collect();
    let table_text = report::table(&rows);
    let mut inputs = vec![ir];
    inputs.extend(ic);
    inputs.extend(idata);
    Ok(Outcome {
        result: json!({
            "reference": reference.table.name(),
            "rows": rows,
            "table": table_text,
            "details": reports,
        }),
        inputs,
        text: Some(format!("reference: {}\n{table_text}", reference.table.name())),
    })
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Provenance written next to every combined table.
#[derive(Debug, Serialize)]
pub struct CombineManifest {
    pub tool_version: &'static str,
    pub policy: CombinePolicy,
    pub seed: u64,
    pub backfill_bounds: (f32, f32),
    pub lookup_chain: LookupPolicy,
    pub count_normalization: Normalization,
    pub min_count: u64,
    pub splits: Vec<Split>,
    pub special_tokens: bool,
    pub sources: Vec<CombineSource>,
    pub data: Vec<InputFile>,
    pub dims: Vec<usize>,
    pub dim: usize,
    pub vocab_size: usize,
    pub rows: usize,
    pub output: CombineOutput,
}

#[derive(Debug, Serialize)]
pub struct CombineSource {
    pub file: InputFile,
    pub format: EmbeddingFormat,
    pub rows: usize,
    pub usage: SourceUsage,
}

#[derive(Debug, Serialize)]
pub struct CombineOutput {
    pub path: String,
    pub format: EmbeddingFormat,
    pub bytes: u64,
    pub sha256: String,
}

/// Path of the manifest written alongside a combined table.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn combine_cmd(a: &CombineArgs) -> Result<Outcome> {
    let mut loaded = Vec::new();
    let mut emb_inputs = Vec::new();
    for spec in &a.emb {
        let (l, i) = load_embedding(spec, &a.emb_options)?;
        loaded.push(l);
        emb_inputs.push(i);
    }
    let mut datasets = Vec::new();
    let mut data_inputs = Vec::new();
    for spec in &a.data {
        let (d, i) = load_dataset(&spec.path, spec.split, &a.data_options)?;
        datasets.push(d);
        data_inputs.push(i);
    }
    let norm = a.common.count_normalization();
    let vocab: ModelVocab = combine::model_vocab(&datasets, &a.splits, a.min_count, norm)?;
    let policy = CombinePolicy::ablation(a.policy, a.target);
    let backfill = RandomBackfill::new(a.common.seed, a.backfill_low, a.backfill_high).map_err(|e| anyhow!(e))?;
    let tables: Vec<EmbeddingTable> = loaded.iter().map(|l| l.table.clone()).collect();
    let combined = combine::combine(
        &tables,
        &vocab,
        &policy,
        &a.common.normalize,
        &backfill,
        &CombineOptions {
            name: a.name.clone(),
            special_tokens: a.special_tokens,
        },
    )?;
    info!(
        "writing {} rows x {} to {}",
        combined.table.len(),
        combined.table.dim(),
        a.out.display()
    );
    embedding::write_embeddings(&combined.table, &a.out, a.out_format)?;
    let (bytes, sha256) = sha256_file(&a.out)?;

    let manifest = CombineManifest {
        tool_version: TOOL_VERSION,
        policy,
        seed: a.common.seed,
        backfill_bounds: backfill.bounds(),
        lookup_chain: a.common.normalize.clone(),
        count_normalization: norm,
        min_count: a.min_count,
        splits: vocab.source_splits.clone(),
        special_tokens: a.special_tokens,
        sources: loaded
            .iter()
            .zip(&emb_inputs)
            .zip(combined.sources)
            .map(|((l, file), usage)| CombineSource {
                file: file.clone(),
                format: l.format,
                rows: l.table.len(),
                usage,
            })
            .collect(),
        data: data_inputs.clone(),
        dims: tables.iter().map(EmbeddingTable::dim).collect(),
        dim: combined.table.dim(),
        vocab_size: vocab.len(),
        rows: combined.table.len(),
        output: CombineOutput {
            path: a.out.display().to_string(),
            format: a.out_format,
            bytes,
            sha256,
        },
    };
    let value = serde_json::to_value(&manifest)?;
    let mpath = manifest_path(&a.out);
    std::fs::write(&mpath, serde_json::to_string_pretty(&value)? + "\n")
        .with_context(|| format!("writing {}", mpath.display()))?;
    let mut inputs = emb_inputs;
    inputs.extend(data_inputs);
    Ok(Outcome {
        result: json!({ "manifest_path": mpath.display().to_string(), "combined": value }),
        inputs,
        text: None,
    })
}

fn recommend_cmd(a: &RecommendArgs) -> Result<Outcome> {
    let (tables, mut inputs) = load_embeddings(&a.emb, &a.emb_options)?;
    let (train, dev, idata) = load_train_dev(&a.train, &a.dev, &a.data_options, a.common.count_normalization())?;
    inputs.extend(idata);
    let options = SimilarityOptions {
        k: a.k,
        policy: a.common.normalize.clone(),
        shared_vocab: a.shared_vocab,
    };
    let thresholds = Thresholds {
        max_overlap: a.tau_sim,
        min_attested: a.tau_cov,
    };
    let verdicts = combine::recommend(&tables, &train, &dev, &thresholds, a.top_n, &options)?;
    let rows: Vec<Value> = verdicts
        .iter()
        .map(|v| {
            json!({
                "pair": format!("{} + {}", v.first, v.second),
                "overlap": round1(v.overlap_train),
                "min_attested": round1(v.min_attested),
                "verdict": if v.recommended { "recommended" } else { "rejected" },
                "reasons": v.reasons.join("; "),
            })
        })
        .collect();
    Ok(Outcome {
        result: serde_json::to_value(&verdicts)?,
        inputs,
        text: Some(report::table(&rows)),
    })
}

fn score_cmd(a: &ScoreArgs) -> Result<Outcome> {
    let options = ConllOptions {
        token_column: Column::At(0),
        label_column: a.label_col,
        keep_docstart: false,
    };
    let gold =
        corpus::read_conll(&a.gold, Split::Other, &options).with_context(|| format!("reading {}", a.gold.display()))?;
    let pred =
        corpus::read_conll(&a.pred, Split::Other, &options).with_context(|| format!("reading {}", a.pred.display()))?;
    let (gold_labels, pred_labels) = (gold.labels(), pred.labels());
    let mode = if a.strict { Mode::Strict } else { Mode::Lenient };
    let to_iobes = |seqs: &[Vec<String>], which: &str| -> Result<Vec<Vec<String>>> {
        seqs.iter()
            .enumerate()
            .map(|(i, s)| tags::to_iobes(s, a.scheme, mode).with_context(|| format!("{which} sentence {i}")))
            .collect()
    };
    let gold_iobes = to_iobes(&gold_labels, "gold")?;
    let pred_iobes = to_iobes(&pred_labels, "pred")?;
    let report = tags::entity_prf(&gold_iobes, &pred_iobes, mode)?;
    let token_accuracy = tags::token_accuracy(&gold_labels, &pred_labels)?;
    let mut result = serde_json::to_value(report)?;
    if let Value::Object(map) = &mut result {
        map.insert("token_accuracy".into(), json!(token_accuracy));
        map.insert("sentences".into(), json!(gold.sentences.len()));
        map.insert("tokens".into(), json!(gold.num_tokens()));
    }
    Ok(Outcome {
        result,
        inputs: vec![InputFile::hash(&a.gold)?, InputFile::hash(&a.pred)?],
        text: None,
    })
}
