//! Command-line front end. `run` parses arguments, dispatches to a
//! subcommand and maps errors to exit codes: 0 success, 1 domain error,
//! 2 usage or I/O error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use crate::apps::{self, BudgetDocument, BudgetPolicy, Claim, CostModel, CoverageIndex, RankingMethod};
use crate::corpus::{load_corpus, AliasTable, Corpus, GtVariant, Relation};
use crate::coverage::{read_labels, write_labels, GroupKey, LabelRow};
use crate::features::{read_features, write_features, Bm25Params, FeatureConfig, MentionProvider, PopularityTable};
use crate::jsonl;
use crate::model::TrainConfig;
use crate::pipeline::{self, DataContext, FeatureIndex, LabelConfig, Method, ModelFile, TrainOptions};
use crate::synthgen::{self, SynthConfig};
use crate::vectorize::{load_embeddings, EmbeddingStore};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "covrank", version, about = "Document coverage prediction for relation extraction")]
struct Cli {
    /// key=value file whose entries act as default flags for the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted coverage.
    Synth(SynthArgs),
    /// Compute coverage labels and the train/validation/test split.
    Coverage(CoverageArgs),
    /// Compute the six heuristic features for every labeled document.
    Featurize(FeaturizeArgs),
    /// Train a coverage classifier.
    Train(TrainArgs),
    /// Score a trained model on the test split and write report.json.
    Evaluate(EvaluateArgs),
    /// Rank the documents of one (entity, relation) pool.
    Rank(RankArgs),
    /// Simulate extraction under a time budget for one pool.
    Budget(BudgetArgs),
    /// Flag low-support claims absent from high-coverage documents.
    Refute(RefuteArgs),
    /// Validate an embedding file against the corpus.
    EmbedCheck(EmbedCheckArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    tuples: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Alias table used to canonicalize tuple objects.
    #[arg(long)]
    aliases: Option<PathBuf>,
}

impl CorpusArgs {
    fn load(&self) -> Result<(Corpus, AliasTable)> {
        let mut corpus = load_corpus(&self.docs, &self.tuples, &self.gt)?;
        let aliases = match &self.aliases {
            Some(p) => AliasTable::load(p)?,
            None => AliasTable::new(),
        };
        corpus.canonicalize(&aliases);
        Ok((corpus, aliases))
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Gold mention spans; capitalized runs are used when absent.
    #[arg(long)]
    mentions: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

/// Loaded inputs shared by the model-consuming subcommands.
struct Data {
    corpus: Corpus,
    labels: Vec<LabelRow>,
    features: FeatureIndex,
    mentions: MentionProvider,
    embeddings: Option<EmbeddingStore>,
}

impl DataArgs {
    fn load(&self) -> Result<Data> {
        let (corpus, _) = self.corpus.load()?;
        let features = match &self.features {
            Some(p) => pipeline::index_features(&read_features(p)?),
            None => FeatureIndex::new(),
        };
        Ok(Data {
            corpus,
            labels: read_labels(&self.labels)?,
            features,
            mentions: load_mentions(self.mentions.as_deref())?,
            embeddings: self.embeddings.as_deref().map(load_embeddings).transpose()?,
        })
    }
}

impl Data {
    fn ctx(&self) -> DataContext<'_> {
        DataContext {
            corpus: &self.corpus,
            features: &self.features,
            mentions: &self.mentions,
            embeddings: self.embeddings.as_ref(),
        }
    }

    fn pool(&self, entity: &str, relation: Relation) -> Result<Vec<&LabelRow>> {
        let rows: Vec<&LabelRow> = self
            .labels
            .iter()
            .filter(|r| r.entity_id == entity && r.relation == relation)
            .collect();
        if rows.is_empty() {
            return Err(Error::NoDocuments(format!("{entity} / {relation}")));
        }
        Ok(rows)
    }
}

fn load_mentions(path: Option<&Path>) -> Result<MentionProvider> {
    match path {
        Some(p) => MentionProvider::load(p),
        None => Ok(MentionProvider::Heuristic),
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory for the corpus files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_entities: usize,
    #[arg(long, default_value_t = 50)]
    docs_per_entity: usize,
    #[arg(long, default_value_t = 10)]
    gt_size: usize,
    #[arg(long, default_value_t = 0.8)]
    signal_strength: f64,
    #[arg(long, default_value_t = 32)]
    embedding_dimension: usize,
    #[arg(long, default_value_t = 0.8)]
    embedding_signal: f64,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "wiki")]
    variant: GtVariant,
    #[arg(long, default_value_t = crate::coverage::DEFAULT_PERCENTILE)]
    percentile: f64,
    #[arg(long, default_value_t = crate::coverage::DEFAULT_ABSOLUTE)]
    absolute: f64,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', default_values_t = pipeline::DEFAULT_SPLIT)]
    split: Vec<f64>,
    #[arg(long, default_value = "entity")]
    group_key: GroupKey,
    #[arg(long, default_value_t = pipeline::DEFAULT_MERGE_THRESHOLD)]
    merge_threshold: f64,
    /// Keep only this relation.
    #[arg(long)]
    relation: Option<Relation>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    mentions: Option<PathBuf>,
    /// Site popularity ranks, `domain<TAB>rank` per line.
    #[arg(long)]
    popularity: Option<PathBuf>,
    #[arg(long, default_value_t = 1.5)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// lr, tfidf, ngrams, stacked, herb or heuristic:<name>.
    #[arg(long)]
    model: Method,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-9)]
    adam_epsilon: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    /// Plain full-batch gradient descent instead of Adam mini-batches.
    #[arg(long)]
    full_batch_gd: bool,
    #[arg(long, default_value_t = crate::vectorize::DEFAULT_MIN_DF)]
    min_df: usize,
    #[arg(long, default_value_t = crate::vectorize::DEFAULT_MAX_FEATURES)]
    max_features: usize,
    /// Train on the full training split instead of a 50:50 undersample.
    #[arg(long)]
    no_undersample: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum RankMethod {
    Random,
    Bm25,
    Prediction,
    Oracle,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    method: RankMethod,
    /// Trained model file, needed by `prediction`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    entity: String,
    #[arg(long)]
    relation: Relation,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum PolicyArg {
    Baseline,
    Prioritized,
}

#[derive(Debug, Args)]
struct BudgetArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    policy: PolicyArg,
    /// Trained model file, needed by `prioritized`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    entity: String,
    #[arg(long)]
    relation: Relation,
    /// Seconds available for the pool.
    #[arg(long, default_value_t = 600.0)]
    budget: f64,
    #[arg(long, default_value_t = apps::PREDICTOR_MEAN_SECONDS)]
    predictor_mean: f64,
    #[arg(long, default_value_t = apps::EXTRACTOR_MEAN_SECONDS)]
    extractor_mean: f64,
    #[arg(long, default_value_t = apps::DEFAULT_INTERCEPT_SHARE)]
    intercept_share: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RefuteArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Trained model whose predictions replace gold coverage.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Claims supported by at most this many documents are checked.
    #[arg(long, default_value_t = 1)]
    max_support: usize,
    #[arg(long, default_value_t = apps::DEFAULT_REFUTATION_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EmbedCheckArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Corpus documents the file should cover.
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match apply_config_file(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let mut command = Cli::command();
    let names: Vec<String> = command.get_subcommands().map(|s| s.get_name().to_owned()).collect();
    for name in names {
        command = command.mut_subcommand(name, |s| s.args_override_self(true));
    }
    let cli = match command
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("COVRANK_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Inserts the entries of `--config FILE` right after the subcommand name so
/// that flags given on the command line, which come later, override them.
fn apply_config_file(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            config = Some(PathBuf::from(
                it.next().ok_or_else(|| Error::Usage("--config needs a file".into()))?,
            ));
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Usage(format!("{}:{}: expected key=value", path.display(), i + 1))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"');
        if value == "true" {
            flags.push(OsString::from(format!("--{key}")));
        } else if value != "false" {
            flags.push(OsString::from(format!("--{key}={value}")));
        }
    }
    // Position of the subcommand: the first argument after the program name
    // that is not a flag.
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(rest.len(), |p| p + 2);
    rest.splice(at..at, flags);
    Ok(rest)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Coverage(a) => coverage(a),
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Rank(a) => rank(a),
        Command::Budget(a) => budget(a),
        Command::Refute(a) => refute(a),
        Command::EmbedCheck(a) => embed_check(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_entities: a.n_entities,
        docs_per_entity: a.docs_per_entity,
        gt_size: a.gt_size,
        signal_strength: a.signal_strength,
        embedding_dimension: a.embedding_dimension,
        embedding_signal: a.embedding_signal,
        seed: a.seed,
    };
    let synth = synthgen::generate(&config)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    synth.write(&a.out)?;
    log::info!("wrote {} documents to {}", synth.corpus.documents.len(), a.out.display());
    Ok(())
}

fn coverage(a: CoverageArgs) -> Result<()> {
    let [train, validation, test] = a.split[..] else {
        return Err(Error::Usage(format!("--split needs three comma-separated fractions, got {}", a.split.len())));
    };
    let (corpus, _) = a.corpus.load()?;
    let config = LabelConfig {
        variant: a.variant,
        percentile: a.percentile,
        absolute: a.absolute,
        ratios: [train, validation, test],
        group_key: a.group_key,
        seed: a.seed,
        merge_threshold: a.merge_threshold,
    };
    let mut labels = pipeline::label_corpus(&corpus, &config)?;
    if let Some(r) = a.relation {
        labels.retain(|l| l.relation == r);
    }
    log::info!(
        "{} labeled documents, {} informative",
        labels.len(),
        labels.iter().filter(|l| l.label == 1).count()
    );
    write_labels(&a.out, &labels)
}

fn featurize(a: FeaturizeArgs) -> Result<()> {
    let (corpus, aliases) = a.corpus.load()?;
    let labels = read_labels(&a.labels)?;
    let mentions = load_mentions(a.mentions.as_deref())?;
    let popularity = match &a.popularity {
        Some(p) => PopularityTable::load(p)?,
        None => PopularityTable::new(),
    };
    let config = FeatureConfig {
        aliases: &aliases,
        mentions: &mentions,
        popularity: &popularity,
        bm25: Bm25Params { k1: a.k1, b: a.b },
    };
    let rows = pipeline::featurize_labels(&corpus, &labels, &config)?;
    write_features(&a.out, &rows)
}

fn train(a: TrainArgs) -> Result<()> {
    if a.model == Method::Herb && a.data.embeddings.is_none() {
        return Err(Error::Usage("--model herb requires --embeddings".into()));
    }
    let data = a.data.load()?;
    let config = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        adam_epsilon: a.adam_epsilon,
        epochs: a.epochs,
        l2_penalty: a.l2,
        seed: a.seed,
        full_batch_gd: a.full_batch_gd,
        ..TrainConfig::default()
    };
    let options = TrainOptions {
        min_df: a.min_df,
        max_features: a.max_features,
        undersample: !a.no_undersample,
    };
    let model = pipeline::train(a.model, &data.ctx(), &data.labels, &config, &options)?;
    log::info!("trained {} with threshold {}", model.method, model.threshold);
    model.save(&a.out)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let data = a.data.load()?;
    let model = ModelFile::load(&a.model)?;
    let report = pipeline::evaluate(&model, &data.ctx(), &data.labels)?;
    jsonl::write_json(&a.out, &report)
}

fn require_model(path: &Option<PathBuf>, what: &str) -> Result<ModelFile> {
    match path {
        Some(p) => ModelFile::load(p),
        None => Err(Error::Usage(format!("{what} requires --model"))),
    }
}

fn rank(a: RankArgs) -> Result<()> {
    let data = a.data.load()?;
    let rows = data.pool(&a.entity, a.relation)?;
    let ids: Vec<String> = rows.iter().map(|r| r.doc_id.clone()).collect();
    let (method, scores) = match a.method {
        RankMethod::Random => (RankingMethod::Random { seed: a.seed }, None),
        RankMethod::Bm25 => {
            let scores = rows
                .iter()
                .map(|r| {
                    let f = data
                        .features
                        .get(&(r.doc_id.clone(), r.relation))
                        .ok_or_else(|| Error::Usage(format!("bm25 ranking needs --features covering {}", r.doc_id)))?;
                    Ok((r.doc_id.clone(), f.bm25))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            (RankingMethod::Bm25, Some(scores))
        }
        RankMethod::Prediction => {
            let model = require_model(&a.model, "prediction ranking")?;
            let s = pipeline::predict(&model, &data.ctx(), &rows)?;
            (RankingMethod::Prediction, Some(ids.iter().cloned().zip(s).collect()))
        }
        RankMethod::Oracle => (
            RankingMethod::Oracle,
            Some(rows.iter().map(|r| (r.doc_id.clone(), r.coverage)).collect()),
        ),
    };
    let ranked = apps::rank_documents(&ids, method, scores.as_ref())?;
    apps::write_ranking_csv(&a.out, method.name(), &ranked)
}

fn budget(a: BudgetArgs) -> Result<()> {
    let data = a.data.load()?;
    let mut sizes = Vec::with_capacity(data.corpus.documents.len());
    for d in &data.corpus.documents {
        sizes.push((d.word_count, data.mentions.spans(d)?.len()));
    }
    let cost = CostModel::calibrate(&sizes, a.predictor_mean, a.extractor_mean, a.intercept_share)?;
    let rows = data.pool(&a.entity, a.relation)?;
    let (policy, scores) = match a.policy {
        PolicyArg::Baseline => (BudgetPolicy::BaselineRandom { seed: a.seed }, vec![0.0; rows.len()]),
        PolicyArg::Prioritized => {
            let model = require_model(&a.model, "prioritized budget policy")?;
            (BudgetPolicy::Prioritized, pipeline::predict(&model, &data.ctx(), &rows)?)
        }
    };
    let extractions = data.corpus.extractions_by_doc(&a.entity, a.relation);
    let mut docs = Vec::with_capacity(rows.len());
    for (r, score) in rows.iter().zip(scores) {
        let d = data
            .corpus
            .document(&r.doc_id)
            .ok_or_else(|| Error::UnknownDocument(r.doc_id.clone()))?;
        docs.push(BudgetDocument {
            doc_id: r.doc_id.clone(),
            doc_length: d.word_count,
            mention_count: data.mentions.spans(d)?.len(),
            tuples: extractions.get(&r.doc_id).cloned().unwrap_or_default(),
            predicted_score: score,
        });
    }
    let report = apps::simulate_budget(&docs, &cost, a.budget, policy)?;
    jsonl::write_json(&a.out, &report)
}

fn refute(a: RefuteArgs) -> Result<()> {
    let data = a.data.load()?;
    let pools: BTreeSet<(String, Relation)> = data
        .labels
        .iter()
        .map(|r| (r.entity_id.clone(), r.relation))
        .collect();
    let model = a.model.as_deref().map(ModelFile::load).transpose()?;
    let mut index = CoverageIndex::new();
    let mut claims = Vec::new();
    for (entity, relation) in pools {
        let rows = data.pool(&entity, relation)?;
        let values = match &model {
            Some(m) => pipeline::predict(m, &data.ctx(), &rows)?,
            None => rows.iter().map(|r| r.coverage).collect(),
        };
        let in_pool: BTreeSet<&str> = rows.iter().map(|r| r.doc_id.as_str()).collect();
        let mut support: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (doc, objects) in data.corpus.extractions_by_doc(&entity, relation) {
            if !in_pool.contains(doc.as_str()) {
                continue;
            }
            for o in objects {
                support.entry(o).or_default().insert(doc.clone());
            }
        }
        for (object, docs) in support {
            if docs.len() <= a.max_support {
                claims.push(Claim::new(&entity, relation, &object, docs)?);
            }
        }
        index.insert(
            (entity, relation),
            rows.iter().map(|r| r.doc_id.clone()).zip(values).collect(),
        );
    }
    let reports = apps::refute_claims(&claims, &index, a.threshold);
    jsonl::write(&a.out, &reports)
}

#[derive(Debug, Serialize)]
struct EmbedCheckReport {
    count: usize,
    dimension: usize,
    missing: Vec<String>,
    extra: Vec<String>,
}

fn embed_check(a: EmbedCheckArgs) -> Result<()> {
    let store = load_embeddings(&a.embeddings)?;
    let mut report = EmbedCheckReport {
        count: store.len(),
        dimension: store.dimension(),
        missing: Vec::new(),
        extra: Vec::new(),
    };
    if let Some(docs) = &a.docs {
        let ids: BTreeSet<String> = jsonl::read::<serde_json::Value>(docs)?
            .into_iter()
            .map(|(line, v)| {
                v.get("doc_id")
                    .and_then(|d| d.as_str())
                    .map(str::to_owned)
                    .ok_or_else(|| Error::Parse {
                        path: docs.clone(),
                        line,
                        message: "missing doc_id".into(),
                    })
            })
            .collect::<Result<_>>()?;
        report.missing = ids.iter().filter(|id| !store.contains(id)).cloned().collect();
        let stored: BTreeSet<&String> = store.ids().iter().collect();
        report.extra = stored.into_iter().filter(|id| !ids.contains(*id)).cloned().collect();
    }
    match &a.out {
        Some(p) => jsonl::write_json(p, &report)?,
        None => log::info!("{} embeddings of dimension {}", report.count, report.dimension),
    }
    if report.missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingEmbeddings(report.missing))
    }
}
