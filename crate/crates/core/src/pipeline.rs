//! Glue between the modules: labeling a corpus, featurizing its pools,
//! training any model kind from labels and features, scoring and evaluating.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Corpus, GroundTruth, GtVariant, Relation};
use crate::coverage::{self, GroupKey, LabelRow, LabeledDocument, Split};
use crate::error::{Error, Result};
use crate::eval::{self, ScoredLabel};
use crate::features::{self, FeatureConfig, FeatureRow, FeatureVector, Heuristic, MentionProvider};
use crate::jsonl;
use crate::model::{
    self, Design, HerbModel, LogisticModel, Standardization, StackedInputs, StackedModel, TrainConfig,
};
use crate::text;
use crate::vectorize::{self, EmbeddingStore, SparseVector, Vocabulary};

pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.1, 0.2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelConfig {
    pub variant: GtVariant,
    pub percentile: f64,
    pub absolute: f64,
    pub ratios: [f64; 3],
    pub group_key: GroupKey,
    pub seed: u64,
    pub merge_threshold: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            variant: GtVariant::Wiki,
            percentile: coverage::DEFAULT_PERCENTILE,
            absolute: coverage::DEFAULT_ABSOLUTE,
            ratios: DEFAULT_SPLIT,
            group_key: GroupKey::Entity,
            seed: 0,
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
        }
    }
}

/// (entity, relation) pairs that get a ground truth of `variant`: pairs with
/// a stored record of that variant, plus, for derived variants, every pair
/// with a stored record or an extraction about a corpus entity.
pub fn ground_truth_pairs(corpus: &Corpus, variant: GtVariant) -> BTreeSet<(String, Relation)> {
    let mut pairs: BTreeSet<(String, Relation)> = corpus
        .ground_truths
        .keys()
        .filter(|k| variant != GtVariant::Wiki || k.2 == GtVariant::Wiki)
        .map(|k| (k.0.clone(), k.1))
        .collect();
    if variant != GtVariant::Wiki {
        let entities: HashMap<String, String> = corpus
            .entities()
            .into_iter()
            .map(|e| (text::normalize(&e), e))
            .collect();
        for t in &corpus.tuples {
            if let Some(e) = entities.get(&text::normalize(&t.subject)) {
                pairs.insert((e.clone(), t.relation));
            }
        }
    }
    pairs
}

/// Stored ground truth of `variant`, or one derived from the corpus when the
/// variant is web/wikiweb and no record was supplied.
pub fn ground_truth(
    corpus: &Corpus,
    entity_id: &str,
    relation: Relation,
    variant: GtVariant,
    merge_threshold: f64,
) -> Result<GroundTruth> {
    if let Some(gt) = corpus.ground_truth(entity_id, relation, variant) {
        return Ok(gt.clone());
    }
    let empty = |variant| GroundTruth {
        entity_id: entity_id.to_owned(),
        relation,
        variant,
        objects: BTreeSet::new(),
    };
    match variant {
        GtVariant::Wiki => Ok(empty(GtVariant::Wiki)),
        GtVariant::Web => corpus::build_gt_web(corpus, entity_id, relation),
        GtVariant::Wikiweb => {
            let wiki = corpus
                .ground_truth(entity_id, relation, GtVariant::Wiki)
                .cloned()
                .unwrap_or_else(|| empty(GtVariant::Wiki));
            let web = ground_truth(corpus, entity_id, relation, GtVariant::Web, merge_threshold)?;
            corpus::merge_gt(&wiki, &web, merge_threshold)
        }
    }
}

/// Coverage, binary label and split for every document of every pool.
pub fn label_corpus(corpus: &Corpus, config: &LabelConfig) -> Result<Vec<LabelRow>> {
    let mut labeled: Vec<LabeledDocument> = Vec::new();
    for (entity, relation) in ground_truth_pairs(corpus, config.variant) {
        let gt = ground_truth(corpus, &entity, relation, config.variant, config.merge_threshold)?;
        let records = coverage::coverage_for_pool(corpus, &gt);
        if records.is_empty() {
            log::warn!("no documents for {entity} / {relation}; skipped");
            continue;
        }
        if gt.objects.is_empty() {
            log::warn!("empty ground truth for {entity} / {relation}; coverage is 0 throughout");
        }
        labeled.extend(coverage::binarize(&records, config.percentile, config.absolute)?);
    }
    if labeled.is_empty() {
        return Err(Error::Empty("no (entity, relation) pool has documents"));
    }
    let assignment = coverage::split(corpus, &labeled, config.ratios, config.group_key, config.seed)?;
    labeled
        .into_iter()
        .map(|l| {
            let split = assignment
                .get(&l.doc_id)
                .ok_or_else(|| Error::UnknownDocument(l.doc_id.clone()))?;
            Ok(LabelRow {
                doc_id: l.doc_id,
                entity_id: l.entity_id,
                relation: l.relation,
                coverage: l.coverage,
                label: l.label,
                split,
            })
        })
        .collect()
}

/// Heuristic features for every pool named in `labels`.
pub fn featurize_labels(corpus: &Corpus, labels: &[LabelRow], config: &FeatureConfig<'_>) -> Result<Vec<FeatureRow>> {
    let pairs: BTreeSet<(&str, Relation)> = labels.iter().map(|l| (l.entity_id.as_str(), l.relation)).collect();
    let mut rows = Vec::new();
    for (entity, relation) in pairs {
        for (doc_id, features) in features::featurize(corpus, entity, relation, config)? {
            rows.push(FeatureRow {
                doc_id,
                entity_id: entity.to_owned(),
                relation,
                features,
            });
        }
    }
    Ok(rows)
}

pub type FeatureIndex = BTreeMap<(String, Relation), FeatureVector>;

pub fn index_features(rows: &[FeatureRow]) -> FeatureIndex {
    rows.iter()
        .map(|r| ((r.doc_id.clone(), r.relation), r.features))
        .collect()
}

/// Which classifier to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Logistic regression over the six heuristics.
    Lr,
    /// Bag-of-words TF-IDF.
    Tfidf,
    /// TF-IDF over 1- to 3-grams.
    Ngrams,
    Stacked,
    Herb,
    Heuristic(Heuristic),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Lr => f.write_str("lr"),
            Method::Tfidf => f.write_str("tfidf"),
            Method::Ngrams => f.write_str("ngrams"),
            Method::Stacked => f.write_str("stacked"),
            Method::Herb => f.write_str("herb"),
            Method::Heuristic(h) => write!(f, "heuristic:{}", h.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lr" => Method::Lr,
            "tfidf" => Method::Tfidf,
            "ngrams" => Method::Ngrams,
            "stacked" => Method::Stacked,
            "herb" => Method::Herb,
            _ => match s.strip_prefix("heuristic:") {
                Some(h) => Method::Heuristic(h.parse()?),
                None => return Err(Error::Usage(format!("unknown model {s:?}"))),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Stacked,
    Herb,
    Heuristic,
}

/// What a linear layer reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum InputSpec {
    Heuristics,
    Heuristic { name: String },
    Tfidf { vocabulary: Vocabulary },
    Embedding,
    Probabilities,
}

/// A serialized logistic layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub dimension: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardization: Standardization,
    pub input: InputSpec,
}

impl LayerFile {
    fn new(model: &LogisticModel, input: InputSpec) -> Self {
        LayerFile {
            dimension: model.dim(),
            weights: model.weights.clone(),
            bias: model.bias,
            standardization: model.standardization.clone(),
            input,
        }
    }

    fn model(&self) -> Result<LogisticModel> {
        if self.weights.len() != self.dimension || self.standardization.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: self.weights.len(),
            });
        }
        Ok(LogisticModel {
            weights: self.weights.clone(),
            bias: self.bias,
            standardization: self.standardization.clone(),
        })
    }

    fn vocabulary(&self) -> Result<&Vocabulary> {
        match &self.input {
            InputSpec::Tfidf { vocabulary } => Ok(vocabulary),
            other => Err(Error::Format(format!("expected a tfidf layer, found {other:?}"))),
        }
    }
}

/// A trained classifier plus its decision threshold, as stored on disk.
/// The top-level layer is the output layer; stacked models list their
/// level-1 layers and HERB models nest their embedding classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub method: String,
    pub dimension: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardization: Standardization,
    pub input: InputSpec,
    pub threshold: f64,
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub level1: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_classifier: Option<LayerFile>,
}

impl ModelFile {
    fn from_layer(kind: ModelKind, method: Method, top: LayerFile, config: &TrainConfig) -> Self {
        ModelFile {
            kind,
            method: method.to_string(),
            dimension: top.dimension,
            weights: top.weights,
            bias: top.bias,
            standardization: top.standardization,
            input: top.input,
            threshold: 0.5,
            config: *config,
            level1: Vec::new(),
            embedding_classifier: None,
        }
    }

    fn top(&self) -> LayerFile {
        LayerFile {
            dimension: self.dimension,
            weights: self.weights.clone(),
            bias: self.bias,
            standardization: self.standardization.clone(),
            input: self.input.clone(),
        }
    }

    pub fn method(&self) -> Result<Method> {
        self.method.parse()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: ModelFile = serde_json::from_str(&body).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        for layer in std::iter::once(&mut m.input).chain(m.level1.iter_mut().map(|l| &mut l.input)) {
            if let InputSpec::Tfidf { vocabulary } = layer {
                vocabulary.reindex();
            }
        }
        Ok(m)
    }
}

/// Everything needed to build model inputs for labeled documents.
#[derive(Debug, Clone, Copy)]
pub struct DataContext<'a> {
    pub corpus: &'a Corpus,
    pub features: &'a FeatureIndex,
    pub mentions: &'a MentionProvider,
    pub embeddings: Option<&'a EmbeddingStore>,
}

impl DataContext<'_> {
    fn feature(&self, row: &LabelRow) -> Result<FeatureVector> {
        self.features
            .get(&(row.doc_id.clone(), row.relation))
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no features for {} / {}", row.doc_id, row.relation)))
    }

    fn heuristic_design(&self, rows: &[&LabelRow]) -> Result<Design> {
        let x = rows
            .iter()
            .map(|r| Ok(self.feature(r)?.to_array().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Design::Dense { dim: 6, rows: x })
    }

    fn masked_text(&self, doc_id: &str) -> Result<String> {
        let doc = self
            .corpus
            .document(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_owned()))?;
        corpus::mask_document(&doc.text, &self.mentions.spans(doc)?)
    }

    fn masked_texts(&self, rows: &[&LabelRow]) -> Result<HashMap<String, String>> {
        let mut out = HashMap::new();
        for r in rows {
            if !out.contains_key(&r.doc_id) {
                out.insert(r.doc_id.clone(), self.masked_text(&r.doc_id)?);
            }
        }
        Ok(out)
    }

    fn tfidf_design(&self, rows: &[&LabelRow], vocab: &Vocabulary, texts: &HashMap<String, String>) -> Result<Design> {
        let vectors: Vec<SparseVector> = rows
            .iter()
            .map(|r| vectorize::tfidf_vector(&texts[&r.doc_id], vocab))
            .collect();
        Design::sparse(vocab.len(), vectors)
    }

    fn embedding_design(&self, rows: &[&LabelRow]) -> Result<Design> {
        let store = self
            .embeddings
            .ok_or_else(|| Error::Usage("this model needs --embeddings".into()))?;
        let missing: BTreeSet<String> = rows
            .iter()
            .filter(|r| !store.contains(&r.doc_id))
            .map(|r| r.doc_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingEmbeddings(missing.into_iter().collect()));
        }
        let x = rows
            .iter()
            .map(|r| Ok(store.get(&r.doc_id)?.iter().map(|&v| f64::from(v)).collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(Design::Dense {
            dim: store.dimension(),
            rows: x,
        })
    }
}

/// Options for [`train`] beyond the optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub min_df: usize,
    pub max_features: usize,
    /// Balance the training split 50:50 by undersampling the majority class.
    pub undersample: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            min_df: vectorize::DEFAULT_MIN_DF,
            max_features: vectorize::DEFAULT_MAX_FEATURES,
            undersample: true,
        }
    }
}

fn rows_in(labels: &[LabelRow], split: Split) -> Vec<&LabelRow> {
    labels.iter().filter(|l| l.split == split).collect()
}

/// Trains `method` on the train split and picks the decision threshold
/// maximizing F1 on the validation split (0.5 when validation has no
/// positives).
pub fn train(
    method: Method,
    ctx: &DataContext<'_>,
    labels: &[LabelRow],
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<ModelFile> {
    let train_all = rows_in(labels, Split::Train);
    if train_all.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let train_rows: Vec<&LabelRow> = if options.undersample {
        let sample = coverage::undersample(&train_all.iter().map(|r| r.labeled()).collect::<Vec<_>>(), config.seed)?;
        let by_key: HashMap<(&str, Relation), &LabelRow> =
            train_all.iter().map(|r| ((r.doc_id.as_str(), r.relation), *r)).collect();
        sample
            .iter()
            .map(|s| by_key[&(s.doc_id.as_str(), s.relation)])
            .collect()
    } else {
        train_all.clone()
    };
    let y: Vec<u8> = train_rows.iter().map(|r| r.label).collect();
    log::info!(
        "training {method} on {} rows ({} positive)",
        y.len(),
        y.iter().filter(|&&v| v == 1).count()
    );

    let mut model = match method {
        Method::Heuristic(h) => {
            let top = LayerFile {
                dimension: 1,
                weights: vec![1.0],
                bias: 0.0,
                standardization: Standardization::identity(1),
                input: InputSpec::Heuristic { name: h.name().into() },
            };
            ModelFile::from_layer(ModelKind::Heuristic, method, top, config)
        }
        Method::Lr => {
            let m = model::train_lr(&ctx.heuristic_design(&train_rows)?, &y, config)?;
            ModelFile::from_layer(ModelKind::Lr, method, LayerFile::new(&m, InputSpec::Heuristics), config)
        }
        Method::Tfidf | Method::Ngrams => {
            let max_n = if method == Method::Ngrams { 3 } else { 1 };
            let texts = ctx.masked_texts(&train_all)?;
            let vocab = fit_train_vocabulary(&train_all, &texts, max_n, options)?;
            let m = model::train_lr(&ctx.tfidf_design(&train_rows, &vocab, &texts)?, &y, config)?;
            let input = InputSpec::Tfidf { vocabulary: vocab };
            ModelFile::from_layer(ModelKind::Lr, method, LayerFile::new(&m, input), config)
        }
        Method::Stacked => {
            let texts = ctx.masked_texts(&train_all)?;
            let vocab = fit_train_vocabulary(&train_all, &texts, 1, options)?;
            let tfidf = ctx.tfidf_design(&train_rows, &vocab, &texts)?;
            let heuristics = ctx.heuristic_design(&train_rows)?;
            let m = model::train_stacked(
                &StackedInputs {
                    tfidf: &tfidf,
                    heuristics: &heuristics,
                },
                &y,
                config,
            )?;
            let mut level1 = vec![LayerFile::new(&m.level1[0], InputSpec::Tfidf { vocabulary: vocab })];
            for (h, layer) in Heuristic::ALL.iter().zip(&m.level1[1..]) {
                level1.push(LayerFile::new(layer, InputSpec::Heuristic { name: h.name().into() }));
            }
            let mut file = ModelFile::from_layer(
                ModelKind::Stacked,
                method,
                LayerFile::new(&m.level2, InputSpec::Probabilities),
                config,
            );
            file.level1 = level1;
            file
        }
        Method::Herb => {
            let embeddings = ctx.embedding_design(&train_rows)?;
            let m = model::train_herb(&embeddings, &ctx.heuristic_design(&train_rows)?, &y, config)?;
            let mut file = ModelFile::from_layer(
                ModelKind::Herb,
                method,
                LayerFile::new(&m.fusion, InputSpec::Probabilities),
                config,
            );
            file.embedding_classifier = Some(LayerFile::new(&m.embedding_classifier, InputSpec::Embedding));
            file
        }
    };

    let validation = rows_in(labels, Split::Validation);
    if validation.iter().any(|r| r.label == 1) {
        let scores = predict(&model, ctx, &validation)?;
        let report = eval::optimal_f1(&scored(&validation, &scores))?;
        model.threshold = if report.threshold.is_finite() {
            report.threshold
        } else {
            // ±∞ would make every future decision constant; fall back to the
            // nearest observed score.
            let (lo, hi) = scores
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
            if report.threshold < 0.0 {
                lo - 1e-12
            } else {
                hi
            }
        };
    } else {
        log::warn!("validation split has no positives; threshold stays at 0.5");
    }
    Ok(model)
}

fn fit_train_vocabulary(
    train: &[&LabelRow],
    texts: &HashMap<String, String>,
    max_n: usize,
    options: &TrainOptions,
) -> Result<Vocabulary> {
    let ids: BTreeSet<&str> = train.iter().map(|r| r.doc_id.as_str()).collect();
    let docs: Vec<&str> = ids.iter().map(|id| texts[*id].as_str()).collect();
    vectorize::fit_vocabulary(&docs, max_n, options.min_df, options.max_features)
}

fn scored(rows: &[&LabelRow], scores: &[f64]) -> Vec<ScoredLabel> {
    rows.iter()
        .zip(scores)
        .map(|(r, &score)| ScoredLabel {
            doc_id: r.doc_id.clone(),
            score,
            label: r.label,
        })
        .collect()
}

/// Model scores for `rows`, in order. Probabilities for learned models, raw
/// feature values for heuristic models.
pub fn predict(model: &ModelFile, ctx: &DataContext<'_>, rows: &[&LabelRow]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let top = model.top();
    match model.kind {
        ModelKind::Heuristic => {
            let InputSpec::Heuristic { name } = &model.input else {
                return Err(Error::Format("heuristic model without a heuristic input".into()));
            };
            let h: Heuristic = name.parse()?;
            rows.iter().map(|r| Ok(ctx.feature(r)?.get(h))).collect()
        }
        ModelKind::Lr => {
            let lr = top.model()?;
            match &model.input {
                InputSpec::Heuristics => lr.predict_many(&ctx.heuristic_design(rows)?),
                InputSpec::Tfidf { vocabulary } => {
                    let texts = ctx.masked_texts(rows)?;
                    lr.predict_many(&ctx.tfidf_design(rows, vocabulary, &texts)?)
                }
                other => Err(Error::Format(format!("unsupported lr input {other:?}"))),
            }
        }
        ModelKind::Stacked => {
            let level1 = model.level1.iter().map(LayerFile::model).collect::<Result<Vec<_>>>()?;
            if level1.len() != 1 + Heuristic::ALL.len() {
                return Err(Error::Format(format!("stacked model has {} level-1 layers", level1.len())));
            }
            let stacked = StackedModel {
                level1,
                level2: top.model()?,
            };
            let vocab = model.level1[0].vocabulary()?;
            let texts = ctx.masked_texts(rows)?;
            let tfidf = ctx.tfidf_design(rows, vocab, &texts)?;
            let heuristics = ctx.heuristic_design(rows)?;
            stacked.predict_many(&StackedInputs {
                tfidf: &tfidf,
                heuristics: &heuristics,
            })
        }
        ModelKind::Herb => {
            let inner = model
                .embedding_classifier
                .as_ref()
                .ok_or_else(|| Error::Format("herb model without embedding classifier".into()))?;
            let herb = HerbModel {
                embedding_classifier: inner.model()?,
                fusion: top.model()?,
            };
            herb.predict_many(&ctx.embedding_design(rows)?, &ctx.heuristic_design(rows)?)
        }
    }
}

/// One line of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub relation: String,
    pub method: String,
    pub optimal_f1: f64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub n_test: usize,
}

/// Mean nDCG over pools, ranking each pool by score with gold coverage as
/// relevance; pools whose coverage is zero throughout are skipped.
pub fn mean_ndcg(rows: &[&LabelRow], scores: &[f64]) -> Result<f64> {
    // (doc_id, score, coverage) per pool
    type Pool<'a> = Vec<(&'a str, f64, f64)>;
    let mut pools: BTreeMap<(&str, Relation), Pool<'_>> = BTreeMap::new();
    for (r, &s) in rows.iter().zip(scores) {
        pools
            .entry((r.entity_id.as_str(), r.relation))
            .or_default()
            .push((r.doc_id.as_str(), s, r.coverage));
    }
    let mut values = Vec::new();
    for mut pool in pools.into_values() {
        if pool.iter().all(|p| p.2 == 0.0) {
            continue;
        }
        pool.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let rel: Vec<f64> = pool.iter().map(|p| p.2).collect();
        values.push(eval::ndcg(&rel, rel.len())?);
    }
    Ok(if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    })
}

/// Per-relation optimal F1 and mean nDCG on the test split, plus an `all`
/// row over every test document.
pub fn evaluate(model: &ModelFile, ctx: &DataContext<'_>, labels: &[LabelRow]) -> Result<Vec<ReportRow>> {
    let test = rows_in(labels, Split::Test);
    if test.is_empty() {
        return Err(Error::Empty("test split"));
    }
    let scores = predict(model, ctx, &test)?;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in test.iter().enumerate() {
        groups.entry(r.relation.name().to_owned()).or_default().push(i);
    }
    if groups.len() > 1 {
        groups.insert("all".into(), (0..test.len()).collect());
    }
    let mut out = Vec::new();
    for (relation, idx) in groups {
        let rows: Vec<&LabelRow> = idx.iter().map(|&i| test[i]).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let prf = match eval::optimal_f1(&scored(&rows, &s)) {
            Ok(p) => p,
            Err(Error::Empty(_)) => {
                log::warn!("no positive test documents for {relation}; skipped");
                continue;
            }
            Err(e) => return Err(e),
        };
        out.push(ReportRow {
            relation,
            method: model.method.clone(),
            optimal_f1: prf.f1,
            threshold: prf.threshold,
            precision: prf.precision,
            recall: prf.recall,
            ndcg: mean_ndcg(&rows, &s)?,
            n_test: rows.len(),
        });
    }
    Ok(out)
}

/// Convenience: the optimal F1 of `model` over the whole test split.
pub fn test_f1(model: &ModelFile, ctx: &DataContext<'_>, labels: &[LabelRow]) -> Result<f64> {
    let test = rows_in(labels, Split::Test);
    let scores = predict(model, ctx, &test)?;
    Ok(eval::optimal_f1(&scored(&test, &scores))?.f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, SynthConfig};

    fn fixture() -> (crate::synthgen::SynthCorpus, Vec<LabelRow>, FeatureIndex) {
        let synth = generate(&SynthConfig {
            n_entities: 10,
            docs_per_entity: 20,
            embedding_dimension: 8,
            seed: 5,
            ..SynthConfig::default()
        })
        .unwrap();
        let labels = label_corpus(&synth.corpus, &LabelConfig::default()).unwrap();
        let provider = MentionProvider::Gold(
            synth
                .mentions
                .iter()
                .map(|m| (m.doc_id.clone(), m.mentions.clone()))
                .collect(),
        );
        let fc = FeatureConfig {
            aliases: &synth.aliases,
            mentions: &provider,
            popularity: &synth.popularity,
            bm25: Default::default(),
        };
        let rows = featurize_labels(&synth.corpus, &labels, &fc).unwrap();
        (synth, labels, index_features(&rows))
    }

    #[test]
    fn method_names_round_trip() {
        for s in ["lr", "tfidf", "ngrams", "stacked", "herb", "heuristic:bm25", "heuristic:entity_saliency"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!("svm".parse::<Method>().is_err());
        assert!("heuristic:colour".parse::<Method>().is_err());
    }

    #[test]
    fn every_method_trains_saves_and_reloads() {
        let (synth, labels, features) = fixture();
        let provider = MentionProvider::Gold(
            synth
                .mentions
                .iter()
                .map(|m| (m.doc_id.clone(), m.mentions.clone()))
                .collect(),
        );
        let ctx = DataContext {
            corpus: &synth.corpus,
            features: &features,
            mentions: &provider,
            embeddings: Some(&synth.embeddings),
        };
        let config = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        for method in ["lr", "tfidf", "ngrams", "stacked", "herb", "heuristic:doc_length"] {
            let method: Method = method.parse().unwrap();
            let m = train(method, &ctx, &labels, &config, &TrainOptions::default()).unwrap();
            let path = dir.path().join("m.json");
            m.save(&path).unwrap();
            let back = ModelFile::load(&path).unwrap();
            let test = rows_in(&labels, Split::Test);
            assert_eq!(predict(&m, &ctx, &test).unwrap(), predict(&back, &ctx, &test).unwrap());
            let report = evaluate(&back, &ctx, &labels).unwrap();
            assert!(report.iter().all(|r| (0.0..=1.0).contains(&r.optimal_f1)));
        }
    }

    #[test]
    fn herb_reports_missing_embeddings() {
        let (synth, labels, features) = fixture();
        let provider = MentionProvider::Heuristic;
        let empty = EmbeddingStore::new(8).unwrap();
        let ctx = DataContext {
            corpus: &synth.corpus,
            features: &features,
            mentions: &provider,
            embeddings: Some(&empty),
        };
        let err = train(Method::Herb, &ctx, &labels, &TrainConfig::default(), &TrainOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingEmbeddings(ref ids) if !ids.is_empty()));
    }
}
