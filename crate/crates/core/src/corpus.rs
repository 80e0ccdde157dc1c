//! Documents, extraction tuples and ground-truth object sets.
//!
//! Entity identifiers double as canonical entity names: a tuple counts
//! towards entity `e` when its subject normalizes to the same string as `e`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    MemberOf,
    Family,
    EduAt,
    PositionHeld,
    PartnerOrg,
    FoundedBy,
    Ceo,
    BoardMember,
}

/// Named-entity type a relation's objects belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "PER")]
    Person,
    #[serde(rename = "ORG")]
    Organization,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Relation::MemberOf,
        Relation::Family,
        Relation::EduAt,
        Relation::PositionHeld,
        Relation::PartnerOrg,
        Relation::FoundedBy,
        Relation::Ceo,
        Relation::BoardMember,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::MemberOf => "member-of",
            Relation::Family => "family",
            Relation::EduAt => "edu-at",
            Relation::PositionHeld => "position-held",
            Relation::PartnerOrg => "partner-org",
            Relation::FoundedBy => "founded-by",
            Relation::Ceo => "ceo",
            Relation::BoardMember => "board-member",
        }
    }

    pub fn target_type(self) -> EntityType {
        match self {
            Relation::Family
            | Relation::FoundedBy
            | Relation::Ceo
            | Relation::BoardMember
            | Relation::PositionHeld => EntityType::Person,
            Relation::MemberOf | Relation::EduAt | Relation::PartnerOrg => EntityType::Organization,
        }
    }

    /// Type of the subject entity the relation is asked about.
    pub fn subject_type(self) -> EntityType {
        match self {
            Relation::MemberOf | Relation::Family | Relation::EduAt | Relation::PositionHeld => {
                EntityType::Person
            }
            _ => EntityType::Organization,
        }
    }

    /// Query words for the relation, e.g. `founded-by` → ["founded", "by"].
    pub fn query_terms(self) -> Vec<String> {
        self.name().split('-').map(str::to_owned).collect()
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown relation {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GtVariant {
    Wiki,
    Web,
    Wikiweb,
}

impl FromStr for GtVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wiki" => Ok(GtVariant::Wiki),
            "web" => Ok(GtVariant::Web),
            "wikiweb" => Ok(GtVariant::Wikiweb),
            _ => Err(Error::InvalidArgument(format!("unknown ground-truth variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub entity_id: String,
    pub url: String,
    pub site_domain: String,
    pub text: String,
    #[serde(skip)]
    pub word_count: usize,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        entity_id: impl Into<String>,
        url: impl Into<String>,
        site_domain: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        let text = text.into();
        Document {
            doc_id: doc_id.into(),
            entity_id: entity_id.into(),
            url: url.into(),
            site_domain: site_domain.into(),
            word_count: text::word_count(&text),
            text,
        }
    }

    /// Url host plus its first path segment (`example.com/people`), the
    /// `sub_domain` split key.
    pub fn sub_domain(&self) -> String {
        let after_scheme = self.url.split("://").nth(1).unwrap_or(&self.url);
        let mut parts = after_scheme.split('/');
        let host = parts.next().unwrap_or_default();
        match parts.next().filter(|s| !s.is_empty()) {
            Some(section) => format!("{host}/{section}"),
            None => host.to_owned(),
        }
    }
}

fn default_confidence() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionTuple {
    pub doc_id: String,
    pub subject: String,
    pub relation: Relation,
    pub object: String,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub entity_id: String,
    pub relation: Relation,
    pub variant: GtVariant,
    pub objects: BTreeSet<String>,
}

pub type GtKey = (String, Relation, GtVariant);

/// Surface form → canonical identifier. Unknown forms canonicalize to their
/// case-folded, whitespace-collapsed text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AliasTable {
    map: HashMap<String, String>,
    by_canonical: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AliasRecord {
    pub canonical: String,
    pub aliases: Vec<String>,
}

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: &[AliasRecord]) -> Self {
        let mut table = AliasTable::new();
        for r in records {
            table.insert(&r.canonical, r.aliases.iter().map(String::as_str));
        }
        table
    }

    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<AliasRecord> = jsonl::read(path)?.into_iter().map(|(_, r)| r).collect();
        Ok(Self::from_records(&records))
    }

    /// Registers `canonical` and its aliases. A canonical form always maps to
    /// itself, even if an earlier record listed it as someone else's alias.
    pub fn insert<'a>(&mut self, canonical: &str, aliases: impl IntoIterator<Item = &'a str>) {
        let canonical = canonical.split_whitespace().collect::<Vec<_>>().join(" ");
        let entry = self.by_canonical.entry(canonical.clone()).or_default();
        for alias in aliases {
            let key = text::normalize(alias);
            if !entry.contains(&alias.to_owned()) {
                entry.push(alias.to_owned());
            }
            let is_other_canonical = self
                .map
                .get(&key)
                .is_some_and(|c| c != &canonical && text::normalize(c) == key);
            if !is_other_canonical {
                self.map.insert(key, canonical.clone());
            }
        }
        self.map.insert(text::normalize(&canonical), canonical);
    }

    pub fn canon(&self, surface: &str) -> String {
        let key = text::normalize(surface);
        self.map.get(&key).cloned().unwrap_or(key)
    }

    /// Aliases for an entity, including the canonical form itself.
    pub fn aliases_of(&self, entity: &str) -> Vec<String> {
        let canonical = self.canon(entity);
        let mut out = vec![canonical.clone()];
        if let Some(list) = self.by_canonical.get(&canonical) {
            out.extend(list.iter().cloned());
        }
        if !out.iter().any(|a| a == entity) {
            out.push(entity.to_owned());
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn records(&self) -> Vec<AliasRecord> {
        self.by_canonical
            .iter()
            .map(|(c, a)| AliasRecord {
                canonical: c.clone(),
                aliases: a.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub tuples: Vec<ExtractionTuple>,
    pub ground_truths: BTreeMap<GtKey, GroundTruth>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(
        documents: Vec<Document>,
        tuples: Vec<ExtractionTuple>,
        ground_truths: Vec<GroundTruth>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            if index.insert(d.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDocId(d.doc_id.clone()));
            }
        }
        for (i, t) in tuples.iter().enumerate() {
            if !index.contains_key(&t.doc_id) {
                return Err(Error::DanglingDocId {
                    doc_id: t.doc_id.clone(),
                    line: i + 1,
                });
            }
        }
        let ground_truths = ground_truths
            .into_iter()
            .map(|gt| ((gt.entity_id.clone(), gt.relation, gt.variant), gt))
            .collect();
        Ok(Corpus {
            documents,
            tuples,
            ground_truths,
            index,
        })
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn documents_for<'a>(&'a self, entity_id: &'a str) -> impl Iterator<Item = &'a Document> + 'a {
        self.documents.iter().filter(move |d| d.entity_id == entity_id)
    }

    /// Distinct entity ids in first-appearance order.
    pub fn entities(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.documents
            .iter()
            .filter(|d| seen.insert(d.entity_id.as_str()))
            .map(|d| d.entity_id.clone())
            .collect()
    }

    pub fn ground_truth(&self, entity_id: &str, relation: Relation, variant: GtVariant) -> Option<&GroundTruth> {
        self.ground_truths
            .get(&(entity_id.to_owned(), relation, variant))
    }

    /// Objects extracted from `doc_id` whose subject is `entity_id` under `relation`.
    pub fn extracted_objects(&self, doc_id: &str, entity_id: &str, relation: Relation) -> BTreeSet<String> {
        let subject = text::normalize(entity_id);
        self.tuples
            .iter()
            .filter(|t| t.doc_id == doc_id && t.relation == relation && text::normalize(&t.subject) == subject)
            .map(|t| t.object.clone())
            .collect()
    }

    /// Per-document extracted object sets for `(entity, relation)`, built in one pass.
    pub fn extractions_by_doc(&self, entity_id: &str, relation: Relation) -> HashMap<String, BTreeSet<String>> {
        let subject = text::normalize(entity_id);
        let mut out: HashMap<String, BTreeSet<String>> = HashMap::new();
        for t in &self.tuples {
            if t.relation == relation && text::normalize(&t.subject) == subject {
                out.entry(t.doc_id.clone()).or_default().insert(t.object.clone());
            }
        }
        out
    }

    pub fn save(&self, documents_path: &Path, tuples_path: &Path, gt_path: &Path) -> Result<()> {
        jsonl::write(documents_path, &self.documents)?;
        jsonl::write(tuples_path, &self.tuples)?;
        jsonl::write(gt_path, self.ground_truths.values())
    }

    /// Replaces every tuple by its canonical, deduplicated form.
    pub fn canonicalize(&mut self, aliases: &AliasTable) {
        self.tuples = dedup_tuples(&self.tuples, aliases);
        for gt in self.ground_truths.values_mut() {
            gt.objects = gt.objects.iter().map(|o| aliases.canon(o)).collect();
        }
    }
}

pub fn load_corpus(documents_path: &Path, tuples_path: &Path, gt_path: &Path) -> Result<Corpus> {
    let documents: Vec<Document> = jsonl::read::<Document>(documents_path)?
        .into_iter()
        .map(|(_, d)| Document::new(d.doc_id, d.entity_id, d.url, d.site_domain, d.text))
        .collect();
    let mut ids = HashSet::with_capacity(documents.len());
    for d in &documents {
        if !ids.insert(d.doc_id.as_str()) {
            return Err(Error::DuplicateDocId(d.doc_id.clone()));
        }
    }

    let mut tuples = Vec::new();
    for (line, t) in jsonl::read::<ExtractionTuple>(tuples_path)? {
        if !ids.contains(t.doc_id.as_str()) {
            return Err(Error::DanglingDocId { doc_id: t.doc_id, line });
        }
        let parse_err = |message: &str| Error::Parse {
            path: tuples_path.to_path_buf(),
            line,
            message: message.to_owned(),
        };
        if text::normalize(&t.subject).is_empty() || text::normalize(&t.object).is_empty() {
            return Err(parse_err("empty subject or object"));
        }
        if !(0.0..=1.0).contains(&t.confidence) {
            return Err(parse_err("confidence outside [0, 1]"));
        }
        tuples.push(t);
    }

    let mut gts = Vec::new();
    for (line, gt) in jsonl::read::<GroundTruth>(gt_path)? {
        if gts.iter().any(|g: &GroundTruth| {
            (&g.entity_id, g.relation, g.variant) == (&gt.entity_id, gt.relation, gt.variant)
        }) {
            return Err(Error::Parse {
                path: gt_path.to_path_buf(),
                line,
                message: format!("repeated ground truth for {} / {}", gt.entity_id, gt.relation),
            });
        }
        gts.push(gt);
    }
    Corpus::new(documents, tuples, gts)
}

/// Canonicalizes subjects and objects and collapses rows that agree on
/// (doc_id, subject, relation, object), keeping the highest confidence.
/// Output keeps first-occurrence order.
pub fn dedup_tuples(tuples: &[ExtractionTuple], aliases: &AliasTable) -> Vec<ExtractionTuple> {
    let mut out: Vec<ExtractionTuple> = Vec::with_capacity(tuples.len());
    let mut seen: HashMap<(String, String, Relation, String), usize> = HashMap::new();
    for t in tuples {
        let canonical = ExtractionTuple {
            doc_id: t.doc_id.clone(),
            subject: aliases.canon(&t.subject),
            relation: t.relation,
            object: aliases.canon(&t.object),
            confidence: t.confidence,
        };
        let key = (
            canonical.doc_id.clone(),
            canonical.subject.clone(),
            canonical.relation,
            canonical.object.clone(),
        );
        match seen.get(&key) {
            Some(&i) => out[i].confidence = out[i].confidence.max(canonical.confidence),
            None => {
                seen.insert(key, out.len());
                out.push(canonical);
            }
        }
    }
    out
}

/// Document frequency of every object extracted for `(entity_id, relation)`
/// across the entity's documents.
pub fn object_docfreq(corpus: &Corpus, entity_id: &str, relation: Relation) -> BTreeMap<String, usize> {
    let mut freq = BTreeMap::new();
    for objects in corpus.extractions_by_doc(entity_id, relation).into_values() {
        for o in objects {
            *freq.entry(o).or_insert(0) += 1;
        }
    }
    freq
}

/// Frequent-extraction ground truth: an object is kept when it occurs in at
/// least 5% of the entity's documents, or in at least a fifth as many
/// documents as the most frequent object.
pub fn build_gt_web(corpus: &Corpus, entity_id: &str, relation: Relation) -> Result<GroundTruth> {
    let n_docs = corpus.documents_for(entity_id).count();
    if n_docs == 0 {
        return Err(Error::NoDocuments(entity_id.to_owned()));
    }
    let freq = object_docfreq(corpus, entity_id, relation);
    let max = freq.values().copied().max().unwrap_or(0) as f64;
    let objects = freq
        .into_iter()
        .filter(|&(_, df)| {
            let df = df as f64;
            df >= 0.05 * n_docs as f64 || df >= max / 5.0
        })
        .map(|(o, _)| o)
        .collect();
    Ok(GroundTruth {
        entity_id: entity_id.to_owned(),
        relation,
        variant: GtVariant::Web,
        objects,
    })
}

fn token_set(s: &str) -> BTreeSet<String> {
    text::folded_tokens(s).into_iter().collect()
}

pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (token_set(a), token_set(b));
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(&b).count();
    let union = a.union(&b).count();
    inter as f64 / union as f64
}

/// Union of two ground truths for the same (entity, relation). Objects that
/// normalize to the same string, or whose token sets have Jaccard similarity
/// at or above `similarity_threshold`, are identified (transitively) and
/// represented by their lexicographically smallest form.
pub fn merge_gt(gt_a: &GroundTruth, gt_b: &GroundTruth, similarity_threshold: f64) -> Result<GroundTruth> {
    if gt_a.entity_id != gt_b.entity_id || gt_a.relation != gt_b.relation {
        return Err(Error::GroundTruthMismatch(format!(
            "({}, {}) vs ({}, {})",
            gt_a.entity_id, gt_a.relation, gt_b.entity_id, gt_b.relation
        )));
    }
    let all: Vec<&String> = gt_a.objects.union(&gt_b.objects).collect();
    let mut parent: Vec<usize> = (0..all.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let same = text::normalize(all[i]) == text::normalize(all[j])
                || token_jaccard(all[i], all[j]) >= similarity_threshold;
            if same {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                // `all` is sorted, so the smaller index is the smaller string
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let objects = (0..all.len())
        .filter(|&i| find(&mut parent, i) == i)
        .map(|i| all[i].clone())
        .collect();
    Ok(GroundTruth {
        entity_id: gt_a.entity_id.clone(),
        relation: gt_a.relation,
        variant: GtVariant::Wikiweb,
        objects,
    })
}

/// Half-open span in character offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

/// Converts byte spans over `text` into character spans.
pub fn char_spans(text: &str, byte_spans: &[(usize, usize)]) -> Vec<Span> {
    let to_char = |b: usize| text[..b].chars().count();
    byte_spans.iter().map(|&(s, e)| Span::new(to_char(s), to_char(e))).collect()
}

/// Replaces entity spans by `[ENT]` and number spans by `[NUM]`. A span lying
/// inside a longer one is absorbed by it; partial overlaps are an error.
pub fn mask_text(text: &str, entity_mentions: &[Span], number_spans: &[Span]) -> Result<String> {
    let len = text.chars().count();
    let mut spans: Vec<(Span, &str)> = entity_mentions
        .iter()
        .map(|&s| (s, text::ENT_MASK))
        .chain(number_spans.iter().map(|&s| (s, text::NUM_MASK)))
        .collect();
    for (s, _) in &spans {
        if s.start > s.end || s.end > len {
            return Err(Error::SpanOutOfBounds {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    // longest first among equal starts; entities before numbers on exact ties
    spans.sort_by(|(a, ma), (b, mb)| {
        a.start
            .cmp(&b.start)
            .then(b.end.cmp(&a.end))
            .then((*ma == text::NUM_MASK).cmp(&(*mb == text::NUM_MASK)))
    });
    let mut kept: Vec<(Span, &str)> = Vec::with_capacity(spans.len());
    for (s, mask) in spans {
        if s.start == s.end {
            continue;
        }
        if let Some((last, _)) = kept.last() {
            if s.end <= last.end {
                continue;
            }
            if s.start < last.end {
                return Err(Error::OverlappingSpans(s.start, last.end));
            }
        }
        kept.push((s, mask));
    }

    let mut out = String::with_capacity(text.len());
    let mut spans = kept.into_iter().peekable();
    let mut skip_until = 0;
    for (i, c) in text.chars().enumerate() {
        if let Some(&(s, mask)) = spans.peek() {
            if i == s.start {
                out.push_str(mask);
                skip_until = s.end;
                spans.next();
            }
        }
        if i >= skip_until {
            out.push(c);
        }
    }
    Ok(out)
}

/// Masks the given entity mentions plus every digit run in `text`.
pub fn mask_document(text: &str, entity_mentions: &[Span]) -> Result<String> {
    let numbers = char_spans(text, &text::number_spans(text));
    mask_text(text, entity_mentions, &numbers)
}
