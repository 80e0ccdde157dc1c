//! The six cheap per-document heuristics and the top-half heuristic classifier.

pub mod bm25;
pub mod readability;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bm25::{Bm25Index, Bm25Params};
pub use readability::flesch;

use crate::corpus::{AliasTable, Corpus, Document, EntityType, Relation, Span};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub doc_length: usize,
    pub ner_count: usize,
    pub entity_saliency: usize,
    pub bm25: f64,
    pub popularity: f64,
    pub flesch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Heuristic {
    DocLength,
    NerCount,
    EntitySaliency,
    Bm25,
    Popularity,
    Flesch,
}

impl Heuristic {
    pub const ALL: [Heuristic; 6] = [
        Heuristic::DocLength,
        Heuristic::NerCount,
        Heuristic::EntitySaliency,
        Heuristic::Bm25,
        Heuristic::Popularity,
        Heuristic::Flesch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::DocLength => "doc_length",
            Heuristic::NerCount => "ner_count",
            Heuristic::EntitySaliency => "entity_saliency",
            Heuristic::Bm25 => "bm25",
            Heuristic::Popularity => "popularity",
            Heuristic::Flesch => "flesch",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown heuristic {s:?}")))
    }
}

impl FeatureVector {
    pub fn get(&self, h: Heuristic) -> f64 {
        match h {
            Heuristic::DocLength => self.doc_length as f64,
            Heuristic::NerCount => self.ner_count as f64,
            Heuristic::EntitySaliency => self.entity_saliency as f64,
            Heuristic::Bm25 => self.bm25,
            Heuristic::Popularity => self.popularity,
            Heuristic::Flesch => self.flesch,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        Heuristic::ALL.map(|h| self.get(h))
    }
}

pub fn doc_length(document: &Document) -> usize {
    text::word_count(&document.text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub kind: EntityType,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MentionRecord {
    pub doc_id: String,
    pub mentions: Vec<Mention>,
}

/// Source of named-entity mentions: a gold file, or capitalized-token runs.
#[derive(Debug, Clone)]
pub enum MentionProvider {
    Gold(HashMap<String, Vec<Mention>>),
    /// Capitalized runs carry no type, so every run counts for every relation.
    Heuristic,
}

impl MentionProvider {
    pub fn load(path: &Path) -> Result<Self> {
        let mut map = HashMap::new();
        for (_, r) in jsonl::read::<MentionRecord>(path)? {
            map.insert(r.doc_id, r.mentions);
        }
        Ok(MentionProvider::Gold(map))
    }

    /// Entity spans for masking, in character offsets.
    pub fn spans(&self, document: &Document) -> Result<Vec<Span>> {
        match self {
            MentionProvider::Gold(map) => {
                let mentions = map
                    .get(&document.doc_id)
                    .ok_or_else(|| Error::MissingMentions(document.doc_id.clone()))?;
                let len = document.text.chars().count();
                mentions
                    .iter()
                    .map(|m| {
                        if m.start > m.end || m.end > len {
                            Err(Error::SpanOutOfBounds {
                                start: m.start,
                                end: m.end,
                                len,
                            })
                        } else {
                            Ok(Span::new(m.start, m.end))
                        }
                    })
                    .collect()
            }
            MentionProvider::Heuristic => Ok(crate::corpus::char_spans(
                &document.text,
                &text::capitalized_runs(&document.text),
            )),
        }
    }
}

pub fn ner_count(document: &Document, relation: Relation, provider: &MentionProvider) -> Result<usize> {
    match provider {
        MentionProvider::Gold(map) => {
            let mentions = map
                .get(&document.doc_id)
                .ok_or_else(|| Error::MissingMentions(document.doc_id.clone()))?;
            let target = relation.target_type();
            Ok(mentions.iter().filter(|m| m.kind == target).count())
        }
        MentionProvider::Heuristic => Ok(text::capitalized_runs(&document.text).len()),
    }
}

/// Counts non-overlapping, case-insensitive alias occurrences aligned to
/// token boundaries, preferring the longest alias at each position.
pub fn entity_saliency(document: &Document, aliases: &[String]) -> usize {
    let mut patterns: Vec<Vec<String>> = aliases
        .iter()
        .map(|a| text::folded_tokens(a))
        .filter(|p| !p.is_empty())
        .collect();
    patterns.sort_by_key(|p| std::cmp::Reverse(p.len()));
    let tokens = text::folded_tokens(&document.text);
    let mut count = 0;
    let mut i = 0;
    while i < tokens.len() {
        match patterns.iter().find(|p| tokens[i..].starts_with(p)) {
            Some(p) => {
                count += 1;
                i += p.len();
            }
            None => i += 1,
        }
    }
    count
}

/// Site popularity ranks; 1 is the most popular site.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopularityTable {
    ranks: HashMap<String, u64>,
}

impl PopularityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, site_domain: impl Into<String>, rank: u64) -> Result<()> {
        if rank == 0 {
            return Err(Error::InvalidArgument("popularity ranks start at 1".into()));
        }
        self.ranks.insert(site_domain.into(), rank);
        Ok(())
    }

    pub fn rank(&self, site_domain: &str) -> Option<u64> {
        self.ranks.get(site_domain).copied()
    }

    /// Reads `site_domain<TAB>rank` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table = PopularityTable::new();
        for (i, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (domain, rank) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected site_domain<TAB>rank".into()))?;
            let rank: u64 = rank.trim().parse().map_err(|e| parse_err(format!("rank: {e}")))?;
            table.insert(domain.trim(), rank).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<_> = self.ranks.iter().collect();
        rows.sort_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)));
        let body: String = rows.iter().map(|(d, r)| format!("{d}\t{r}\n")).collect();
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// `1 / ln(rank + 1)` for ranked sites, 0 for unknown ones.
pub fn popularity(site_domain: &str, table: &PopularityTable) -> f64 {
    match table.rank(site_domain) {
        Some(rank) => 1.0 / ((rank + 1) as f64).ln(),
        None => 0.0,
    }
}

/// Everything featurization needs besides the corpus.
#[derive(Debug, Clone, Copy)]
pub struct FeatureConfig<'a> {
    pub aliases: &'a AliasTable,
    pub mentions: &'a MentionProvider,
    pub popularity: &'a PopularityTable,
    pub bm25: Bm25Params,
}

/// Heuristic vectors for every document of `entity_id`, with BM25 computed
/// against that entity's document pool and the query ⟨entity⟩ + ⟨relation⟩.
pub fn featurize(
    corpus: &Corpus,
    entity_id: &str,
    relation: Relation,
    config: &FeatureConfig<'_>,
) -> Result<BTreeMap<String, FeatureVector>> {
    let pool: Vec<&Document> = corpus.documents_for(entity_id).collect();
    if pool.is_empty() {
        return Err(Error::NoDocuments(entity_id.to_owned()));
    }
    let index = Bm25Index::build(pool.iter().map(|d| (d.doc_id.as_str(), d.text.as_str())), config.bm25);
    let query = bm25::query_tokens(entity_id, &relation.query_terms());
    let aliases = config.aliases.aliases_of(entity_id);
    let mut out = BTreeMap::new();
    for d in pool {
        let v = FeatureVector {
            doc_length: doc_length(d),
            ner_count: ner_count(d, relation, config.mentions)?,
            entity_saliency: entity_saliency(d, &aliases),
            bm25: index.score(&query, &d.doc_id)?,
            popularity: popularity(&d.site_domain, config.popularity),
            flesch: flesch(&d.text)?,
        };
        out.insert(d.doc_id.clone(), v);
    }
    Ok(out)
}

/// Ranks by score (descending, ties by ascending doc_id) and labels the top ⌈n/2⌉ as 1.
pub fn heuristic_classifier(scores: &BTreeMap<String, f64>) -> BTreeMap<String, u8> {
    let mut ranked: Vec<(&String, f64)> = scores.iter().map(|(d, &s)| (d, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    let positives = ranked.len().div_ceil(2);
    ranked
        .into_iter()
        .enumerate()
        .map(|(i, (d, _))| (d.clone(), (i < positives) as u8))
        .collect()
}

/// Coin-flip baseline: each document is labeled 1 with probability `p`.
/// `p = 0.5` is the fair coin; the test-set base rate gives the biased coin.
pub fn random_classifier(doc_ids: &[String], p: f64, seed: u64) -> BTreeMap<String, u8> {
    let mut sorted: Vec<&String> = doc_ids.iter().collect();
    sorted.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted
        .into_iter()
        .map(|d| (d.clone(), rng.random_bool(p.clamp(0.0, 1.0)) as u8))
        .collect()
}

/// One line of `features.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub doc_id: String,
    pub entity_id: String,
    pub relation: Relation,
    #[serde(flatten)]
    pub features: FeatureVector,
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    Ok(jsonl::read(path)?.into_iter().map(|(_, r)| r).collect())
}

pub fn write_features(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    jsonl::write(path, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document::new("d1", "Tesla", "https://x.org", "x.org", text)
    }

    #[test]
    fn lengths() {
        assert_eq!(doc_length(&doc("hello world")), 2);
        assert_eq!(doc_length(&doc("")), 0);
        assert_eq!(doc_length(&doc("Don't stop-believing now")), 3);
    }

    fn gold() -> MentionProvider {
        let m = |kind| Mention { start: 0, end: 1, kind };
        let mut map = HashMap::new();
        map.insert(
            "d1".to_string(),
            vec![
                m(EntityType::Person),
                m(EntityType::Person),
                m(EntityType::Organization),
                m(EntityType::Person),
                m(EntityType::Organization),
            ],
        );
        MentionProvider::Gold(map)
    }

    #[test]
    fn ner_counts_by_type() {
        let d = doc("x y z");
        assert_eq!(ner_count(&d, Relation::Family, &gold()).unwrap(), 3);
        assert_eq!(ner_count(&d, Relation::MemberOf, &gold()).unwrap(), 2);
        let other = Document::new("d2", "E", "u", "s", "x");
        assert!(matches!(
            ner_count(&other, Relation::Family, &gold()),
            Err(Error::MissingMentions(_))
        ));
        let d = doc("Steve Jobs met Steve Wozniak.");
        assert_eq!(ner_count(&d, Relation::Family, &MentionProvider::Heuristic).unwrap(), 2);
    }

    #[test]
    fn saliency_longest_match() {
        let tesla = vec!["Tesla".to_string()];
        assert_eq!(entity_saliency(&doc("Tesla cars. TESLA energy; tesla."), &tesla), 3);
        let both = vec!["Tesla".to_string(), "Tesla Inc".to_string()];
        assert_eq!(entity_saliency(&doc("Tesla Inc is Tesla."), &both), 2);
        assert_eq!(entity_saliency(&doc("Nothing relevant"), &both), 0);
        assert_eq!(entity_saliency(&doc("Teslas are not Tesla's"), &tesla), 0);
    }

    #[test]
    fn popularity_transform() {
        let mut t = PopularityTable::new();
        t.insert("a.com", 1).unwrap();
        t.insert("b.com", 50).unwrap();
        assert!((popularity("a.com", &t) - 1.0 / 2f64.ln()).abs() < 1e-12);
        assert_eq!(popularity("missing.org", &t), 0.0);
        assert!(popularity("a.com", &t) > popularity("b.com", &t));
        assert!(t.insert("c.com", 0).is_err());
    }

    #[test]
    fn classifier_top_half() {
        let scores: BTreeMap<String, f64> = [("a", 5.0), ("b", 4.0), ("c", 3.0), ("d", 2.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let l = heuristic_classifier(&scores);
        assert_eq!(l.values().copied().collect::<Vec<_>>(), [1, 1, 0, 0]);

        let three: BTreeMap<String, f64> = [("x", 0.1), ("y", 0.9), ("z", 0.5)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let l = heuristic_classifier(&three);
        assert_eq!(l.values().map(|&v| v as usize).sum::<usize>(), 2);
        assert_eq!(l["x"], 0);

        let ties: BTreeMap<String, f64> = ["q", "a", "m", "c", "z"].iter().map(|k| (k.to_string(), 1.0)).collect();
        let l = heuristic_classifier(&ties);
        let positives: Vec<_> = l.iter().filter(|(_, &v)| v == 1).map(|(k, _)| k.as_str()).collect();
        assert_eq!(positives, ["a", "c", "m"]);
    }

    #[test]
    fn random_baseline_is_seeded() {
        let ids: Vec<String> = (0..200).map(|i| format!("d{i}")).collect();
        assert_eq!(random_classifier(&ids, 0.5, 4), random_classifier(&ids, 0.5, 4));
        let ones = random_classifier(&ids, 0.2, 4).values().filter(|&&v| v == 1).count();
        assert!((20..=60).contains(&ones), "{ones}");
    }

    fn small_corpus() -> Corpus {
        let docs = vec![
            Document::new("a", "Tesla", "https://x.org/a", "x.org", "Tesla was founded by Musk. Tesla builds cars."),
            Document::new("b", "Tesla", "https://y.org/b", "y.org", "Electric cars are popular."),
        ];
        Corpus::new(docs, vec![], vec![]).unwrap()
    }

    #[test]
    fn featurize_pool() {
        let corpus = small_corpus();
        let aliases = AliasTable::new();
        let mut pop = PopularityTable::new();
        pop.insert("x.org", 3).unwrap();
        let mentions = MentionProvider::Heuristic;
        let cfg = FeatureConfig {
            aliases: &aliases,
            mentions: &mentions,
            popularity: &pop,
            bm25: Bm25Params::default(),
        };
        let f = featurize(&corpus, "Tesla", Relation::FoundedBy, &cfg).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f["a"].entity_saliency, 2);
        assert_eq!(f["b"].entity_saliency, 0);
        assert!(f["a"].bm25 > 0.0);
        assert_eq!(f["b"].bm25, 0.0);
        assert_eq!(f["b"].popularity, 0.0);
        assert!(f["b"].flesch.is_finite());
        assert_eq!(f, featurize(&corpus, "Tesla", Relation::FoundedBy, &cfg).unwrap());

        let single = Corpus::new(vec![corpus.documents[0].clone()], vec![], vec![]).unwrap();
        let f = featurize(&single, "Tesla", Relation::FoundedBy, &cfg).unwrap();
        assert!(f["a"].bm25 > 0.0);
    }
}
