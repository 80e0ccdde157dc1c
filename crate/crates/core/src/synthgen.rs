//! Seeded generator of synthetic corpora with a planted coverage signal.
//!
//! Every entity is asked about one relation. Each document gets a planted
//! coverage `c = k / gt_size`; its text names exactly `k` ground-truth
//! objects, and its extractions hold those `k` objects, a number of true
//! but non-ground-truth objects growing with `c`, and a coverage-independent
//! number of false objects. Document length, entity mentions, the count of
//! target-type mentions and a set of relation cue words grow with `c` in
//! proportion to `signal_strength`; the embedding moves along a fixed
//! direction in proportion to `embedding_signal`. The total number of
//! mentions, and hence the simulated extractor cost, does not depend on `c`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{AliasTable, Corpus, Document, EntityType, ExtractionTuple, GroundTruth, GtVariant, Relation};
use crate::error::{Error, Result};
use crate::features::{Mention, MentionRecord, PopularityTable};
use crate::jsonl;
use crate::vectorize::EmbeddingStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_entities: usize,
    pub docs_per_entity: usize,
    pub gt_size: usize,
    pub signal_strength: f64,
    pub embedding_dimension: usize,
    pub embedding_signal: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_entities: 100,
            docs_per_entity: 50,
            gt_size: 10,
            signal_strength: 0.8,
            embedding_dimension: 32,
            embedding_signal: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_entities == 0 || self.docs_per_entity == 0 || self.gt_size == 0 || self.embedding_dimension == 0 {
            return Err(Error::InvalidArgument("synthetic corpus counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) || !(0.0..=1.0).contains(&self.embedding_signal) {
            return Err(Error::InvalidArgument("signal strengths must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Share of documents drawn from the low-coverage component.
pub const LOW_COVERAGE_MASS: f64 = 0.774;

/// Planted per-document values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedDocument {
    pub doc_id: String,
    pub entity_id: String,
    pub relation: Relation,
    pub coverage: f64,
    pub alias_mentions: usize,
    pub target_mentions: usize,
    pub cue_words: usize,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub aliases: AliasTable,
    pub mentions: Vec<MentionRecord>,
    pub popularity: PopularityTable,
    pub embeddings: EmbeddingStore,
    pub planted: Vec<PlantedDocument>,
    /// Every true object per (entity, relation): ground truth plus the true
    /// objects left out of it.
    pub true_objects: BTreeMap<(String, Relation), BTreeSet<String>>,
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "ren", "mi", "dor", "vel", "sa", "tin", "bra", "quo", "zel", "fa", "nu", "ri", "gan", "hol", "pe",
    "sto", "lin", "mar", "ost", "ev", "ul", "thra",
];
const ORG_SUFFIXES: [&str; 8] = ["Labs", "Group", "Holdings", "Institute", "Works", "Partners", "Union", "College"];
const GENERIC_CUES: [&str; 8] = [
    "biography", "career", "history", "profile", "timeline", "background", "record", "overview",
];
const SECTIONS: [&str; 5] = ["people", "news", "wiki", "profiles", "archive"];
const FILLER_VOCABULARY: usize = 1500;
const SITES: usize = 40;

fn relation_cues(relation: Relation) -> &'static [&'static str] {
    match relation {
        Relation::MemberOf => &["joined", "membership", "affiliated", "enrolled", "associated", "ranks"],
        Relation::Family => &["married", "spouse", "children", "daughter", "son", "sibling"],
        Relation::EduAt => &["studied", "graduated", "alumnus", "degree", "attended", "thesis"],
        Relation::PositionHeld => &["appointed", "served", "office", "elected", "minister", "term"],
        Relation::PartnerOrg => &["partnership", "alliance", "agreement", "collaborated", "jointly", "venture"],
        Relation::FoundedBy => &["established", "cofounded", "startup", "origins", "launched", "incorporated"],
        Relation::Ceo => &["chief", "executive", "leadership", "helm", "succeeded", "managed"],
        Relation::BoardMember => &["directors", "trustee", "governance", "seat", "chairman", "advisory"],
    }
}

struct NameFactory {
    used: BTreeSet<String>,
}

impl NameFactory {
    fn word(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
        let n = rng.random_range(min..=max);
        (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
    }

    fn capitalize(w: &str) -> String {
        let mut c = w.chars();
        c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
    }

    /// A fresh name of the given type, unique across the whole corpus.
    fn fresh(&mut self, rng: &mut ChaCha8Rng, kind: EntityType) -> (String, String) {
        loop {
            let last = Self::capitalize(&Self::word(rng, 2, 4));
            let name = match kind {
                EntityType::Person => format!("{} {last}", Self::capitalize(&Self::word(rng, 2, 2))),
                EntityType::Organization => format!("{last} {}", ORG_SUFFIXES.choose(rng).unwrap()),
            };
            if self.used.insert(name.to_lowercase()) && self.used.insert(last.to_lowercase()) {
                return (name, last);
            }
        }
    }
}

/// One element of the token soup; names carry a mention type.
enum Item {
    Word(String),
    Name(String, EntityType),
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |p| p.sample(rng) as usize)
}

fn draw_coverage_count(rng: &mut ChaCha8Rng, gt_size: usize) -> usize {
    let c: f64 = if rng.random_bool(LOW_COVERAGE_MASS) {
        if rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(0.05..0.45)
        }
    } else {
        rng.random_range(0.55..=1.0)
    };
    ((c * gt_size as f64).round() as usize).min(gt_size)
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = config.signal_strength;
    let mut names = NameFactory { used: BTreeSet::new() };

    let filler: Vec<String> = {
        let mut set = BTreeSet::new();
        while set.len() < FILLER_VOCABULARY {
            set.insert(NameFactory::word(&mut rng, 1, 3));
        }
        let mut v: Vec<String> = set.into_iter().collect();
        v.shuffle(&mut rng);
        v
    };
    // Zipf-like weights over the shuffled vocabulary.
    let filler_cdf: Vec<f64> = {
        let mut acc = 0.0;
        (0..filler.len())
            .map(|i| {
                acc += 1.0 / (i + 1) as f64;
                acc
            })
            .collect()
    };
    let sites: Vec<String> = (0..SITES)
        .map(|i| format!("{}{}.example", NameFactory::word(&mut rng, 2, 3), i))
        .collect();
    let mut popularity = PopularityTable::new();
    for (i, site) in sites.iter().enumerate() {
        popularity.insert(site.clone(), (i as u64 + 1) * 1000)?;
    }
    let mut background = |kind: EntityType, n: usize, rng: &mut ChaCha8Rng| -> Vec<String> {
        (0..n).map(|_| names.fresh(rng, kind).0).collect()
    };
    let background_people = background(EntityType::Person, 400, &mut rng);
    let background_orgs = background(EntityType::Organization, 400, &mut rng);
    let n_docs = config.n_entities * config.docs_per_entity;
    let false_people = background(EntityType::Person, n_docs, &mut rng);
    let false_orgs = background(EntityType::Organization, n_docs, &mut rng);

    let direction: Vec<f64> = {
        let v: Vec<f64> = (0..config.embedding_dimension)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / norm).collect()
    };
    let mean_coverage = (1.0 - LOW_COVERAGE_MASS) * 0.775 + LOW_COVERAGE_MASS * 0.5 * 0.25;

    let mut documents = Vec::with_capacity(n_docs);
    let mut tuples = Vec::new();
    let mut ground_truths = Vec::with_capacity(config.n_entities);
    let mut aliases = AliasTable::new();
    let mut mentions = Vec::with_capacity(n_docs);
    let mut embeddings = EmbeddingStore::new(config.embedding_dimension)?;
    let mut planted = Vec::with_capacity(n_docs);
    let mut true_objects = BTreeMap::new();

    for e in 0..config.n_entities {
        let relation = Relation::ALL[e % Relation::ALL.len()];
        let subject_type = relation.subject_type();
        let target = relation.target_type();
        let (entity, short) = names.fresh(&mut rng, subject_type);
        aliases.insert(&entity, [short.as_str()]);
        let gt: Vec<String> = (0..config.gt_size).map(|_| names.fresh(&mut rng, target).0).collect();
        let extra_true: Vec<String> = (0..config.docs_per_entity * 8)
            .map(|_| names.fresh(&mut rng, target).0)
            .collect();
        ground_truths.push(GroundTruth {
            entity_id: entity.clone(),
            relation,
            variant: GtVariant::Wiki,
            objects: gt.iter().cloned().collect(),
        });
        true_objects.insert(
            (entity.clone(), relation),
            gt.iter().chain(&extra_true).cloned().collect::<BTreeSet<_>>(),
        );
        let (false_pool, target_background, other_background) = match target {
            EntityType::Person => (&false_people, &background_people, &background_orgs),
            EntityType::Organization => (&false_orgs, &background_orgs, &background_people),
        };
        let cues = relation_cues(relation);
        let query_words = relation.query_terms();

        for d in 0..config.docs_per_entity {
            let doc_id = format!("e{e:03}-d{d:03}");
            let k = draw_coverage_count(&mut rng, config.gt_size);
            let c = k as f64 / config.gt_size as f64;
            let signal = |rng: &mut ChaCha8Rng, scale: f64| s * c * scale * rng.random_range(0.5..1.5);

            // Mentions: a fixed total split between subject aliases, target-type
            // names and other names.
            let total_mentions = rng.random_range(config.gt_size + 14..=config.gt_size + 20);
            let alias_mentions = (rng.random_range(0.0..3.0) + signal(&mut rng, 2.0)).round() as usize;
            let target_mentions =
                (config.gt_size + rng.random_range(0..=4) + signal(&mut rng, 2.0).round() as usize).max(k);
            let other_mentions = total_mentions.saturating_sub(alias_mentions + target_mentions);

            let mut items: Vec<Item> = Vec::new();
            let mut gt_here: Vec<&String> = gt.iter().collect();
            gt_here.shuffle(&mut rng);
            gt_here.truncate(k);
            for g in &gt_here {
                items.push(Item::Name((*g).clone(), target));
            }
            for _ in k..target_mentions {
                items.push(Item::Name(target_background.choose(&mut rng).unwrap().clone(), target));
            }
            for _ in 0..other_mentions {
                let kind = if target == EntityType::Person {
                    EntityType::Organization
                } else {
                    EntityType::Person
                };
                items.push(Item::Name(other_background.choose(&mut rng).unwrap().clone(), kind));
            }
            for _ in 0..alias_mentions {
                let form = if rng.random_bool(0.3) { &entity } else { &short };
                items.push(Item::Name(form.clone(), subject_type));
            }
            let cue_mean = 1.5 + signal(&mut rng, 15.0);
            let cue_words = poisson(&mut rng, cue_mean);
            for _ in 0..cue_words {
                let w = if rng.random_bool(0.6) {
                    cues.choose(&mut rng).unwrap()
                } else {
                    GENERIC_CUES.choose(&mut rng).unwrap()
                };
                items.push(Item::Word((*w).to_string()));
            }
            for _ in 0..poisson(&mut rng, 1.5) {
                items.push(Item::Word(query_words.choose(&mut rng).unwrap().clone()));
            }
            for _ in 0..poisson(&mut rng, 2.0) {
                items.push(Item::Word(rng.random_range(1900..2024).to_string()));
            }
            let n_filler = rng.random_range(120..360) + signal(&mut rng, 80.0).round() as usize;
            for _ in 0..n_filler {
                let u = rng.random_range(0.0..*filler_cdf.last().unwrap());
                let i = filler_cdf.partition_point(|&x| x < u);
                items.push(Item::Word(filler[i.min(filler.len() - 1)].clone()));
            }
            items.shuffle(&mut rng);

            let mut text = String::new();
            let mut spans = Vec::new();
            let mut remaining_in_sentence = rng.random_range(6..22);
            for (idx, item) in items.iter().enumerate() {
                if !text.is_empty() {
                    text.push(' ');
                }
                match item {
                    Item::Word(w) => text.push_str(w),
                    Item::Name(n, kind) => {
                        let start = text.chars().count();
                        text.push_str(n);
                        spans.push(Mention {
                            start,
                            end: start + n.chars().count(),
                            kind: *kind,
                        });
                    }
                }
                remaining_in_sentence -= 1;
                if remaining_in_sentence == 0 || idx + 1 == items.len() {
                    text.push('.');
                    remaining_in_sentence = rng.random_range(6..22);
                }
            }

            let site = sites.choose(&mut rng).unwrap();
            let url = format!(
                "https://{site}/{}/{}",
                SECTIONS.choose(&mut rng).unwrap(),
                doc_id
            );
            documents.push(Document::new(&doc_id, &entity, url, site.clone(), text));
            mentions.push(MentionRecord {
                doc_id: doc_id.clone(),
                mentions: spans,
            });

            let mut extracted: BTreeSet<&String> = gt_here.iter().copied().collect();
            for _ in 0..poisson(&mut rng, 8.0 * c) {
                extracted.insert(extra_true.choose(&mut rng).unwrap());
            }
            for _ in 0..poisson(&mut rng, 1.0) {
                extracted.insert(false_pool.choose(&mut rng).unwrap());
            }
            for object in extracted {
                tuples.push(ExtractionTuple {
                    doc_id: doc_id.clone(),
                    subject: entity.clone(),
                    relation,
                    object: object.clone(),
                    confidence: 1.0,
                });
            }

            let shift = config.embedding_signal * 3.0 * (c - mean_coverage);
            let vector: Vec<f32> = direction
                .iter()
                .map(|&u| (shift * u + rng.sample::<f64, _>(StandardNormal) / (config.embedding_dimension as f64).sqrt()) as f32)
                .collect();
            embeddings.insert(doc_id.clone(), vector)?;

            planted.push(PlantedDocument {
                doc_id,
                entity_id: entity.clone(),
                relation,
                coverage: c,
                alias_mentions,
                target_mentions,
                cue_words,
            });
        }
    }

    Ok(SynthCorpus {
        corpus: Corpus::new(documents, tuples, ground_truths)?,
        aliases,
        mentions,
        popularity,
        embeddings,
        planted,
        true_objects,
    })
}

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const TUPLES_FILE: &str = "tuples.jsonl";
pub const GT_FILE: &str = "gt.jsonl";
pub const MENTIONS_FILE: &str = "mentions.jsonl";
pub const ALIASES_FILE: &str = "aliases.jsonl";
pub const POPULARITY_FILE: &str = "popularity.tsv";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const PLANTED_FILE: &str = "planted.jsonl";

impl SynthCorpus {
    /// Writes every generated artifact into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.corpus
            .save(&dir.join(DOCUMENTS_FILE), &dir.join(TUPLES_FILE), &dir.join(GT_FILE))?;
        jsonl::write(&dir.join(MENTIONS_FILE), &self.mentions)?;
        jsonl::write(&dir.join(ALIASES_FILE), &self.aliases.records())?;
        self.popularity.save(&dir.join(POPULARITY_FILE))?;
        self.embeddings.save(&dir.join(EMBEDDINGS_FILE))?;
        jsonl::write(&dir.join(PLANTED_FILE), &self.planted)
    }
}
