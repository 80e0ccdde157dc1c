//! Coverage of a document for an (entity, relation) pair, its binarization
//! into informative / uninformative labels, and leakage-free splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GroundTruth, Relation};
use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRecord {
    pub doc_id: String,
    pub entity_id: String,
    pub relation: Relation,
    pub coverage: f64,
    pub gt_size: usize,
    pub extracted_hits: usize,
    /// Set when the ground truth is empty; coverage is then 0.
    pub degenerate: bool,
}

/// Fraction of ground-truth objects found among the extracted ones.
pub fn compute_coverage(extracted: &BTreeSet<String>, gt: &GroundTruth) -> CoverageRecord {
    let hits = extracted.intersection(&gt.objects).count();
    let gt_size = gt.objects.len();
    CoverageRecord {
        doc_id: String::new(),
        entity_id: gt.entity_id.clone(),
        relation: gt.relation,
        coverage: if gt_size == 0 { 0.0 } else { hits as f64 / gt_size as f64 },
        gt_size,
        extracted_hits: hits,
        degenerate: gt_size == 0,
    }
}

/// Coverage records for every document of `gt.entity_id` in the corpus, in corpus order.
pub fn coverage_for_pool(corpus: &Corpus, gt: &GroundTruth) -> Vec<CoverageRecord> {
    let extractions = corpus.extractions_by_doc(&gt.entity_id, gt.relation);
    let empty = BTreeSet::new();
    corpus
        .documents_for(&gt.entity_id)
        .map(|d| {
            let mut r = compute_coverage(extractions.get(&d.doc_id).unwrap_or(&empty), gt);
            r.doc_id = d.doc_id.clone();
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub doc_id: String,
    pub entity_id: String,
    pub relation: Relation,
    pub coverage: f64,
    pub label: u8,
}

pub const DEFAULT_PERCENTILE: f64 = 0.85;
pub const DEFAULT_ABSOLUTE: f64 = 0.5;

/// Labels a record informative when its coverage exceeds `absolute`, or when
/// it is strictly greater than the coverage of at least
/// `max(1, ceil(percentile * (n - 1)))` of the other records of its pool.
pub fn binarize(records: &[CoverageRecord], percentile: f64, absolute: f64) -> Result<Vec<LabeledDocument>> {
    let first = records.first().ok_or(Error::Empty("coverage records"))?;
    if records
        .iter()
        .any(|r| r.entity_id != first.entity_id || r.relation != first.relation)
    {
        return Err(Error::InvalidArgument(
            "binarize expects records of a single (entity, relation)".into(),
        ));
    }
    let n = records.len();
    let mut sorted: Vec<f64> = records.iter().map(|r| r.coverage).collect();
    sorted.sort_by(f64::total_cmp);
    let needed = ((percentile * (n - 1) as f64).ceil() as usize).max(1);
    Ok(records
        .iter()
        .map(|r| {
            let strictly_below = sorted.partition_point(|&c| c < r.coverage);
            let informative = r.coverage > absolute || strictly_below >= needed;
            LabeledDocument {
                doc_id: r.doc_id.clone(),
                entity_id: r.entity_id.clone(),
                relation: r.relation,
                coverage: r.coverage,
                label: informative as u8,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Entity,
    SiteDomain,
    SubDomain,
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entity" => Ok(GroupKey::Entity),
            "site_domain" | "site-domain" => Ok(GroupKey::SiteDomain),
            "sub_domain" | "sub-domain" => Ok(GroupKey::SubDomain),
            _ => Err(Error::InvalidArgument(format!("unknown split key {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<String, Split>,
    pub group_key: GroupKey,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn get(&self, doc_id: &str) -> Option<Split> {
        self.assignment.get(doc_id).copied()
    }
}

/// Largest-remainder apportionment of `total` items over `ratios`; every
/// split with a nonzero ratio receives at least one item.
fn apportion(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut counts = [0usize; 3];
    for i in 0..3 {
        counts[i] = exact[i].floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    for i in 0..3 {
        if ratios[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    counts
}

/// Assigns whole groups of documents to train / validation / test. Group
/// values are sorted, shuffled with `seed`, then cut at the apportioned counts.
pub fn split(
    corpus: &Corpus,
    labels: &[LabeledDocument],
    ratios: [f64; 3],
    group_key: GroupKey,
    seed: u64,
) -> Result<SplitAssignment> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios {ratios:?} must sum to 1")));
    }
    let labeled: BTreeSet<&str> = labels.iter().map(|l| l.doc_id.as_str()).collect();
    let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for d in &corpus.documents {
        if !labeled.is_empty() && !labeled.contains(d.doc_id.as_str()) {
            continue;
        }
        let key = match group_key {
            GroupKey::Entity => d.entity_id.clone(),
            GroupKey::SiteDomain => d.site_domain.clone(),
            GroupKey::SubDomain => d.sub_domain(),
        };
        groups.entry(key).or_default().push(&d.doc_id);
    }
    let nonzero = ratios.iter().filter(|&&r| r > 0.0).count();
    if groups.len() < nonzero {
        return Err(Error::InvalidArgument(format!(
            "{} distinct {:?} groups cannot fill {} splits",
            groups.len(),
            group_key,
            nonzero
        )));
    }
    let mut keys: Vec<&String> = groups.keys().collect();
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let counts = apportion(keys.len(), ratios);

    let mut assignment = BTreeMap::new();
    let mut keys = keys.into_iter();
    for (split, count) in Split::ALL.into_iter().zip(counts) {
        for key in keys.by_ref().take(count) {
            for doc in &groups[key] {
                assignment.insert((*doc).to_owned(), split);
            }
        }
    }
    Ok(SplitAssignment {
        assignment,
        group_key,
        seed,
    })
}

/// Keeps every minority-class record and a seeded uniform sample of the
/// majority class of the same size, returned in seeded random order.
pub fn undersample(train: &[LabeledDocument], seed: u64) -> Result<Vec<LabeledDocument>> {
    let (pos, neg): (Vec<_>, Vec<_>) = train.iter().partition(|l| l.label == 1);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (minority, mut majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    majority.shuffle(&mut rng);
    majority.truncate(minority.len());
    let mut out: Vec<LabeledDocument> = minority.into_iter().chain(majority).cloned().collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// One line of `labels.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub doc_id: String,
    pub entity_id: String,
    pub relation: Relation,
    pub coverage: f64,
    pub label: u8,
    pub split: Split,
}

impl LabelRow {
    pub fn labeled(&self) -> LabeledDocument {
        LabeledDocument {
            doc_id: self.doc_id.clone(),
            entity_id: self.entity_id.clone(),
            relation: self.relation,
            coverage: self.coverage,
            label: self.label,
        }
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let rows = jsonl::read::<LabelRow>(path)?;
    for (line, row) in &rows {
        if row.label > 1 || !(0.0..=1.0).contains(&row.coverage) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: "label must be 0|1 and coverage in [0, 1]".into(),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<()> {
    jsonl::write(path, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, GtVariant};

    fn gt(objects: &[&str]) -> GroundTruth {
        GroundTruth {
            entity_id: "Tesla".into(),
            relation: Relation::FoundedBy,
            variant: GtVariant::Wiki,
            objects: objects.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    const FOUNDERS: [&str; 5] = ["Elon Musk", "Martin Eberhard", "Marc Tarpenning", "JB Straubel", "Ian Wright"];

    #[test]
    fn tesla_coverages() {
        let g = gt(&FOUNDERS);
        assert_eq!(compute_coverage(&set(&FOUNDERS), &g).coverage, 1.0);
        let two = compute_coverage(&set(&["Elon Musk", "JB Straubel", "Nikola Tesla"]), &g);
        assert_eq!(two.coverage, 0.4);
        assert_eq!(two.extracted_hits, 2);
        assert_eq!(compute_coverage(&set(&[]), &g).coverage, 0.0);
    }

    #[test]
    fn empty_gt_is_degenerate() {
        let r = compute_coverage(&set(&["x"]), &gt(&[]));
        assert!(r.degenerate);
        assert_eq!(r.coverage, 0.0);
    }

    fn records(covs: &[f64]) -> Vec<CoverageRecord> {
        covs.iter()
            .enumerate()
            .map(|(i, &c)| CoverageRecord {
                doc_id: format!("d{i}"),
                entity_id: "E".into(),
                relation: Relation::Ceo,
                coverage: c,
                gt_size: 10,
                extracted_hits: (c * 10.0) as usize,
                degenerate: false,
            })
            .collect()
    }

    fn labels(covs: &[f64]) -> Vec<u8> {
        binarize(&records(covs), DEFAULT_PERCENTILE, DEFAULT_ABSOLUTE)
            .unwrap()
            .iter()
            .map(|l| l.label)
            .collect()
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(labels(&[0.6, 0.1, 0.1]), [1, 0, 0]);
        let mut covs = vec![0.1; 20];
        covs[7] = 0.4;
        let l = labels(&covs);
        assert_eq!(l.iter().filter(|&&x| x == 1).count(), 1);
        assert_eq!(l[7], 1);
        assert!(labels(&[0.0; 12]).iter().all(|&x| x == 0));
        assert_eq!(labels(&[0.0]), [0]);
        assert!(matches!(binarize(&[], 0.85, 0.5), Err(Error::Empty(_))));
    }

    #[test]
    fn binarize_rejects_mixed_pools() {
        let mut r = records(&[0.1, 0.2]);
        r[1].relation = Relation::Family;
        assert!(binarize(&r, 0.85, 0.5).is_err());
    }

    #[test]
    fn apportion_matches_ratios() {
        assert_eq!(apportion(10, [0.7, 0.1, 0.2]), [7, 1, 2]);
        assert_eq!(apportion(3, [0.7, 0.1, 0.2]), [1, 1, 1]);
        assert_eq!(apportion(100, [0.7, 0.1, 0.2]), [70, 10, 20]);
        assert_eq!(apportion(5, [1.0, 0.0, 0.0]), [5, 0, 0]);
    }

    fn corpus(n_entities: usize, docs_each: usize) -> Corpus {
        let mut docs = Vec::new();
        for e in 0..n_entities {
            for k in 0..docs_each {
                let section = format!("s{}", (e * docs_each + k) % 12);
                docs.push(Document::new(
                    format!("e{e}d{k}"),
                    format!("E{e}"),
                    format!("https://site{}.org/{section}/p{k}", k % 4),
                    format!("site{}.org", k % 4),
                    "text here",
                ));
            }
        }
        Corpus::new(docs, vec![], vec![]).unwrap()
    }

    #[test]
    fn entity_split_sizes_and_determinism() {
        let c = corpus(10, 4);
        let a = split(&c, &[], [0.7, 0.1, 0.2], GroupKey::Entity, 3).unwrap();
        let b = split(&c, &[], [0.7, 0.1, 0.2], GroupKey::Entity, 3).unwrap();
        assert_eq!(a, b);
        let mut per_split: BTreeMap<Split, BTreeSet<String>> = BTreeMap::new();
        for d in &c.documents {
            per_split.entry(a.get(&d.doc_id).unwrap()).or_default().insert(d.entity_id.clone());
        }
        assert_eq!(per_split[&Split::Train].len(), 7);
        assert_eq!(per_split[&Split::Validation].len(), 1);
        assert_eq!(per_split[&Split::Test].len(), 2);
    }

    #[test]
    fn sub_domain_groups_stay_whole() {
        let c = corpus(6, 10);
        let groups: BTreeSet<String> = c.documents.iter().map(|d| d.sub_domain()).collect();
        assert!(groups.len() >= 12);
        let a = split(&c, &[], [0.7, 0.1, 0.2], GroupKey::SubDomain, 9).unwrap();
        let mut seen: BTreeMap<String, Split> = BTreeMap::new();
        for d in &c.documents {
            let s = a.get(&d.doc_id).unwrap();
            assert_eq!(*seen.entry(d.sub_domain()).or_insert(s), s);
        }
    }

    #[test]
    fn split_needs_enough_groups() {
        let c = corpus(2, 3);
        assert!(split(&c, &[], [0.7, 0.1, 0.2], GroupKey::Entity, 0).is_err());
        assert!(split(&c, &[], [0.5, 0.1, 0.2], GroupKey::Entity, 0).is_err());
    }

    fn labeled(pos: usize, neg: usize) -> Vec<LabeledDocument> {
        (0..pos + neg)
            .map(|i| LabeledDocument {
                doc_id: format!("d{i}"),
                entity_id: "E".into(),
                relation: Relation::Ceo,
                coverage: 0.0,
                label: (i < pos) as u8,
            })
            .collect()
    }

    #[test]
    fn undersample_balances() {
        let out = undersample(&labeled(10, 30), 1).unwrap();
        assert_eq!(out.len(), 20);
        assert_eq!(out.iter().filter(|l| l.label == 1).count(), 10);

        let input = labeled(10, 10);
        let out = undersample(&input, 1).unwrap();
        let a: BTreeSet<_> = out.iter().map(|l| l.doc_id.clone()).collect();
        let b: BTreeSet<_> = input.iter().map(|l| l.doc_id.clone()).collect();
        assert_eq!(a, b);

        assert!(matches!(undersample(&labeled(0, 5), 1), Err(Error::SingleClass)));
        assert_eq!(undersample(&labeled(3, 9), 7).unwrap(), undersample(&labeled(3, 9), 7).unwrap());
    }
}
