//! Downstream uses of coverage scores: document ranking for knowledge-base
//! construction, extraction under a time budget, and claim refutation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Relation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankingMethod {
    Random { seed: u64 },
    Bm25,
    Prediction,
    Oracle,
}

impl RankingMethod {
    pub fn name(&self) -> &'static str {
        match self {
            RankingMethod::Random { .. } => "random",
            RankingMethod::Bm25 => "bm25",
            RankingMethod::Prediction => "prediction",
            RankingMethod::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocument {
    pub doc_id: String,
    pub score: f64,
}

/// Orders `doc_ids` by descending score, ties by ascending doc_id.
///
/// `scores` holds BM25 scores, predicted probabilities or gold coverage
/// depending on the method; random ranking ignores it and reports the
/// shuffled position as a descending score.
pub fn rank_documents(
    doc_ids: &[String],
    method: RankingMethod,
    scores: Option<&BTreeMap<String, f64>>,
) -> Result<Vec<RankedDocument>> {
    let mut ids: Vec<&String> = doc_ids.iter().collect::<BTreeSet<_>>().into_iter().collect();
    if let RankingMethod::Random { seed } = method {
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = ids.len();
        return Ok(ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| RankedDocument {
                doc_id: id.clone(),
                score: (n - i) as f64 / n as f64,
            })
            .collect());
    }
    let scores = scores.ok_or_else(|| {
        Error::InvalidArgument(format!("{} ranking needs per-document scores", method.name()))
    })?;
    let mut ranked = ids
        .into_iter()
        .map(|id| {
            let score = *scores.get(id).ok_or_else(|| Error::UnknownDocument(id.clone()))?;
            if score.is_nan() {
                return Err(Error::InvalidArgument(format!("NaN score for {id}")));
            }
            Ok(RankedDocument {
                doc_id: id.clone(),
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
    Ok(ranked)
}

/// Distinct extracted objects over the top `k` documents and the share of
/// them present in the ground truth.
pub fn kbc_yield(
    ranked: &[String],
    k: usize,
    tuples_by_doc: &BTreeMap<String, BTreeSet<String>>,
    gt: &BTreeSet<String>,
) -> (usize, f64) {
    let union: BTreeSet<&String> = ranked
        .iter()
        .take(k)
        .filter_map(|d| tuples_by_doc.get(d))
        .flatten()
        .collect();
    if union.is_empty() {
        return (0, 0.0);
    }
    let correct = union.iter().filter(|o| gt.contains(**o)).count();
    (union.len(), correct as f64 / union.len() as f64)
}

/// Per-document running time in seconds of the coverage predictor (linear in
/// document length) and of the extractor (quadratic in mention count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub predictor_intercept: f64,
    pub predictor_per_word: f64,
    pub extractor_intercept: f64,
    pub extractor_per_mention_sq: f64,
}

pub const PREDICTOR_MEAN_SECONDS: f64 = 2.0;
pub const EXTRACTOR_MEAN_SECONDS: f64 = 13.6;
/// Share of each mean cost attributed to the fixed per-document intercept.
pub const DEFAULT_INTERCEPT_SHARE: f64 = 0.25;

impl CostModel {
    /// Solves the coefficients so the mean costs over `docs` equal the given
    /// targets, with `intercept_share` of each target as fixed overhead.
    pub fn calibrate(
        docs: &[(usize, usize)],
        predictor_mean: f64,
        extractor_mean: f64,
        intercept_share: f64,
    ) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Empty("no documents for cost calibration"));
        }
        if !(0.0..=1.0).contains(&intercept_share) || predictor_mean < 0.0 || extractor_mean < 0.0 {
            return Err(Error::InvalidArgument("invalid cost calibration targets".into()));
        }
        let n = docs.len() as f64;
        let mean_len = docs.iter().map(|d| d.0 as f64).sum::<f64>() / n;
        let mean_sq = docs.iter().map(|d| (d.1 as f64).powi(2)).sum::<f64>() / n;
        let split = |target: f64, mean: f64| {
            if mean > 0.0 {
                (intercept_share * target, (1.0 - intercept_share) * target / mean)
            } else {
                (target, 0.0)
            }
        };
        let (predictor_intercept, predictor_per_word) = split(predictor_mean, mean_len);
        let (extractor_intercept, extractor_per_mention_sq) = split(extractor_mean, mean_sq);
        Ok(CostModel {
            predictor_intercept,
            predictor_per_word,
            extractor_intercept,
            extractor_per_mention_sq,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let c = [
            self.predictor_intercept,
            self.predictor_per_word,
            self.extractor_intercept,
            self.extractor_per_mention_sq,
        ];
        if c.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("cost coefficients must be finite and nonnegative".into()))
        }
    }

    pub fn predictor_cost(&self, doc_length: usize) -> f64 {
        self.predictor_intercept + self.predictor_per_word * doc_length as f64
    }

    pub fn extractor_cost(&self, mention_count: usize) -> f64 {
        self.extractor_intercept + self.extractor_per_mention_sq * (mention_count as f64).powi(2)
    }
}

/// One candidate document for the budget simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetDocument {
    pub doc_id: String,
    pub doc_length: usize,
    pub mention_count: usize,
    /// Canonical tuples the extractor would produce for this document.
    pub tuples: BTreeSet<String>,
    pub predicted_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetPolicy {
    BaselineRandom { seed: u64 },
    Prioritized,
}

impl BudgetPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            BudgetPolicy::BaselineRandom { .. } => "baseline",
            BudgetPolicy::Prioritized => "prioritized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub policy: String,
    pub budget_s: f64,
    pub re_count: usize,
    pub docs_processed: usize,
    pub seconds_used: f64,
}

/// Runs the extractor over documents in policy order until the next
/// document no longer fits in the remaining budget.
pub fn simulate_budget(
    docs: &[BudgetDocument],
    cost: &CostModel,
    budget_seconds: f64,
    policy: BudgetPolicy,
) -> Result<BudgetReport> {
    if budget_seconds.is_nan() || budget_seconds <= 0.0 {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    cost.validate()?;
    let mut order: Vec<&BudgetDocument> = docs.iter().collect();
    order.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut used = 0.0;
    match policy {
        BudgetPolicy::BaselineRandom { seed } => order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        BudgetPolicy::Prioritized => {
            let scoring: f64 = order.iter().map(|d| cost.predictor_cost(d.doc_length)).sum();
            if scoring > budget_seconds {
                return Ok(BudgetReport {
                    policy: policy.name().into(),
                    budget_s: budget_seconds,
                    re_count: 0,
                    docs_processed: 0,
                    seconds_used: 0.0,
                });
            }
            used = scoring;
            order.sort_by(|a, b| {
                b.predicted_score
                    .total_cmp(&a.predicted_score)
                    .then_with(|| a.doc_id.cmp(&b.doc_id))
            });
        }
    }
    let mut tuples = BTreeSet::new();
    let mut processed = 0;
    for d in order {
        let c = cost.extractor_cost(d.mention_count);
        if used + c > budget_seconds {
            break;
        }
        used += c;
        processed += 1;
        tuples.extend(d.tuples.iter());
    }
    Ok(BudgetReport {
        policy: policy.name().into(),
        budget_s: budget_seconds,
        re_count: tuples.len(),
        docs_processed: processed,
        seconds_used: used,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub subject: String,
    pub relation: Relation,
    pub object: String,
    pub supporting_doc_ids: BTreeSet<String>,
    pub support_count: usize,
}

impl Claim {
    pub fn new(subject: &str, relation: Relation, object: &str, supporting_doc_ids: BTreeSet<String>) -> Result<Self> {
        if supporting_doc_ids.is_empty() {
            return Err(Error::InvalidArgument(format!("claim {subject}/{object} has no support")));
        }
        Ok(Claim {
            subject: subject.to_string(),
            relation,
            object: object.to_string(),
            support_count: supporting_doc_ids.len(),
            supporting_doc_ids,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    LikelyFalse,
    InsufficientEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefutationReport {
    pub claim: Claim,
    pub max_nonexpressing_coverage: f64,
    pub verdict: Verdict,
}

pub const DEFAULT_REFUTATION_THRESHOLD: f64 = 0.5;

/// Coverage of `(doc_id, entity, relation)` keyed by entity and relation.
pub type CoverageIndex = BTreeMap<(String, Relation), BTreeMap<String, f64>>;

/// A claim missing from a high-coverage document about the same entity and
/// relation is flagged as likely false.
pub fn refute_claims(claims: &[Claim], coverage: &CoverageIndex, threshold: f64) -> Vec<RefutationReport> {
    let mut reports: Vec<RefutationReport> = claims
        .iter()
        .map(|claim| {
            let value = coverage
                .get(&(claim.subject.clone(), claim.relation))
                .into_iter()
                .flatten()
                .filter(|(doc, _)| !claim.supporting_doc_ids.contains(*doc))
                .map(|(_, &c)| c)
                .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
            let max = value.unwrap_or(0.0);
            let verdict = if value.is_some() && max >= threshold {
                Verdict::LikelyFalse
            } else {
                Verdict::InsufficientEvidence
            };
            RefutationReport {
                claim: claim.clone(),
                max_nonexpressing_coverage: max,
                verdict,
            }
        })
        .collect();
    reports.sort_by(|a, b| {
        b.max_nonexpressing_coverage
            .total_cmp(&a.max_nonexpressing_coverage)
            .then_with(|| {
                (&a.claim.subject, a.claim.relation, &a.claim.object, &a.claim.supporting_doc_ids).cmp(&(
                    &b.claim.subject,
                    b.claim.relation,
                    &b.claim.object,
                    &b.claim.supporting_doc_ids,
                ))
            })
    });
    reports
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes `rank,doc_id,method,score` rows, ranks starting at 1.
pub fn write_ranking_csv(path: &Path, method: &str, ranked: &[RankedDocument]) -> Result<()> {
    let mut out = String::from("rank,doc_id,method,score\n");
    for (i, r) in ranked.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i + 1, csv_field(&r.doc_id), csv_field(method), r.score);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
