//! Classification and ranking metrics. A document is predicted positive iff
//! its score is strictly greater than the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub doc_id: String,
    pub score: f64,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl PrfReport {
    fn from_counts(threshold: f64, tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PrfReport {
            threshold,
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            tn,
        }
    }
}

pub fn prf_at(items: &[ScoredLabel], threshold: f64) -> PrfReport {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for it in items {
        match (it.score > threshold, it.label == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    PrfReport::from_counts(threshold, tp, fp, fn_, tn)
}

/// Best F1 over thresholds at ±∞ and every midpoint between consecutive
/// distinct scores; ties go to the lowest threshold.
pub fn optimal_f1(items: &[ScoredLabel]) -> Result<PrfReport> {
    if let Some(bad) = items.iter().find(|it| !it.score.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite score for {}", bad.doc_id)));
    }
    let positives = items.iter().filter(|it| it.label == 1).count();
    if positives == 0 {
        return Err(Error::Empty("no positive labels"));
    }
    let mut sorted: Vec<(f64, bool)> = items.iter().map(|it| (it.score, it.label == 1)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sweep upward: at threshold t, everything with score > t is predicted positive.
    let total_neg = items.len() - positives;
    let (mut tp, mut fp) = (positives, total_neg);
    let mut best = PrfReport::from_counts(f64::NEG_INFINITY, tp, fp, 0, 0);
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                tp -= 1;
            } else {
                fp -= 1;
            }
            i += 1;
        }
        let threshold = if i < sorted.len() {
            score + (sorted[i].0 - score) / 2.0
        } else {
            f64::INFINITY
        };
        let report = PrfReport::from_counts(threshold, tp, fp, positives - tp, total_neg - fp);
        if report.f1 > best.f1 {
            best = report;
        }
    }
    Ok(best)
}

/// DCG@k with linear gain `rel / log2(i + 1)` over the ideal DCG@k.
pub fn ndcg(relevances: &[f64], k: usize) -> Result<f64> {
    if relevances.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidArgument("relevances must be finite and nonnegative".into()));
    }
    let dcg = |rels: &[f64]| -> f64 {
        rels.iter()
            .take(k)
            .enumerate()
            .map(|(i, r)| r / ((i + 2) as f64).log2())
            .sum()
    };
    let mut ideal = relevances.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal);
    if idcg <= 0.0 {
        return Err(Error::Empty("all relevances are zero"));
    }
    Ok((dcg(relevances) / idcg).min(1.0))
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Empty("pearson needs at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidArgument("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn items(scores: &[f64], labels: &[u8]) -> Vec<ScoredLabel> {
        scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&score, &label))| ScoredLabel {
                doc_id: format!("d{i}"),
                score,
                label,
            })
            .collect()
    }

    /// Oracle: brute-force every candidate threshold including each score itself.
    fn brute_force_best(items: &[ScoredLabel]) -> f64 {
        let mut candidates = vec![f64::NEG_INFINITY, f64::INFINITY];
        for a in items {
            candidates.push(a.score);
            for b in items {
                candidates.push((a.score + b.score) / 2.0);
            }
        }
        candidates.iter().map(|&t| prf_at(items, t).f1).fold(0.0, f64::max)
    }

    #[test]
    fn optimal_f1_example() {
        let it = items(&[0.9, 0.7, 0.3, 0.1], &[1, 1, 0, 1]);
        let r = optimal_f1(&it).unwrap();
        assert!((r.f1 - 6.0 / 7.0).abs() < 1e-12);
        assert!(r.threshold < 0.1);
        assert!((brute_force_best(&it) - r.f1).abs() < 1e-12);
    }

    #[test]
    fn optimal_f1_degenerate_cases() {
        let sep = optimal_f1(&items(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0])).unwrap();
        assert_eq!(sep.f1, 1.0);
        assert!((sep.threshold - 0.5).abs() < 1e-12);
        let all = optimal_f1(&items(&[0.3, 0.3, 0.1], &[1, 1, 1])).unwrap();
        assert_eq!(all.f1, 1.0);
        assert_eq!(all.threshold, f64::NEG_INFINITY);
        assert!(optimal_f1(&items(&[0.3, 0.2], &[0, 0])).is_err());
    }

    #[test]
    fn prf_at_sentinels() {
        let it = items(&[0.9, 0.4, 0.2, 0.1], &[1, 0, 1, 0]);
        assert_eq!(prf_at(&it, f64::INFINITY).recall, 0.0);
        let low = prf_at(&it, f64::NEG_INFINITY);
        assert_eq!(low.recall, 1.0);
        assert_eq!(low.precision, 0.5);
    }

    #[test]
    fn label_flip_swaps_counts() {
        let scores = [0.9, 0.4, 0.2, 0.1, 0.6];
        let labels = [1, 0, 1, 0, 0];
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let a = prf_at(&items(&scores, &labels), 0.3);
        let b = prf_at(&items(&scores, &flipped), 0.3);
        assert_eq!((a.tp, a.fn_), (b.fp, b.tn));
        assert_eq!((a.fp, a.tn), (b.tp, b.fn_));
    }

    #[test]
    fn ndcg_examples() {
        let v = ndcg(&[1.0, 0.0, 1.0], 3).unwrap();
        let expected = 1.5 / (1.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.9197).abs() < 1e-4);
        assert_eq!(ndcg(&[3.0, 2.0, 1.0], 3).unwrap(), 1.0);
        assert_eq!(ndcg(&[3.0, 0.0, 3.0], 1).unwrap(), 1.0);
        assert!(ndcg(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn optimal_f1_dominates_fixed_thresholds(
            data in prop::collection::vec((0u8..20, 0u8..2), 1..40),
            thresholds in prop::collection::vec(-1.0f64..21.0, 100),
        ) {
            let mut it: Vec<ScoredLabel> = data
                .iter()
                .enumerate()
                .map(|(i, &(s, l))| ScoredLabel { doc_id: i.to_string(), score: s as f64, label: l })
                .collect();
            it[0].label = 1;
            let best = optimal_f1(&it).unwrap();
            prop_assert!((best.f1 - brute_force_best(&it)).abs() < 1e-12);
            for t in thresholds {
                prop_assert!(best.f1 + 1e-12 >= prf_at(&it, t).f1);
            }
        }

        #[test]
        fn ndcg_bounded_and_padding_invariant(
            rels in prop::collection::vec(0.0f64..5.0, 1..20),
            pad in 0usize..10,
            k in 1usize..25,
        ) {
            prop_assume!(rels.iter().any(|&r| r > 0.0));
            let v = ndcg(&rels, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            let k = k.min(rels.len());
            let mut padded = rels.clone();
            padded.extend(std::iter::repeat_n(0.0, pad));
            prop_assert!((ndcg(&padded, k).unwrap() - ndcg(&rels, k).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn pearson_affine_invariant(
            xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
            a in 0.1f64..10.0, b in -50.0f64..50.0,
        ) {
            let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
            let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
            if let Ok(r) = pearson(&x, &y) {
                let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let r2 = pearson(&xt, &y).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
            }
        }
    }
}
