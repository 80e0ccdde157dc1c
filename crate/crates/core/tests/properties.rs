use std::collections::{BTreeMap, BTreeSet};

use covrank::apps::{self, BudgetDocument, BudgetPolicy, Claim, CostModel, CoverageIndex, RankingMethod};
use covrank::corpus::{dedup_tuples, load_corpus, AliasTable, Corpus, Document, ExtractionTuple, GroundTruth, GtVariant, Relation};
use covrank::features::{Bm25Index, Bm25Params};
use proptest::prelude::*;

const WORDS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "Élan", "o'neil"];

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    let docs = prop::collection::vec((0..3usize, prop::collection::vec(0..WORDS.len(), 0..12)), 1..8);
    let tuples = prop::collection::vec((0..8usize, 0..5usize, 0.0..1.0f64), 0..15);
    let gt = prop::collection::btree_set(0..5usize, 0..4);
    (docs, tuples, gt).prop_map(|(docs, tuples, gt)| {
        let documents: Vec<Document> = docs
            .iter()
            .enumerate()
            .map(|(i, (e, words))| {
                let text: Vec<&str> = words.iter().map(|&w| WORDS[w]).collect();
                Document::new(format!("d{i}"), format!("E{e}"), format!("https://s{e}.org/x/d{i}"), format!("s{e}.org"), text.join(" "))
            })
            .collect();
        let mut seen = BTreeSet::new();
        let tuples: Vec<ExtractionTuple> = tuples
            .into_iter()
            .filter_map(|(d, o, c)| {
                let doc = &documents[d % documents.len()];
                seen.insert((doc.doc_id.clone(), o)).then(|| ExtractionTuple {
                    doc_id: doc.doc_id.clone(),
                    subject: doc.entity_id.clone(),
                    relation: Relation::Ceo,
                    object: format!("Obj {o}"),
                    confidence: c,
                })
            })
            .collect();
        let ground_truths = vec![GroundTruth {
            entity_id: "E0".into(),
            relation: Relation::Ceo,
            variant: GtVariant::Wiki,
            objects: gt.into_iter().map(|o| format!("Obj {o}")).collect(),
        }];
        Corpus::new(documents, tuples, ground_truths).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_files_round_trip(corpus in arb_corpus()) {
        let dir = tempfile::tempdir().unwrap();
        let (d, t, g) = (dir.path().join("d.jsonl"), dir.path().join("t.jsonl"), dir.path().join("g.jsonl"));
        corpus.save(&d, &t, &g).unwrap();
        let loaded = load_corpus(&d, &t, &g).unwrap();
        prop_assert_eq!(loaded, corpus);
    }

    #[test]
    fn dedup_is_idempotent(corpus in arb_corpus(), dup in 0..4usize) {
        let mut aliases = AliasTable::new();
        aliases.insert("Obj 0", ["Obj 1"]);
        let mut tuples = corpus.tuples.clone();
        tuples.extend(corpus.tuples.iter().take(dup).cloned());
        let once = dedup_tuples(&tuples, &aliases);
        prop_assert_eq!(dedup_tuples(&once, &aliases), once.clone());
        let keys: BTreeSet<_> = once.iter().map(|t| (&t.doc_id, &t.object)).collect();
        prop_assert_eq!(keys.len(), once.len());
    }

    #[test]
    fn bm25_monotone_in_tf_and_length(
        others in prop::collection::vec(prop::collection::vec(0..4usize, 1..10), 1..5),
        base in prop::collection::vec(1..4usize, 1..10),
    ) {
        let vocab = ["q", "a", "b", "c"];
        let render = |ids: &[usize]| ids.iter().map(|&i| vocab[i]).collect::<Vec<_>>().join(" ");
        let score = |doc: &str| {
            let mut texts: Vec<String> = others.iter().map(|o| render(o)).collect();
            texts.push(doc.to_owned());
            let ids: Vec<String> = (0..texts.len()).map(|i| format!("d{i}")).collect();
            let index = Bm25Index::build(ids.iter().map(String::as_str).zip(texts.iter().map(String::as_str)), Bm25Params::default());
            index.score(&["q".to_owned()], ids.last().unwrap()).unwrap()
        };
        let with_q = format!("{} q", render(&base));
        // Replacing a non-query token by the query term raises tf at fixed length.
        let mut swapped = base.clone();
        swapped[0] = 0;
        let more_tf = format!("{} q", render(&swapped));
        prop_assert!(score(&more_tf) > score(&with_q));
        // One extra non-query token lowers the score at fixed tf.
        let longer = format!("{with_q} a");
        prop_assert!(score(&longer) < score(&with_q));
    }

    #[test]
    fn oracle_ranking_maximizes_topk_coverage(covs in prop::collection::vec(0..5u8, 1..7)) {
        let ids: Vec<String> = (0..covs.len()).map(|i| format!("d{i}")).collect();
        let gold: BTreeMap<String, f64> = ids.iter().cloned().zip(covs.iter().map(|&c| f64::from(c) / 4.0)).collect();
        let ranked = apps::rank_documents(&ids, RankingMethod::Oracle, Some(&gold)).unwrap();
        let mut sorted: Vec<f64> = gold.values().copied().collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for k in 1..=ids.len() {
            let got: f64 = ranked[..k].iter().map(|r| gold[&r.doc_id]).sum();
            let best: f64 = sorted[..k].iter().sum();
            prop_assert_eq!(got, best);
        }
    }

    #[test]
    fn budget_never_overspent(
        docs in prop::collection::vec((1..500usize, 0..40usize, 0..6usize, 0.0..1.0f64), 1..30),
        budget in 1.0..400.0f64,
        seed in 0..100u64,
    ) {
        let docs: Vec<BudgetDocument> = docs
            .iter()
            .enumerate()
            .map(|(i, &(len, mentions, n, score))| BudgetDocument {
                doc_id: format!("d{i}"),
                doc_length: len,
                mention_count: mentions,
                tuples: (0..n).map(|t| format!("o{}", (i * 3 + t) % 17)).collect(),
                predicted_score: score,
            })
            .collect();
        let sizes: Vec<(usize, usize)> = docs.iter().map(|d| (d.doc_length, d.mention_count)).collect();
        let cost = CostModel::calibrate(&sizes, 2.0, 13.6, apps::DEFAULT_INTERCEPT_SHARE).unwrap();
        for policy in [BudgetPolicy::Prioritized, BudgetPolicy::BaselineRandom { seed }] {
            let r = apps::simulate_budget(&docs, &cost, budget, policy).unwrap();
            prop_assert!(r.seconds_used <= budget);
            prop_assert!(r.docs_processed <= docs.len());
        }
    }

    #[test]
    fn refutation_order_ignores_input_order(
        supports in prop::collection::vec(0..6usize, 1..10),
        covs in prop::collection::vec(0..10u8, 6),
        seed in 0..1000u64,
    ) {
        let index: CoverageIndex = BTreeMap::from([(
            ("E".to_owned(), Relation::Family),
            (0..6).map(|i| (format!("d{i}"), f64::from(covs[i]) / 10.0)).collect(),
        )]);
        let claims: Vec<Claim> = supports
            .iter()
            .enumerate()
            .map(|(i, &d)| Claim::new("E", Relation::Family, &format!("o{i}"), BTreeSet::from([format!("d{d}")])).unwrap())
            .collect();
        let mut shuffled = claims.clone();
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(
            apps::refute_claims(&claims, &index, 0.5),
            apps::refute_claims(&shuffled, &index, 0.5)
        );
    }
}
