use serde::{Deserialize, Serialize};

use super::logistic::{train_lr, LogisticModel};
use super::{Design, TrainConfig};
use crate::error::{Error, Result};

/// Embedding classifier whose probability is fused with the heuristics by a
/// second logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerbModel {
    pub embedding_classifier: LogisticModel,
    pub fusion: LogisticModel,
}

/// Fusion rows `[p_embedding, heuristics…]`.
pub fn herb_fusion_inputs(embedding_probs: &[f64], heuristics: &Design) -> Result<Design> {
    if embedding_probs.len() != heuristics.len() {
        return Err(Error::DimensionMismatch {
            expected: heuristics.len(),
            got: embedding_probs.len(),
        });
    }
    let Design::Dense { rows, .. } = heuristics else {
        return Err(Error::InvalidArgument("heuristic features must be dense".into()));
    };
    let fused = embedding_probs
        .iter()
        .zip(rows)
        .map(|(&p, r)| std::iter::once(p).chain(r.iter().copied()).collect())
        .collect();
    Design::dense(fused)
}

/// Step 1 fits the embedding classifier; step 2 freezes it and fits the
/// fusion layer on its probabilities plus the heuristics (seed + 1).
pub fn train_herb(embeddings: &Design, heuristics: &Design, y: &[u8], config: &TrainConfig) -> Result<HerbModel> {
    if embeddings.len() != heuristics.len() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.len(),
            got: heuristics.len(),
        });
    }
    let embedding_classifier = train_lr(embeddings, y, config)?;
    let probs = embedding_classifier.predict_many(embeddings)?;
    let fused = herb_fusion_inputs(&probs, heuristics)?;
    let fusion_config = TrainConfig {
        seed: config.seed.wrapping_add(1),
        ..*config
    };
    let fusion = train_lr(&fused, y, &fusion_config)?;
    Ok(HerbModel {
        embedding_classifier,
        fusion,
    })
}

impl HerbModel {
    pub fn predict_many(&self, embeddings: &Design, heuristics: &Design) -> Result<Vec<f64>> {
        let probs = self.embedding_classifier.predict_many(embeddings)?;
        self.fusion.predict_many(&herb_fusion_inputs(&probs, heuristics)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{optimal_f1, ScoredLabel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// `embedding_signal` / `heuristic_signal` scale the label's shift on
    /// the first embedding coordinate and on every heuristic.
    fn dataset(n: usize, embedding_signal: f64, heuristic_signal: f64, seed: u64) -> (Design, Design, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut emb, mut heur, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let label = rng.random_bool(0.5);
            let shift = if label { 1.0 } else { -1.0 };
            let mut e: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
            e[0] += embedding_signal * shift;
            let h: Vec<f64> = (0..6)
                .map(|_| rng.sample::<f64, _>(StandardNormal) + heuristic_signal * shift)
                .collect();
            emb.push(e);
            heur.push(h);
            y.push(u8::from(label));
        }
        (Design::dense(emb).unwrap(), Design::dense(heur).unwrap(), y)
    }

    fn f1(scores: &[f64], y: &[u8]) -> f64 {
        let pairs: Vec<ScoredLabel> = scores
            .iter()
            .zip(y)
            .map(|(&score, &label)| ScoredLabel {
                doc_id: String::new(),
                score,
                label,
            })
            .collect();
        optimal_f1(&pairs).unwrap().f1
    }

    #[test]
    fn zero_epochs_predicts_half() {
        let (e, h, y) = dataset(30, 1.0, 0.0, 0);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let m = train_herb(&e, &h, &y, &cfg).unwrap();
        assert!(m.predict_many(&e, &h).unwrap().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn embedding_input_dominates_when_heuristics_are_noise() {
        let (e, h, y) = dataset(600, 2.0, 0.0, 3);
        let m = train_herb(&e, &h, &y, &TrainConfig::default()).unwrap();
        assert_eq!(m.fusion.dim(), 7);
        let w = &m.fusion.weights;
        let top = (0..w.len()).max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs())).unwrap();
        assert_eq!(top, 0, "{w:?}");
    }

    #[test]
    fn fusion_beats_noise_embedding() {
        for seed in 0..5 {
            let (e, h, y) = dataset(600, 0.0, 0.7, seed);
            let (te, th, ty) = dataset(600, 0.0, 0.7, 50 + seed);
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let m = train_herb(&e, &h, &y, &cfg).unwrap();
            let herb = f1(&m.predict_many(&te, &th).unwrap(), &ty);
            let alone = f1(&m.embedding_classifier.predict_many(&te).unwrap(), &ty);
            assert!(herb >= alone, "seed {seed}: {herb} < {alone}");
        }
    }
}
