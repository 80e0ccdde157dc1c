use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logistic::{bce_loss, sigmoid, Folded, LogisticModel, Standardization};
use super::{batches, check_labels, AdamState, Design, Row, TrainConfig};
use crate::error::{Error, Result};

/// Level-1 inputs: a TF-IDF design plus one column per heuristic.
#[derive(Debug, Clone, Copy)]
pub struct StackedInputs<'a> {
    pub tfidf: &'a Design,
    pub heuristics: &'a Design,
}

/// Level-1 logistic models over the TF-IDF vector and each heuristic, feeding
/// a level-2 logistic model over their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub level1: Vec<LogisticModel>,
    pub level2: LogisticModel,
}

impl StackedInputs<'_> {
    fn check(&self) -> Result<()> {
        if self.tfidf.len() != self.heuristics.len() {
            return Err(Error::DimensionMismatch {
                expected: self.tfidf.len(),
                got: self.heuristics.len(),
            });
        }
        Ok(())
    }

    fn len(&self) -> usize {
        self.tfidf.len()
    }

    fn level1_designs(&self) -> Vec<Design> {
        (0..self.heuristics.dim()).map(|j| self.heuristics.column(j)).collect()
    }
}

/// Precomputed views used while training or evaluating one model.
struct Views<'a> {
    tfidf: &'a Design,
    columns: Vec<Design>,
}

impl Views<'_> {
    fn design(&self, k: usize) -> &Design {
        if k == 0 {
            self.tfidf
        } else {
            &self.columns[k - 1]
        }
    }
}

impl StackedModel {
    /// Model whose output is exactly 0.5 for every input: all level-1
    /// weights zero, level-2 weights one, bias offsetting their sum.
    ///
    /// Zero level-2 weights would leave the level-1 gradients identically
    /// zero, so the level-2 weights start at one instead.
    pub fn initial(tfidf_standardization: Standardization, heuristic_standardization: &Standardization) -> Self {
        let mut level1 = vec![LogisticModel::zeros(tfidf_standardization)];
        for &s in &heuristic_standardization.0 {
            level1.push(LogisticModel::zeros(Standardization(vec![s])));
        }
        let k = level1.len();
        let level2 = LogisticModel {
            weights: vec![1.0; k],
            bias: -0.5 * k as f64,
            standardization: Standardization::identity(k),
        };
        StackedModel { level1, level2 }
    }

    pub fn n_params(&self) -> usize {
        self.level1.iter().map(|m| m.dim() + 1).sum::<usize>() + self.level2.dim() + 1
    }

    /// Flattened parameters: each level-1 `[w…, b]` in order, then level 2.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for m in &self.level1 {
            p.extend(m.params());
        }
        p.extend(self.level2.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut off = 0;
        for m in self.level1.iter_mut().chain(std::iter::once(&mut self.level2)) {
            let n = m.dim() + 1;
            m.set_params(&p[off..off + n]);
            off += n;
        }
    }

    fn frozen(&self) -> Vec<bool> {
        let mut f = Vec::with_capacity(self.n_params());
        for m in &self.level1 {
            f.extend(m.frozen());
        }
        f.extend(self.level2.frozen());
        f
    }

    fn check_inputs(&self, inputs: &StackedInputs<'_>) -> Result<()> {
        inputs.check()?;
        let expected = [self.level1[0].dim(), self.level1.len() - 1];
        let got = [inputs.tfidf.dim(), inputs.heuristics.dim()];
        if expected != got {
            return Err(Error::DimensionMismatch {
                expected: expected[0] + expected[1],
                got: got[0] + got[1],
            });
        }
        Ok(())
    }

    fn level1_probs(&self, folded: &[Folded], views: &Views<'_>, i: usize) -> Vec<f64> {
        folded
            .iter()
            .enumerate()
            .map(|(k, f)| sigmoid(f.linear(views.design(k).row(i))))
            .collect()
    }

    pub fn predict_many(&self, inputs: &StackedInputs<'_>) -> Result<Vec<f64>> {
        self.check_inputs(inputs)?;
        let views = Views {
            tfidf: inputs.tfidf,
            columns: inputs.level1_designs(),
        };
        let folded: Vec<Folded> = self.level1.iter().map(LogisticModel::folded).collect();
        let top = self.level2.folded();
        Ok((0..inputs.len())
            .map(|i| {
                let p = self.level1_probs(&folded, &views, i);
                sigmoid(top.linear(Row::Dense(&p)))
            })
            .collect())
    }

    fn l2_term(&self) -> f64 {
        self.level1
            .iter()
            .chain(std::iter::once(&self.level2))
            .flat_map(|m| &m.weights)
            .map(|w| w * w)
            .sum()
    }

    fn batch_gradient(&self, views: &Views<'_>, y: &[u8], batch: &[usize], l2: f64) -> Vec<f64> {
        let folded: Vec<Folded> = self.level1.iter().map(LogisticModel::folded).collect();
        let top = self.level2.folded();
        let k = self.level1.len();
        let scale = 1.0 / batch.len() as f64;
        let mut level2_deltas = Vec::with_capacity(batch.len());
        let mut level2_rows = Vec::with_capacity(batch.len());
        let mut level1_deltas = vec![Vec::with_capacity(batch.len()); k];
        for &i in batch {
            let p = self.level1_probs(&folded, views, i);
            let delta = sigmoid(top.linear(Row::Dense(&p))) - y[i] as f64;
            for (j, pj) in p.iter().enumerate() {
                level1_deltas[j].push(delta * self.level2.weights[j] * pj * (1.0 - pj));
            }
            level2_deltas.push(delta);
            level2_rows.push(p);
        }
        let mut grad = vec![0.0; self.n_params()];
        let mut off = 0;
        for (j, m) in self.level1.iter().enumerate() {
            let n = m.dim() + 1;
            m.accumulate(views.design(j), batch, &level1_deltas[j], scale, &mut grad[off..off + n]);
            off += n;
        }
        let level2_design = Design::Dense { dim: k, rows: level2_rows };
        let local: Vec<usize> = (0..batch.len()).collect();
        self.level2
            .accumulate(&level2_design, &local, &level2_deltas, scale, &mut grad[off..]);
        if l2 > 0.0 {
            let params = self.params();
            let mut off = 0;
            for m in self.level1.iter().chain(std::iter::once(&self.level2)) {
                for j in 0..m.dim() {
                    grad[off + j] += l2 * params[off + j];
                }
                off += m.dim() + 1;
            }
        }
        grad
    }
}

/// Mean cross-entropy of the stacked output plus `(l2/2)` times the squared
/// norm of every weight (biases excluded).
pub fn stacked_loss(model: &StackedModel, inputs: &StackedInputs<'_>, y: &[u8], l2: f64) -> Result<f64> {
    model.check_inputs(inputs)?;
    if y.len() != inputs.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: y.len(),
        });
    }
    let views = Views {
        tfidf: inputs.tfidf,
        columns: inputs.level1_designs(),
    };
    let folded: Vec<Folded> = model.level1.iter().map(LogisticModel::folded).collect();
    let top = model.level2.folded();
    let data: f64 = (0..inputs.len())
        .map(|i| {
            let p = model.level1_probs(&folded, &views, i);
            bce_loss(top.linear(Row::Dense(&p)), y[i] as f64)
        })
        .sum::<f64>()
        / inputs.len() as f64;
    Ok(data + 0.5 * l2 * model.l2_term())
}

/// Analytic gradient of [`stacked_loss`] in [`StackedModel::params`] layout.
pub fn stacked_gradient(model: &StackedModel, inputs: &StackedInputs<'_>, y: &[u8], l2: f64) -> Result<Vec<f64>> {
    model.check_inputs(inputs)?;
    if y.len() != inputs.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: y.len(),
        });
    }
    let views = Views {
        tfidf: inputs.tfidf,
        columns: inputs.level1_designs(),
    };
    let batch: Vec<usize> = (0..inputs.len()).collect();
    Ok(model.batch_gradient(&views, y, &batch, l2))
}

/// Trains every level jointly on the final cross-entropy.
pub fn train_stacked(inputs: &StackedInputs<'_>, y: &[u8], config: &TrainConfig) -> Result<StackedModel> {
    config.validate()?;
    inputs.check()?;
    check_labels(inputs.len(), y)?;
    let mut model = StackedModel::initial(
        Standardization::fit(inputs.tfidf),
        &Standardization::fit(inputs.heuristics),
    );
    let views = Views {
        tfidf: inputs.tfidf,
        columns: inputs.level1_designs(),
    };
    let frozen = model.frozen();
    let hp = config.adam();
    let mut adam = AdamState::new(model.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.params();
    for _ in 0..config.epochs {
        for batch in batches(inputs.len(), config, &mut rng) {
            let mut grad = model.batch_gradient(&views, y, &batch, config.l2_penalty);
            for (g, &fz) in grad.iter_mut().zip(&frozen) {
                if fz {
                    *g = 0.0;
                }
            }
            if config.full_batch_gd {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= config.learning_rate * g;
                }
            } else {
                adam.step(&mut params, &grad, &hp);
            }
            model.set_params(&params);
        }
    }
    Ok(model)
}
