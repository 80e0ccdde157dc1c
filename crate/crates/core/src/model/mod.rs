//! Logistic-regression classifiers trained from scratch with Adam: a plain
//! LR, the stacked TF-IDF + heuristics ensemble trained end to end, and HERB
//! (embedding-classifier prediction fused with the heuristics).

mod adam;
mod herb;
mod logistic;
mod stacked;

pub use adam::{AdamParams, AdamState};
pub use herb::{herb_fusion_inputs, train_herb, HerbModel};
pub use logistic::{
    bce_loss, lr_gradient, lr_loss, predict_lr, sigmoid, train_lr, train_lr_traced, LogisticModel,
    Standardization,
};
pub use stacked::{stacked_gradient, stacked_loss, train_stacked, StackedInputs, StackedModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectorize::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
    /// Diagnostic mode: plain full-batch gradient descent instead of mini-batch Adam.
    #[serde(default)]
    pub full_batch_gd: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-5,
            adam_epsilon: 1e-9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            epochs: 200,
            l2_penalty: 0.0,
            seed: 0,
            full_batch_gd: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.learning_rate > 0.0
            && self.adam_epsilon > 0.0
            && (0.0..1.0).contains(&self.adam_beta1)
            && (0.0..1.0).contains(&self.adam_beta2)
            && self.l2_penalty >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training config {self:?}")))
        }
    }

    pub(crate) fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// A design matrix: dense rows or sparse rows over a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Dense { dim: usize, rows: Vec<Vec<f64>> },
    Sparse { dim: usize, rows: Vec<SparseVector> },
}

/// One borrowed row of a [`Design`].
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse(&'a SparseVector),
}

impl Design {
    pub fn dense(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(Design::Dense { dim, rows })
    }

    pub fn sparse(dim: usize, rows: Vec<SparseVector>) -> Result<Self> {
        for r in &rows {
            if let Some(&(i, _)) = r.entries.last() {
                if i as usize >= dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: i as usize + 1,
                    });
                }
            }
        }
        Ok(Design::Sparse { dim, rows })
    }

    pub fn dim(&self) -> usize {
        match self {
            Design::Dense { dim, .. } | Design::Sparse { dim, .. } => *dim,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Design::Dense { rows, .. } => rows.len(),
            Design::Sparse { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        match self {
            Design::Dense { rows, .. } => Row::Dense(&rows[i]),
            Design::Sparse { rows, .. } => Row::Sparse(&rows[i]),
        }
    }

    /// Single column `j` as a one-dimensional dense design.
    pub fn column(&self, j: usize) -> Design {
        let rows = (0..self.len())
            .map(|i| match self.row(i) {
                Row::Dense(r) => vec![r[j]],
                Row::Sparse(r) => vec![r
                    .entries
                    .binary_search_by_key(&(j as u32), |e| e.0)
                    .map_or(0.0, |k| r.entries[k].1)],
            })
            .collect();
        Design::Dense { dim: 1, rows }
    }
}

impl Row<'_> {
    pub fn dim_hint(&self) -> Option<usize> {
        match self {
            Row::Dense(r) => Some(r.len()),
            Row::Sparse(_) => None,
        }
    }
}

pub(crate) fn check_labels(n_rows: usize, y: &[u8]) -> Result<()> {
    if n_rows != y.len() {
        return Err(Error::DimensionMismatch {
            expected: n_rows,
            got: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::Empty("need at least two training rows"));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Seeded mini-batch index schedule shared by every trainer.
pub(crate) fn batches(n: usize, config: &TrainConfig, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    if config.full_batch_gd {
        return vec![order];
    }
    order.shuffle(rng);
    order.chunks(config.batch_size).map(<[usize]>::to_vec).collect()
}
