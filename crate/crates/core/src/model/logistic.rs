use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batches, check_labels, AdamState, Design, Row, TrainConfig};
use crate::error::{Error, Result};

/// Per-feature `(mean, stddev)` fitted on training rows. A zero stddev marks
/// a constant feature whose standardized value is always 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization(pub Vec<(f64, f64)>);

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Standardization(vec![(0.0, 1.0); dim])
    }

    pub fn fit(x: &Design) -> Self {
        let (dim, n) = (x.dim(), x.len() as f64);
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for i in 0..x.len() {
            match x.row(i) {
                Row::Dense(r) => {
                    for (j, &v) in r.iter().enumerate() {
                        sum[j] += v;
                    }
                }
                Row::Sparse(r) => {
                    for &(j, v) in &r.entries {
                        sum[j as usize] += v;
                    }
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        for i in 0..x.len() {
            match x.row(i) {
                Row::Dense(r) => {
                    for (j, &v) in r.iter().enumerate() {
                        sum_sq[j] += (v - mean[j]).powi(2);
                    }
                }
                Row::Sparse(r) => {
                    // implicit zeros contribute mean² each; add them back below
                    for &(j, v) in &r.entries {
                        let j = j as usize;
                        sum_sq[j] += (v - mean[j]).powi(2) - mean[j].powi(2);
                    }
                }
            }
        }
        if matches!(x, Design::Sparse { .. }) {
            for j in 0..dim {
                sum_sq[j] += n * mean[j].powi(2);
            }
        }
        Standardization(
            mean.into_iter()
                .zip(sum_sq)
                .map(|(m, ss)| {
                    let sd = (ss.max(0.0) / n).sqrt();
                    (m, if sd > 1e-12 * (1.0 + m.abs()) { sd } else { 0.0 })
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Binary logistic regression over standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardization: Standardization,
}

/// Weights folded through the standardization: `w·z + b = a·x + c`.
pub(crate) struct Folded {
    pub a: Vec<f64>,
    pub c: f64,
}

impl Folded {
    pub fn linear(&self, row: Row<'_>) -> f64 {
        self.c
            + match row {
                Row::Dense(r) => r.iter().zip(&self.a).map(|(x, a)| x * a).sum::<f64>(),
                Row::Sparse(r) => r.entries.iter().map(|&(j, x)| x * self.a[j as usize]).sum::<f64>(),
            }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Binary cross-entropy of logit `z` against label `y`, computed stably.
pub fn bce_loss(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

impl LogisticModel {
    pub fn zeros(standardization: Standardization) -> Self {
        LogisticModel {
            weights: vec![0.0; standardization.dim()],
            bias: 0.0,
            standardization,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn folded(&self) -> Folded {
        let mut c = self.bias;
        let a = self
            .weights
            .iter()
            .zip(&self.standardization.0)
            .map(|(&w, &(m, s))| {
                if s > 0.0 {
                    c -= w * m / s;
                    w / s
                } else {
                    0.0
                }
            })
            .collect();
        Folded { a, c }
    }

    fn check_row(&self, row: Row<'_>) -> Result<()> {
        match row {
            Row::Dense(r) if r.len() != self.dim() => Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: r.len(),
            }),
            Row::Sparse(r) if r.entries.last().is_some_and(|&(j, _)| j as usize >= self.dim()) => {
                Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    got: r.entries.last().unwrap().0 as usize + 1,
                })
            }
            _ => Ok(()),
        }
    }

    pub fn predict(&self, row: Row<'_>) -> Result<f64> {
        self.check_row(row)?;
        Ok(sigmoid(self.folded().linear(row)))
    }

    pub fn predict_many(&self, x: &Design) -> Result<Vec<f64>> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        let f = self.folded();
        Ok((0..x.len()).map(|i| sigmoid(f.linear(x.row(i)))).collect())
    }

    /// Flattened parameters `[weights…, bias]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let d = self.dim();
        self.weights.copy_from_slice(&p[..d]);
        self.bias = p[d];
    }

    /// Indices of parameters that never move (weights on constant features).
    pub(crate) fn frozen(&self) -> Vec<bool> {
        let mut f: Vec<bool> = self.standardization.0.iter().map(|&(_, s)| s == 0.0).collect();
        f.push(false);
        f
    }

    /// Adds `scale · Σ_i δ_i · [z_i, 1]` over `batch` into `grad` (`[weights…, bias]`).
    pub(crate) fn accumulate(&self, x: &Design, batch: &[usize], deltas: &[f64], scale: f64, grad: &mut [f64]) {
        let d = self.dim();
        let std = &self.standardization.0;
        let delta_sum: f64 = deltas.iter().sum();
        match x {
            Design::Dense { rows, .. } => {
                for (&i, &delta) in batch.iter().zip(deltas) {
                    for j in 0..d {
                        let (m, s) = std[j];
                        if s > 0.0 {
                            grad[j] += scale * delta * (rows[i][j] - m) / s;
                        }
                    }
                }
            }
            Design::Sparse { rows, .. } => {
                let mut raw = vec![0.0; d];
                for (&i, &delta) in batch.iter().zip(deltas) {
                    for &(j, v) in &rows[i].entries {
                        raw[j as usize] += delta * v;
                    }
                }
                for j in 0..d {
                    let (m, s) = std[j];
                    if s > 0.0 {
                        grad[j] += scale * (raw[j] - m * delta_sum) / s;
                    }
                }
            }
        }
        grad[d] += scale * delta_sum;
    }
}

pub fn predict_lr(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    model.predict(Row::Dense(x))
}

fn check_design(x: &Design, y: &[u8], model: &LogisticModel) -> Result<()> {
    if x.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.dim(),
        });
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Mean binary cross-entropy plus `(l2/2)·‖w‖²`.
pub fn lr_loss(model: &LogisticModel, x: &Design, y: &[u8], l2: f64) -> Result<f64> {
    check_design(x, y, model)?;
    let f = model.folded();
    let n = x.len() as f64;
    let data: f64 = (0..x.len()).map(|i| bce_loss(f.linear(x.row(i)), y[i] as f64)).sum::<f64>() / n;
    Ok(data + 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>())
}

/// Analytic gradient of [`lr_loss`] with respect to `[weights…, bias]`.
pub fn lr_gradient(model: &LogisticModel, x: &Design, y: &[u8], l2: f64) -> Result<Vec<f64>> {
    check_design(x, y, model)?;
    let batch: Vec<usize> = (0..x.len()).collect();
    Ok(batch_gradient(model, &model.folded(), x, y, &batch, l2))
}

fn batch_gradient(model: &LogisticModel, f: &super::logistic::Folded, x: &Design, y: &[u8], batch: &[usize], l2: f64) -> Vec<f64> {
    let deltas: Vec<f64> = batch
        .iter()
        .map(|&i| sigmoid(f.linear(x.row(i))) - y[i] as f64)
        .collect();
    let mut grad = vec![0.0; model.dim() + 1];
    model.accumulate(x, batch, &deltas, 1.0 / batch.len() as f64, &mut grad);
    for (g, w) in grad.iter_mut().zip(&model.weights) {
        *g += l2 * w;
    }
    grad
}

/// Trains a standardized logistic regression from zero weights.
pub fn train_lr(x: &Design, y: &[u8], config: &TrainConfig) -> Result<LogisticModel> {
    train_lr_traced(x, y, config, |_, _| {})
}

/// [`train_lr`] with a callback receiving `(update index, model)` after every update.
pub fn train_lr_traced(
    x: &Design,
    y: &[u8],
    config: &TrainConfig,
    mut trace: impl FnMut(usize, &LogisticModel),
) -> Result<LogisticModel> {
    config.validate()?;
    check_labels(x.len(), y)?;
    let mut model = LogisticModel::zeros(Standardization::fit(x));
    let frozen = model.frozen();
    let hp = config.adam();
    let mut adam = AdamState::new(model.dim() + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.params();
    let mut step = 0;
    for _ in 0..config.epochs {
        for batch in batches(x.len(), config, &mut rng) {
            let mut grad = batch_gradient(&model, &model.folded(), x, y, &batch, config.l2_penalty);
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
            trace(step, &model);
            step += 1;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Design, Vec<u8>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..50 {
            rows.push(vec![-1.0]);
            y.push(0);
            rows.push(vec![1.0]);
            y.push(1);
        }
        (Design::dense(rows).unwrap(), y)
    }

    #[test]
    fn separable_one_d() {
        let (x, y) = separable();
        let m = train_lr(&x, &y, &TrainConfig::default()).unwrap();
        assert!(predict_lr(&m, &[1.0]).unwrap() > 0.5);
        assert!(predict_lr(&m, &[-1.0]).unwrap() < 0.5);
    }

    #[test]
    fn zero_epochs_predicts_half() {
        let (x, y) = separable();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let m = train_lr(&x, &y, &cfg).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        assert_eq!(predict_lr(&m, &[123.0]).unwrap(), 0.5);
    }

    #[test]
    fn deterministic() {
        let (x, y) = separable();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train_lr(&x, &y, &cfg).unwrap();
        let b = train_lr(&x, &y, &cfg).unwrap();
        assert_eq!(a.weights[0].to_bits(), b.weights[0].to_bits());
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
    }

    #[test]
    fn predict_examples() {
        let zero = LogisticModel::zeros(Standardization::identity(2));
        assert_eq!(predict_lr(&zero, &[3.0, -7.0]).unwrap(), 0.5);
        let m = LogisticModel {
            weights: vec![3f64.ln()],
            bias: 0.0,
            standardization: Standardization::identity(1),
        };
        assert!((predict_lr(&m, &[1.0]).unwrap() - 0.75).abs() < 1e-15);
        let big = LogisticModel {
            weights: vec![1.0],
            bias: 0.0,
            standardization: Standardization::identity(1),
        };
        for x in [-1e6, -50.0, 0.0, 50.0, 1e6] {
            let p = predict_lr(&big, &[x]).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
        assert!(matches!(predict_lr(&m, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn errors() {
        let x = Design::dense(vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(train_lr(&x, &[1, 1], &TrainConfig::default()), Err(Error::SingleClass)));
        assert!(matches!(
            train_lr(&x, &[1, 0, 1], &TrainConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Design::dense(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn symmetric_batch_has_zero_gradient() {
        let x = Design::dense(vec![vec![1.0], vec![1.0], vec![-1.0], vec![-1.0]]).unwrap();
        let m = LogisticModel::zeros(Standardization::fit(&x));
        let g = lr_gradient(&m, &x, &[1, 0, 1, 0], 0.0).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15), "{g:?}");
    }

    #[test]
    fn l2_term_adds_scaled_weights() {
        let x = Design::dense(vec![vec![1.0, 0.5], vec![-1.0, 2.0], vec![0.3, -0.7]]).unwrap();
        let y = [1, 0, 1];
        let mut m = LogisticModel::zeros(Standardization::fit(&x));
        m.set_params(&[0.4, -1.2, 0.1]);
        let g0 = lr_gradient(&m, &x, &y, 0.0).unwrap();
        let g1 = lr_gradient(&m, &x, &y, 0.3).unwrap();
        assert!((g1[0] - g0[0] - 0.3 * 0.4).abs() < 1e-15);
        assert!((g1[1] - g0[1] + 0.3 * 1.2).abs() < 1e-15);
        assert_eq!(g1[2], g0[2]);
    }

    #[test]
    fn sparse_and_dense_agree() {
        use crate::vectorize::SparseVector;
        let dense_rows = vec![vec![0.0, 1.0, 0.0], vec![2.0, 0.0, 0.0], vec![0.0, 0.5, 3.0], vec![1.0, 0.0, 0.0]];
        let sparse_rows = dense_rows
            .iter()
            .map(|r| SparseVector {
                entries: r
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j as u32, *v))
                    .collect(),
            })
            .collect();
        let xd = Design::dense(dense_rows).unwrap();
        let xs = Design::sparse(3, sparse_rows).unwrap();
        let sd = Standardization::fit(&xd);
        let ss = Standardization::fit(&xs);
        for (a, b) in sd.0.iter().zip(&ss.0) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
        let y = [1, 0, 1, 0];
        let mut m = LogisticModel::zeros(sd);
        m.set_params(&[0.2, -0.7, 1.1, 0.05]);
        let gd = lr_gradient(&m, &xd, &y, 0.1).unwrap();
        let gs = lr_gradient(&m, &xs, &y, 0.1).unwrap();
        for (a, b) in gd.iter().zip(&gs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_feature_stays_frozen() {
        let x = Design::dense(vec![vec![5.0, -1.0], vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, -2.0]]).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let m = train_lr(&x, &[0, 1, 1, 0], &cfg).unwrap();
        assert_eq!(m.standardization.0[0].1, 0.0);
        assert_eq!(m.weights[0], 0.0);
        assert!(m.weights[1] > 0.0);
    }
}
