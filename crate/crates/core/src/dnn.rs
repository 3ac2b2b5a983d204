//! Feedforward posterior subsystem: sigmoid hidden layers, softmax output
//! over languages, trained by minibatch SGD with momentum on mean
//! cross-entropy.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data_io::Corpus;
use crate::error::{check_dim, domain, Error, Result};
use crate::linalg::log_sum_exp;
use crate::scores::{ScoreKind, TrialScoreMatrix};
use crate::seeded_rng;

/// Log-odds scores are clipped to `±SCORE_CAP`.
pub const SCORE_CAP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.outputs, self.inputs, &self.weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnnModel {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Layer>,
    /// Output index → language name.
    pub languages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 128,
            epochs: 100,
            l2: 1e-5,
            seed: 0,
            patience: 10,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.l2 >= 0.0) {
            return Err(domain("learning rate and l2 must be non-negative, momentum in [0, 1)"));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(domain("batch size and patience must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(domain("validation fraction must lie in (0, 0.5]"));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Glorot-uniform weights, zero biases.
pub fn init_dnn(layer_dims: &[usize], languages: Vec<String>, seed: u64) -> Result<DnnModel> {
    if layer_dims.len() < 2 {
        return Err(domain("a network needs at least an input and an output layer"));
    }
    if layer_dims.iter().any(|&d| d < 1) {
        return Err(domain("every layer needs at least one unit"));
    }
    check_dim(*layer_dims.last().unwrap(), languages.len())?;
    let mut rng = seeded_rng(seed);
    let layers = layer_dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                inputs: fan_in,
                outputs: fan_out,
                weights: (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect(),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(DnnModel {
        format_version: crate::FORMAT_VERSION,
        layer_dims: layer_dims.to_vec(),
        layers,
        languages,
    })
}

impl DnnModel {
    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Activations of every layer for a batch (rows = examples); the last
    /// entry holds output logits.
    fn forward(&self, input: DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = &acts[k] * layer.weight_matrix().transpose();
            for mut row in z.row_iter_mut() {
                for (v, b) in row.iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            if k < last {
                z.apply(|v| *v = sigmoid(*v));
            }
            acts.push(z);
        }
        acts
    }

    /// Output logits for a batch of input rows.
    pub fn logits(&self, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        for x in inputs {
            check_dim(self.input_dim(), x.len())?;
        }
        let batch = DMatrix::from_fn(inputs.len(), self.input_dim(), |r, c| inputs[r][c]);
        Ok(self.forward(batch).pop().unwrap())
    }
}

fn log_softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let v: Vec<f64> = row.iter().copied().collect();
        let lse = log_sum_exp(&v);
        row.iter_mut().for_each(|x| *x -= lse);
    }
    out
}

/// Softmax posteriors `p(l | v)`.
pub fn dnn_posteriors(model: &DnnModel, v: &[f64]) -> Result<Vec<f64>> {
    let logp = log_softmax_rows(&model.logits(&[v.to_vec()])?);
    Ok(logp.row(0).iter().map(|x| x.exp()).collect())
}

/// `log p_l − log( (1/(L−1)) Σ_{k≠l} p_k )` from log-posteriors, clipped
/// to `±SCORE_CAP`.
pub fn posterior_log_odds(log_post: &[f64]) -> Vec<f64> {
    let l = log_post.len();
    let norm = ((l - 1) as f64).ln();
    let mut others = vec![0.0; l - 1];
    (0..l)
        .map(|i| {
            let mut j = 0;
            for (k, lp) in log_post.iter().enumerate() {
                if k != i {
                    others[j] = *lp;
                    j += 1;
                }
            }
            let s = log_post[i] - (log_sum_exp(&others) - norm);
            s.clamp(-SCORE_CAP, SCORE_CAP)
        })
        .collect()
}

pub fn score_dnn(model: &DnnModel, test: &Corpus) -> Result<TrialScoreMatrix> {
    if model.n_outputs() < 2 {
        return Err(domain("log-odds scoring needs at least two output classes"));
    }
    let logp = log_softmax_rows(&model.logits(&test.vectors())?);
    let mut scores = Vec::with_capacity(test.len() * model.n_outputs());
    for row in logp.row_iter() {
        let v: Vec<f64> = row.iter().copied().collect();
        scores.extend(posterior_log_odds(&v));
    }
    TrialScoreMatrix::new(
        test.records().iter().map(|r| r.id.clone()).collect(),
        test.records().iter().map(|r| r.duration_s).collect(),
        model.languages.clone(),
        scores,
        ScoreKind::Dnn,
    )
}

/// Gradients laid out like the model's layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Mean cross-entropy plus `(l2/2)·Σ‖W‖²` and its gradient by backprop.
pub fn loss_and_gradients(
    model: &DnnModel,
    inputs: &[Vec<f64>],
    targets: &[usize],
    l2: f64,
) -> Result<(f64, Gradients)> {
    check_dim(inputs.len(), targets.len())?;
    let batch = DMatrix::from_fn(inputs.len(), model.input_dim(), |r, c| inputs[r][c]);
    let idx: Vec<usize> = (0..inputs.len()).collect();
    Ok(batch_loss_and_gradients(model, &batch, targets, &idx, l2))
}

fn batch_loss_and_gradients(
    model: &DnnModel,
    data: &DMatrix<f64>,
    targets: &[usize],
    idx: &[usize],
    l2: f64,
) -> (f64, Gradients) {
    let b = idx.len();
    let input = DMatrix::from_fn(b, data.ncols(), |r, c| data[(idx[r], c)]);
    let acts = model.forward(input);
    let logp = log_softmax_rows(acts.last().unwrap());
    let mut loss = 0.0;
    let mut delta = logp.map(f64::exp);
    for (r, &i) in idx.iter().enumerate() {
        let t = targets[i];
        loss -= logp[(r, t)];
        delta[(r, t)] -= 1.0;
    }
    loss /= b as f64;
    delta /= b as f64;

    let n_layers = model.layers.len();
    let mut weights = vec![DMatrix::zeros(0, 0); n_layers];
    let mut biases = vec![Vec::new(); n_layers];
    for k in (0..n_layers).rev() {
        let w = model.layers[k].weight_matrix();
        loss += 0.5 * l2 * w.norm_squared();
        let mut gw = delta.transpose() * &acts[k];
        gw += &w * l2;
        weights[k] = gw;
        biases[k] = delta.row_sum().iter().copied().collect();
        if k > 0 {
            let mut back = &delta * &w;
            back.zip_apply(&acts[k], |d, h| *d *= h * (1.0 - h));
            delta = back;
        }
    }
    (loss, Gradients { weights, biases })
}

fn dataset_loss(model: &DnnModel, data: &DMatrix<f64>, targets: &[usize], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let input = DMatrix::from_fn(idx.len(), data.ncols(), |r, c| data[(idx[r], c)]);
    let logp = log_softmax_rows(&model.forward(input).pop().unwrap());
    -idx.iter().enumerate().map(|(r, &i)| logp[(r, targets[i])]).sum::<f64>() / idx.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedDnn {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: DnnModel,
    /// Entry 0 is the untrained network.
    pub history: Vec<EpochStats>,
}

/// Minibatch SGD with momentum and early stopping on a held-out split.
pub fn train_dnn(model: &DnnModel, train: &Corpus, cfg: &TrainConfig) -> Result<TrainedDnn> {
    cfg.validate()?;
    check_dim(model.input_dim(), train.dim())?;
    train.require_labels()?;
    let targets: Vec<usize> = train
        .records()
        .iter()
        .map(|r| {
            let l = r.label.as_ref().unwrap();
            model
                .languages
                .iter()
                .position(|m| m == l)
                .ok_or_else(|| domain(format!("label `{l}` is not a network output")))
        })
        .collect::<Result<_>>()?;
    let n = train.len();
    if n < 2 {
        return Err(domain("training needs at least two records"));
    }
    let data = DMatrix::from_fn(n, train.dim(), |r, c| train.records()[r].vec[c]);

    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let val_idx = order[..n_val].to_vec();
    let mut train_idx = order[n_val..].to_vec();

    let mut current = model.clone();
    let mut velocity_w: Vec<DMatrix<f64>> =
        current.layers.iter().map(|l| DMatrix::zeros(l.outputs, l.inputs)).collect();
    let mut velocity_b: Vec<Vec<f64>> = current.layers.iter().map(|l| vec![0.0; l.outputs]).collect();

    let initial_val = dataset_loss(&current, &data, &targets, &val_idx);
    let mut history = vec![EpochStats {
        epoch: 0,
        train_loss: dataset_loss(&current, &data, &targets, &train_idx),
        validation_loss: initial_val,
    }];
    let mut best = (initial_val, current.clone());
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(cfg.batch_size) {
            let (loss, grads) = batch_loss_and_gradients(&current, &data, &targets, batch, cfg.l2);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, learning_rate: cfg.learning_rate });
            }
            for (k, layer) in current.layers.iter_mut().enumerate() {
                let vw = &mut velocity_w[k];
                *vw *= cfg.momentum;
                *vw -= &grads.weights[k] * cfg.learning_rate;
                for r in 0..layer.outputs {
                    for c in 0..layer.inputs {
                        layer.weights[r * layer.inputs + c] += vw[(r, c)];
                    }
                }
                for (j, b) in layer.bias.iter_mut().enumerate() {
                    velocity_b[k][j] = cfg.momentum * velocity_b[k][j] - cfg.learning_rate * grads.biases[k][j];
                    *b += velocity_b[k][j];
                }
            }
        }
        let train_loss = dataset_loss(&current, &data, &targets, &train_idx);
        let validation_loss = dataset_loss(&current, &data, &targets, &val_idx);
        if !train_loss.is_finite() || !validation_loss.is_finite() {
            return Err(Error::Divergence { epoch, learning_rate: cfg.learning_rate });
        }
        history.push(EpochStats { epoch, train_loss, validation_loss });
        if validation_loss < best.0 {
            best = (validation_loss, current.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainedDnn { model: best.1, history })
}

/// Out-of-fold log-odds scores for every training vector: each fold is
/// scored by a network trained on the remaining folds. Folds are assigned
/// round-robin within each language.
pub fn cross_validated_scores(
    layer_dims: &[usize],
    train: &Corpus,
    cfg: &TrainConfig,
    folds: usize,
) -> Result<TrialScoreMatrix> {
    if folds < 2 {
        return Err(domain("cross-validation needs at least 2 folds"));
    }
    train.require_labels()?;
    let languages = train.languages();
    let mut fold_of = vec![0usize; train.len()];
    for idx in train.indices_by_language().values() {
        for (j, &i) in idx.iter().enumerate() {
            fold_of[i] = j % folds;
        }
    }
    let l = languages.len();
    let mut scores = vec![0.0; train.len() * l];
    for f in 0..folds {
        let pick = |keep: bool| {
            let recs = train
                .records()
                .iter()
                .zip(&fold_of)
                .filter(|(_, &g)| (g == f) != keep)
                .map(|(r, _)| r.clone())
                .collect();
            Corpus::new(train.dim(), recs)
        };
        let (fit_set, held) = (pick(true)?, pick(false)?);
        if held.is_empty() {
            continue;
        }
        let seed = cfg.seed.wrapping_add(f as u64 + 1);
        let init = init_dnn(layer_dims, languages.clone(), seed)?;
        let trained = train_dnn(&init, &fit_set, &TrainConfig { seed, ..cfg.clone() })?;
        let m = score_dnn(&trained.model, &held)?;
        let mut row = 0;
        for (i, &g) in fold_of.iter().enumerate() {
            if g == f {
                scores[i * l..(i + 1) * l].copy_from_slice(m.row(row));
                row += 1;
            }
        }
    }
    TrialScoreMatrix::new(
        train.records().iter().map(|r| r.id.clone()).collect(),
        train.records().iter().map(|r| r.duration_s).collect(),
        languages,
        scores,
        ScoreKind::Dnn,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("l{i}")).collect()
    }

    #[test]
    fn init_is_deterministic_and_normalized() {
        let a = init_dnn(&[4, 6, 3], names(3), 7).unwrap();
        let b = init_dnn(&[4, 6, 3], names(3), 7).unwrap();
        assert_eq!(a, b);
        let p = dnn_posteriors(&a, &[0.0; 4]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(init_dnn(&[4], vec![], 1).is_err());
        assert!(init_dnn(&[4, 0, 3], names(3), 1).is_err());
    }

    #[test]
    fn uniform_posterior_scores_zero() {
        let lp = vec![(0.25f64).ln(); 4];
        assert!(posterior_log_odds(&lp).iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn saturated_posterior_is_capped() {
        let lp = vec![0.0, -800.0, -900.0];
        let s = posterior_log_odds(&lp);
        assert_eq!(s[0], SCORE_CAP);
        assert_eq!(s[1], -SCORE_CAP);
    }

    #[test]
    fn bias_shift_leaves_posteriors_unchanged() {
        let mut m = init_dnn(&[3, 5, 4], names(4), 2).unwrap();
        let x = [0.3, -1.0, 2.0];
        let before = dnn_posteriors(&m, &x).unwrap();
        m.layers.last_mut().unwrap().bias.iter_mut().for_each(|b| *b += 3.7);
        let after = dnn_posteriors(&m, &x).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig { validation_fraction: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { validation_fraction: 0.6, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
