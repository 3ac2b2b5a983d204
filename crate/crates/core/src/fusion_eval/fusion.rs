use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, numeric, Result};
use crate::scores::{ScoreKind, TrialScoreMatrix};

/// `fused = Σⱼ weightsⱼ·sⱼ + quality_weight·ln d + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub format_version: u32,
    pub weights: Vec<f64>,
    pub quality_weight: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub max_iter: usize,
    /// Stop once a step improves the objective by less than this.
    pub tol: f64,
    /// Ridge penalty on standardized weights; keeps separable data finite.
    pub l2: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { max_iter: 1000, tol: 1e-8, l2: 1e-6 }
    }
}

fn check_inputs(matrices: &[&TrialScoreMatrix]) -> Result<()> {
    let first = matrices.first().ok_or_else(|| domain("fusion needs at least one subsystem"))?;
    for m in &matrices[1..] {
        first.check_aligned(m)?;
    }
    Ok(())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Problem {
    /// Standardized features, one row per trial, last column is the constant.
    x: Vec<Vec<f64>>,
    y: Vec<bool>,
    sample_weight: [f64; 2],
    l2: f64,
}

impl Problem {
    /// Loss, gradient and Hessian (row-major `p × p`).
    fn objective(&self, w: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let p = w.len();
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        let mut loss = 0.0;
        for (x, &y) in self.x.iter().zip(&self.y) {
            let z: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            let sw = self.sample_weight[usize::from(y)];
            let s = sigmoid(z);
            loss += sw * if y { softplus(-z) } else { softplus(z) };
            let g = sw * (s - f64::from(u8::from(y)));
            let h = sw * s * (1.0 - s);
            for a in 0..p {
                grad[a] += g * x[a];
                for b in 0..p {
                    hess[a * p + b] += h * x[a] * x[b];
                }
            }
        }
        for j in 0..p - 1 {
            loss += 0.5 * self.l2 * w[j] * w[j];
            grad[j] += self.l2 * w[j];
            hess[j * p + j] += self.l2;
        }
        (loss, grad, hess)
    }

    fn loss(&self, w: &[f64]) -> f64 {
        self.objective(w).0
    }
}

/// Class-balanced logistic regression over every (segment, language) trial.
/// Rows whose label is not an enrolled language contribute non-targets only.
pub fn train_fusion(matrices: &[&TrialScoreMatrix], labels: &[String], cfg: &FusionConfig) -> Result<FusionModel> {
    check_inputs(matrices)?;
    let base = matrices[0];
    check_dim(base.n_rows(), labels.len())?;
    let k = matrices.len();
    let p = k + 2;

    let mut raw = Vec::with_capacity(base.scores().len());
    let mut y = Vec::with_capacity(base.scores().len());
    for (i, label) in labels.iter().enumerate() {
        let log_d = base.durations()[i].ln();
        for (l, lang) in base.languages().iter().enumerate() {
            let mut f: Vec<f64> = matrices.iter().map(|m| m.get(i, l)).collect();
            f.push(log_d);
            raw.push(f);
            y.push(lang == label);
        }
    }
    let n_tar = y.iter().filter(|&&t| t).count();
    let n_non = y.len() - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(domain("fusion training needs both target and non-target trials"));
    }

    // Standardize each feature; constant features are left centred only.
    let n = raw.len() as f64;
    let mut mean = vec![0.0; p - 1];
    let mut scale = vec![1.0; p - 1];
    for j in 0..p - 1 {
        mean[j] = raw.iter().map(|f| f[j]).sum::<f64>() / n;
        let var = raw.iter().map(|f| (f[j] - mean[j]).powi(2)).sum::<f64>() / n;
        if var > 1e-24 {
            scale[j] = var.sqrt();
        }
    }
    let x: Vec<Vec<f64>> = raw
        .iter()
        .map(|f| {
            let mut s: Vec<f64> = (0..p - 1).map(|j| (f[j] - mean[j]) / scale[j]).collect();
            s.push(1.0);
            s
        })
        .collect();
    let problem = Problem {
        x,
        y,
        sample_weight: [0.5 / n_non as f64, 0.5 / n_tar as f64],
        l2: cfg.l2,
    };

    // Damped Newton steps with backtracking; the ridge keeps the Hessian
    // positive definite even for collinear subsystems.
    let mut w = vec![0.0; p];
    let mut loss = problem.loss(&w);
    for _ in 0..cfg.max_iter {
        let (_, grad, hess) = problem.objective(&w);
        let h = DMatrix::from_row_slice(p, p, &hess);
        let g = DVector::from_column_slice(&grad);
        let dir = match h.cholesky() {
            Some(c) => -c.solve(&g),
            None => -g.clone(),
        };
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let cand: Vec<f64> = w.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
            let l = problem.loss(&cand);
            if l <= loss + 1e-4 * step * slope {
                accepted = Some((cand, l));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, l)) = accepted else { break };
        let improvement = loss - l;
        w = cand;
        loss = l;
        if improvement < cfg.tol {
            break;
        }
    }

    // Back to the raw feature scale.
    let mut offset = w[p - 1];
    let mut raw_w = vec![0.0; p - 1];
    for j in 0..p - 1 {
        raw_w[j] = w[j] / scale[j];
        offset -= raw_w[j] * mean[j];
    }
    let quality_weight = raw_w.pop().expect("quality term");
    if raw_w.iter().chain([&quality_weight, &offset]).any(|v| !v.is_finite()) {
        return Err(numeric("fusion weights are not finite"));
    }
    Ok(FusionModel { format_version: crate::FORMAT_VERSION, weights: raw_w, quality_weight, offset })
}

pub fn apply_fusion(model: &FusionModel, matrices: &[&TrialScoreMatrix]) -> Result<TrialScoreMatrix> {
    check_inputs(matrices)?;
    check_dim(model.weights.len(), matrices.len())?;
    let base = matrices[0];
    let mut scores = Vec::with_capacity(base.scores().len());
    for i in 0..base.n_rows() {
        let q = model.quality_weight * base.durations()[i].ln() + model.offset;
        for l in 0..base.n_languages() {
            let s: f64 = matrices.iter().zip(&model.weights).map(|(m, w)| w * m.get(i, l)).sum();
            scores.push(s + q);
        }
    }
    base.with_scores(scores, ScoreKind::Fused)
}
