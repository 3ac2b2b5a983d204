//! Centering, whitening, length normalization and LDA.
//!
//! Order is fixed for every i-vector: center/whiten → length-normalize → LDA.
//! The cosine baseline stops after length normalization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data_io::Corpus;
use crate::error::{check_dim, domain, numeric, Result};
use crate::linalg::{self, covariance, dot, mat_vec, mean, norm, sorted_eigen, symmetric_power};

pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-8;
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenTransform {
    pub mean: Vec<f64>,
    /// Rows of `V diag(max(λ, eps))^(-1/2) Vᵀ`.
    pub whitener: Vec<Vec<f64>>,
    pub eps: f64,
}

impl WhitenTransform {
    pub fn identity(dim: usize) -> Self {
        let whitener = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        WhitenTransform { mean: vec![0.0; dim], whitener, eps: DEFAULT_EIGEN_FLOOR }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fits mean and inverse principal square root of the sample covariance.
pub fn fit_center_whiten(dev: &Corpus, eps: f64) -> Result<WhitenTransform> {
    let d = dev.dim();
    if !(eps > 0.0) {
        return Err(domain("eigenvalue floor must be positive"));
    }
    if dev.len() < d + 1 {
        return Err(domain(format!(
            "whitening {d}-dim vectors needs at least {} records, got {}",
            d + 1,
            dev.len()
        )));
    }
    let rows = dev.vectors();
    let mu = mean(&rows, d);
    let cov = covariance(&rows, &mu);
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(numeric("non-finite covariance entries"));
    }
    let w = symmetric_power(&cov, eps, -0.5)?;
    Ok(WhitenTransform { mean: mu, whitener: linalg::to_rows(&w), eps })
}

pub fn apply_center_whiten(t: &WhitenTransform, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(t.dim(), v.len())?;
    let centered: Vec<f64> = v.iter().zip(&t.mean).map(|(x, m)| x - m).collect();
    Ok(mat_vec(&t.whitener, &centered))
}

/// Projects onto the unit sphere.
pub fn length_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(domain("cannot length-normalize a zero or non-finite vector"));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaTransform {
    /// `K × D`, one discriminant direction per row.
    pub projection: Vec<Vec<f64>>,
    /// Generalized eigenvalues of the retained directions, descending.
    pub eigenvalues: Vec<f64>,
}

impl LdaTransform {
    pub fn output_dim(&self) -> usize {
        self.projection.len()
    }

    pub fn input_dim(&self) -> usize {
        self.projection.first().map_or(0, Vec::len)
    }
}

/// Between- and within-class scatter matrices of a labeled corpus.
pub fn scatter_matrices(train: &Corpus) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    train.require_labels()?;
    let d = train.dim();
    let rows = train.vectors();
    let global = mean(&rows, d);
    let mut s_between = DMatrix::<f64>::zeros(d, d);
    let mut s_within = DMatrix::<f64>::zeros(d, d);
    for idx in train.indices_by_language().values() {
        let class_rows: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
        let mu = mean(&class_rows, d);
        let n = class_rows.len() as f64;
        s_within += covariance(&class_rows, &mu) * n;
        let diff = nalgebra::DVector::from_iterator(d, mu.iter().zip(&global).map(|(a, b)| a - b));
        s_between += &diff * diff.transpose() * n;
    }
    Ok((s_between, s_within))
}

/// Top-`k` generalized eigenvectors of `(S_b, S_w + ridge·I)` with
/// `ridge = ridge_scale · tr(S_w) / D`, scaled so that the projected
/// within-class covariance is the identity.
pub fn fit_lda(train: &Corpus, k: usize, ridge_scale: f64) -> Result<LdaTransform> {
    let by_lang = train.indices_by_language();
    let n_classes = by_lang.len();
    if n_classes < 2 {
        return Err(domain("LDA needs at least 2 classes"));
    }
    if let Some((l, idx)) = by_lang.iter().find(|(_, idx)| idx.len() < 2) {
        return Err(domain(format!("class `{l}` has {} record(s); LDA needs 2", idx.len())));
    }
    let d = train.dim();
    if k == 0 || k > n_classes - 1 || k > d {
        return Err(domain(format!(
            "LDA output dimension {k} must lie in 1..={}",
            (n_classes - 1).min(d)
        )));
    }
    let (s_between, mut s_within) = scatter_matrices(train)?;
    let ridge = ridge_scale * s_within.trace() / d as f64;
    for i in 0..d {
        s_within[(i, i)] += ridge;
    }
    let (within_values, _) = sorted_eigen(&s_within)?;
    let largest = within_values[0];
    if within_values.last().is_none_or(|&v| !(v > 1e-12 * largest)) {
        return Err(numeric("within-class scatter is singular; use a positive ridge"));
    }
    let w_inv_sqrt = symmetric_power(&s_within, f64::MIN_POSITIVE, -0.5)?;
    let m = &w_inv_sqrt * &s_between * &w_inv_sqrt;
    let m = (&m + m.transpose()) * 0.5;
    let (values, vectors) = sorted_eigen(&m)?;
    let directions = &w_inv_sqrt * vectors.columns(0, k) * (train.len() as f64).sqrt();

    let mut projection = Vec::with_capacity(k);
    for c in 0..k {
        let mut row: Vec<f64> = directions.column(c).iter().copied().collect();
        if let Some(first) = row.iter().find(|x| x.abs() > 1e-300) {
            if *first < 0.0 {
                row.iter_mut().for_each(|x| *x = -*x);
            }
        }
        projection.push(row);
    }
    let eigenvalues = values[..k].iter().map(|v| v.max(0.0)).collect();
    Ok(LdaTransform { projection, eigenvalues })
}

pub fn apply_lda(t: &LdaTransform, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(t.input_dim(), v.len())?;
    Ok(mat_vec(&t.projection, v))
}

/// Fisher criterion `tr((P S_w Pᵀ)⁻¹ P S_b Pᵀ)` of a projection.
pub fn fisher_criterion(projection: &[Vec<f64>], s_between: &DMatrix<f64>, s_within: &DMatrix<f64>) -> f64 {
    let p = linalg::from_rows(projection);
    let b = &p * s_between * p.transpose();
    let w = &p * s_within * p.transpose();
    match w.try_inverse() {
        Some(inv) => (inv * b).trace(),
        None => f64::NAN,
    }
}

/// Fitted preprocessing chain; `lda` is absent for the cosine baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub format_version: u32,
    pub whiten: WhitenTransform,
    pub lda: Option<LdaTransform>,
}

impl Preprocessor {
    /// Whitens and length-normalizes one vector.
    pub fn normalize(&self, v: &[f64]) -> Result<Vec<f64>> {
        length_normalize(&apply_center_whiten(&self.whiten, v)?)
    }

    /// Full chain: whiten → normalize → LDA (when fitted).
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.normalize(v)?;
        match &self.lda {
            Some(lda) => apply_lda(lda, &n),
            None => Ok(n),
        }
    }

    pub fn normalize_corpus(&self, c: &Corpus) -> Result<Corpus> {
        c.map_vectors(|v| self.normalize(v))
    }

    pub fn apply_corpus(&self, c: &Corpus) -> Result<Corpus> {
        c.map_vectors(|v| self.apply(v))
    }

    /// Fits whitening on `dev` and, if `lda_dim` is given, LDA on the
    /// whitened and normalized `train` set. The LDA dimension is clipped to
    /// `classes − 1`.
    pub fn fit(dev: &Corpus, train: &Corpus, eps: f64, lda_dim: Option<usize>) -> Result<Self> {
        let whiten = fit_center_whiten(dev, eps)?;
        let lda = match lda_dim {
            Some(k) => {
                let pre = Preprocessor { format_version: crate::FORMAT_VERSION, whiten: whiten.clone(), lda: None };
                let normalized = pre.normalize_corpus(train)?;
                let k = resolve_lda_dim(k, normalized.languages().len(), normalized.dim());
                Some(fit_lda(&normalized, k, DEFAULT_RIDGE_SCALE)?)
            }
            None => None,
        };
        Ok(Preprocessor { format_version: crate::FORMAT_VERSION, whiten, lda })
    }
}

/// LDA dimension actually used for a requested `k`: `min(k, classes − 1, D)`.
pub fn resolve_lda_dim(requested: usize, n_classes: usize, dim: usize) -> usize {
    requested.min(n_classes.saturating_sub(1)).min(dim)
}

/// Unit-norm check shared by scoring code.
pub fn is_unit(v: &[f64], tol: f64) -> bool {
    (dot(v, v).sqrt() - 1.0).abs() <= tol
}
