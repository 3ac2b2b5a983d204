//! Gaussian mixtures: density evaluation, EM fitting, mean-only MAP
//! adaptation and minimum-message-length component selection.
//!
//! The same machinery serves the 49-dimensional i-vector models (diagonal
//! covariances) and the 2-D score/duration densities (full covariances).

mod em;
mod map;
mod mml;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, numeric, Error, Result};
use crate::linalg::log_sum_exp;

pub use em::{fit_gmm_em, kmeans_plus_plus, GmmConfig, GmmFit};
pub use map::{adapt_from_stats, map_adapt, MapStats};
pub use mml::{fit_gmm_mml, mml_params_per_component, MmlFit};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    Diagonal,
    Full,
}

/// Per-component covariances.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariances {
    /// One variance vector per component.
    Diagonal(Vec<Vec<f64>>),
    /// One row-major `D × D` matrix per component.
    Full(Vec<Vec<f64>>),
}

impl Covariances {
    pub fn kind(&self) -> CovarianceKind {
        match self {
            Covariances::Diagonal(_) => CovarianceKind::Diagonal,
            Covariances::Full(_) => CovarianceKind::Full,
        }
    }

    fn len(&self) -> usize {
        match self {
            Covariances::Diagonal(v) | Covariances::Full(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Precision {
    Diagonal { inv_var: Vec<f64> },
    /// Lower Cholesky factor of the covariance, row-major.
    Full { chol: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
struct ComponentCache {
    log_norm: f64,
    precision: Precision,
}

/// Lower Cholesky factor of a row-major SPD matrix, or `None` if the
/// matrix is not positive definite.
pub(crate) fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

fn build_cache(cov: &[f64], kind: CovarianceKind, d: usize) -> Result<ComponentCache> {
    match kind {
        CovarianceKind::Diagonal => {
            if cov.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(numeric("diagonal variances must be positive and finite"));
            }
            let log_det: f64 = cov.iter().map(|v| v.ln()).sum();
            Ok(ComponentCache {
                log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
                precision: Precision::Diagonal { inv_var: cov.iter().map(|v| 1.0 / v).collect() },
            })
        }
        CovarianceKind::Full => {
            for i in 0..d {
                for j in 0..i {
                    if (cov[i * d + j] - cov[j * d + i]).abs() > 1e-9 * (1.0 + cov[i * d + j].abs()) {
                        return Err(numeric("full covariance is not symmetric"));
                    }
                }
            }
            let chol = cholesky(cov, d)
                .ok_or_else(|| numeric("full covariance is not positive definite"))?;
            let log_det: f64 = (0..d).map(|i| 2.0 * chol[i * d + i].ln()).sum();
            Ok(ComponentCache {
                log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
                precision: Precision::Full { chol },
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmFile", into = "GmmFile")]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Covariances,
    cache: Vec<ComponentCache>,
}

impl GmmModel {
    /// Validates and builds a mixture. Weights must be positive and sum to
    /// one within 1e-9; they are renormalized exactly afterwards.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Covariances) -> Result<Self> {
        let c = weights.len();
        if c == 0 {
            return Err(domain("a mixture needs at least one component"));
        }
        check_dim(c, means.len())?;
        check_dim(c, covariances.len())?;
        let d = means[0].len();
        if d == 0 {
            return Err(domain("mixture dimension must be at least 1"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(domain("mixture weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(domain(format!("mixture weights sum to {total}, expected 1")));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        for m in &means {
            check_dim(d, m.len())?;
            if m.iter().any(|x| !x.is_finite()) {
                return Err(numeric("non-finite mixture mean"));
            }
        }
        let kind = covariances.kind();
        let (entries, expected) = match &covariances {
            Covariances::Diagonal(v) => (v, d),
            Covariances::Full(v) => (v, d * d),
        };
        let mut cache = Vec::with_capacity(c);
        for cov in entries {
            check_dim(expected, cov.len())?;
            cache.push(build_cache(cov, kind, d)?);
        }
        Ok(GmmModel { weights, means, covariances, cache })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn kind(&self) -> CovarianceKind {
        self.covariances.kind()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &Covariances {
        &self.covariances
    }

    /// Same weights and covariances with new component means.
    pub fn with_means(&self, means: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(self.n_components(), means.len())?;
        for m in &means {
            check_dim(self.dim(), m.len())?;
            if m.iter().any(|x| !x.is_finite()) {
                return Err(numeric("non-finite adapted mean"));
            }
        }
        Ok(GmmModel { means, ..self.clone() })
    }

    /// `log N(x; μᵢ, Σᵢ)` without the mixture weight.
    pub(crate) fn component_log_density(&self, i: usize, x: &[f64]) -> f64 {
        let mu = &self.means[i];
        let cache = &self.cache[i];
        let maha = match &cache.precision {
            Precision::Diagonal { inv_var } => x
                .iter()
                .zip(mu)
                .zip(inv_var)
                .map(|((x, m), p)| (x - m) * (x - m) * p)
                .sum::<f64>(),
            Precision::Full { chol } => {
                let d = mu.len();
                let mut y = [0.0f64; 8];
                let mut heap;
                let y: &mut [f64] = if d <= 8 {
                    &mut y[..d]
                } else {
                    heap = vec![0.0; d];
                    &mut heap
                };
                let mut acc = 0.0;
                for r in 0..d {
                    let mut s = x[r] - mu[r];
                    for k in 0..r {
                        s -= chol[r * d + k] * y[k];
                    }
                    y[r] = s / chol[r * d + r];
                    acc += y[r] * y[r];
                }
                acc
            }
        };
        cache.log_norm - 0.5 * maha
    }

    /// Fills `out[i] = log wᵢ + log N(x; μᵢ, Σᵢ)` and returns their log-sum-exp.
    pub(crate) fn weighted_log_densities(&self, x: &[f64], out: &mut [f64]) -> f64 {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.weights[i].ln() + self.component_log_density(i, x);
        }
        log_sum_exp(out)
    }

    /// Log-density of `x` under the mixture.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut buf = vec![0.0; self.n_components()];
        Ok(self.weighted_log_densities(x, &mut buf))
    }

    /// Posterior component probabilities of `x`; returns the log-density.
    pub fn responsibilities(&self, x: &[f64], out: &mut [f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.n_components(), out.len())?;
        let ll = self.weighted_log_densities(x, out);
        for o in out.iter_mut() {
            *o = (*o - ll).exp();
        }
        Ok(ll)
    }

    pub fn total_log_likelihood(&self, data: &[Vec<f64>]) -> Result<f64> {
        let mut buf = vec![0.0; self.n_components()];
        let mut total = 0.0;
        for x in data {
            check_dim(self.dim(), x.len())?;
            total += self.weighted_log_densities(x, &mut buf);
        }
        Ok(total)
    }
}

/// `log Σᵢ wᵢ N(x; μᵢ, Σᵢ)` evaluated by log-sum-exp.
pub fn gmm_log_likelihood(model: &GmmModel, x: &[f64]) -> Result<f64> {
    model.log_likelihood(x)
}

#[derive(Serialize, Deserialize)]
struct GmmFile {
    format_version: u32,
    kind: CovarianceKind,
    dim: usize,
    components: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Diagonal: variance vectors. Full: row-major `D × D` matrices.
    covariances: Vec<Vec<f64>>,
}

impl TryFrom<GmmFile> for GmmModel {
    type Error = Error;

    fn try_from(f: GmmFile) -> Result<Self> {
        if f.format_version != crate::FORMAT_VERSION {
            return Err(Error::FormatVersion(f.format_version));
        }
        check_dim(f.components, f.weights.len())?;
        let covs = match f.kind {
            CovarianceKind::Diagonal => Covariances::Diagonal(f.covariances),
            CovarianceKind::Full => Covariances::Full(f.covariances),
        };
        let m = GmmModel::new(f.weights, f.means, covs)?;
        check_dim(f.dim, m.dim())?;
        Ok(m)
    }
}

impl From<GmmModel> for GmmFile {
    fn from(m: GmmModel) -> Self {
        let (kind, dim, components) = (m.kind(), m.dim(), m.n_components());
        let covariances = match m.covariances {
            Covariances::Diagonal(v) | Covariances::Full(v) => v,
        };
        GmmFile {
            format_version: crate::FORMAT_VERSION,
            kind,
            dim,
            components,
            weights: m.weights,
            means: m.means,
            covariances,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard_normal_1d() -> GmmModel {
        GmmModel::new(vec![1.0], vec![vec![0.0]], Covariances::Diagonal(vec![vec![1.0]])).unwrap()
    }

    #[test]
    fn standard_normal_at_zero() {
        let ll = gmm_log_likelihood(&standard_normal_1d(), &[0.0]).unwrap();
        assert!((ll - (-0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-15);
        assert!((ll + 0.918_938_5).abs() < 1e-7);
    }

    #[test]
    fn duplicated_component_is_degenerate() {
        let two = GmmModel::new(
            vec![0.5, 0.5],
            vec![vec![0.3], vec![0.3]],
            Covariances::Diagonal(vec![vec![2.0], vec![2.0]]),
        )
        .unwrap();
        let one = GmmModel::new(vec![1.0], vec![vec![0.3]], Covariances::Diagonal(vec![vec![2.0]])).unwrap();
        for x in [-3.0, 0.0, 1.7] {
            let a = two.log_likelihood(&[x]).unwrap();
            let b = one.log_likelihood(&[x]).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn full_and_diagonal_agree_on_diagonal_matrices() {
        let diag = GmmModel::new(vec![1.0], vec![vec![1.0, -1.0]], Covariances::Diagonal(vec![vec![2.0, 0.5]])).unwrap();
        let full = GmmModel::new(
            vec![1.0],
            vec![vec![1.0, -1.0]],
            Covariances::Full(vec![vec![2.0, 0.0, 0.0, 0.5]]),
        )
        .unwrap();
        let x = [0.2, 0.7];
        assert!((diag.log_likelihood(&x).unwrap() - full.log_likelihood(&x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn rejects_invalid_parameters() {
        let bad_w = GmmModel::new(vec![0.7], vec![vec![0.0]], Covariances::Diagonal(vec![vec![1.0]]));
        assert!(bad_w.is_err());
        let not_pd = GmmModel::new(
            vec![1.0],
            vec![vec![0.0, 0.0]],
            Covariances::Full(vec![vec![1.0, 2.0, 2.0, 1.0]]),
        );
        assert!(matches!(not_pd, Err(Error::Numeric(_))));
        let m = standard_normal_1d();
        assert!(matches!(m.log_likelihood(&[0.0, 1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn json_round_trip() {
        let m = GmmModel::new(
            vec![0.25, 0.75],
            vec![vec![0.0, 1.0], vec![2.0, -1.0]],
            Covariances::Full(vec![vec![1.0, 0.3, 0.3, 2.0], vec![0.5, 0.0, 0.0, 0.5]]),
        )
        .unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: GmmModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
