use rand::Rng as _;

use super::{cholesky, CovarianceKind, Covariances, GmmModel};
use crate::error::{check_dim, domain, numeric, Result};
use crate::linalg::{covariance, mean};
use crate::{seeded_rng, Rng};

/// Components whose weight drops below this are considered collapsed.
const COLLAPSE_WEIGHT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    pub max_iter: usize,
    /// Stop once the mean per-sample log-likelihood improves by less than this.
    pub tol: f64,
    /// Variance floor as a fraction of the per-dimension global variance.
    pub var_floor: f64,
    pub seed: u64,
    pub covariance_kind: CovarianceKind,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            max_iter: 200,
            tol: 1e-7,
            var_floor: 1e-4,
            seed: 0,
            covariance_kind: CovarianceKind::Diagonal,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total data log-likelihood before each M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub reseeded: bool,
}

pub(crate) fn validate_data(data: &[Vec<f64>]) -> Result<usize> {
    let d = data.first().map(Vec::len).ok_or_else(|| domain("no data"))?;
    if d == 0 {
        return Err(domain("data dimension must be at least 1"));
    }
    for x in data {
        check_dim(d, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(numeric("non-finite data"));
        }
    }
    Ok(d)
}

/// Absolute per-dimension variance floor.
pub(crate) fn variance_floor(data: &[Vec<f64>], rel: f64) -> Result<Vec<f64>> {
    let d = data[0].len();
    let mu = mean(data, d);
    let mut var = vec![0.0; d];
    for x in data {
        for k in 0..d {
            var[k] += (x[k] - mu[k]).powi(2);
        }
    }
    let n = data.len() as f64;
    if var.iter().all(|v| *v == 0.0) {
        return Err(numeric("degenerate data: all points identical"));
    }
    let max = var.iter().cloned().fold(0.0, f64::max) / n;
    Ok(var.iter().map(|v| (rel * v / n).max(1e-12 * max).max(f64::MIN_POSITIVE)).collect())
}

/// Seeds `c` centers by k-means++ (D² sampling).
pub fn kmeans_plus_plus(data: &[Vec<f64>], c: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)].clone()];
    let sqdist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut best: Vec<f64> = data.iter().map(|x| sqdist(x, &centers[0])).collect();
    while centers.len() < c {
        let total: f64 = best.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in best.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let center = data[idx].clone();
        for (b, x) in best.iter_mut().zip(data) {
            *b = b.min(sqdist(x, &center));
        }
        centers.push(center);
    }
    centers
}

/// Global covariance in the requested layout, floored.
pub(crate) fn global_covariance(data: &[Vec<f64>], kind: CovarianceKind, floor: &[f64]) -> Vec<f64> {
    let d = floor.len();
    let cov = covariance(data, &mean(data, d));
    match kind {
        CovarianceKind::Diagonal => (0..d).map(|k| cov[(k, k)].max(floor[k])).collect(),
        CovarianceKind::Full => {
            let mut m: Vec<f64> = (0..d * d).map(|i| cov[(i / d, i % d)]).collect();
            floor_full(&mut m, floor);
            m
        }
    }
}

/// Raises the diagonal to the floor, then adds floor·I until the matrix
/// factors.
pub(crate) fn floor_full(m: &mut [f64], floor: &[f64]) {
    let d = floor.len();
    for k in 0..d {
        m[k * d + k] = m[k * d + k].max(floor[k]);
    }
    let mut tries = 0;
    while cholesky(m, d).is_none() && tries < 60 {
        let scale = 2f64.powi(tries);
        for k in 0..d {
            m[k * d + k] += floor[k] * scale;
        }
        tries += 1;
    }
}

pub(crate) fn build(weights: &[f64], means: Vec<Vec<f64>>, covs: Vec<Vec<f64>>, kind: CovarianceKind) -> Result<GmmModel> {
    let total: f64 = weights.iter().sum();
    let weights = weights.iter().map(|w| w / total).collect();
    let covs = match kind {
        CovarianceKind::Diagonal => Covariances::Diagonal(covs),
        CovarianceKind::Full => Covariances::Full(covs),
    };
    GmmModel::new(weights, means, covs)
}

/// Weighted mean and covariance of `data` under per-point weights `resp`.
pub(crate) fn weighted_moments(
    data: &[Vec<f64>],
    resp: impl Fn(usize) -> f64,
    kind: CovarianceKind,
    floor: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = floor.len();
    let mut nk = 0.0;
    let mut mu = vec![0.0; d];
    for (t, x) in data.iter().enumerate() {
        let g = resp(t);
        nk += g;
        for k in 0..d {
            mu[k] += g * x[k];
        }
    }
    if nk > 0.0 {
        mu.iter_mut().for_each(|m| *m /= nk);
    }
    let mut cov = match kind {
        CovarianceKind::Diagonal => vec![0.0; d],
        CovarianceKind::Full => vec![0.0; d * d],
    };
    let mut centered = vec![0.0; d];
    for (t, x) in data.iter().enumerate() {
        let g = resp(t);
        if g == 0.0 {
            continue;
        }
        for k in 0..d {
            centered[k] = x[k] - mu[k];
        }
        match kind {
            CovarianceKind::Diagonal => {
                for k in 0..d {
                    cov[k] += g * centered[k] * centered[k];
                }
            }
            CovarianceKind::Full => {
                for i in 0..d {
                    for j in i..d {
                        cov[i * d + j] += g * centered[i] * centered[j];
                    }
                }
            }
        }
    }
    let denom = if nk > 0.0 { nk } else { 1.0 };
    match kind {
        CovarianceKind::Diagonal => {
            for k in 0..d {
                cov[k] = (cov[k] / denom).max(floor[k]);
            }
        }
        CovarianceKind::Full => {
            for i in 0..d {
                for j in i..d {
                    let v = cov[i * d + j] / denom;
                    cov[i * d + j] = v;
                    cov[j * d + i] = v;
                }
            }
            floor_full(&mut cov, floor);
        }
    }
    (nk, mu, cov)
}

/// Maximum-likelihood mixture by EM from a seeded k-means++ start.
///
/// Initial means are k-means++ centers, initial covariances the global
/// covariance, initial weights uniform. A component whose weight falls
/// below 1e-10 is re-seeded once at the worst-explained point; a second
/// collapse is an error.
pub fn fit_gmm_em(data: &[Vec<f64>], c: usize, cfg: &GmmConfig) -> Result<GmmFit> {
    if c == 0 {
        return Err(domain("number of components must be at least 1"));
    }
    validate_data(data)?;
    let n = data.len();
    if n < c {
        return Err(domain(format!("{n} points cannot support {c} components")));
    }
    let kind = cfg.covariance_kind;
    let floor = variance_floor(data, cfg.var_floor)?;
    let mut rng = seeded_rng(cfg.seed);
    let global = global_covariance(data, kind, &floor);

    let mut model = build(
        &vec![1.0 / c as f64; c],
        kmeans_plus_plus(data, c, &mut rng),
        vec![global.clone(); c],
        kind,
    )?;

    let mut resp = vec![0.0; n * c];
    let mut point_ll = vec![0.0; n];
    let mut history = Vec::new();
    let mut reseeded = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        let mut total = 0.0;
        for (t, x) in data.iter().enumerate() {
            let row = &mut resp[t * c..(t + 1) * c];
            let ll = model.weighted_log_densities(x, row);
            for r in row.iter_mut() {
                *r = (*r - ll).exp();
            }
            point_ll[t] = ll;
            total += ll;
        }
        if !total.is_finite() {
            return Err(numeric("EM log-likelihood became non-finite"));
        }
        let converged = history
            .last()
            .is_some_and(|prev: &f64| (total - prev) / (n as f64) < cfg.tol);
        history.push(total);
        if converged {
            break;
        }
        iterations += 1;

        let mut weights = Vec::with_capacity(c);
        let mut means = Vec::with_capacity(c);
        let mut covs = Vec::with_capacity(c);
        let mut collapsed = Vec::new();
        for k in 0..c {
            let (nk, mu, cov) = weighted_moments(data, |t| resp[t * c + k], kind, &floor);
            if nk / (n as f64) < COLLAPSE_WEIGHT {
                collapsed.push(k);
            }
            weights.push(nk.max(f64::MIN_POSITIVE));
            means.push(mu);
            covs.push(cov);
        }
        if !collapsed.is_empty() {
            if reseeded {
                return Err(numeric(format!(
                    "component {} collapsed again after re-seeding",
                    collapsed[0]
                )));
            }
            reseeded = true;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| point_ll[a].total_cmp(&point_ll[b]));
            for (slot, &k) in collapsed.iter().enumerate() {
                means[k] = data[order[slot % n]].clone();
                covs[k] = global.clone();
                weights[k] = 1.0;
            }
            log::debug!("re-seeded {} collapsed component(s)", collapsed.len());
        }
        model = build(&weights, means, covs, kind)?;
    }

    Ok(GmmFit { model, log_likelihoods: history, iterations, reseeded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn single_component_is_closed_form() {
        let data: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64).sqrt()]).collect();
        for kind in [CovarianceKind::Diagonal, CovarianceKind::Full] {
            let cfg = GmmConfig { covariance_kind: kind, ..Default::default() };
            let fit = fit_gmm_em(&data, 1, &cfg).unwrap();
            let mu = mean(&data, 2);
            let cov = covariance(&data, &mu);
            for k in 0..2 {
                assert!((fit.model.means()[0][k] - mu[k]).abs() < 1e-12);
            }
            match fit.model.covariances() {
                Covariances::Diagonal(v) => {
                    assert!((v[0][0] - cov[(0, 0)]).abs() < 1e-12);
                    assert!((v[0][1] - cov[(1, 1)]).abs() < 1e-12);
                }
                Covariances::Full(v) => {
                    for i in 0..4 {
                        assert!((v[0][i] - cov[(i / 2, i % 2)]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn more_components_than_points_is_an_error() {
        let data = vec![vec![0.0], vec![1.0]];
        assert!(fit_gmm_em(&data, 3, &GmmConfig::default()).is_err());
        assert!(fit_gmm_em(&[vec![f64::NAN]], 1, &GmmConfig::default()).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = seeded_rng(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<Vec<f64>> = (0..300).map(|_| vec![normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
        let cfg = GmmConfig { seed: 9, ..Default::default() };
        let a = fit_gmm_em(&data, 4, &cfg).unwrap();
        let b = fit_gmm_em(&data, 4, &cfg).unwrap();
        assert_eq!(a.model, b.model);
    }
}
