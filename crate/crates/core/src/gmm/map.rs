use super::GmmModel;
use crate::error::{check_dim, domain, Result};

/// Zeroth- and first-order sufficient statistics of data under a UBM.
#[derive(Debug, Clone, PartialEq)]
pub struct MapStats {
    /// `nᵢ = Σₜ γₜᵢ`
    pub counts: Vec<f64>,
    /// `Fᵢ = Σₜ γₜᵢ xₜ`
    pub first_order: Vec<Vec<f64>>,
}

impl MapStats {
    pub fn zeros(components: usize, dim: usize) -> Self {
        MapStats { counts: vec![0.0; components], first_order: vec![vec![0.0; dim]; components] }
    }

    pub fn accumulate(&mut self, ubm: &GmmModel, x: &[f64]) -> Result<()> {
        let mut gamma = vec![0.0; ubm.n_components()];
        ubm.responsibilities(x, &mut gamma)?;
        for (i, g) in gamma.iter().enumerate() {
            self.counts[i] += g;
            for (f, v) in self.first_order[i].iter_mut().zip(x) {
                *f += g * v;
            }
        }
        Ok(())
    }

    pub fn from_data<'a, I>(ubm: &GmmModel, data: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut s = MapStats::zeros(ubm.n_components(), ubm.dim());
        for x in data {
            s.accumulate(ubm, x)?;
        }
        Ok(s)
    }

    /// Statistics with another set's contribution removed.
    pub fn minus(&self, other: &MapStats) -> MapStats {
        MapStats {
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| (a - b).max(0.0)).collect(),
            first_order: self
                .first_order
                .iter()
                .zip(&other.first_order)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }
}

/// Mean-only MAP update from sufficient statistics:
/// `μ'ᵢ = αᵢ Eᵢ[x] + (1 − αᵢ) μᵢ` with `αᵢ = nᵢ / (nᵢ + r)`.
/// Weights and covariances are copied from the UBM.
pub fn adapt_from_stats(ubm: &GmmModel, stats: &MapStats, relevance: f64) -> Result<GmmModel> {
    if !(relevance >= 0.0) {
        return Err(domain(format!("relevance factor must be non-negative, got {relevance}")));
    }
    check_dim(ubm.n_components(), stats.counts.len())?;
    let means = ubm
        .means()
        .iter()
        .enumerate()
        .map(|(i, mu)| {
            let n = stats.counts[i];
            if !(n > 0.0) {
                return mu.clone();
            }
            let alpha = n / (n + relevance);
            stats.first_order[i]
                .iter()
                .zip(mu)
                .map(|(f, m)| alpha * (f / n) + (1.0 - alpha) * m)
                .collect()
        })
        .collect();
    ubm.with_means(means)
}

pub fn map_adapt(ubm: &GmmModel, data: &[Vec<f64>], relevance: f64) -> Result<GmmModel> {
    if data.is_empty() {
        return Err(domain("MAP adaptation needs at least one vector"));
    }
    if !(relevance >= 0.0) {
        return Err(domain(format!("relevance factor must be non-negative, got {relevance}")));
    }
    let stats = MapStats::from_data(ubm, data.iter().map(Vec::as_slice))?;
    adapt_from_stats(ubm, &stats, relevance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::Covariances;

    fn ubm() -> GmmModel {
        GmmModel::new(
            vec![0.4, 0.6],
            vec![vec![-2.0, 0.0], vec![3.0, 1.0]],
            Covariances::Diagonal(vec![vec![1.0, 2.0], vec![0.5, 1.5]]),
        )
        .unwrap()
    }

    fn points() -> Vec<Vec<f64>> {
        (0..10).map(|i| vec![i as f64 * 0.7 - 3.0, ((i * 7) % 5) as f64 * 0.4 - 0.5]).collect()
    }

    #[test]
    fn huge_relevance_keeps_ubm_means() {
        let m = map_adapt(&ubm(), &points(), 1e12).unwrap();
        for (a, b) in m.means().iter().zip(ubm().means()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        assert_eq!(m.weights(), ubm().weights());
        assert_eq!(m.covariances(), ubm().covariances());
    }

    #[test]
    fn zero_relevance_single_component_gives_data_mean() {
        let u = GmmModel::new(vec![1.0], vec![vec![5.0, 5.0]], Covariances::Diagonal(vec![vec![1.0, 1.0]])).unwrap();
        let data = points();
        let m = map_adapt(&u, &data, 0.0).unwrap();
        let mean = crate::linalg::mean(&data, 2);
        assert_eq!(m.means()[0], mean);
    }

    #[test]
    fn hand_computed_blend() {
        // Independent recomputation: posteriors by direct density evaluation.
        let u = ubm();
        let data = points();
        let r = 4.0;
        let dens = |x: &[f64], mu: &[f64], var: &[f64], w: f64| {
            let mut p = w;
            for k in 0..2 {
                p *= (-(x[k] - mu[k]).powi(2) / (2.0 * var[k])).exp() / (2.0 * std::f64::consts::PI * var[k]).sqrt();
            }
            p
        };
        let vars = [[1.0, 2.0], [0.5, 1.5]];
        let mut n = [0.0; 2];
        let mut f = [[0.0; 2]; 2];
        for x in &data {
            let p: Vec<f64> = (0..2).map(|i| dens(x, &u.means()[i], &vars[i], u.weights()[i])).collect();
            let z: f64 = p.iter().sum();
            for i in 0..2 {
                n[i] += p[i] / z;
                for k in 0..2 {
                    f[i][k] += p[i] / z * x[k];
                }
            }
        }
        let m = map_adapt(&u, &data, r).unwrap();
        for i in 0..2 {
            let alpha = n[i] / (n[i] + r);
            for k in 0..2 {
                let expected = alpha * f[i][k] / n[i] + (1.0 - alpha) * u.means()[i][k];
                assert!((m.means()[i][k] - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn negative_relevance_rejected() {
        assert!(map_adapt(&ubm(), &points(), -1.0).is_err());
        assert!(map_adapt(&ubm(), &[], 1.0).is_err());
    }
}
