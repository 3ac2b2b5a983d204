//! Figueiredo–Jain mixture fitting: component-wise EM with a
//! minimum-message-length penalty that annihilates unsupported components,
//! sweeping the component count down from `c_max` and keeping the model of
//! shortest message length.

use super::em::{build, fit_gmm_em, kmeans_plus_plus, validate_data, variance_floor, weighted_moments};
use super::{CovarianceKind, Covariances, GmmConfig, GmmModel};
use crate::error::{domain, Result};
use crate::seeded_rng;

#[derive(Debug, Clone)]
pub struct MmlFit {
    pub model: GmmModel,
    pub message_length: f64,
    /// `(component count, converged message length)` for every level visited.
    pub trace: Vec<(usize, f64)>,
}

/// Free parameters per component, weight included:
/// `D + D(D+1)/2 + 1` for full covariances, `2D + 1` for diagonal ones.
pub fn mml_params_per_component(dim: usize, kind: CovarianceKind) -> usize {
    match kind {
        CovarianceKind::Full => dim + dim * (dim + 1) / 2 + 1,
        CovarianceKind::Diagonal => 2 * dim + 1,
    }
}

struct Component {
    weight: f64,
    mean: Vec<f64>,
    cov: Vec<f64>,
    /// `log N(xₜ; θ)` for every point.
    log_dens: Vec<f64>,
}

fn single(mean: &[f64], cov: &[f64], kind: CovarianceKind) -> Result<GmmModel> {
    let covs = match kind {
        CovarianceKind::Diagonal => Covariances::Diagonal(vec![cov.to_vec()]),
        CovarianceKind::Full => Covariances::Full(vec![cov.to_vec()]),
    };
    GmmModel::new(vec![1.0], vec![mean.to_vec()], covs)
}

fn log_densities(data: &[Vec<f64>], mean: &[f64], cov: &[f64], kind: CovarianceKind) -> Result<Vec<f64>> {
    let g = single(mean, cov, kind)?;
    Ok(data.iter().map(|x| g.component_log_density(0, x)).collect())
}

/// Per-point `log Σⱼ αⱼ N(xₜ; θⱼ)` over unnormalized weights.
fn point_log_mix(comps: &[Component], n: usize) -> Vec<f64> {
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    let log_w: Vec<f64> = comps.iter().map(|c| (c.weight / total).ln()).collect();
    (0..n)
        .map(|t| {
            let max = comps
                .iter()
                .zip(&log_w)
                .map(|(c, lw)| lw + c.log_dens[t])
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = comps.iter().zip(&log_w).map(|(c, lw)| (lw + c.log_dens[t] - max).exp()).sum();
            max + s.ln()
        })
        .collect()
}

/// Returns the factor the weights were divided by.
fn normalize_weights(comps: &mut [Component]) -> f64 {
    let z: f64 = comps.iter().map(|c| c.weight).sum();
    comps.iter_mut().for_each(|c| c.weight /= z);
    z
}

/// Per-point `Σⱼ wⱼ exp(log N(xₜ; θⱼ) − shiftₜ)`, updated in place as single
/// components change so that one sweep costs O(n·C) instead of O(n·C²).
struct MixCache {
    shift: Vec<f64>,
    sum: Vec<f64>,
}

impl MixCache {
    fn new(comps: &[Component], n: usize) -> Self {
        let mut c = MixCache { shift: vec![0.0; n], sum: vec![0.0; n] };
        c.rebuild(comps);
        c
    }

    fn rebuild(&mut self, comps: &[Component]) {
        for t in 0..self.sum.len() {
            self.rebuild_point(comps, t);
        }
    }

    fn rebuild_point(&mut self, comps: &[Component], t: usize) {
        let shift = comps.iter().map(|c| c.log_dens[t]).fold(f64::NEG_INFINITY, f64::max);
        self.shift[t] = shift;
        self.sum[t] = comps.iter().map(|c| c.weight * (c.log_dens[t] - shift).exp()).sum();
    }

    /// Responsibility of a component with weight `w` and log density `ld` at `t`.
    fn resp(&self, w: f64, ld: f64, t: usize) -> f64 {
        w * (ld - self.shift[t]).exp() / self.sum[t]
    }

    /// Swaps one component's contribution; `comps` must already hold the
    /// new state and is used to recompute points that lose precision.
    fn replace(&mut self, old: (f64, &[f64]), new: (f64, &[f64]), comps: &[Component]) {
        for t in 0..self.sum.len() {
            let up = new.1[t] - self.shift[t];
            let removed = old.0 * (old.1[t] - self.shift[t]).exp();
            let s = self.sum[t] - removed + new.0 * up.exp();
            if up > 100.0 || !(s > 1e-12 * self.sum[t].max(removed)) {
                self.rebuild_point(comps, t);
            } else {
                self.sum[t] = s;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        self.sum.iter_mut().for_each(|s| *s *= factor);
    }
}

fn message_length(comps: &[Component], n: usize, n_params: f64) -> f64 {
    let nf = n as f64;
    let k = comps.len() as f64;
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    let loglik: f64 = point_log_mix(comps, n).iter().sum();
    let weight_term: f64 = comps.iter().map(|c| (nf * c.weight / total / 12.0).ln()).sum();
    0.5 * n_params * weight_term + 0.5 * k * (nf / 12.0).ln() + 0.5 * k * (n_params + 1.0) - loglik
}

fn to_model(comps: &[Component], kind: CovarianceKind) -> Result<GmmModel> {
    let weights: Vec<f64> = comps.iter().map(|c| c.weight).collect();
    build(
        &weights,
        comps.iter().map(|c| c.mean.clone()).collect(),
        comps.iter().map(|c| c.cov.clone()).collect(),
        kind,
    )
}

/// Mixture with MML-selected component count in `1..=c_max`.
pub fn fit_gmm_mml(data: &[Vec<f64>], c_max: usize, cfg: &GmmConfig) -> Result<MmlFit> {
    if c_max == 0 {
        return Err(domain("c_max must be at least 1"));
    }
    let d = validate_data(data)?;
    let n = data.len();
    if n <= c_max {
        return Err(domain(format!("{n} points cannot support c_max = {c_max}")));
    }
    let kind = cfg.covariance_kind;
    // Parameters excluding the weight; the weight enters the `+1` below.
    let n_params = mml_params_per_component(d, kind) as f64;

    if c_max == 1 {
        let fit = fit_gmm_em(data, 1, cfg)?;
        let m = &fit.model;
        let cov = match m.covariances() {
            Covariances::Diagonal(v) | Covariances::Full(v) => v[0].clone(),
        };
        let comps = [Component {
            weight: 1.0,
            mean: m.means()[0].clone(),
            cov: cov.clone(),
            log_dens: log_densities(data, &m.means()[0], &cov, kind)?,
        }];
        let len = message_length(&comps, n, n_params);
        return Ok(MmlFit { model: fit.model, message_length: len, trace: vec![(1, len)] });
    }

    let floor = variance_floor(data, cfg.var_floor)?;
    let mut rng = seeded_rng(cfg.seed);
    // Broad isotropic start: a tenth of the average per-dimension variance.
    let mu = crate::linalg::mean(data, d);
    let avg_var = data
        .iter()
        .map(|x| x.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (n * d) as f64;
    let init_var = (avg_var / 10.0).max(floor.iter().cloned().fold(0.0, f64::max));
    let init_cov: Vec<f64> = match kind {
        CovarianceKind::Diagonal => vec![init_var; d],
        CovarianceKind::Full => (0..d * d).map(|i| if i / d == i % d { init_var } else { 0.0 }).collect(),
    };

    let mut comps = Vec::with_capacity(c_max);
    for mean in kmeans_plus_plus(data, c_max, &mut rng) {
        let log_dens = log_densities(data, &mean, &init_cov, kind)?;
        comps.push(Component { weight: 1.0 / c_max as f64, mean, cov: init_cov.clone(), log_dens });
    }

    let mut best: Option<(f64, GmmModel)> = None;
    let mut trace = Vec::new();
    let mut resp = vec![0.0; n];
    loop {
        let mut prev = f64::INFINITY;
        let mut length = f64::INFINITY;
        for _ in 0..cfg.max_iter.max(1) {
            // Fresh sums once per sweep bound the drift of the in-place updates.
            let mut cache = MixCache::new(&comps, n);
            let mut m = 0;
            while m < comps.len() {
                let mut support = 0.0;
                for t in 0..n {
                    resp[t] = cache.resp(comps[m].weight, comps[m].log_dens[t], t);
                    support += resp[t];
                }
                let w = (support - n_params / 2.0).max(0.0) / n as f64;
                if w == 0.0 && comps.len() > 1 {
                    let gone = comps.remove(m);
                    cache.replace((gone.weight, &gone.log_dens), (0.0, &gone.log_dens), &comps);
                    let z = normalize_weights(&mut comps);
                    cache.scale(1.0 / z);
                    continue;
                }
                let (_, mean, cov) = weighted_moments(data, |t| resp[t], kind, &floor);
                let log_dens = log_densities(data, &mean, &cov, kind)?;
                let old = std::mem::replace(
                    &mut comps[m],
                    Component { weight: w.max(f64::MIN_POSITIVE), mean, cov, log_dens },
                );
                let new = &comps[m];
                let (nw, nld) = (new.weight, new.log_dens.clone());
                cache.replace((old.weight, &old.log_dens), (nw, &nld), &comps);
                let z = normalize_weights(&mut comps);
                cache.scale(1.0 / z);
                m += 1;
            }
        length = message_length(&comps, n, n_params);
            if (prev - length).abs() < cfg.tol * prev.abs() {
                break;
            }
            prev = length;
        }
        trace.push((comps.len(), length));
        if best.as_ref().is_none_or(|(b, _)| length < *b) {
            best = Some((length, to_model(&comps, kind)?));
        }
        if comps.len() == 1 {
            break;
        }
        let weakest = comps
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.weight.total_cmp(&b.1.weight))
            .map(|(i, _)| i)
            .expect("at least two components");
        comps.remove(weakest);
        normalize_weights(&mut comps);
    }

    let (message_length, model) = best.expect("at least one level visited");
    Ok(MmlFit { model, message_length, trace })
}
