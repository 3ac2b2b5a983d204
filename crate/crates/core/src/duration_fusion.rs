//! Joint score/log-duration densities for target and non-target trials,
//! and the likelihood ratios built from them.
//!
//! A universal target density and a universal non-target density are fit
//! to the (score, log duration) pairs of all languages, with the number of
//! components chosen by minimum message length. Each language then gets
//! its own target and non-target density by mean-only MAP adaptation of
//! the universal pair to that language's pairs. A trial's output is
//! `log f(s, d | target) − log f(s, d | non-target)`, either with the
//! universal pair or with the pair of the language being scored.

use serde::{Deserialize, Serialize};

use crate::data_io::{PairKind, TrialPair};
use crate::error::{domain, numeric, Result};
use crate::gmm::{fit_gmm_mml, map_adapt, CovarianceKind, GmmConfig, GmmModel};
use crate::scores::{ScoreKind, TrialScoreMatrix};

/// Log-densities are clamped here before subtraction.
pub const LOG_DENSITY_FLOOR: f64 = -745.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityConfig {
    /// Largest component count considered by the MML search.
    pub c_max: usize,
    /// Relevance factor for per-language adaptation.
    pub relevance: f64,
    /// Languages with fewer pairs than this keep the universal density.
    pub min_pairs: usize,
    /// Pairs beyond this are thinned by even striding before the MML fit.
    pub max_points: usize,
    pub em: GmmConfig,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            c_max: 16,
            relevance: 16.0,
            min_pairs: 10,
            max_points: 20_000,
            em: GmmConfig {
                covariance_kind: CovarianceKind::Full,
                tol: 1e-5,
                max_iter: 300,
                ..GmmConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDurationDensityModel {
    pub format_version: u32,
    /// Kind of raw scores the densities were fit on.
    pub source: ScoreKind,
    pub relevance: f64,
    pub universal_target: GmmModel,
    pub universal_nontarget: GmmModel,
    pub languages: Vec<String>,
    /// Aligned with `languages`.
    pub per_language_target: Vec<GmmModel>,
    pub per_language_nontarget: Vec<GmmModel>,
    /// Languages whose target or non-target density fell back to the universal one.
    pub fallback: Vec<String>,
}

fn point(p: &TrialPair) -> Vec<f64> {
    vec![p.score, p.log_dur]
}

fn thin(points: Vec<Vec<f64>>, max_points: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    if max_points == 0 || n <= max_points {
        return points;
    }
    (0..max_points).map(|i| points[i * n / max_points].clone()).collect()
}

/// MML-selected universal target and non-target densities.
pub fn fit_universal_densities(
    targets: &[Vec<f64>],
    nontargets: &[Vec<f64>],
    cfg: &DensityConfig,
) -> Result<(GmmModel, GmmModel)> {
    const MIN_POINTS: usize = 50;
    for (name, pts) in [("target", targets), ("non-target", nontargets)] {
        if pts.len() < MIN_POINTS {
            return Err(domain(format!("{name} density needs at least {MIN_POINTS} pairs, got {}", pts.len())));
        }
        if pts.iter().all(|p| p == &pts[0]) {
            return Err(numeric(format!("all {name} pairs are identical")));
        }
    }
    let fit = |pts: &[Vec<f64>]| -> Result<GmmModel> {
        let pts = thin(pts.to_vec(), cfg.max_points);
        Ok(fit_gmm_mml(&pts, cfg.c_max, &cfg.em)?.model)
    };
    Ok((fit(targets)?, fit(nontargets)?))
}

/// Per-language target and non-target densities adapted from the universal pair.
#[derive(Debug, Clone)]
pub struct LanguageDensities {
    pub targets: Vec<GmmModel>,
    pub nontargets: Vec<GmmModel>,
    pub fallback: Vec<String>,
}

/// `pairs` are grouped by the language model each trial was scored against:
/// language `l`'s target density adapts to its target pairs and its
/// non-target density to trials of other languages scored against `l`.
pub fn adapt_language_densities(
    universal_target: &GmmModel,
    universal_nontarget: &GmmModel,
    pairs: &[TrialPair],
    languages: &[String],
    relevance: f64,
    min_pairs: usize,
) -> Result<LanguageDensities> {
    let mut out = LanguageDensities { targets: Vec::new(), nontargets: Vec::new(), fallback: Vec::new() };
    for lang in languages {
        let mut tar = Vec::new();
        let mut non = Vec::new();
        for p in pairs.iter().filter(|p| &p.language == lang) {
            match p.kind {
                PairKind::Target => tar.push(point(p)),
                PairKind::Nontarget => non.push(point(p)),
            }
        }
        let mut fell_back = false;
        let mut adapt = |universal: &GmmModel, pts: &[Vec<f64>]| -> Result<GmmModel> {
            if pts.len() < min_pairs.max(1) {
                fell_back = true;
                Ok(universal.clone())
            } else {
                map_adapt(universal, pts, relevance)
            }
        };
        out.targets.push(adapt(universal_target, &tar)?);
        out.nontargets.push(adapt(universal_nontarget, &non)?);
        if fell_back {
            log::warn!("language `{lang}` has too few pairs; using universal densities");
            out.fallback.push(lang.clone());
        }
    }
    Ok(out)
}

/// Fits the universal pair on all pairs, then adapts one pair per language.
pub fn fit_density_model(
    pairs: &[TrialPair],
    languages: &[String],
    source: ScoreKind,
    cfg: &DensityConfig,
) -> Result<ScoreDurationDensityModel> {
    let targets: Vec<Vec<f64>> = pairs.iter().filter(|p| p.kind == PairKind::Target).map(point).collect();
    let nontargets: Vec<Vec<f64>> = pairs.iter().filter(|p| p.kind == PairKind::Nontarget).map(point).collect();
    let (universal_target, universal_nontarget) = fit_universal_densities(&targets, &nontargets, cfg)?;
    let per = adapt_language_densities(
        &universal_target,
        &universal_nontarget,
        pairs,
        languages,
        cfg.relevance,
        cfg.min_pairs,
    )?;
    Ok(ScoreDurationDensityModel {
        format_version: crate::FORMAT_VERSION,
        source,
        relevance: cfg.relevance,
        universal_target,
        universal_nontarget,
        languages: languages.to_vec(),
        per_language_target: per.targets,
        per_language_nontarget: per.nontargets,
        fallback: per.fallback,
    })
}

fn log_ratio(target: &GmmModel, nontarget: &GmmModel, score: f64, log_dur: f64) -> Result<f64> {
    if !score.is_finite() || !log_dur.is_finite() {
        return Err(numeric("likelihood ratio needs finite score and duration"));
    }
    let x = [score, log_dur];
    let t = target.log_likelihood(&x)?.max(LOG_DENSITY_FLOOR);
    let n = nontarget.log_likelihood(&x)?.max(LOG_DENSITY_FLOOR);
    Ok(t - n)
}

/// Log likelihood ratio under the universal densities.
pub fn lr_universal(model: &ScoreDurationDensityModel, score: f64, log_dur: f64) -> Result<f64> {
    log_ratio(&model.universal_target, &model.universal_nontarget, score, log_dur)
}

/// Log likelihood ratio under the densities of `language`.
pub fn lr_per_language(model: &ScoreDurationDensityModel, language: &str, score: f64, log_dur: f64) -> Result<f64> {
    let l = model
        .languages
        .iter()
        .position(|m| m == language)
        .ok_or_else(|| domain(format!("no densities for language `{language}`")))?;
    log_ratio(&model.per_language_target[l], &model.per_language_nontarget[l], score, log_dur)
}

/// Replaces every raw score by its log likelihood ratio, using the
/// segment's log duration.
pub fn transform_scores(
    model: &ScoreDurationDensityModel,
    raw: &TrialScoreMatrix,
    per_language: bool,
) -> Result<TrialScoreMatrix> {
    if raw.kind() != model.source {
        return Err(domain(format!(
            "density model was fit on {} scores, got {} scores",
            model.source,
            raw.kind()
        )));
    }
    if raw.languages() != model.languages.as_slice() {
        return Err(domain("language set of score matrix and density model differ"));
    }
    let mut out = Vec::with_capacity(raw.scores().len());
    for i in 0..raw.n_rows() {
        let log_dur = raw.durations()[i].ln();
        for (l, &s) in raw.row(i).iter().enumerate() {
            out.push(if per_language {
                log_ratio(&model.per_language_target[l], &model.per_language_nontarget[l], s, log_dur)?
            } else {
                lr_universal(model, s, log_dur)?
            });
        }
    }
    raw.with_scores(out, ScoreKind::Lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::Covariances;

    fn gauss(mean: [f64; 2], cov: [f64; 4]) -> GmmModel {
        GmmModel::new(vec![1.0], vec![mean.to_vec()], Covariances::Full(vec![cov.to_vec()])).unwrap()
    }

    fn model(tar: GmmModel, non: GmmModel) -> ScoreDurationDensityModel {
        ScoreDurationDensityModel {
            format_version: 1,
            source: ScoreKind::Gmm,
            relevance: 16.0,
            universal_target: tar.clone(),
            universal_nontarget: non.clone(),
            languages: vec!["a".into()],
            per_language_target: vec![tar],
            per_language_nontarget: vec![non],
            fallback: vec![],
        }
    }

    #[test]
    fn identical_densities_give_zero() {
        let g = gauss([0.0, 1.0], [1.0, 0.2, 0.2, 0.5]);
        let m = model(g.clone(), g);
        for (s, d) in [(0.0, 0.0), (5.0, 3.0), (-100.0, 2.0)] {
            assert_eq!(lr_universal(&m, s, d).unwrap(), 0.0);
            assert_eq!(lr_per_language(&m, "a", s, d).unwrap(), 0.0);
        }
    }

    #[test]
    fn closed_form_single_gaussians() {
        let (tv, nv) = (0.5, 2.0);
        let m = model(gauss([2.0, 1.0], [tv, 0.0, 0.0, tv]), gauss([-1.0, 1.0], [nv, 0.0, 0.0, nv]));
        let (s, d) = (0.7, 1.3);
        let logn = |x: f64, mu: f64, v: f64| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - mu).powi(2) / v);
        let expected = logn(s, 2.0, tv) + logn(d, 1.0, tv) - logn(s, -1.0, nv) - logn(d, 1.0, nv);
        assert!((lr_per_language(&m, "a", s, d).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn swapping_densities_negates() {
        let a = gauss([1.0, 2.0], [1.0, 0.3, 0.3, 1.0]);
        let b = gauss([-1.0, 2.5], [2.0, -0.1, -0.1, 0.7]);
        let m1 = model(a.clone(), b.clone());
        let m2 = model(b, a);
        for (s, d) in [(0.1, 2.0), (3.0, 1.0), (-2.0, 3.5)] {
            assert_eq!(lr_universal(&m1, s, d).unwrap(), -lr_universal(&m2, s, d).unwrap());
        }
    }

    #[test]
    fn kind_and_language_mismatch_rejected() {
        let g = gauss([0.0, 0.0], [1.0, 0.0, 0.0, 1.0]);
        let m = model(g.clone(), g);
        let raw = TrialScoreMatrix::new(vec!["x".into()], vec![2.0], vec!["a".into()], vec![0.5], ScoreKind::Dnn).unwrap();
        assert!(transform_scores(&m, &raw, true).is_err());
        let raw = TrialScoreMatrix::new(vec!["x".into()], vec![2.0], vec!["b".into()], vec![0.5], ScoreKind::Gmm).unwrap();
        assert!(transform_scores(&m, &raw, true).is_err());
        assert!(lr_per_language(&m, "zz", 0.0, 0.0).is_err());
    }

    #[test]
    fn too_few_points_rejected() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        assert!(fit_universal_densities(&pts, &pts, &DensityConfig::default()).is_err());
        let same = vec![vec![1.0, 1.0]; 100];
        let ok: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        assert!(matches!(
            fit_universal_densities(&same, &ok, &DensityConfig::default()),
            Err(crate::Error::Numeric(_))
        ));
    }
}
