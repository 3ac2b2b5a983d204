//! GMM-UBM subsystem: a background mixture over development i-vectors,
//! one MAP-adapted mixture per language, log-likelihood-ratio scores, and
//! leave-one-out scores over the training set.

use serde::{Deserialize, Serialize};

use crate::data_io::{Corpus, TrialPair};
use crate::error::{check_dim, domain, Result};
use crate::gmm::{adapt_from_stats, fit_gmm_em, CovarianceKind, GmmConfig, GmmModel, MapStats};
use crate::scores::{ScoreKind, TrialScoreMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct GmmSystemConfig {
    pub components: usize,
    pub relevance: f64,
    pub em: GmmConfig,
}

impl Default for GmmSystemConfig {
    fn default() -> Self {
        GmmSystemConfig {
            components: 64,
            relevance: 16.0,
            em: GmmConfig { covariance_kind: CovarianceKind::Diagonal, ..GmmConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageModelSet {
    pub format_version: u32,
    /// Which transforms produced the vectors these models were trained on.
    pub preprocessing: String,
    pub relevance: f64,
    pub ubm: GmmModel,
    pub languages: Vec<String>,
    /// Aligned with `languages`.
    pub per_language: Vec<GmmModel>,
}

pub fn train_language_models(
    dev: &Corpus,
    train: &Corpus,
    cfg: &GmmSystemConfig,
    preprocessing: &str,
) -> Result<LanguageModelSet> {
    check_dim(dev.dim(), train.dim())?;
    train.require_labels()?;
    if train.is_empty() {
        return Err(domain("no training records"));
    }
    let ubm = fit_gmm_em(&dev.vectors(), cfg.components, &cfg.em)?.model;
    let by_lang = train.indices_by_language();
    let mut per_language = Vec::with_capacity(by_lang.len());
    for (lang, idx) in &by_lang {
        if idx.is_empty() {
            return Err(domain(format!("language `{lang}` has no training records")));
        }
        let stats = MapStats::from_data(&ubm, idx.iter().map(|&i| train.records()[i].vec.as_slice()))?;
        per_language.push(adapt_from_stats(&ubm, &stats, cfg.relevance)?);
    }
    Ok(LanguageModelSet {
        format_version: crate::FORMAT_VERSION,
        preprocessing: preprocessing.to_string(),
        relevance: cfg.relevance,
        ubm,
        languages: by_lang.into_keys().collect(),
        per_language,
    })
}

/// `score(x, l) = log p(x | λ_l) − log p(x | λ_bkg)`.
pub fn score_gmm(models: &LanguageModelSet, test: &Corpus) -> Result<TrialScoreMatrix> {
    check_dim(models.ubm.dim(), test.dim())?;
    let mut scores = Vec::with_capacity(test.len() * models.languages.len());
    for r in test.records() {
        let bkg = models.ubm.log_likelihood(&r.vec)?;
        for m in &models.per_language {
            scores.push(m.log_likelihood(&r.vec)? - bkg);
        }
    }
    TrialScoreMatrix::new(
        test.records().iter().map(|r| r.id.clone()).collect(),
        test.records().iter().map(|r| r.duration_s).collect(),
        models.languages.clone(),
        scores,
        ScoreKind::Gmm,
    )
}

/// Training-set scores with each vector held out of its own language model.
#[derive(Debug, Clone)]
pub struct LooScores {
    pub matrix: TrialScoreMatrix,
    /// True language of every row.
    pub labels: Vec<String>,
}

impl LooScores {
    /// One target and `L − 1` non-target pairs per training vector.
    pub fn pairs(&self) -> Result<Vec<TrialPair>> {
        self.matrix.trial_pairs(&self.labels)
    }
}

/// Leave-one-out scoring of the adaptation set.
///
/// For a vector `v` of language `l`, `λ_l` is rebuilt from `l`'s MAP
/// statistics with `v`'s own posterior statistics subtracted; the UBM and
/// the other languages' models are untouched. `train` must be the corpus
/// the models were adapted on.
pub fn loo_scores(models: &LanguageModelSet, train: &Corpus) -> Result<LooScores> {
    check_dim(models.ubm.dim(), train.dim())?;
    train.require_labels()?;
    let by_lang = train.indices_by_language();
    for lang in &models.languages {
        let n = by_lang.get(lang).map_or(0, Vec::len);
        if n < 2 {
            return Err(domain(format!("language `{lang}` has {n} training record(s); leave-one-out needs 2")));
        }
    }
    let ubm = &models.ubm;
    let lang_stats: Vec<MapStats> = models
        .languages
        .iter()
        .map(|l| MapStats::from_data(ubm, by_lang[l].iter().map(|&i| train.records()[i].vec.as_slice())))
        .collect::<Result<_>>()?;

    let mut scores = Vec::with_capacity(train.len() * models.languages.len());
    let mut labels = Vec::with_capacity(train.len());
    for r in train.records() {
        let label = r.label.clone().expect("labels checked");
        let own = models
            .languages
            .iter()
            .position(|l| *l == label)
            .ok_or_else(|| domain(format!("label `{label}` has no language model")))?;
        let bkg = ubm.log_likelihood(&r.vec)?;
        let own_stats = MapStats::from_data(ubm, [r.vec.as_slice()])?;
        for (l, model) in models.per_language.iter().enumerate() {
            let ll = if l == own {
                let held_out = adapt_from_stats(ubm, &lang_stats[l].minus(&own_stats), models.relevance)?;
                held_out.log_likelihood(&r.vec)?
            } else {
                model.log_likelihood(&r.vec)?
            };
            scores.push(ll - bkg);
        }
        labels.push(label);
    }
    let matrix = TrialScoreMatrix::new(
        train.records().iter().map(|r| r.id.clone()).collect(),
        train.records().iter().map(|r| r.duration_s).collect(),
        models.languages.clone(),
        scores,
        ScoreKind::Gmm,
    )?;
    Ok(LooScores { matrix, labels })
}
