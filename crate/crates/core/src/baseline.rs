//! Cosine scoring against per-language average i-vectors on the unit sphere.

use serde::{Deserialize, Serialize};

use crate::data_io::Corpus;
use crate::error::{check_dim, domain, Result};
use crate::linalg::dot;
use crate::preprocess::{is_unit, length_normalize};
use crate::scores::{ScoreKind, TrialScoreMatrix};

/// Tolerance on the norm of inputs to [`score_cosine`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineModel {
    pub format_version: u32,
    pub languages: Vec<String>,
    /// Unit-norm mean per language, aligned with `languages`.
    pub language_means: Vec<Vec<f64>>,
}

/// Averages the (already normalized) training vectors of each language and
/// projects the averages back onto the unit sphere.
pub fn train_cosine(train: &Corpus) -> Result<CosineModel> {
    train.require_labels()?;
    let by_lang = train.indices_by_language();
    if by_lang.is_empty() {
        return Err(domain("no labeled training records"));
    }
    let mut language_means = Vec::with_capacity(by_lang.len());
    for (lang, idx) in &by_lang {
        let mut sum = vec![0.0; train.dim()];
        for &i in idx {
            for (s, x) in sum.iter_mut().zip(&train.records()[i].vec) {
                *s += x;
            }
        }
        let mean = length_normalize(&sum)
            .map_err(|_| domain(format!("language `{lang}` averages to the zero vector")))?;
        language_means.push(mean);
    }
    Ok(CosineModel {
        format_version: crate::FORMAT_VERSION,
        languages: by_lang.into_keys().collect(),
        language_means,
    })
}

pub fn score_cosine(model: &CosineModel, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(model.language_means[0].len(), v.len())?;
    if !is_unit(v, UNIT_TOLERANCE) {
        return Err(domain("cosine scoring expects a unit-norm vector"));
    }
    Ok(model.language_means.iter().map(|m| dot(m, v).clamp(-1.0, 1.0)).collect())
}

pub fn score_cosine_corpus(model: &CosineModel, test: &Corpus) -> Result<TrialScoreMatrix> {
    let mut scores = Vec::with_capacity(test.len() * model.languages.len());
    for r in test.records() {
        scores.extend(score_cosine(model, &r.vec)?);
    }
    TrialScoreMatrix::new(
        test.records().iter().map(|r| r.id.clone()).collect(),
        test.records().iter().map(|r| r.duration_s).collect(),
        model.languages.clone(),
        scores,
        ScoreKind::Cosine,
    )
}

/// Training-set scores where each vector's own language mean is rebuilt
/// without it. Languages with a single record keep the full mean.
pub fn loo_cosine_scores(model: &CosineModel, train: &Corpus) -> Result<TrialScoreMatrix> {
    train.require_labels()?;
    let by_lang = train.indices_by_language();
    let sums: Vec<Vec<f64>> = model
        .languages
        .iter()
        .map(|l| {
            let mut s = vec![0.0; train.dim()];
            for &i in by_lang.get(l).map(Vec::as_slice).unwrap_or(&[]) {
                s.iter_mut().zip(&train.records()[i].vec).for_each(|(a, x)| *a += x);
            }
            s
        })
        .collect();
    let mut scores = Vec::with_capacity(train.len() * model.languages.len());
    for r in train.records() {
        let own = model.languages.iter().position(|l| Some(l) == r.label.as_ref());
        for (l, mean) in model.language_means.iter().enumerate() {
            let s = match own {
                Some(o) if o == l && by_lang[&model.languages[l]].len() > 1 => {
                    let rest: Vec<f64> = sums[l].iter().zip(&r.vec).map(|(s, x)| s - x).collect();
                    match length_normalize(&rest) {
                        Ok(m) => dot(&m, &r.vec),
                        Err(_) => 0.0,
                    }
                }
                _ => dot(mean, &r.vec),
            };
            scores.push(s.clamp(-1.0, 1.0));
        }
    }
    TrialScoreMatrix::new(
        train.records().iter().map(|r| r.id.clone()).collect(),
        train.records().iter().map(|r| r.duration_s).collect(),
        model.languages.clone(),
        scores,
        ScoreKind::Cosine,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::IVectorRecord;

    fn labeled(rows: &[(&str, Vec<f64>)]) -> Corpus {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (l, v))| IVectorRecord {
                id: format!("r{i}"),
                duration_s: 1.0,
                label: Some(l.to_string()),
                vec: v.clone(),
            })
            .collect();
        Corpus::new(rows[0].1.len(), records).unwrap()
    }

    #[test]
    fn single_record_mean_is_itself() {
        let v = vec![0.6, 0.8];
        let m = train_cosine(&labeled(&[("a", v.clone())])).unwrap();
        assert_eq!(m.language_means[0], v);
        assert!((score_cosine(&m, &v).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!(score_cosine(&m, &[0.8, -0.6]).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn antipodal_records_are_degenerate() {
        let c = labeled(&[("a", vec![1.0, 0.0]), ("a", vec![-1.0, 0.0])]);
        assert!(matches!(train_cosine(&c), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn rejects_non_unit_and_wrong_dimension() {
        let m = train_cosine(&labeled(&[("a", vec![1.0, 0.0])])).unwrap();
        assert!(score_cosine(&m, &[2.0, 0.0]).is_err());
        assert!(score_cosine(&m, &[1.0]).is_err());
    }

    #[test]
    fn leave_one_out_excludes_own_vector() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = labeled(&[("a", vec![1.0, 0.0]), ("a", vec![s, s]), ("b", vec![0.0, 1.0])]);
        let m = train_cosine(&c).unwrap();
        let loo = loo_cosine_scores(&m, &c).unwrap();
        // Record 0 against language a without itself: mean is (s, s).
        assert!((loo.get(0, 0) - s).abs() < 1e-12);
        // Language b has a single record, so its own score uses the full mean.
        assert!((loo.get(2, 1) - 1.0).abs() < 1e-12);
    }
}
