//! Corpora of i-vectors, their text formats, and the synthetic generator.

mod synth;
mod text;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{check_dim, domain, Error, Result};

pub use synth::{generate_synthetic_corpus, ClusterSpec, NoiseLaw, SynthCorpora, SynthSpec};
pub use text::{
    format_sig9, parse_ivector_file, read_decisions, read_ivectors, read_pairs, write_decisions,
    write_ivector_file, write_ivectors, write_pairs, Decisions, PairKind, TrialPair,
};

#[derive(Debug, Clone, PartialEq)]
pub struct IVectorRecord {
    pub id: String,
    pub duration_s: f64,
    pub label: Option<String>,
    pub vec: Vec<f64>,
}

impl IVectorRecord {
    pub fn log_duration(&self) -> f64 {
        self.duration_s.ln()
    }
}

/// An ordered set of i-vector records sharing one dimension.
///
/// Ids are unique, durations are positive and every entry is finite; the
/// constructor rejects anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dim: usize,
    records: Vec<IVectorRecord>,
}

impl Corpus {
    pub fn new(dim: usize, records: Vec<IVectorRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            check_dim(dim, r.vec.len())?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            if !(r.duration_s > 0.0) || !r.duration_s.is_finite() {
                return Err(domain(format!(
                    "record `{}` has non-positive duration {}",
                    r.id, r.duration_s
                )));
            }
            if r.vec.iter().any(|x| !x.is_finite()) {
                return Err(domain(format!("record `{}` has non-finite entries", r.id)));
            }
        }
        Ok(Corpus { dim, records })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[IVectorRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<IVectorRecord> {
        self.records
    }

    /// Sorted distinct labels present in the corpus.
    pub fn languages(&self) -> Vec<String> {
        self.records
            .iter()
            .filter_map(|r| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.vec.clone()).collect()
    }

    /// Record indices per label, in record order. Unlabeled records are skipped.
    pub fn indices_by_language(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if let Some(l) = &r.label {
                out.entry(l.clone()).or_default().push(i);
            }
        }
        out
    }

    /// Requires every record to carry a label.
    pub fn require_labels(&self) -> Result<()> {
        match self.records.iter().find(|r| r.label.is_none()) {
            Some(r) => Err(domain(format!("record `{}` is unlabeled", r.id))),
            None => Ok(()),
        }
    }

    /// Applies `f` to every vector, keeping ids, durations and labels.
    pub fn map_vectors<F>(&self, mut f: F) -> Result<Corpus>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let mut dim = None;
        let records = self
            .records
            .iter()
            .map(|r| {
                let vec = f(&r.vec)?;
                dim.get_or_insert(vec.len());
                Ok(IVectorRecord { vec, ..r.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(dim.unwrap_or(self.dim), records)
    }

    pub fn without_labels(&self) -> Corpus {
        let records = self
            .records
            .iter()
            .map(|r| IVectorRecord { label: None, ..r.clone() })
            .collect();
        Corpus { dim: self.dim, records }
    }
}

#[derive(serde::Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Writes a JSON model file. The value must carry a `format_version` field.
pub fn save_json<T: Serialize>(value: &T, path: &std::path::Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let probe: VersionProbe = serde_json::from_str(&text)?;
    if probe.format_version != crate::FORMAT_VERSION {
        return Err(Error::FormatVersion(probe.format_version));
    }
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, d: f64, label: Option<&str>, v: Vec<f64>) -> IVectorRecord {
        IVectorRecord { id: id.into(), duration_s: d, label: label.map(Into::into), vec: v }
    }

    #[test]
    fn rejects_bad_records() {
        assert!(matches!(
            Corpus::new(2, vec![rec("a", 1.0, None, vec![1.0])]),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
        assert!(matches!(
            Corpus::new(1, vec![rec("a", 1.0, None, vec![1.0]), rec("a", 2.0, None, vec![0.0])]),
            Err(Error::DuplicateId(_))
        ));
        assert!(matches!(
            Corpus::new(1, vec![rec("a", 0.0, None, vec![1.0])]),
            Err(Error::Domain(_))
        ));
        assert!(Corpus::new(1, vec![rec("a", 1.0, None, vec![f64::NAN])]).is_err());
    }

    #[test]
    fn languages_are_sorted_and_distinct() {
        let c = Corpus::new(
            1,
            vec![
                rec("1", 1.0, Some("b"), vec![0.0]),
                rec("2", 1.0, Some("a"), vec![0.0]),
                rec("3", 1.0, Some("b"), vec![0.0]),
                rec("4", 1.0, None, vec![0.0]),
            ],
        )
        .unwrap();
        assert_eq!(c.languages(), vec!["a", "b"]);
        assert_eq!(c.indices_by_language()["b"], vec![0, 2]);
        assert!(c.require_labels().is_err());
    }
}
