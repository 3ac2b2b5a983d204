//! Per-segment, per-language score tables and the score file format.
//!
//! ```text
//! #scores v1 langs=<L> kind=<kind>
//! <lang1>\t<lang2>\t...\t<langL>
//! <id>\t<duration_s>\t<s1>\t...\t<sL>
//! ```
//! Scores are written in shortest round-trip decimal form, so a read
//! after a write reproduces every value bit for bit.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::data_io::{PairKind, TrialPair};
use crate::error::{check_dim, domain, numeric, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Cosine,
    Gmm,
    Dnn,
    Fused,
    Lr,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::Cosine => "cosine",
            ScoreKind::Gmm => "gmm",
            ScoreKind::Dnn => "dnn",
            ScoreKind::Fused => "fused",
            ScoreKind::Lr => "lr",
        })
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cosine" => ScoreKind::Cosine,
            "gmm" => ScoreKind::Gmm,
            "dnn" => ScoreKind::Dnn,
            "fused" => ScoreKind::Fused,
            "lr" => ScoreKind::Lr,
            other => return Err(domain(format!("unknown score kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialScoreMatrix {
    ids: Vec<String>,
    durations: Vec<f64>,
    languages: Vec<String>,
    /// Row-major `ids.len() × languages.len()`.
    scores: Vec<f64>,
    kind: ScoreKind,
}

impl TrialScoreMatrix {
    pub fn new(
        ids: Vec<String>,
        durations: Vec<f64>,
        languages: Vec<String>,
        scores: Vec<f64>,
        kind: ScoreKind,
    ) -> Result<Self> {
        check_dim(ids.len(), durations.len())?;
        check_dim(ids.len() * languages.len(), scores.len())?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(numeric("score matrix contains non-finite entries"));
        }
        if durations.iter().any(|d| !(*d > 0.0)) {
            return Err(domain("score matrix durations must be positive"));
        }
        Ok(TrialScoreMatrix { ids, durations, languages, scores, kind })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_languages(&self) -> usize {
        self.languages.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let l = self.languages.len();
        &self.scores[i * l..(i + 1) * l]
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.scores[i * self.languages.len() + l]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn language_index(&self, name: &str) -> Option<usize> {
        self.languages.iter().position(|l| l == name)
    }

    /// Same rows and languages with new values, e.g. after a transform.
    pub fn with_scores(&self, scores: Vec<f64>, kind: ScoreKind) -> Result<Self> {
        TrialScoreMatrix::new(
            self.ids.clone(),
            self.durations.clone(),
            self.languages.clone(),
            scores,
            kind,
        )
    }

    /// Rows of `self` followed by the rows of `other`.
    pub fn stack(&self, other: &TrialScoreMatrix) -> Result<Self> {
        if self.languages != other.languages || self.kind != other.kind {
            return Err(domain("stacked score matrices need the same languages and kind"));
        }
        let cat = |a: &[String], b: &[String]| a.iter().chain(b).cloned().collect::<Vec<_>>();
        TrialScoreMatrix::new(
            cat(&self.ids, &other.ids),
            self.durations.iter().chain(&other.durations).copied().collect(),
            self.languages.clone(),
            self.scores.iter().chain(&other.scores).copied().collect(),
            self.kind,
        )
    }

    /// Checks that two matrices describe the same trials.
    pub fn check_aligned(&self, other: &TrialScoreMatrix) -> Result<()> {
        if self.ids != other.ids {
            return Err(domain("score matrices have different segment ids"));
        }
        if self.languages != other.languages {
            return Err(domain("score matrices have different language lists"));
        }
        Ok(())
    }

    /// Splits every cell into a target or non-target pair according to the
    /// row's true language. Rows whose label is not an enrolled language
    /// contribute non-target pairs only.
    pub fn trial_pairs(&self, labels: &[String]) -> Result<Vec<TrialPair>> {
        check_dim(self.n_rows(), labels.len())?;
        let mut out = Vec::with_capacity(self.scores.len());
        for (i, label) in labels.iter().enumerate() {
            let log_dur = self.durations[i].ln();
            for (l, lang) in self.languages.iter().enumerate() {
                let kind = if lang == label { PairKind::Target } else { PairKind::Nontarget };
                out.push(TrialPair { score: self.get(i, l), log_dur, language: lang.clone(), kind });
            }
        }
        Ok(out)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#scores v1 langs={} kind={}", self.languages.len(), self.kind)?;
        writeln!(w, "{}", self.languages.join("\t"))?;
        for i in 0..self.n_rows() {
            write!(w, "{}\t{}", self.ids[i], self.durations[i])?;
            for s in self.row(i) {
                write!(w, "\t{s}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            msg,
        };
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let mut toks = header.split_whitespace();
        if toks.next() != Some("#scores") || toks.next() != Some("v1") {
            return Err(err(1, format!("bad header `{header}`")));
        }
        let mut n_langs = None;
        let mut kind = ScoreKind::Gmm;
        for t in toks {
            if let Some(v) = t.strip_prefix("langs=") {
                n_langs = v.parse::<usize>().ok();
            } else if let Some(v) = t.strip_prefix("kind=") {
                kind = v.parse()?;
            }
        }
        let n_langs = n_langs.ok_or_else(|| err(1, "missing langs=<L>".into()))?;
        let names = lines.next().transpose()?.ok_or_else(|| err(2, "missing language line".into()))?;
        let languages: Vec<String> = names.split('\t').map(str::to_string).collect();
        if languages.len() != n_langs {
            return Err(err(2, format!("expected {n_langs} languages, found {}", languages.len())));
        }
        let (mut ids, mut durations, mut scores) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let lineno = i + 3;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != n_langs + 2 {
                return Err(err(lineno, format!("expected {} fields, found {}", n_langs + 2, f.len())));
            }
            ids.push(f[0].to_string());
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(lineno, format!("bad number `{s}`")));
            durations.push(num(f[1])?);
            for s in &f[2..] {
                scores.push(num(s)?);
            }
        }
        TrialScoreMatrix::new(ids, durations, languages, scores, kind)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?), &path.display().to_string())
    }
}
