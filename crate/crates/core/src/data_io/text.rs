//! Line-oriented text formats.
//!
//! i-vector file:
//! ```text
//! #ivec v1 dim=<D>
//! <id>\t<duration_s>\t<label or ->\t<v1> <v2> ... <vD>
//! ```
//! Decision file: `<id>\t<language|out_of_set>` per line.
//! Pair file: optional `#pairs v1` header, then
//! `<score>\t<log_dur>\t<language>\t<target|nontarget>`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Corpus, IVectorRecord};
use crate::error::{domain, Error, Result};

/// Decisions in file order: `(segment id, language or out_of_set)`.
pub type Decisions = Vec<(String, String)>;

/// Nine significant digits in exponent form, e.g. `-1.23456789e-3`.
pub fn format_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

fn parse_err(source_name: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { source_name: source_name.to_string(), line, msg: msg.into() }
}

fn parse_f64(tok: &str, source_name: &str, line: usize, what: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(source_name, line, format!("invalid {what} `{tok}`")))
}

pub fn read_ivectors<R: BufRead>(reader: R, source_name: &str) -> Result<Corpus> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => return Err(parse_err(source_name, 1, "missing `#ivec v1 dim=<D>` header")),
    };
    let dim = parse_ivec_header(&header).ok_or_else(|| {
        parse_err(source_name, 1, format!("bad header `{header}`, expected `#ivec v1 dim=<D>`"))
    })?;

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                source_name,
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let duration_s = parse_f64(fields[1], source_name, lineno, "duration")?;
        if !(duration_s > 0.0) {
            return Err(domain(format!(
                "{source_name}:{lineno}: duration must be positive, got {duration_s}"
            )));
        }
        let label = match fields[2] {
            "" => return Err(parse_err(source_name, lineno, "empty label field")),
            "-" => None,
            l => Some(l.to_string()),
        };
        let vec = fields[3]
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| parse_f64(t, source_name, lineno, "vector entry"))
            .collect::<Result<Vec<_>>>()?;
        if vec.len() != dim {
            return Err(Error::Dimension { expected: dim, got: vec.len() });
        }
        records.push(IVectorRecord { id: fields[0].to_string(), duration_s, label, vec });
    }
    Corpus::new(dim, records)
}

fn parse_ivec_header(header: &str) -> Option<usize> {
    let mut toks = header.split_whitespace();
    if toks.next()? != "#ivec" || toks.next()? != "v1" {
        return None;
    }
    toks.next()?.strip_prefix("dim=")?.parse().ok()
}

pub fn parse_ivector_file(path: &Path) -> Result<Corpus> {
    let f = File::open(path)?;
    read_ivectors(BufReader::new(f), &path.display().to_string())
}

pub fn write_ivectors<W: Write>(corpus: &Corpus, mut w: W) -> Result<()> {
    if corpus.dim() == 0 {
        return Err(domain("cannot write a corpus of dimension 0"));
    }
    writeln!(w, "#ivec v1 dim={}", corpus.dim())?;
    let mut line = String::new();
    for r in corpus.records() {
        line.clear();
        let label = r.label.as_deref().unwrap_or("-");
        write!(line, "{}\t{}\t{}\t", r.id, format_sig9(r.duration_s), label).unwrap();
        for (k, x) in r.vec.iter().enumerate() {
            if k > 0 {
                line.push(' ');
            }
            line.push_str(&format_sig9(*x));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ivector_file(corpus: &Corpus, path: &Path) -> Result<()> {
    write_ivectors(corpus, BufWriter::new(File::create(path)?))
}

pub fn write_decisions(decisions: &[(String, String)], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, lang) in decisions {
        writeln!(w, "{id}\t{lang}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_decisions(path: &Path) -> Result<Decisions> {
    let name = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, lang) = line
            .split_once('\t')
            .filter(|(_, l)| !l.contains('\t') && !l.is_empty())
            .ok_or_else(|| parse_err(&name, i + 1, "expected `<id>\\t<language>`"))?;
        out.push((id.to_string(), lang.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Target,
    Nontarget,
}

impl PairKind {
    fn as_str(self) -> &'static str {
        match self {
            PairKind::Target => "target",
            PairKind::Nontarget => "nontarget",
        }
    }
}

/// One trial projected onto the (score, log-duration) plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPair {
    pub score: f64,
    pub log_dur: f64,
    /// The language model the segment was scored against.
    pub language: String,
    pub kind: PairKind,
}

pub fn write_pairs(pairs: &[TrialPair], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "#pairs v1")?;
    for p in pairs {
        writeln!(w, "{}\t{}\t{}\t{}", p.score, p.log_dur, p.language, p.kind.as_str())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs(path: &Path) -> Result<Vec<TrialPair>> {
    let name = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(parse_err(&name, lineno, "expected 4 tab-separated fields"));
        }
        let kind = match f[3] {
            "target" => PairKind::Target,
            "nontarget" => PairKind::Nontarget,
            other => return Err(parse_err(&name, lineno, format!("bad trial kind `{other}`"))),
        };
        out.push(TrialPair {
            score: parse_f64(f[0], &name, lineno, "score")?,
            log_dur: parse_f64(f[1], &name, lineno, "log duration")?,
            language: f[2].to_string(),
            kind,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Corpus> {
        read_ivectors(text.as_bytes(), "mem")
    }

    #[test]
    fn empty_body_gives_empty_corpus() {
        let c = parse("#ivec v1 dim=400\n").unwrap();
        assert_eq!(c.len(), 0);
        assert_eq!(c.dim(), 400);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("#ivec v1 dim=2\na\t1.0\t-\t1 2\nb\t1.0\t-\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
        let err = parse("#ivec v1 dim=2\na\t1.0\t-\t1 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(parse("#ivec v1 dim=2\na\t1\t-\t1 2 3\n"), Err(Error::Dimension { .. })));
        assert!(matches!(
            parse("#ivec v1 dim=1\na\t1\t-\t1\na\t2\t-\t2\n"),
            Err(Error::DuplicateId(_))
        ));
        assert!(matches!(parse("#ivec v1 dim=1\na\t0\t-\t1\n"), Err(Error::Domain(_))));
        assert!(matches!(parse("#ivec v2 dim=1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn singleton_writes_one_data_line() {
        let c = parse("#ivec v1 dim=2\nx\t2.5\tfra\t0.1 -3\n").unwrap();
        let mut buf = Vec::new();
        write_ivectors(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "#ivec v1 dim=2\nx\t2.50000000e0\tfra\t1.00000000e-1 -3.00000000e0\n"
        );
    }

    #[test]
    fn pairs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.txt");
        let pairs = vec![
            TrialPair { score: 1.25, log_dur: 2.0, language: "a".into(), kind: PairKind::Target },
            TrialPair { score: -0.1, log_dur: 0.3, language: "b".into(), kind: PairKind::Nontarget },
        ];
        write_pairs(&pairs, &p).unwrap();
        assert_eq!(read_pairs(&p).unwrap(), pairs);
    }
}
