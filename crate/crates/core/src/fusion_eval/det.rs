use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{check_dim, domain, Error, Result};
use crate::scores::TrialScoreMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub false_alarm: f64,
    pub miss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    /// Ascending threshold; the last point uses `+inf`.
    pub points: Vec<DetPoint>,
    /// Equal error rate, linearly interpolated between neighbouring points.
    pub eer: f64,
}

/// Sweeps every distinct score as a threshold: a trial is accepted when its
/// score is at or above the threshold.
pub fn det_points(scores: &[f64], is_target: &[bool]) -> Result<DetCurve> {
    check_dim(scores.len(), is_target.len())?;
    let n_tar = is_target.iter().filter(|&&t| t).count();
    let n_non = is_target.len() - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(domain("DET needs at least one target and one non-target trial"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(domain("DET scores must be finite"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let (tn, nn) = (n_tar as f64, n_non as f64);
    let mut points = Vec::new();
    let (mut tar_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        points.push(DetPoint {
            threshold: t,
            false_alarm: (n_non - non_below) as f64 / nn,
            miss: tar_below as f64 / tn,
        });
        while i < order.len() && scores[order[i]] == t {
            if is_target[order[i]] {
                tar_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
    }
    points.push(DetPoint { threshold: f64::INFINITY, false_alarm: 0.0, miss: 1.0 });

    let mut eer = f64::NAN;
    for w in points.windows(2) {
        let (p, q) = (w[0], w[1]);
        let (dp, dq) = (p.false_alarm - p.miss, q.false_alarm - q.miss);
        if dp > 0.0 && dq <= 0.0 {
            let t = dp / (dp - dq);
            eer = p.false_alarm + t * (q.false_alarm - p.false_alarm);
            break;
        }
        if dp == 0.0 {
            eer = p.miss;
            break;
        }
    }
    Ok(DetCurve { points, eer })
}

/// All (segment, language) trials of a matrix; a trial is a target when the
/// language equals the segment's label.
pub fn det_from_matrix(matrix: &TrialScoreMatrix, labels: &[String]) -> Result<DetCurve> {
    check_dim(matrix.n_rows(), labels.len())?;
    let mut is_target = Vec::with_capacity(matrix.scores().len());
    for label in labels {
        is_target.extend(matrix.languages().iter().map(|l| l == label));
    }
    det_points(matrix.scores(), &is_target)
}

/// `#det v1 eer=<eer>` header, then `threshold\tfalse_alarm\tmiss` lines.
pub fn write_det(curve: &DetCurve, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "#det v1 eer={}", curve.eer)?;
    writeln!(w, "#threshold\tfalse_alarm\tmiss")?;
    for p in &curve.points {
        writeln!(w, "{}\t{}\t{}", p.threshold, p.false_alarm, p.miss)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_det(path: &Path) -> Result<DetCurve> {
    let name = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut eer = f64::NAN;
    let mut points = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let bad = |msg: &str| Error::Parse { source_name: name.clone(), line: i + 1, msg: msg.to_string() };
        if let Some(rest) = line.strip_prefix("#det v1 eer=") {
            eer = rest.parse().map_err(|_| bad("bad eer"))?;
            continue;
        }
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let f: Vec<f64> = line
            .split('\t')
            .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<_>>()?;
        if f.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        points.push(DetPoint { threshold: f[0], false_alarm: f[1], miss: f[2] });
    }
    Ok(DetCurve { points, eer })
}
