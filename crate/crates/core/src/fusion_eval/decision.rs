use serde::{Deserialize, Serialize};

use super::cost::CostParams;
use crate::error::{check_dim, domain, Result};
use crate::scores::TrialScoreMatrix;
use crate::OUT_OF_SET;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    pub format_version: u32,
    /// A segment is assigned a language only if its best score is strictly above this.
    pub threshold: f64,
    pub out_of_set_label: String,
}

impl DecisionPolicy {
    pub fn new(threshold: f64) -> Self {
        DecisionPolicy {
            format_version: crate::FORMAT_VERSION,
            threshold,
            out_of_set_label: OUT_OF_SET.to_string(),
        }
    }
}

/// Index and value of the row maximum; ties go to the first language.
fn row_argmax(row: &[f64]) -> (usize, f64) {
    let mut best = (0, row[0]);
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Best-scoring language when its score exceeds the threshold, otherwise out of set.
pub fn decide(matrix: &TrialScoreMatrix, policy: &DecisionPolicy) -> Result<Vec<(String, String)>> {
    if matrix.n_rows() == 0 || matrix.n_languages() == 0 {
        return Err(domain("cannot decide on an empty score matrix"));
    }
    Ok((0..matrix.n_rows())
        .map(|i| {
            let (arg, max) = row_argmax(matrix.row(i));
            let label = if max > policy.threshold {
                matrix.languages()[arg].clone()
            } else {
                policy.out_of_set_label.clone()
            };
            (matrix.ids()[i].clone(), label)
        })
        .collect())
}

/// `size` linearly interpolated quantiles of `values`, ascending, duplicates removed.
pub fn threshold_grid(values: &[f64], size: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 || size == 0 {
        return Vec::new();
    }
    let mut grid: Vec<f64> = (0..size)
        .map(|i| {
            let pos = if size == 1 { 0.0 } else { i as f64 * (n - 1) as f64 / (size - 1) as f64 };
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            if frac == 0.0 {
                sorted[lo]
            } else {
                sorted[lo] + frac * (sorted[hi] - sorted[lo])
            }
        })
        .collect();
    grid.dedup();
    grid
}

/// Threshold from a quantile grid of per-row maxima that minimizes the
/// cost on labeled rows; ties resolve to the smallest threshold. Returns
/// the policy and its cost.
pub fn tune_threshold(
    matrix: &TrialScoreMatrix,
    labels: &[String],
    params: &CostParams,
    grid_size: usize,
) -> Result<(DecisionPolicy, f64)> {
    params.validate()?;
    if matrix.n_rows() == 0 || matrix.n_languages() == 0 {
        return Err(domain("cannot tune a threshold on an empty score matrix"));
    }
    check_dim(matrix.n_rows(), labels.len())?;
    let mut class_of = Vec::with_capacity(labels.len());
    for l in labels {
        if l == OUT_OF_SET {
            class_of.push(None);
        } else {
            let k = matrix
                .language_index(l)
                .ok_or_else(|| domain(format!("label `{l}` is neither enrolled nor out_of_set")))?;
            class_of.push(Some(k));
        }
    }
    let best: Vec<(usize, f64)> = (0..matrix.n_rows()).map(|i| row_argmax(matrix.row(i))).collect();
    let mut trials = vec![0usize; matrix.n_languages()];
    let mut n_oos = 0usize;
    for c in &class_of {
        match c {
            Some(k) => trials[*k] += 1,
            None => n_oos += 1,
        }
    }

    let maxima: Vec<f64> = best.iter().map(|b| b.1).collect();
    let mut choice: Option<(f64, f64)> = None;
    let mut errors = vec![0usize; matrix.n_languages()];
    for eta in threshold_grid(&maxima, grid_size) {
        errors.iter_mut().for_each(|e| *e = 0);
        let mut oos_err = 0usize;
        for ((arg, max), class) in best.iter().zip(&class_of) {
            let accepted = *max > eta;
            match class {
                Some(k) => errors[*k] += usize::from(!accepted || arg != k),
                None => oos_err += usize::from(accepted),
            }
        }
        let class_sum: f64 = errors
            .iter()
            .zip(&trials)
            .filter(|(_, &n)| n > 0)
            .map(|(&e, &n)| e as f64 / n as f64)
            .sum();
        let oos_rate = if n_oos > 0 { oos_err as f64 / n_oos as f64 } else { 0.0 };
        let cost = params.combine(class_sum, oos_rate);
        if choice.is_none_or(|(c, _)| cost < c) {
            choice = Some((cost, eta));
        }
    }
    let (cost, eta) = choice.expect("non-empty grid");
    Ok((DecisionPolicy::new(eta), cost))
}

/// Sets the listed columns of each row to the row minimum, so that those
/// languages can never win the row: the row then looks as if the languages
/// were not enrolled.
pub fn mask_languages(matrix: &TrialScoreMatrix, masked: &[Vec<usize>]) -> Result<TrialScoreMatrix> {
    check_dim(matrix.n_rows(), masked.len())?;
    let l = matrix.n_languages();
    let mut scores = matrix.scores().to_vec();
    for (i, cols) in masked.iter().enumerate() {
        let row = &mut scores[i * l..(i + 1) * l];
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        for &c in cols {
            if c >= l {
                return Err(domain(format!("masked column {c} out of range")));
            }
            row[c] = min;
        }
    }
    matrix.with_scores(scores, matrix.kind())
}

/// Labeled rows plus one out-of-set copy of each row with its true
/// language masked. A cheap stand-in for scoring unenrolled languages.
pub fn pseudo_out_of_set(matrix: &TrialScoreMatrix, labels: &[String]) -> Result<(TrialScoreMatrix, Vec<String>)> {
    check_dim(matrix.n_rows(), labels.len())?;
    let keep: Vec<usize> = (0..labels.len()).filter(|&i| matrix.language_index(&labels[i]).is_some()).collect();
    let sub = TrialScoreMatrix::new(
        keep.iter().map(|&i| format!("{}#oos", matrix.ids()[i])).collect(),
        keep.iter().map(|&i| matrix.durations()[i]).collect(),
        matrix.languages().to_vec(),
        keep.iter().flat_map(|&i| matrix.row(i).to_vec()).collect(),
        matrix.kind(),
    )?;
    let masked: Vec<Vec<usize>> = keep.iter().map(|&i| vec![matrix.language_index(&labels[i]).unwrap()]).collect();
    let oos = mask_languages(&sub, &masked)?;
    let mut out_labels = labels.to_vec();
    out_labels.extend(std::iter::repeat_n(OUT_OF_SET.to_string(), keep.len()));
    Ok((matrix.stack(&oos)?, out_labels))
}
