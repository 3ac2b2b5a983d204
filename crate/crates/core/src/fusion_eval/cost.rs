use std::collections::{BTreeMap, HashMap};

use crate::error::{domain, Result};
use crate::OUT_OF_SET;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Number of in-set classes.
    pub n_classes: usize,
    /// Prior of out-of-set trials.
    pub p_oos: f64,
    /// Reporting factor applied to the raw cost in `[0, 1]`.
    pub scale: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { n_classes: 50, p_oos: 0.23, scale: 100.0 }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || !(0.0..=1.0).contains(&self.p_oos) || !(self.scale > 0.0) {
            return Err(domain("cost needs n ≥ 1, P_oos in [0, 1] and a positive scale"));
        }
        Ok(())
    }

    /// `scale · ((1 − P_oos)/n · Σₖ errₖ + P_oos · err_oos)`.
    pub(crate) fn combine(&self, class_error_sum: f64, oos_error: f64) -> f64 {
        self.scale * ((1.0 - self.p_oos) * class_error_sum / self.n_classes as f64 + self.p_oos * oos_error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub cost: f64,
    /// `(errors, trials)` per in-set class present in the truth.
    pub per_class: BTreeMap<String, (usize, usize)>,
    pub out_of_set: (usize, usize),
    pub warnings: Vec<String>,
}

/// Average per-class error with an out-of-set term.
///
/// Only decided segments count as trials; every decided id must appear in
/// `truth`. Classes without trials contribute zero error.
pub fn compute_cost(
    decisions: &[(String, String)],
    truth: &[(String, String)],
    params: &CostParams,
) -> Result<CostReport> {
    params.validate()?;
    let truth: HashMap<&str, &str> = truth.iter().map(|(i, l)| (i.as_str(), l.as_str())).collect();
    let mut per_class: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut oos = (0usize, 0usize);
    for (id, decided) in decisions {
        let actual = *truth
            .get(id.as_str())
            .ok_or_else(|| domain(format!("no truth for segment `{id}`")))?;
        let wrong = usize::from(decided != actual);
        if actual == OUT_OF_SET {
            oos.0 += wrong;
            oos.1 += 1;
        } else {
            let e = per_class.entry(actual.to_string()).or_default();
            e.0 += wrong;
            e.1 += 1;
        }
    }
    let mut warnings = Vec::new();
    if per_class.len() < params.n_classes {
        warnings.push(format!(
            "{} of {} in-set classes have no trials and contribute zero error",
            params.n_classes - per_class.len(),
            params.n_classes
        ));
    } else if per_class.len() > params.n_classes {
        warnings.push(format!(
            "truth holds {} in-set classes but n = {}",
            per_class.len(),
            params.n_classes
        ));
    }
    if oos.1 == 0 {
        warnings.push("no out-of-set trials; out-of-set error taken as zero".into());
    }
    let class_sum: f64 = per_class.values().map(|(e, n)| *e as f64 / *n as f64).sum();
    let oos_err = if oos.1 > 0 { oos.0 as f64 / oos.1 as f64 } else { 0.0 };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(CostReport { cost: params.combine(class_sum, oos_err), per_class, out_of_set: oos, warnings })
}
