//! End-to-end run on a synthetic corpus: every subsystem, both fusions and
//! the cost of each system on the test set.

mod config;

use std::fmt::Write as _;
use std::path::Path;

pub use config::PipelineConfig;

use crate::baseline::{loo_cosine_scores, score_cosine_corpus, train_cosine};
use crate::data_io::{generate_synthetic_corpus, save_json, write_decisions, write_ivector_file, Corpus, IVectorRecord};
use crate::dnn::{cross_validated_scores, init_dnn, score_dnn, train_dnn, DnnModel, TrainConfig};
use crate::duration_fusion::{fit_density_model, transform_scores};
use crate::error::Result;
use crate::fusion_eval::{
    apply_fusion, compute_cost, decide, det_from_matrix, mask_languages, pseudo_out_of_set, train_fusion,
    tune_threshold, write_det, CostParams, DecisionPolicy, FusionModel,
};
use crate::gmm_system::{loo_scores, score_gmm, train_language_models, LanguageModelSet};
use crate::preprocess::Preprocessor;
use crate::scores::TrialScoreMatrix;
use crate::OUT_OF_SET;

/// Names of the evaluated systems, in report order.
pub const SYSTEMS: [&str; 7] = ["baseline", "gmm", "dnn", "gmm+dnn", "gmm_lr", "dnn_lr", "gmm_lr+dnn_lr"];

#[derive(Debug, Clone, PartialEq)]
pub struct SystemResult {
    pub name: String,
    pub threshold: f64,
    /// Cost on the training trials the threshold was tuned on.
    pub train_cost: f64,
    pub test_cost: f64,
    /// Mean per-language error rate on the test set.
    pub in_set_error: f64,
    /// Fraction of out-of-set test segments assigned a language.
    pub out_of_set_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub lda_dim: usize,
    pub systems: Vec<SystemResult>,
    pub eer_gmm: f64,
    pub eer_gmm_lr: f64,
}

impl PipelineReport {
    pub fn cost(&self, system: &str) -> Option<f64> {
        self.systems.iter().find(|s| s.name == system).map(|s| s.test_cost)
    }

    /// `cost_<system>=<value>` for every system, then the two EERs.
    pub fn summary_line(&self) -> String {
        let mut out = format!("lda_dim={}", self.lda_dim);
        for s in &self.systems {
            let _ = write!(out, " cost_{}={:.3}", s.name.replace('+', "_plus_"), s.test_cost);
        }
        let _ = write!(out, " eer_gmm={:.4} eer_gmm_lr={:.4}", self.eer_gmm, self.eer_gmm_lr);
        out
    }
}

/// Scores of one system: training rows (leave-one-out or cross-validated),
/// simulated out-of-set rows and test rows.
struct SystemScores {
    name: &'static str,
    train: TrialScoreMatrix,
    /// Training vectors of held-out languages scored by a back end that never
    /// saw them; columns of the held-out languages are placeholders.
    oos: Option<TrialScoreMatrix>,
    test: TrialScoreMatrix,
}

fn labels_of(c: &Corpus) -> Vec<String> {
    c.records().iter().map(|r| r.label.clone().unwrap_or_default()).collect()
}

/// Preprocessing, language GMMs and network fitted on one training set.
struct Backend {
    pre: Preprocessor,
    models: LanguageModelSet,
    net: DnnModel,
}

fn layer_dims(cfg: &PipelineConfig, input: usize, outputs: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(&cfg.dnn_hidden);
    dims.push(outputs);
    dims
}

fn fit_backend(cfg: &PipelineConfig, dev: &Corpus, train: &Corpus, dnn: &TrainConfig) -> Result<Backend> {
    let pre = Preprocessor::fit(dev, train, cfg.eigen_floor, Some(cfg.lda_dim))?;
    let dev_p = pre.apply_corpus(dev)?;
    let train_p = pre.apply_corpus(train)?;
    let models = train_language_models(&dev_p, &train_p, &cfg.gmm, "whiten+normalize+lda")?;
    let languages = train_p.languages();
    let dims = layer_dims(cfg, train_p.dim(), languages.len());
    let net = train_dnn(&init_dnn(&dims, languages, dnn.seed)?, &train_p, dnn)?.model;
    Ok(Backend { pre, models, net })
}

/// Widens `m` to `languages`, filling unknown columns with zeros.
fn widen(m: &TrialScoreMatrix, languages: &[String]) -> Result<TrialScoreMatrix> {
    let pos: Vec<Option<usize>> = languages.iter().map(|l| m.language_index(l)).collect();
    let scores = (0..m.n_rows())
        .flat_map(|i| pos.iter().map(move |p| p.map_or(0.0, |k| m.get(i, k))))
        .collect();
    TrialScoreMatrix::new(m.ids().to_vec(), m.durations().to_vec(), languages.to_vec(), scores, m.kind())
}

/// Out-of-set simulation: languages are split round-robin into `folds`
/// groups; for each group the back end is refitted without it and the
/// group's training vectors are scored. Returns GMM and network scores of
/// those vectors over all languages.
fn held_out_language_scores(
    cfg: &PipelineConfig,
    dev: &Corpus,
    train: &Corpus,
    languages: &[String],
    folds: usize,
) -> Result<HeldOut> {
    let mut rows = Vec::new();
    let mut gmm: Option<TrialScoreMatrix> = None;
    let mut dnn: Option<TrialScoreMatrix> = None;
    let mut masks = Vec::new();
    for f in 0..folds {
        let held: Vec<usize> = (f..languages.len()).step_by(folds).collect();
        let is_held = |r: &IVectorRecord| {
            r.label.as_ref().is_some_and(|l| held.iter().any(|&h| &languages[h] == l))
        };
        rows.extend((0..train.len()).filter(|&i| is_held(&train.records()[i])));
        let keep = Corpus::new(train.dim(), train.records().iter().filter(|r| !is_held(r)).cloned().collect())?;
        let out = Corpus::new(
            train.dim(),
            train
                .records()
                .iter()
                .filter(|r| is_held(r))
                .map(|r| IVectorRecord { id: format!("{}#oos", r.id), ..r.clone() })
                .collect(),
        )?;
        log::info!("out-of-set fold {}/{folds}: holding out {} languages", f + 1, held.len());
        let dnn_cfg = TrainConfig { seed: cfg.dnn.seed.wrapping_add(1000 + f as u64), ..cfg.dnn.clone() };
        let b = fit_backend(cfg, dev, &keep, &dnn_cfg)?;
        let out_p = b.pre.apply_corpus(&out)?;
        let g = widen(&score_gmm(&b.models, &out_p)?, languages)?;
        let d = widen(&score_dnn(&b.net, &out_p)?, languages)?;
        masks.extend(std::iter::repeat_n(held.clone(), out.len()));
        gmm = Some(match gmm {
            Some(acc) => acc.stack(&g)?,
            None => g,
        });
        dnn = Some(match dnn {
            Some(acc) => acc.stack(&d)?,
            None => d,
        });
    }
    Ok(HeldOut {
        rows,
        gmm: gmm.expect("at least one fold"),
        dnn: dnn.expect("at least one fold"),
        masks,
    })
}

struct HeldOut {
    /// Training-set index of every out-of-set row.
    rows: Vec<usize>,
    gmm: TrialScoreMatrix,
    dnn: TrialScoreMatrix,
    /// Languages not enrolled for each row.
    masks: Vec<Vec<usize>>,
}

/// Tuning rows of a system: its training rows plus out-of-set rows, either
/// the masked held-out-language rows or, without those, masked copies of
/// the training rows.
fn tuning_rows(
    s: &SystemScores,
    train_labels: &[String],
    masks: &[Vec<usize>],
) -> Result<(TrialScoreMatrix, Vec<String>)> {
    match &s.oos {
        Some(oos) => {
            let mut labels = train_labels.to_vec();
            labels.extend(std::iter::repeat_n(OUT_OF_SET.to_string(), oos.n_rows()));
            Ok((s.train.stack(&mask_languages(oos, masks)?)?, labels))
        }
        None => pseudo_out_of_set(&s.train, train_labels),
    }
}

/// Fusion fit on the tuning rows of both systems, so simulated out-of-set
/// segments count as non-target trials.
fn fit_fusion(
    a: &SystemScores,
    b: &SystemScores,
    train_labels: &[String],
    masks: &[Vec<usize>],
    cfg: &PipelineConfig,
) -> Result<FusionModel> {
    let (rows_a, labels) = tuning_rows(a, train_labels, masks)?;
    let (rows_b, _) = tuning_rows(b, train_labels, masks)?;
    train_fusion(&[&rows_a, &rows_b], &labels, &cfg.fusion)
}

fn evaluate(
    s: &SystemScores,
    tuning: (TrialScoreMatrix, Vec<String>),
    truth: &[(String, String)],
    params: &CostParams,
    grid_size: usize,
) -> Result<(SystemResult, DecisionPolicy, Vec<(String, String)>)> {
    let (policy, train_cost) = tune_threshold(&tuning.0, &tuning.1, params, grid_size)?;
    let decisions = decide(&s.test, &policy)?;
    let report = compute_cost(&decisions, truth, params)?;
    for w in &report.warnings {
        log::warn!("{}: {w}", s.name);
    }
    let result = SystemResult {
        name: s.name.to_string(),
        threshold: policy.threshold,
        train_cost,
        test_cost: report.cost,
        in_set_error: if report.per_class.is_empty() {
            0.0
        } else {
            report.per_class.values().map(|&(e, n)| e as f64 / n as f64).sum::<f64>() / report.per_class.len() as f64
        },
        out_of_set_error: if report.out_of_set.1 == 0 {
            0.0
        } else {
            report.out_of_set.0 as f64 / report.out_of_set.1 as f64
        },
    };
    Ok((result, policy, decisions))
}

/// Runs the whole chain. When `out_dir` is given every model, score matrix,
/// decision list and DET curve is written there; file contents depend only
/// on the configuration.
pub fn run(cfg: &PipelineConfig, out_dir: Option<&Path>) -> Result<PipelineReport> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), cfg.to_text())?;
    }
    let write = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        match out_dir {
            Some(dir) => f(&dir.join(name)),
            None => Ok(()),
        }
    };

    log::info!("generating synthetic corpus");
    let data = generate_synthetic_corpus(&cfg.synth)?;
    if cfg.write_corpora {
        write("dev.ivec", &|p| write_ivector_file(&data.dev, p))?;
        write("train.ivec", &|p| write_ivector_file(&data.train, p))?;
        write("test.ivec", &|p| write_ivector_file(&data.test.without_labels(), p))?;
    }
    let train_labels = labels_of(&data.train);
    let truth: Vec<(String, String)> =
        data.test.records().iter().map(|r| r.id.clone()).zip(labels_of(&data.test)).collect();
    write("truth.txt", &|p| write_decisions(&truth, p))?;

    log::info!("fitting preprocessing");
    let pre = Preprocessor::fit(&data.dev, &data.train, cfg.eigen_floor, Some(cfg.lda_dim))?;
    write("preprocess.json", &|p| save_json(&pre, p))?;
    let lda_dim = pre.lda.as_ref().map_or(data.train.dim(), |l| l.projection.len());

    log::info!("cosine baseline");
    let train_norm = pre.normalize_corpus(&data.train)?;
    let test_norm = pre.normalize_corpus(&data.test)?;
    let cosine = train_cosine(&train_norm)?;
    write("cosine.json", &|p| save_json(&cosine, p))?;
    let mut baseline = SystemScores {
        name: "baseline",
        train: loo_cosine_scores(&cosine, &train_norm)?,
        oos: None,
        test: score_cosine_corpus(&cosine, &test_norm)?,
    };

    let languages = data.train.languages();
    let folds = cfg.oos_folds.min(languages.len());
    let held = if folds > 0 {
        Some(held_out_language_scores(cfg, &data.dev, &data.train, &languages, folds)?)
    } else {
        None
    };
    if let Some(h) = &held {
        let recs = h
            .rows
            .iter()
            .map(|&i| IVectorRecord { id: format!("{}#oos", train_norm.records()[i].id), ..train_norm.records()[i].clone() })
            .collect();
        baseline.oos = Some(score_cosine_corpus(&cosine, &Corpus::new(train_norm.dim(), recs)?)?);
    }
    let masks = held.as_ref().map_or(Vec::new(), |h| h.masks.clone());
    let (gmm_oos, dnn_oos) = match held {
        Some(h) => (Some(h.gmm), Some(h.dnn)),
        None => (None, None),
    };

    log::info!("GMM subsystem");
    let dev_p = pre.apply_corpus(&data.dev)?;
    let train_p = pre.apply_corpus(&data.train)?;
    let test_p = pre.apply_corpus(&data.test)?;
    let models = train_language_models(&dev_p, &train_p, &cfg.gmm, "whiten+normalize+lda")?;
    write("gmm_models.json", &|p| save_json(&models, p))?;
    let gmm = SystemScores {
        name: "gmm",
        train: loo_scores(&models, &train_p)?.matrix,
        oos: gmm_oos,
        test: score_gmm(&models, &test_p)?,
    };

    log::info!("DNN subsystem");
    let dims = layer_dims(cfg, train_p.dim(), languages.len());
    let net = train_dnn(&init_dnn(&dims, languages.clone(), cfg.dnn.seed)?, &train_p, &cfg.dnn)?;
    write("dnn.json", &|p| save_json(&net.model, p))?;
    let dnn = SystemScores {
        name: "dnn",
        train: cross_validated_scores(&dims, &train_p, &cfg.dnn, cfg.dnn_folds)?,
        oos: dnn_oos,
        test: score_dnn(&net.model, &test_p)?,
    };

    let fuse = |name: &'static str, model: &FusionModel, a: &SystemScores, b: &SystemScores| -> Result<SystemScores> {
        Ok(SystemScores {
            name,
            train: apply_fusion(model, &[&a.train, &b.train])?,
            oos: match (&a.oos, &b.oos) {
                (Some(x), Some(y)) => Some(apply_fusion(model, &[x, y])?),
                _ => None,
            },
            test: apply_fusion(model, &[&a.test, &b.test])?,
        })
    };

    log::info!("fusing raw subsystems");
    let fuse_ab = fit_fusion(&gmm, &dnn, &train_labels, &masks, cfg)?;
    write("fusion_gmm_dnn.json", &|p| save_json(&fuse_ab, p))?;
    let fused_ab = fuse("gmm+dnn", &fuse_ab, &gmm, &dnn)?;

    log::info!("score/duration densities");
    let mut lr_systems = Vec::new();
    for (raw, name, file) in [(&gmm, "gmm_lr", "density_gmm.json"), (&dnn, "dnn_lr", "density_dnn.json")] {
        let pairs = raw.train.trial_pairs(&train_labels)?;
        let density = fit_density_model(&pairs, &languages, raw.train.kind(), &cfg.density)?;
        write(file, &|p| save_json(&density, p))?;
        lr_systems.push(SystemScores {
            name,
            train: transform_scores(&density, &raw.train, true)?,
            oos: raw.oos.as_ref().map(|m| transform_scores(&density, m, true)).transpose()?,
            test: transform_scores(&density, &raw.test, true)?,
        });
    }
    let dnn_lr = lr_systems.pop().expect("two systems");
    let gmm_lr = lr_systems.pop().expect("two systems");

    log::info!("fusing likelihood-ratio subsystems");
    let fuse_cd = fit_fusion(&gmm_lr, &dnn_lr, &train_labels, &masks, cfg)?;
    write("fusion_gmm_lr_dnn_lr.json", &|p| save_json(&fuse_cd, p))?;
    let fused_cd = fuse("gmm_lr+dnn_lr", &fuse_cd, &gmm_lr, &dnn_lr)?;

    log::info!("thresholds and costs");
    let params = cfg.cost_params(languages.len());
    let mut systems = Vec::new();
    for s in [&baseline, &gmm, &dnn, &fused_ab, &gmm_lr, &dnn_lr, &fused_cd] {
        let tuning = tuning_rows(s, &train_labels, &masks)?;
        let (result, policy, decisions) = evaluate(s, tuning, &truth, &params, cfg.grid_size)?;
        let stem = s.name.replace('+', "_plus_");
        write(&format!("scores_{stem}.txt"), &|p| s.test.save(p))?;
        write(&format!("policy_{stem}.json"), &|p| save_json(&policy, p))?;
        write(&format!("decisions_{stem}.txt"), &|p| write_decisions(&decisions, p))?;
        systems.push(result);
    }

    let test_labels = labels_of(&data.test);
    let det_gmm = det_from_matrix(&gmm.test, &test_labels)?;
    let det_gmm_lr = det_from_matrix(&gmm_lr.test, &test_labels)?;
    write("det_gmm.txt", &|p| write_det(&det_gmm, p))?;
    write("det_gmm_lr.txt", &|p| write_det(&det_gmm_lr, p))?;

    let report = PipelineReport { lda_dim, systems, eer_gmm: det_gmm.eer, eer_gmm_lr: det_gmm_lr.eer };
    write("summary.txt", &|p| Ok(std::fs::write(p, report.summary_line() + "\n")?))?;
    Ok(report)
}
