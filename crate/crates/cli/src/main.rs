//! `langrec`: command-line front end for the language recognition back end.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use langrec::baseline::{loo_cosine_scores, score_cosine_corpus, train_cosine, CosineModel};
use langrec::data_io::{
    generate_synthetic_corpus, load_json, parse_ivector_file, read_decisions, save_json, write_decisions,
    write_ivector_file, Corpus, Decisions,
};
use langrec::dnn::{cross_validated_scores, init_dnn, score_dnn, train_dnn, DnnModel};
use langrec::duration_fusion::{fit_density_model, transform_scores, ScoreDurationDensityModel};
use langrec::fusion_eval::{
    apply_fusion, compute_cost, decide, det_from_matrix, train_fusion, tune_threshold, write_det, DecisionPolicy,
    FusionModel,
};
use langrec::gmm_system::{loo_scores, score_gmm, train_language_models, LanguageModelSet};
use langrec::pipeline::{run, PipelineConfig};
use langrec::preprocess::Preprocessor;
use langrec::scores::TrialScoreMatrix;
use langrec::OUT_OF_SET;

const AFTER_HELP: &str = "\
Settings come from the built-in challenge preset, then --config (a flat
`key = value` file, `#` starts a comment, `preset = acceptance` switches
the base preset), then --seed, then each --set in order.

Every command prints one `key=value` summary line on success. Exit codes:
0 success, 1 processing error, 2 usage error.";

#[derive(Parser)]
#[command(name = "langrec", version, about = "i-vector language recognition", after_help = AFTER_HELP)]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Settings {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set gmm.components=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Master seed; reseeds every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic dev/train/test corpora and the test truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit or apply centering, whitening, length normalization and LDA.
    #[command(subcommand)]
    Preprocess(PreprocessCmd),
    /// Cosine scoring against average language vectors.
    #[command(subcommand)]
    Baseline(BaselineCmd),
    /// GMM-UBM subsystem.
    #[command(subcommand)]
    Gmm(GmmCmd),
    /// Feedforward network subsystem.
    #[command(subcommand)]
    Dnn(DnnCmd),
    /// Unbiased scores of the training set for a subsystem.
    Loo {
        #[command(subcommand)]
        system: LooCmd,
    },
    /// Score/duration likelihood-ratio densities.
    #[command(subcommand)]
    Fusion(FusionCmd),
    /// Linear fusion of two or more score files with a duration term.
    #[command(subcommand)]
    Fuse(FuseCmd),
    /// Turn scores into language or out-of-set decisions.
    Decide {
        #[arg(long)]
        scores: PathBuf,
        /// Fixed threshold on the best score.
        #[arg(long, conflicts_with_all = ["policy", "tune_scores"])]
        threshold: Option<f64>,
        /// Decision policy JSON written by an earlier run.
        #[arg(long, conflicts_with = "tune_scores")]
        policy: Option<PathBuf>,
        /// Labeled scores to tune the threshold on.
        #[arg(long, requires = "tune_labels")]
        tune_scores: Option<PathBuf>,
        /// Labels of the tuning rows (labeled .ivec or `id label` lines).
        #[arg(long)]
        tune_labels: Option<PathBuf>,
        /// Where to save the policy that was used.
        #[arg(long)]
        policy_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cost of decisions against the truth.
    Evaluate {
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// DET curve and equal error rate of a score file.
    Det {
        #[arg(long)]
        scores: PathBuf,
        /// Labels of the rows (labeled .ivec or `id label` lines).
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full chain on a synthetic corpus: every subsystem, fusion and cost.
    Pipeline {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PreprocessCmd {
    /// Fit on an unlabeled dev set and a labeled training set.
    Fit {
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        train: PathBuf,
        /// Skip the LDA stage.
        #[arg(long)]
        no_lda: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Transform an i-vector file.
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Stop after length normalization (input for the cosine baseline).
        #[arg(long)]
        normalize_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum BaselineCmd {
    Train {
        /// Normalized, labeled training vectors.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum GmmCmd {
    /// Background model on dev, MAP-adapted language models on train.
    Train {
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DnnCmd {
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum LooCmd {
    /// Leave-one-out cosine scores.
    Baseline {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-out GMM scores.
    Gmm {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated network scores.
    Dnn {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FusionCmd {
    /// Fit target/non-target densities on labeled training scores.
    FitDensity {
        #[arg(long)]
        scores: PathBuf,
        /// Labels of the rows (labeled .ivec or `id label` lines).
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace scores by log likelihood ratios.
    Transform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// Use the pooled densities instead of each language's own.
        #[arg(long)]
        universal: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FuseCmd {
    Train {
        /// One file per subsystem, rows aligned. Repeatable.
        #[arg(long = "scores", required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "scores", required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// An error tagged with the stage that raised it.
struct Failure {
    module: &'static str,
    message: String,
}

type Outcome = Result<String, Failure>;

trait Tag<T> {
    fn tag(self, module: &'static str) -> Result<T, Failure>;
}

impl<T> Tag<T> for langrec::Result<T> {
    fn tag(self, module: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure { module, message: e.to_string() })
    }
}

/// I/O and JSON errors from reading `path` name the file; parse errors already do.
fn at<T>(r: langrec::Result<T>, module: &'static str, path: &Path) -> Result<T, Failure> {
    r.map_err(|e| {
        let message = match e {
            langrec::Error::Io(_) | langrec::Error::Json(_) => format!("{}: {e}", path.display()),
            _ => e.to_string(),
        };
        Failure { module, message }
    })
}

fn fail<T>(module: &'static str, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure { module, message: message.into() })
}

fn load_config(s: &Settings) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &s.config {
        Some(p) => PipelineConfig::from_file(p).tag("config")?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = s.seed {
        cfg.reseed(seed);
    }
    for a in &s.set {
        cfg.set_assignment(a).tag("config")?;
    }
    cfg.validate().tag("config")?;
    Ok(cfg)
}

fn ivec(path: &Path, module: &'static str) -> Result<Corpus, Failure> {
    at(parse_ivector_file(path), module, path)
}

/// Labels from a labeled i-vector file (`.ivec`) or from `id label` lines.
fn read_labels(path: &Path, module: &'static str) -> Result<Decisions, Failure> {
    if path.extension().is_some_and(|e| e == "ivec") {
        let c = ivec(path, module)?;
        c.require_labels().tag(module)?;
        Ok(c.records().iter().map(|r| (r.id.clone(), r.label.clone().unwrap_or_default())).collect())
    } else {
        at(read_decisions(path), module, path)
    }
}

/// Labels aligned with the rows of `m`.
fn row_labels(m: &TrialScoreMatrix, labels: &Decisions, module: &'static str) -> Result<Vec<String>, Failure> {
    let by_id: HashMap<&str, &str> = labels.iter().map(|(i, l)| (i.as_str(), l.as_str())).collect();
    m.ids()
        .iter()
        .map(|id| match by_id.get(id.as_str()) {
            Some(l) => Ok(l.to_string()),
            None => fail(module, format!("no label for segment `{id}`")),
        })
        .collect()
}

fn scores(path: &Path, module: &'static str) -> Result<TrialScoreMatrix, Failure> {
    at(TrialScoreMatrix::load(path), module, path)
}

fn summary(pairs: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        if !s.is_empty() {
            s.push(' ');
        }
        let _ = write!(s, "{k}={v}");
    }
    s
}

fn layer_dims(cfg: &PipelineConfig, input: usize, outputs: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(&cfg.dnn_hidden);
    dims.push(outputs);
    dims
}

fn execute(cli: Cli) -> Outcome {
    let cfg = load_config(&cli.settings)?;
    match cli.command {
        Command::Synth { out } => {
            let data = generate_synthetic_corpus(&cfg.synth).tag("synth")?;
            std::fs::create_dir_all(&out).map_err(|e| Failure { module: "synth", message: e.to_string() })?;
            write_ivector_file(&data.dev, &out.join("dev.ivec")).tag("synth")?;
            write_ivector_file(&data.train, &out.join("train.ivec")).tag("synth")?;
            write_ivector_file(&data.test.without_labels(), &out.join("test.ivec")).tag("synth")?;
            let truth: Decisions = data
                .test
                .records()
                .iter()
                .map(|r| (r.id.clone(), r.label.clone().unwrap_or_default()))
                .collect();
            write_decisions(&truth, &out.join("truth.txt")).tag("synth")?;
            let oos = truth.iter().filter(|(_, l)| l == OUT_OF_SET).count();
            Ok(summary(&[
                ("dev", data.dev.len().to_string()),
                ("train", data.train.len().to_string()),
                ("test", data.test.len().to_string()),
                ("test_out_of_set", oos.to_string()),
                ("languages", data.train.languages().len().to_string()),
                ("dim", data.train.dim().to_string()),
            ]))
        }
        Command::Preprocess(PreprocessCmd::Fit { dev, train, no_lda, out }) => {
            let dev = ivec(&dev, "preprocess")?;
            let train = ivec(&train, "preprocess")?;
            let lda = if no_lda { None } else { Some(cfg.lda_dim) };
            let pre = Preprocessor::fit(&dev, &train, cfg.eigen_floor, lda).tag("preprocess")?;
            save_json(&pre, &out).tag("preprocess")?;
            let out_dim = pre.lda.as_ref().map_or(train.dim(), |l| l.projection.len());
            Ok(summary(&[("input_dim", train.dim().to_string()), ("output_dim", out_dim.to_string())]))
        }
        Command::Preprocess(PreprocessCmd::Apply { model, input, normalize_only, out }) => {
            let pre: Preprocessor = at(load_json(&model), "preprocess", &model)?;
            let c = ivec(&input, "preprocess")?;
            let t = if normalize_only { pre.normalize_corpus(&c) } else { pre.apply_corpus(&c) }.tag("preprocess")?;
            write_ivector_file(&t, &out).tag("preprocess")?;
            Ok(summary(&[("records", t.len().to_string()), ("dim", t.dim().to_string())]))
        }
        Command::Baseline(BaselineCmd::Train { train, out }) => {
            let train = ivec(&train, "baseline")?;
            let m = train_cosine(&train).tag("baseline")?;
            save_json(&m, &out).tag("baseline")?;
            Ok(summary(&[("languages", m.languages.len().to_string()), ("dim", train.dim().to_string())]))
        }
        Command::Baseline(BaselineCmd::Score { model, input, out }) => {
            let m: CosineModel = at(load_json(&model), "baseline", &model)?;
            let s = score_cosine_corpus(&m, &ivec(&input, "baseline")?).tag("baseline")?;
            s.save(&out).tag("baseline")?;
            Ok(summary(&[("rows", s.n_rows().to_string()), ("languages", s.n_languages().to_string())]))
        }
        Command::Gmm(GmmCmd::Train { dev, train, out }) => {
            let dev = ivec(&dev, "gmm")?;
            let train = ivec(&train, "gmm")?;
            let m = train_language_models(&dev, &train, &cfg.gmm, "whiten+normalize+lda").tag("gmm")?;
            save_json(&m, &out).tag("gmm")?;
            Ok(summary(&[
                ("components", m.ubm.n_components().to_string()),
                ("languages", m.languages.len().to_string()),
            ]))
        }
        Command::Gmm(GmmCmd::Score { model, input, out }) => {
            let m: LanguageModelSet = at(load_json(&model), "gmm", &model)?;
            let s = score_gmm(&m, &ivec(&input, "gmm")?).tag("gmm")?;
            s.save(&out).tag("gmm")?;
            Ok(summary(&[("rows", s.n_rows().to_string()), ("languages", s.n_languages().to_string())]))
        }
        Command::Dnn(DnnCmd::Train { train, out }) => {
            let train = ivec(&train, "dnn")?;
            let languages = train.languages();
            let dims = layer_dims(&cfg, train.dim(), languages.len());
            let net = init_dnn(&dims, languages, cfg.dnn.seed).tag("dnn")?;
            let trained = train_dnn(&net, &train, &cfg.dnn).tag("dnn")?;
            save_json(&trained.model, &out).tag("dnn")?;
            let best = trained
                .history
                .iter()
                .min_by(|a, b| a.validation_loss.total_cmp(&b.validation_loss))
                .expect("history holds the untrained network");
            Ok(summary(&[
                ("epochs", (trained.history.len() - 1).to_string()),
                ("best_epoch", best.epoch.to_string()),
                ("validation_loss", format!("{:.6}", best.validation_loss)),
            ]))
        }
        Command::Dnn(DnnCmd::Score { model, input, out }) => {
            let m: DnnModel = at(load_json(&model), "dnn", &model)?;
            let s = score_dnn(&m, &ivec(&input, "dnn")?).tag("dnn")?;
            s.save(&out).tag("dnn")?;
            Ok(summary(&[("rows", s.n_rows().to_string()), ("languages", s.n_languages().to_string())]))
        }
        Command::Loo { system } => {
            let s = match system {
                LooCmd::Baseline { model, train, out } => {
                    let m: CosineModel = at(load_json(&model), "loo", &model)?;
                    let s = loo_cosine_scores(&m, &ivec(&train, "loo")?).tag("loo")?;
                    s.save(&out).tag("loo")?;
                    s
                }
                LooCmd::Gmm { model, train, out } => {
                    let m: LanguageModelSet = at(load_json(&model), "loo", &model)?;
                    let s = loo_scores(&m, &ivec(&train, "loo")?).tag("loo")?.matrix;
                    s.save(&out).tag("loo")?;
                    s
                }
                LooCmd::Dnn { train, out } => {
                    let train = ivec(&train, "loo")?;
                    let dims = layer_dims(&cfg, train.dim(), train.languages().len());
                    let s = cross_validated_scores(&dims, &train, &cfg.dnn, cfg.dnn_folds).tag("loo")?;
                    s.save(&out).tag("loo")?;
                    s
                }
            };
            Ok(summary(&[("rows", s.n_rows().to_string()), ("kind", s.kind().to_string())]))
        }
        Command::Fusion(FusionCmd::FitDensity { scores: sp, labels, out }) => {
            let m = scores(&sp, "fusion")?;
            let labels = row_labels(&m, &read_labels(&labels, "fusion")?, "fusion")?;
            let pairs = m.trial_pairs(&labels).tag("fusion")?;
            let model = fit_density_model(&pairs, m.languages(), m.kind(), &cfg.density).tag("fusion")?;
            save_json(&model, &out).tag("fusion")?;
            Ok(summary(&[
                ("pairs", pairs.len().to_string()),
                ("target_components", model.universal_target.n_components().to_string()),
                ("nontarget_components", model.universal_nontarget.n_components().to_string()),
                ("fallback_languages", model.fallback.len().to_string()),
            ]))
        }
        Command::Fusion(FusionCmd::Transform { model, scores: sp, universal, out }) => {
            let model: ScoreDurationDensityModel = at(load_json(&model), "fusion", &model)?;
            let t = transform_scores(&model, &scores(&sp, "fusion")?, !universal).tag("fusion")?;
            t.save(&out).tag("fusion")?;
            Ok(summary(&[("rows", t.n_rows().to_string()), ("per_language", (!universal).to_string())]))
        }
        Command::Fuse(FuseCmd::Train { scores: paths, labels, out }) => {
            let mats = paths.iter().map(|p| scores(p, "fuse")).collect::<Result<Vec<_>, _>>()?;
            let labels = row_labels(&mats[0], &read_labels(&labels, "fuse")?, "fuse")?;
            let refs: Vec<&TrialScoreMatrix> = mats.iter().collect();
            let model = train_fusion(&refs, &labels, &cfg.fusion).tag("fuse")?;
            save_json(&model, &out).tag("fuse")?;
            let weights: Vec<String> = model.weights.iter().map(|w| format!("{w:.6}")).collect();
            Ok(summary(&[
                ("weights", weights.join(",")),
                ("quality_weight", format!("{:.6}", model.quality_weight)),
                ("offset", format!("{:.6}", model.offset)),
            ]))
        }
        Command::Fuse(FuseCmd::Apply { model, scores: paths, out }) => {
            let model: FusionModel = at(load_json(&model), "fuse", &model)?;
            let mats = paths.iter().map(|p| scores(p, "fuse")).collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&TrialScoreMatrix> = mats.iter().collect();
            let f = apply_fusion(&model, &refs).tag("fuse")?;
            f.save(&out).tag("fuse")?;
            Ok(summary(&[("rows", f.n_rows().to_string())]))
        }
        Command::Decide { scores: sp, threshold, policy, tune_scores, tune_labels, policy_out, out } => {
            let m = scores(&sp, "decide")?;
            let mut extra = Vec::new();
            let policy = if let Some(t) = threshold {
                DecisionPolicy::new(t)
            } else if let Some(p) = policy {
                at(load_json(&p), "decide", &p)?
            } else if let (Some(ts), Some(tl)) = (tune_scores, tune_labels) {
                let tm = scores(&ts, "decide")?;
                let labels = row_labels(&tm, &read_labels(&tl, "decide")?, "decide")?;
                let (p, cost) = tune_threshold(&tm, &labels, &cfg.cost_params(tm.n_languages()), cfg.grid_size)
                    .tag("decide")?;
                extra.push(("tuning_cost", format!("{cost:.3}")));
                p
            } else {
                return fail("decide", "give --threshold, --policy or --tune-scores with --tune-labels");
            };
            let d = decide(&m, &policy).tag("decide")?;
            write_decisions(&d, &out).tag("decide")?;
            if let Some(p) = policy_out {
                save_json(&policy, &p).tag("decide")?;
            }
            let oos = d.iter().filter(|(_, l)| l == OUT_OF_SET).count();
            let mut s = vec![
                ("threshold", format!("{}", policy.threshold)),
                ("decisions", d.len().to_string()),
                ("out_of_set", oos.to_string()),
            ];
            s.extend(extra);
            Ok(summary(&s))
        }
        Command::Evaluate { decisions, truth } => {
            let d = at(read_decisions(&decisions), "evaluate", &decisions)?;
            let t = at(read_decisions(&truth), "evaluate", &truth)?;
            let classes: BTreeSet<&str> = t.iter().map(|(_, l)| l.as_str()).filter(|l| *l != OUT_OF_SET).collect();
            let r = compute_cost(&d, &t, &cfg.cost_params(classes.len())).tag("evaluate")?;
            for w in &r.warnings {
                log::warn!("{w}");
            }
            let in_set: (usize, usize) = r.per_class.values().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            Ok(summary(&[
                ("cost", format!("{}", r.cost)),
                ("in_set_errors", format!("{}/{}", in_set.0, in_set.1)),
                ("out_of_set_errors", format!("{}/{}", r.out_of_set.0, r.out_of_set.1)),
            ]))
        }
        Command::Det { scores: sp, truth, out } => {
            let m = scores(&sp, "det")?;
            let labels = row_labels(&m, &read_labels(&truth, "det")?, "det")?;
            let curve = det_from_matrix(&m, &labels).tag("det")?;
            write_det(&curve, &out).tag("det")?;
            Ok(summary(&[("eer", format!("{:.6}", curve.eer)), ("points", curve.points.len().to_string())]))
        }
        Command::Pipeline { out } => {
            let report = run(&cfg, Some(&out)).tag("pipeline")?;
            Ok(report.summary_line())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("langrec: {}: {}", f.module, f.message);
            ExitCode::from(1)
        }
    }
}
