use std::fmt::Write as _;
use std::path::Path;

use crate::data_io::{ClusterSpec, NoiseLaw, SynthSpec};
use crate::dnn::TrainConfig;
use crate::duration_fusion::DensityConfig;
use crate::error::{domain, Error, Result};
use crate::fusion_eval::{CostParams, FusionConfig};
use crate::gmm::CovarianceKind;
use crate::gmm_system::GmmSystemConfig;

/// Every setting of an end-to-end run.
///
/// The text form is one `key = value` per line with `#` comments. Keys left
/// out keep their defaults; later sources override earlier ones in the order
/// defaults, file, `--set` flags, `--seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub format_version: u32,
    /// Master seed; every stage derives its own seed from it.
    pub seed: u64,
    pub synth: SynthSpec,
    pub eigen_floor: f64,
    pub lda_dim: usize,
    pub gmm: GmmSystemConfig,
    /// Hidden layer widths; input and output sizes follow from the data.
    pub dnn_hidden: Vec<usize>,
    pub dnn: TrainConfig,
    pub dnn_folds: usize,
    pub density: DensityConfig,
    pub fusion: FusionConfig,
    /// Language groups held out in turn to simulate out-of-set trials for
    /// threshold tuning; 0 masks each training row's own language instead.
    pub oos_folds: usize,
    pub grid_size: usize,
    /// In-set class count for the cost; 0 uses the number of enrolled languages.
    pub cost_classes: usize,
    pub cost_p_oos: f64,
    pub cost_scale: f64,
    /// Also write the generated corpora as i-vector text files.
    pub write_corpora: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::challenge(1)
    }
}

impl PipelineConfig {
    /// Challenge-sized run: 50 languages, 400-dimensional vectors, LDA to
    /// 49 dimensions, 64 components and two hidden layers of 600 units.
    pub fn challenge(seed: u64) -> Self {
        let mut cfg = PipelineConfig {
            format_version: crate::FORMAT_VERSION,
            seed,
            synth: SynthSpec::challenge(seed),
            eigen_floor: crate::preprocess::DEFAULT_EIGEN_FLOOR,
            lda_dim: 49,
            gmm: GmmSystemConfig::default(),
            dnn_hidden: vec![600, 600],
            dnn: TrainConfig::default(),
            dnn_folds: 5,
            density: DensityConfig::default(),
            fusion: FusionConfig::default(),
            oos_folds: 10,
            grid_size: 512,
            cost_classes: 0,
            cost_p_oos: 0.23,
            cost_scale: 100.0,
            write_corpora: false,
        };
        cfg.reseed(seed);
        cfg
    }

    /// Small run used by the acceptance checks: 10 languages in three
    /// clusters, 200 training and 100 test vectors per language, 23% of the
    /// test set out of set. Languages share eight session offsets and each
    /// has its own noise level.
    pub fn acceptance(seed: u64) -> Self {
        let mut cfg = PipelineConfig::challenge(seed);
        cfg.synth = SynthSpec {
            n_languages: 10,
            clusters: vec![
                ClusterSpec { spread: 1.5, languages: 4 },
                ClusterSpec { spread: 1.5, languages: 3 },
                ClusterSpec { spread: 1.5, languages: 3 },
            ],
            dim: 100,
            per_language_count: 200,
            dev_count: 2000,
            test_count: 1299,
            oos_fraction: 299.0 / 1299.0,
            n_oos_languages: 15,
            duration_range_s: (2.0, 60.0),
            noise_law: NoiseLaw { a: 0.1, b: 2.0 },
            cluster_separation: 8.0,
            modes: 8,
            mode_spread: 0.0,
            shared_mode_spread: 8.0,
            noise_spread: 4.0,
            shrinkage_s: 0.0,
            seed,
        };
        cfg.lda_dim = 9;
        cfg.dnn_hidden = vec![64, 64];
        cfg.gmm.components = 4;
        cfg.density.max_points = 5000;
        cfg.oos_folds = 5;
        cfg.reseed(seed);
        cfg
    }

    /// Sets the master seed and every derived stage seed.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.gmm.em.seed = seed.wrapping_add(1);
        self.dnn.seed = seed.wrapping_add(2);
        self.density.em.seed = seed.wrapping_add(3);
    }

    pub fn cost_params(&self, n_languages: usize) -> CostParams {
        CostParams {
            n_classes: if self.cost_classes == 0 { n_languages } else { self.cost_classes },
            p_oos: self.cost_p_oos,
            scale: self.cost_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        if self.lda_dim == 0 || self.gmm.components == 0 || self.dnn_folds < 2 || self.grid_size == 0 {
            return Err(domain("lda_dim, gmm_components and grid_size must be positive, dnn_folds at least 2"));
        }
        if self.dnn_hidden.iter().any(|&h| h == 0) {
            return Err(domain("hidden layer widths must be positive"));
        }
        if !(self.eigen_floor > 0.0) || !(self.gmm.relevance > 0.0) || !(self.density.relevance > 0.0) {
            return Err(domain("eigen_floor and relevance factors must be positive"));
        }
        self.cost_params(self.synth.n_languages).validate()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| domain(format!("bad value `{value}` for `{key}`")))
        }
        let s = &mut self.synth;
        match key {
            "format_version" => {
                let v: u32 = num(key, value)?;
                if v != crate::FORMAT_VERSION {
                    return Err(Error::FormatVersion(v));
                }
            }
            "seed" => self.reseed(num(key, value)?),
            "synth.n_languages" => s.n_languages = num(key, value)?,
            "synth.clusters" => s.clusters = parse_clusters(value)?,
            "synth.dim" => s.dim = num(key, value)?,
            "synth.per_language_count" => s.per_language_count = num(key, value)?,
            "synth.dev_count" => s.dev_count = num(key, value)?,
            "synth.test_count" => s.test_count = num(key, value)?,
            "synth.oos_fraction" => s.oos_fraction = num(key, value)?,
            "synth.n_oos_languages" => s.n_oos_languages = num(key, value)?,
            "synth.duration_min" => s.duration_range_s.0 = num(key, value)?,
            "synth.duration_max" => s.duration_range_s.1 = num(key, value)?,
            "synth.noise_a" => s.noise_law.a = num(key, value)?,
            "synth.noise_b" => s.noise_law.b = num(key, value)?,
            "synth.cluster_separation" => s.cluster_separation = num(key, value)?,
            "synth.shared_mode_spread" => s.shared_mode_spread = num(key, value)?,
            "synth.shrinkage_s" => s.shrinkage_s = num(key, value)?,
            "synth.noise_spread" => s.noise_spread = num(key, value)?,
            "synth.modes" => s.modes = num(key, value)?,
            "synth.mode_spread" => s.mode_spread = num(key, value)?,
            "eigen_floor" => self.eigen_floor = num(key, value)?,
            "lda_dim" => self.lda_dim = num(key, value)?,
            "gmm.components" => self.gmm.components = num(key, value)?,
            "gmm.relevance" => self.gmm.relevance = num(key, value)?,
            "gmm.max_iter" => self.gmm.em.max_iter = num(key, value)?,
            "gmm.tol" => self.gmm.em.tol = num(key, value)?,
            "gmm.var_floor" => self.gmm.em.var_floor = num(key, value)?,
            "gmm.covariance" => self.gmm.em.covariance_kind = parse_kind(value)?,
            "dnn.hidden" => {
                self.dnn_hidden = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|h| num(key, h.trim())).collect::<Result<_>>()?
                }
            }
            "dnn.learning_rate" => self.dnn.learning_rate = num(key, value)?,
            "dnn.momentum" => self.dnn.momentum = num(key, value)?,
            "dnn.batch_size" => self.dnn.batch_size = num(key, value)?,
            "dnn.epochs" => self.dnn.epochs = num(key, value)?,
            "dnn.l2" => self.dnn.l2 = num(key, value)?,
            "dnn.patience" => self.dnn.patience = num(key, value)?,
            "dnn.validation_fraction" => self.dnn.validation_fraction = num(key, value)?,
            "dnn.folds" => self.dnn_folds = num(key, value)?,
            "density.c_max" => self.density.c_max = num(key, value)?,
            "density.relevance" => self.density.relevance = num(key, value)?,
            "density.min_pairs" => self.density.min_pairs = num(key, value)?,
            "density.max_points" => self.density.max_points = num(key, value)?,
            "density.max_iter" => self.density.em.max_iter = num(key, value)?,
            "density.tol" => self.density.em.tol = num(key, value)?,
            "fusion.max_iter" => self.fusion.max_iter = num(key, value)?,
            "fusion.tol" => self.fusion.tol = num(key, value)?,
            "fusion.l2" => self.fusion.l2 = num(key, value)?,
            "decision.oos_folds" => self.oos_folds = num(key, value)?,
            "decision.grid_size" => self.grid_size = num(key, value)?,
            "cost.classes" => self.cost_classes = num(key, value)?,
            "cost.p_oos" => self.cost_p_oos = num(key, value)?,
            "cost.scale" => self.cost_scale = num(key, value)?,
            "write_corpora" => self.write_corpora = num(key, value)?,
            _ => return Err(domain(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` assignment such as a command-line override.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| domain(format!("expected key=value, got `{assignment}`")))?;
        self.set(k.trim(), v.trim())
    }

    /// Applies every setting of a config text on top of `self`.
    pub fn merge_text(&mut self, text: &str, source_name: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_assignment(line).map_err(|e| Error::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Defaults with a config file applied; a `preset = acceptance` line as
    /// the first setting switches the base to the acceptance preset.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = PipelineConfig::default();
        let mut rest = String::new();
        for line in text.lines() {
            let bare = line.split('#').next().unwrap_or("").trim();
            if let Some(("preset", v)) = bare.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                cfg = match v {
                    "challenge" => PipelineConfig::challenge(cfg.seed),
                    "acceptance" => PipelineConfig::acceptance(cfg.seed),
                    _ => return Err(domain(format!("unknown preset `{v}`"))),
                };
                rest.push('\n');
            } else {
                rest.push_str(line);
                rest.push('\n');
            }
        }
        cfg.merge_text(&rest, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Complete text form; reading it back reproduces `self`.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let clusters: Vec<String> = s.clusters.iter().map(|c| format!("{}:{}", c.spread, c.languages)).collect();
        let hidden: Vec<String> = self.dnn_hidden.iter().map(|h| h.to_string()).collect();
        let kind = match self.gmm.em.covariance_kind {
            CovarianceKind::Diagonal => "diagonal",
            CovarianceKind::Full => "full",
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("format_version", self.format_version.to_string());
        kv("seed", self.seed.to_string());
        kv("synth.n_languages", s.n_languages.to_string());
        kv("synth.clusters", clusters.join(","));
        kv("synth.dim", s.dim.to_string());
        kv("synth.per_language_count", s.per_language_count.to_string());
        kv("synth.dev_count", s.dev_count.to_string());
        kv("synth.test_count", s.test_count.to_string());
        kv("synth.oos_fraction", s.oos_fraction.to_string());
        kv("synth.n_oos_languages", s.n_oos_languages.to_string());
        kv("synth.duration_min", s.duration_range_s.0.to_string());
        kv("synth.duration_max", s.duration_range_s.1.to_string());
        kv("synth.noise_a", s.noise_law.a.to_string());
        kv("synth.noise_b", s.noise_law.b.to_string());
        kv("synth.cluster_separation", s.cluster_separation.to_string());
        kv("synth.shared_mode_spread", s.shared_mode_spread.to_string());
        kv("synth.shrinkage_s", s.shrinkage_s.to_string());
        kv("synth.noise_spread", s.noise_spread.to_string());
        kv("synth.modes", s.modes.to_string());
        kv("synth.mode_spread", s.mode_spread.to_string());
        kv("eigen_floor", self.eigen_floor.to_string());
        kv("lda_dim", self.lda_dim.to_string());
        kv("gmm.components", self.gmm.components.to_string());
        kv("gmm.relevance", self.gmm.relevance.to_string());
        kv("gmm.max_iter", self.gmm.em.max_iter.to_string());
        kv("gmm.tol", self.gmm.em.tol.to_string());
        kv("gmm.var_floor", self.gmm.em.var_floor.to_string());
        kv("gmm.covariance", kind.to_string());
        kv("dnn.hidden", hidden.join(","));
        kv("dnn.learning_rate", self.dnn.learning_rate.to_string());
        kv("dnn.momentum", self.dnn.momentum.to_string());
        kv("dnn.batch_size", self.dnn.batch_size.to_string());
        kv("dnn.epochs", self.dnn.epochs.to_string());
        kv("dnn.l2", self.dnn.l2.to_string());
        kv("dnn.patience", self.dnn.patience.to_string());
        kv("dnn.validation_fraction", self.dnn.validation_fraction.to_string());
        kv("dnn.folds", self.dnn_folds.to_string());
        kv("density.c_max", self.density.c_max.to_string());
        kv("density.relevance", self.density.relevance.to_string());
        kv("density.min_pairs", self.density.min_pairs.to_string());
        kv("density.max_points", self.density.max_points.to_string());
        kv("density.max_iter", self.density.em.max_iter.to_string());
        kv("density.tol", self.density.em.tol.to_string());
        kv("fusion.max_iter", self.fusion.max_iter.to_string());
        kv("fusion.tol", self.fusion.tol.to_string());
        kv("fusion.l2", self.fusion.l2.to_string());
        kv("decision.oos_folds", self.oos_folds.to_string());
        kv("decision.grid_size", self.grid_size.to_string());
        kv("cost.classes", self.cost_classes.to_string());
        kv("cost.p_oos", self.cost_p_oos.to_string());
        kv("cost.scale", self.cost_scale.to_string());
        kv("write_corpora", self.write_corpora.to_string());
        out
    }
}

fn parse_clusters(value: &str) -> Result<Vec<ClusterSpec>> {
    value
        .split(',')
        .map(|c| {
            let (spread, n) = c
                .trim()
                .split_once(':')
                .ok_or_else(|| domain(format!("cluster `{c}` is not spread:count")))?;
            Ok(ClusterSpec {
                spread: spread.trim().parse().map_err(|_| domain(format!("bad spread in `{c}`")))?,
                languages: n.trim().parse().map_err(|_| domain(format!("bad count in `{c}`")))?,
            })
        })
        .collect()
}

fn parse_kind(value: &str) -> Result<CovarianceKind> {
    match value {
        "diagonal" => Ok(CovarianceKind::Diagonal),
        "full" => Ok(CovarianceKind::Full),
        _ => Err(domain(format!("covariance must be diagonal or full, got `{value}`"))),
    }
}
