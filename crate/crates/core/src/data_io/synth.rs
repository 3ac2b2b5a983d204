//! Seeded synthetic i-vector corpora.
//!
//! Languages are grouped into clusters: a cluster center is drawn with
//! scale `cluster_separation`, and each language mean sits around its
//! cluster center with scale `spread`. Tight clusters hold confusable
//! languages; wide ones hold acoustically distinct languages. A record of
//! duration `d` is one of its language's modes (sub-means around the
//! language mean with scale `mode_spread`) plus isotropic
//! Gaussian noise of per-dimension variance `a + s·b/d`, so short segments
//! are harder. The factor `s` is drawn per language, log-uniformly in
//! `[1/noise_spread, noise_spread]`: some languages need longer segments
//! than others to become recognizable. With `shrinkage_s = τ > 0` the
//! mode is scaled by `d / (d + τ)` first, the way a short segment's
//! i-vector is pulled toward the prior mean at the origin.
//!
//! With `shared_mode_spread > 0`, mode `k` of every language is also moved
//! by a common session center drawn with that scale, so all languages share
//! the same coarse layout and differ by how each session is shifted.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Corpus, IVectorRecord};
use crate::error::{domain, Result};
use crate::{seeded_rng, Rng, OUT_OF_SET};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    /// Scale of language means around the cluster center.
    pub spread: f64,
    pub languages: usize,
}

/// Per-dimension noise variance `a + b / duration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLaw {
    pub a: f64,
    pub b: f64,
}

impl NoiseLaw {
    pub fn variance(&self, duration_s: f64) -> f64 {
        self.a + self.b / duration_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_languages: usize,
    pub clusters: Vec<ClusterSpec>,
    pub dim: usize,
    /// Training records per in-set language.
    pub per_language_count: usize,
    pub dev_count: usize,
    /// Total test records, in-set plus out-of-set.
    pub test_count: usize,
    pub oos_fraction: f64,
    /// Held-out languages that feed the out-of-set test records (and dev).
    pub n_oos_languages: usize,
    pub duration_range_s: (f64, f64),
    pub noise_law: NoiseLaw,
    pub cluster_separation: f64,
    /// Sub-means per language; records pick one uniformly.
    pub modes: usize,
    pub mode_spread: f64,
    /// Scale of the session centers shared by mode `k` of all languages.
    pub shared_mode_spread: f64,
    /// Range of the per-language factor on `b`; 1 gives every language the same law.
    pub noise_spread: f64,
    /// Duration (seconds) at which a segment keeps half of its mode.
    pub shrinkage_s: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Sizes of the challenge data: 50 languages with 300 training vectors
    /// each, 6351 development and 6500 test vectors of dimension 400.
    pub fn challenge(seed: u64) -> Self {
        let mut clusters = vec![ClusterSpec { spread: 6.0, languages: 10 }];
        clusters.extend((0..8).map(|_| ClusterSpec { spread: 1.5, languages: 5 }));
        SynthSpec {
            n_languages: 50,
            clusters,
            dim: 400,
            per_language_count: 300,
            dev_count: 6351,
            test_count: 6500,
            oos_fraction: 0.23,
            n_oos_languages: 10,
            duration_range_s: (2.0, 60.0),
            noise_law: NoiseLaw { a: 0.02, b: 0.6 },
            cluster_separation: 8.0,
            modes: 1,
            mode_spread: 0.0,
            shared_mode_spread: 0.0,
            noise_spread: 1.0,
            shrinkage_s: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_languages < 2 {
            return Err(domain("synthetic corpus needs at least 2 languages"));
        }
        let in_clusters: usize = self.clusters.iter().map(|c| c.languages).sum();
        if in_clusters != self.n_languages {
            return Err(domain(format!(
                "clusters hold {in_clusters} languages but n_languages = {}",
                self.n_languages
            )));
        }
        if self.dim == 0 {
            return Err(domain("dimension must be at least 1"));
        }
        if self.per_language_count < 2 {
            return Err(domain("per_language_count must be at least 2 for leave-one-out"));
        }
        let (lo, hi) = self.duration_range_s;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(domain(format!("invalid duration range ({lo}, {hi})")));
        }
        if !(self.noise_law.a >= 0.0 && self.noise_law.b >= 0.0) {
            return Err(domain("noise law coefficients must be non-negative"));
        }
        if self.noise_law.a == 0.0 && self.noise_law.b == 0.0 {
            return Err(domain("noise law must not be identically zero"));
        }
        if !(0.0..1.0).contains(&self.oos_fraction) {
            return Err(domain("oos_fraction must lie in [0, 1)"));
        }
        if self.oos_fraction > 0.0 && self.n_oos_languages == 0 {
            return Err(domain("out-of-set records requested but n_oos_languages = 0"));
        }
        if self.clusters.iter().any(|c| !(c.spread >= 0.0))
            || !(self.cluster_separation >= 0.0)
            || !(self.mode_spread >= 0.0)
        {
            return Err(domain("spreads and separation must be non-negative"));
        }
        if !(self.shared_mode_spread >= 0.0 && self.shared_mode_spread.is_finite()) {
            return Err(domain("shared_mode_spread must be finite and non-negative"));
        }
        if !(self.shrinkage_s >= 0.0 && self.shrinkage_s.is_finite()) {
            return Err(domain("shrinkage_s must be finite and non-negative"));
        }
        if !(self.noise_spread >= 1.0 && self.noise_spread.is_finite()) {
            return Err(domain("noise_spread must be a finite factor of at least 1"));
        }
        if self.modes == 0 {
            return Err(domain("every language needs at least one mode"));
        }
        Ok(())
    }

    pub fn language_names(&self) -> Vec<String> {
        (0..self.n_languages).map(|i| format!("lang{i:02}")).collect()
    }

    fn n_test_oos(&self) -> usize {
        (self.test_count as f64 * self.oos_fraction).round() as usize
    }
}

/// Generated corpora plus the ground-truth means behind them.
#[derive(Debug, Clone)]
pub struct SynthCorpora {
    /// Unlabeled development set drawn from in-set and out-of-set languages.
    pub dev: Corpus,
    pub train: Corpus,
    /// Labeled with the true language, or `out_of_set`.
    pub test: Corpus,
    /// Mean of every in-set and held-out language (`oos00`, ...).
    pub means: BTreeMap<String, Vec<f64>>,
    /// Cluster index of every language in `means`.
    pub cluster_of: BTreeMap<String, usize>,
    /// Mode sub-means of every language in `means`.
    pub modes: BTreeMap<String, Vec<Vec<f64>>>,
    /// Factor on the duration-dependent noise term of every language.
    pub noise_scale: BTreeMap<String, f64>,
}

fn gaussian_vec(rng: &mut Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn draw_record(
    rng: &mut Rng,
    spec: &SynthSpec,
    language: (&[Vec<f64>], f64),
    id: String,
    label: Option<String>,
) -> IVectorRecord {
    let (modes, b_scale) = language;
    let mean = &modes[rng.random_range(0..modes.len())];
    let (lo, hi) = spec.duration_range_s;
    let duration_s = rng.random_range(lo.ln()..hi.ln()).exp();
    let law = NoiseLaw { a: spec.noise_law.a, b: spec.noise_law.b * b_scale };
    let sigma = law.variance(duration_s).sqrt();
    let keep = duration_s / (duration_s + spec.shrinkage_s);
    let vec = mean
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            keep * m + sigma * z
        })
        .collect();
    IVectorRecord { id, duration_s, label, vec }
}

pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<SynthCorpora> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let dim = spec.dim;
    // Unit-norm-on-average draws: a vector of N(0, s²/D) entries has length ≈ s.
    let per_dim = (dim as f64).sqrt();

    let centers: Vec<Vec<f64>> = spec
        .clusters
        .iter()
        .map(|_| gaussian_vec(&mut rng, dim, spec.cluster_separation / per_dim))
        .collect();

    let mut means = BTreeMap::<String, Vec<f64>>::new();
    let mut cluster_of = BTreeMap::new();
    let names = spec.language_names();
    let mut next = names.iter();
    for (c, cluster) in spec.clusters.iter().enumerate() {
        for _ in 0..cluster.languages {
            let name = next.next().expect("cluster sizes validated").clone();
            let offset = gaussian_vec(&mut rng, dim, cluster.spread / per_dim);
            let mean = centers[c].iter().zip(&offset).map(|(a, b)| a + b).collect::<Vec<f64>>();
            means.insert(name.clone(), mean);
            cluster_of.insert(name, c);
        }
    }
    let oos_names: Vec<String> = (0..spec.n_oos_languages).map(|i| format!("oos{i:02}")).collect();
    for (i, name) in oos_names.iter().enumerate() {
        let c = i % spec.clusters.len();
        let offset = gaussian_vec(&mut rng, dim, spec.clusters[c].spread / per_dim);
        let mean = centers[c].iter().zip(&offset).map(|(a, b)| a + b).collect::<Vec<f64>>();
        means.insert(name.clone(), mean);
        cluster_of.insert(name.clone(), c);
    }

    let sessions: Vec<Vec<f64>> = if spec.shared_mode_spread > 0.0 {
        (0..spec.modes).map(|_| gaussian_vec(&mut rng, dim, spec.shared_mode_spread / per_dim)).collect()
    } else {
        vec![vec![0.0; dim]; spec.modes]
    };
    let modes: BTreeMap<String, Vec<Vec<f64>>> = means
        .iter()
        .map(|(name, mu)| {
            let subs = sessions
                .iter()
                .map(|center| {
                    let off = gaussian_vec(&mut rng, dim, spec.mode_spread / per_dim);
                    mu.iter().zip(&off).zip(center).map(|((a, b), c)| a + b + c).collect()
                })
                .collect();
            (name.clone(), subs)
        })
        .collect();

    let log_spread = spec.noise_spread.ln();
    let noise_scale: BTreeMap<String, f64> = means
        .keys()
        .map(|name| {
            let f = if log_spread > 0.0 { rng.random_range(-log_spread..log_spread).exp() } else { 1.0 };
            (name.clone(), f)
        })
        .collect();
    let lang = |name: &String| (modes[name].as_slice(), noise_scale[name]);

    let mut train = Vec::with_capacity(spec.n_languages * spec.per_language_count);
    for name in &names {
        for _ in 0..spec.per_language_count {
            let id = format!("train{:06}", train.len());
            train.push(draw_record(&mut rng, spec, lang(name), id, Some(name.clone())));
        }
    }

    let n_oos = spec.n_test_oos();
    let n_inset = spec.test_count - n_oos;
    let mut test = Vec::with_capacity(spec.test_count);
    for i in 0..n_inset {
        let name = &names[i % names.len()];
        test.push(draw_record(&mut rng, spec, lang(name), String::new(), Some(name.clone())));
    }
    for i in 0..n_oos {
        let name = &oos_names[i % oos_names.len()];
        test.push(draw_record(&mut rng, spec, lang(name), String::new(), Some(OUT_OF_SET.into())));
    }
    test.shuffle(&mut rng);
    for (i, r) in test.iter_mut().enumerate() {
        r.id = format!("test{i:06}");
    }

    let all_names: Vec<&String> = names.iter().chain(&oos_names).collect();
    let mut dev = Vec::with_capacity(spec.dev_count);
    for i in 0..spec.dev_count {
        let name = all_names[i % all_names.len()];
        dev.push(draw_record(&mut rng, spec, lang(name), format!("dev{i:06}"), None));
    }

    Ok(SynthCorpora {
        dev: Corpus::new(dim, dev)?,
        train: Corpus::new(dim, train)?,
        test: Corpus::new(dim, test)?,
        means,
        cluster_of,
        modes,
        noise_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, pearson};

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            n_languages: 6,
            clusters: vec![ClusterSpec { spread: 1.0, languages: 3 }, ClusterSpec { spread: 1.0, languages: 3 }],
            dim: 8,
            per_language_count: 20,
            dev_count: 50,
            test_count: 40,
            oos_fraction: 0.25,
            n_oos_languages: 2,
            duration_range_s: (2.0, 60.0),
            noise_law: NoiseLaw { a: 0.1, b: 1.0 },
            cluster_separation: 10.0,
            modes: 1,
            mode_spread: 0.0,
            shared_mode_spread: 0.0,
            noise_spread: 1.0,
            shrinkage_s: 0.0,
            seed,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_corpus(&small(1)).unwrap();
        let b = generate_synthetic_corpus(&small(1)).unwrap();
        let c = generate_synthetic_corpus(&small(2)).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.dev, b.dev);
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn counts_and_labels() {
        let s = generate_synthetic_corpus(&small(3)).unwrap();
        assert_eq!(s.train.len(), 120);
        assert_eq!(s.dev.len(), 50);
        assert!(s.dev.records().iter().all(|r| r.label.is_none()));
        let oos = s.test.records().iter().filter(|r| r.label.as_deref() == Some(OUT_OF_SET)).count();
        assert_eq!(oos, 10);
        assert_eq!(s.test.len(), 40);
        let (lo, hi) = (2.0, 60.0);
        assert!(s.train.records().iter().all(|r| r.duration_s >= lo && r.duration_s <= hi));
    }

    #[test]
    fn too_few_training_vectors_rejected() {
        let mut spec = small(1);
        spec.per_language_count = 1;
        assert!(generate_synthetic_corpus(&spec).is_err());
    }

    #[test]
    fn duration_independent_noise_when_b_is_zero() {
        let mut spec = small(11);
        spec.noise_law = NoiseLaw { a: 0.5, b: 0.0 };
        spec.per_language_count = 1700;
        let s = generate_synthetic_corpus(&spec).unwrap();
        let (mut durs, mut vars) = (Vec::new(), Vec::new());
        for r in s.train.records() {
            let mu = &s.means[r.label.as_ref().unwrap()];
            let resid: Vec<f64> = r.vec.iter().zip(mu).map(|(x, m)| x - m).collect();
            vars.push(dot(&resid, &resid) / resid.len() as f64);
            durs.push(r.duration_s);
        }
        assert!(durs.len() >= 10_000);
        assert!(pearson(&durs, &vars).abs() < 0.05);
    }
}
